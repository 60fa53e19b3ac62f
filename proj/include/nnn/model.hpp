#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nnn/attention.hpp"
#include "nnn/diffcore.hpp"
#include "nnn/heads.hpp"
#include "nnn/media_tensor.hpp"

namespace nnn {

struct ModelConfig {
  int n_layers = 2;
  int d_ff = 512;
  HeadConfig head;
  AttentionConfig attention;
  /// Channels feeding the additive sales head; empty means every non-target channel.
  std::vector<std::string> sales_channels;
  /// Channels concatenated into the search head.
  std::vector<std::string> search_inputs{"youtube", "search"};
  double balancing = 0.5;  // weight of the sales loss against the search loss
  double l1 = 10.0;
  /// Divide every channel by a per-channel scale fitted on the training cells.
  bool normalize = true;
  std::uint64_t seed = 42;

  void validate() const;
};

/// Per-channel input scales and the sales scale, kept in the parameter store
/// (non-trainable) so checkpoints carry them.
struct Normalization {
  std::vector<double> channel_scale;
  double sales_scale = 1.0;
};

/// Mean slice norm per channel and mean |sales| over `cells`; zero scales become 1.
Normalization fit_normalization(const MediaTensor& x, const std::vector<Cell>& cells);

struct LossValue {
  double total = 0.0;
  double sales = 0.0;
  double search = 0.0;
  double penalty = 0.0;  // lambda * sum |theta|
};

/// Which cells enter each loss term. Search rows are cells (g, t) whose target
/// is the observed search slice at t + 1.
struct LossCells {
  std::vector<Cell> sales;
  std::vector<Cell> search;
};

/// Sales cells = `train`; search cells = every (g, t) with t + 1 <= train_end.
LossCells loss_cells(const SplitSets& sets, int geos, int train_end);

template <typename Scalar>
class NnnModel {
 public:
  struct Output {
    Vector<Scalar> sales;   // (G*T), model units
    Matrix<Scalar> search;  // (G*T, D), model units; row (g, t) predicts t + 1
    std::vector<Vector<Scalar>> contributions;
  };

  struct Cache {
    std::vector<ChannelStack<Scalar>> layer_inputs;
    std::vector<typename TransformerLayer<Scalar>::Cache> layers;
    ChannelStack<Scalar> final;
    typename SalesMultiHead<Scalar>::Cache sales;
    typename SearchHead<Scalar>::Cache search;
  };

  /// Original-unit predictions.
  struct Prediction {
    Eigen::MatrixXd sales;                     // (G, T)
    std::vector<Eigen::MatrixXd> search;       // per geo (T, D)
    std::vector<Eigen::MatrixXd> contributions;  // per sales channel, (G, T)
  };

  NnnModel() = default;
  /// Registers every parameter in `store`.
  NnnModel(const ModelConfig& cfg, std::vector<ChannelSpec> channels, int geos, int dim, ParamStore<Scalar>& store);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<ChannelSpec>& channels() const { return channels_; }
  int geos() const { return geos_; }
  int dim() const { return dim_; }
  int target_channel() const { return target_; }
  int search_channel() const { return search_; }
  const std::vector<int>& sales_channels() const { return sales_head_.channels(); }
  const std::vector<int>& search_inputs() const { return search_head_.inputs(); }
  const TransformerLayer<Scalar>& layer(int i) const { return layers_[i]; }
  int num_layers() const { return static_cast<int>(layers_.size()); }

  void set_normalization(ParamStore<Scalar>& store, const Normalization& norm) const;
  Normalization normalization(const ParamStore<Scalar>& store) const;

  /// Masked, scaled channel stack in model units.
  ChannelStack<Scalar> encode(const ParamStore<Scalar>& store, const MediaTensor& x) const;
  /// Sales targets in model units, (G*T).
  Vector<Scalar> sales_targets(const ParamStore<Scalar>& store, const MediaTensor& x) const;
  /// Search targets in model units (scaled, never log-transformed), (G*T, D).
  Matrix<Scalar> search_targets(const ParamStore<Scalar>& store, const MediaTensor& x) const;

  /// Channels whose transformer output is consumed downstream.
  std::vector<bool> active_channels(bool with_search) const;

  Output forward(const ParamStore<Scalar>& store, const ChannelStack<Scalar>& x, int times, bool with_search = true,
                 Cache* cache = nullptr) const;

  Prediction predict(const ParamStore<Scalar>& store, const MediaTensor& x, bool with_search = true) const;

  /// Composite loss; fills gradients (after zeroing) when `gradient` is set.
  LossValue loss(ParamStore<Scalar>& store, const ChannelStack<Scalar>& x, int times,
                 const Vector<Scalar>& sales_target, const Matrix<Scalar>& search_target, const LossCells& cells,
                 double balancing, double l1, bool gradient) const;

 private:
  ModelConfig cfg_;
  std::vector<ChannelSpec> channels_;
  int geos_ = 0;
  int dim_ = 0;
  int target_ = -1;
  int search_ = -1;
  std::vector<TransformerLayer<Scalar>> layers_;
  SalesMultiHead<Scalar> sales_head_;
  SearchHead<Scalar> search_head_;
  ParamId channel_scale_;
  ParamId sales_scale_;
};

/// Row-major (G*T) or (G*T, D) model rows for a (G, T) grid.
inline Eigen::Index cell_row(int g, int t, int times) { return static_cast<Eigen::Index>(g) * times + t; }

extern template class NnnModel<float>;
extern template class NnnModel<double>;

}  // namespace nnn
