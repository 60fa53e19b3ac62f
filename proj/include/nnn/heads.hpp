#pragma once

#include <string>
#include <vector>

#include "nnn/diffcore.hpp"

namespace nnn {

struct HeadConfig {
  int n_layers = 5;
  int layer_size = 64;
  bool log_scale = false;
};

/// Volume-times-probability head on one channel slice:
///   V * sigmoid(MLPResnet(direction [, geo one-hot])) * |geo_mult[g]|
/// or, on the log scale, V - softplus(MLPResnet(...)) + geo_mult[g].
/// Rows of the input are cells g * T + t.
template <typename Scalar>
class SalesHead {
 public:
  struct Cache {
    Vector<Scalar> volume;
    Matrix<Scalar> direction;
    typename MlpResnet<Scalar>::Cache mlp;
    Vector<Scalar> logits;
  };

  SalesHead() = default;
  SalesHead(ParamStore<Scalar>& store, const std::string& name, int dim, int geos, bool use_geo,
            const HeadConfig& cfg, CounterRng& rng);

  bool uses_geo() const { return use_geo_; }
  ParamId geo_multiplier() const { return geo_mult_; }
  const MlpResnet<Scalar>& mlp() const { return mlp_; }

  Vector<Scalar> forward(const ParamStore<Scalar>& store, const Matrix<Scalar>& x, int times,
                         Cache* cache = nullptr) const;
  /// Returns dL/dx; accumulates parameter gradients.
  Matrix<Scalar> backward(ParamStore<Scalar>& store, const Cache& cache, const Vector<Scalar>& dy, int times,
                          bool need_dx = true) const;

 private:
  Matrix<Scalar> mlp_input(const Matrix<Scalar>& direction, int times) const;
  Scalar geo_factor(const ParamStore<Scalar>& store, int g) const;

  int dim_ = 0;
  int geos_ = 0;
  bool use_geo_ = false;
  bool log_scale_ = false;
  MlpResnet<Scalar> mlp_;
  ParamId geo_mult_;
};

/// Additive multi-channel sales head: one SalesHead per channel in use, each
/// fed its own channel slice; only the organic (search) channel sees the geo.
template <typename Scalar>
class SalesMultiHead {
 public:
  struct Cache {
    std::vector<typename SalesHead<Scalar>::Cache> heads;
    std::vector<Vector<Scalar>> contributions;
  };

  SalesMultiHead() = default;
  SalesMultiHead(ParamStore<Scalar>& store, const std::string& name, int dim, int geos,
                 std::vector<int> channels_to_use, int geo_channel, const HeadConfig& cfg, CounterRng& rng);

  const std::vector<int>& channels() const { return channels_; }
  const SalesHead<Scalar>& head(std::size_t k) const { return heads_[k]; }

  /// Per-channel contributions (same order as channels()); their sum is the prediction.
  std::vector<Vector<Scalar>> contributions(const ParamStore<Scalar>& store, const ChannelStack<Scalar>& x, int times,
                                            Cache* cache = nullptr) const;
  Vector<Scalar> forward(const ParamStore<Scalar>& store, const ChannelStack<Scalar>& x, int times,
                         Cache* cache = nullptr) const;
  /// Adds dL/dx into dx for each channel in use.
  void backward(ParamStore<Scalar>& store, const Cache& cache, const Vector<Scalar>& dy, int times,
                ChannelStack<Scalar>& dx, bool need_dx = true) const;

 private:
  std::vector<int> channels_;
  std::vector<SalesHead<Scalar>> heads_;
};

/// Next-step organic embedding head: MLPResnet over the concatenation of the
/// chosen channel slices, output width D, no output normalization.
template <typename Scalar>
class SearchHead {
 public:
  struct Cache {
    typename MlpResnet<Scalar>::Cache mlp;
  };

  SearchHead() = default;
  SearchHead(ParamStore<Scalar>& store, const std::string& name, int dim, std::vector<int> inputs,
             const HeadConfig& cfg, CounterRng& rng);

  const std::vector<int>& inputs() const { return inputs_; }
  const MlpResnet<Scalar>& mlp() const { return mlp_; }

  Matrix<Scalar> forward(const ParamStore<Scalar>& store, const ChannelStack<Scalar>& x,
                         Cache* cache = nullptr) const;
  void backward(ParamStore<Scalar>& store, const Cache& cache, const Matrix<Scalar>& dy, ChannelStack<Scalar>& dx,
                bool need_dx = true) const;

 private:
  int dim_ = 0;
  std::vector<int> inputs_;
  MlpResnet<Scalar> mlp_;
};

/// Projects a media channel's representation back to its native width and
/// re-pads to D. Identity-initialized and excluded from training.
template <typename Scalar>
class PassthroughHead {
 public:
  PassthroughHead() = default;
  PassthroughHead(ParamStore<Scalar>& store, const std::string& name, int dim, int native_dim);

  Matrix<Scalar> forward(const ParamStore<Scalar>& store, const Matrix<Scalar>& x) const;

 private:
  int dim_ = 0;
  int native_dim_ = 0;
  ParamId weight_;
  ParamId bias_;
};

/// v / |v| * log|v| row-wise; zero rows stay zero.
template <typename Scalar>
Matrix<Scalar> log_scale_rows(const Matrix<Scalar>& x);

extern template class SalesHead<float>;
extern template class SalesHead<double>;
extern template class SalesMultiHead<float>;
extern template class SalesMultiHead<double>;
extern template class SearchHead<float>;
extern template class SearchHead<double>;
extern template class PassthroughHead<float>;
extern template class PassthroughHead<double>;

}  // namespace nnn
