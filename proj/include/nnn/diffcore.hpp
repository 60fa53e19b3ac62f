#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nnn/rng.hpp"

namespace nnn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// One (rows x D) activation matrix per channel; row g * T + t holds cell (g, t).
template <typename Scalar>
using ChannelStack = std::vector<Matrix<Scalar>>;

struct ParamId {
  int index = -1;
  bool valid() const { return index >= 0; }
};

/// Flat named collection of arrays with a gradient slot per array.
template <typename Scalar>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Matrix<Scalar> value;
    Matrix<Scalar> grad;
    bool trainable = true;
  };

  ParamId add(std::string name, Matrix<Scalar> init, bool trainable = true);

  const Matrix<Scalar>& value(ParamId id) const { return entries_[id.index].value; }
  Matrix<Scalar>& value(ParamId id) { return entries_[id.index].value; }
  Matrix<Scalar>& grad(ParamId id) { return entries_[id.index].grad; }
  const Matrix<Scalar>& grad(ParamId id) const { return entries_[id.index].grad; }

  std::optional<ParamId> find(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  /// Number of trainable scalars.
  std::size_t parameter_count() const;
  void zero_grad();
  /// Sum of |theta| over trainable arrays, accumulated in double.
  double l1_norm() const;
  /// grad += lambda * sign(theta) for trainable arrays; sign(0) = 0.
  void add_l1_grad(double lambda);
  /// Fraction of trainable scalars with |theta| < threshold.
  double sparsity(double threshold) const;

  template <typename Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<Other>(), e.trainable);
    return out;
  }

  /// Copies values from `other` by name; shapes must match.
  template <typename Other>
  void assign_from(const ParamStore<Other>& other);

 private:
  std::vector<Entry> entries_;
};

/// Fan-in/fan-out scaled uniform initialization.
template <typename Scalar>
Matrix<Scalar> glorot_uniform(int rows, int cols, CounterRng& rng);

// Activations ---------------------------------------------------------------

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return x >= 0 ? Scalar(1) / (Scalar(1) + std::exp(-x)) : std::exp(x) / (Scalar(1) + std::exp(x));
}

template <typename Scalar>
Scalar softplus(Scalar x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Row-wise softmax of scores / temperature. Entries equal to -inf take no
/// weight; a row with no finite entry becomes all zeros.
template <typename Scalar>
Matrix<Scalar> softmax_rows(const Matrix<Scalar>& scores, Scalar temperature);

/// Backward of softmax_rows: given weights w and dL/dw, returns dL/dscores.
template <typename Scalar>
Matrix<Scalar> softmax_rows_backward(const Matrix<Scalar>& weights, const Matrix<Scalar>& dweights, Scalar temperature);

// Layers ----------------------------------------------------------------------

/// Affine map over the last axis: y = x W + b with W of shape (in, out).
template <typename Scalar>
struct Dense {
  ParamId weight;
  ParamId bias;  // invalid when the layer has no bias
  int in = 0;
  int out = 0;

  static Dense create(ParamStore<Scalar>& store, const std::string& name, int in, int out, CounterRng& rng,
                      bool use_bias = true);

  Matrix<Scalar> forward(const ParamStore<Scalar>& store, const Matrix<Scalar>& x) const;
  /// Accumulates parameter gradients and returns dL/dx (skipped when !need_dx).
  Matrix<Scalar> backward(ParamStore<Scalar>& store, const Matrix<Scalar>& x, const Matrix<Scalar>& dy,
                          bool need_dx = true) const;
};

struct MlpResnetConfig {
  int n_layers = 0;
  int layer_size = 64;
  bool project_back = true;
  std::optional<int> output_dim;
};

/// dense_in, then n_layers residual blocks h <- h + relu(dense(h)), then an
/// optional projection back to the input width or to output_dim.
template <typename Scalar>
class MlpResnet {
 public:
  struct Cache {
    Matrix<Scalar> input;
    std::vector<Matrix<Scalar>> hidden;  // hidden[i] is the input of block i; back() feeds the output layer
    std::vector<Matrix<Scalar>> pre;     // pre-activations of each block
  };

  MlpResnet() = default;
  MlpResnet(ParamStore<Scalar>& store, const std::string& name, int d_in, const MlpResnetConfig& cfg, CounterRng& rng);

  int input_dim() const { return d_in_; }
  int output_dim() const;

  Matrix<Scalar> forward(const ParamStore<Scalar>& store, const Matrix<Scalar>& x, Cache* cache = nullptr) const;
  Matrix<Scalar> backward(ParamStore<Scalar>& store, const Cache& cache, const Matrix<Scalar>& dy,
                          bool need_dx = true) const;

  const Dense<Scalar>& output_layer() const { return output_; }
  bool has_output_layer() const { return has_output_; }

 private:
  int d_in_ = 0;
  MlpResnetConfig cfg_;
  Dense<Scalar> input_;
  std::vector<Dense<Scalar>> blocks_;
  Dense<Scalar> output_;
  bool has_output_ = false;
};

// Finite-difference verification -----------------------------------------------

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error of near-zero gradients.
  double floor = 1e-6;
  /// Stores above this many trainable scalars are checked on a seeded sample.
  std::size_t exhaustive_limit = 10000;
  std::size_t sample_size = 400;
  std::uint64_t seed = 17;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::string worst_param;
  int worst_index = -1;
  bool passed = false;
};

/// Compares reverse-mode gradients to central differences. `grad_fn` must fill
/// the store's gradient slots (after zeroing) for the same objective `value_fn`
/// evaluates.
GradCheckReport grad_check(const std::function<double(const ParamStore<double>&)>& value_fn,
                           const std::function<void(ParamStore<double>&)>& grad_fn, ParamStore<double>& store,
                           const GradCheckOptions& options = {});

// Checkpoints -----------------------------------------------------------------

template <typename Scalar>
void save_params(const ParamStore<Scalar>& store, const std::filesystem::path& path);

/// Reads a checkpoint into a fresh store (values stored as 32-bit floats).
ParamStore<float> load_params(const std::filesystem::path& path);

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template struct Dense<float>;
extern template struct Dense<double>;
extern template class MlpResnet<float>;
extern template class MlpResnet<double>;

}  // namespace nnn
