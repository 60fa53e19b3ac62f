#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nnn/diffcore.hpp"

namespace nnn {

struct AttentionConfig {
  int lookback_window = 52;
  double temperature = 1.0;
  bool channel_mixing = false;
  bool attention_by_channel = true;
  int hidden = 128;
  /// One output projection shared by all channels, or one per channel.
  bool shared_out_proj = true;

  void validate() const;
};

/// Number of time-score MLP rows evaluated since process start. Used to check
/// that score cost grows with T and C separately, never with (T * C)^2.
std::uint64_t time_score_evaluations();

/// Temporal x channel factored self-attention over a (G, T, C, D) stack.
/// Temporal scores come from an MLP of the normalized lag (t - t') / window and
/// the target channel; channel scores are a learned (C, C) affinity matrix.
template <typename Scalar>
class FactoredAttention {
 public:
  struct Cache {
    std::vector<Matrix<Scalar>> time_weights;  // per channel, (T, T)
    Matrix<Scalar> channel_weights;            // (C, C)
    Matrix<Scalar> mlp_input;
    Matrix<Scalar> mlp_pre;                    // hidden pre-activations
    ChannelStack<Scalar> sources;              // per target channel, input after channel mixing
    ChannelStack<Scalar> attended;             // per target channel, before the output projection
  };

  FactoredAttention() = default;
  FactoredAttention(ParamStore<Scalar>& store, const std::string& name, int channels, int dim,
                    const AttentionConfig& cfg, CounterRng& rng);

  const AttentionConfig& config() const { return cfg_; }

  /// Raw scores s[c](t, t') for all pairs, including masked ones.
  std::vector<Matrix<Scalar>> temporal_scores(const ParamStore<Scalar>& store, int times) const;

  /// Masked temporal weights per channel: row t is a softmax over the window
  /// t - window < t' <= t and zero elsewhere.
  std::vector<Matrix<Scalar>> temporal_weights(const ParamStore<Scalar>& store, int times) const;

  /// softmax over source channels of psi / temperature.
  Matrix<Scalar> channel_weights(const ParamStore<Scalar>& store) const;

  /// Attention output before the output projection.
  ChannelStack<Scalar> attend(const ParamStore<Scalar>& store, const ChannelStack<Scalar>& x, int geos, int times,
                              const std::vector<bool>& active, Cache* cache = nullptr) const;

  /// attend() followed by the output projection.
  ChannelStack<Scalar> forward(const ParamStore<Scalar>& store, const ChannelStack<Scalar>& x, int geos, int times,
                               const std::vector<bool>& active, Cache* cache = nullptr) const;

  /// Accumulates parameter gradients; adds dL/dx into `dx` for every channel.
  void backward(ParamStore<Scalar>& store, const Cache& cache, const ChannelStack<Scalar>& x,
                const ChannelStack<Scalar>& dout, int geos, int times, const std::vector<bool>& active,
                ChannelStack<Scalar>& dx) const;

  ParamId psi() const { return psi_; }
  const Dense<Scalar>& time_hidden() const { return time_hidden_; }
  const Dense<Scalar>& time_out() const { return time_out_; }
  const Dense<Scalar>& out_proj(int c) const { return out_proj_[cfg_.shared_out_proj ? 0 : c]; }

 private:
  int lags(int times) const { return std::min(times, cfg_.lookback_window); }
  Matrix<Scalar> lag_mlp_input(int n_lags) const;
  Matrix<Scalar> lag_scores(const ParamStore<Scalar>& store, int n_lags, Matrix<Scalar>* input,
                            Matrix<Scalar>* pre) const;

  int channels_ = 0;
  int dim_ = 0;
  AttentionConfig cfg_;
  Dense<Scalar> time_hidden_;
  Dense<Scalar> time_out_;
  ParamId psi_;
  std::vector<Dense<Scalar>> out_proj_;
};

/// Residual attention followed by a residual per-channel feed-forward net.
/// No normalization layers and no additive positional encoding.
template <typename Scalar>
class TransformerLayer {
 public:
  struct Cache {
    typename FactoredAttention<Scalar>::Cache attention;
    ChannelStack<Scalar> after_attention;  // X + attend(X)
    ChannelStack<Scalar> ffn_pre;          // pre-activations of the first FFN layer
    ChannelStack<Scalar> ffn_hidden;
  };

  TransformerLayer() = default;
  TransformerLayer(ParamStore<Scalar>& store, const std::string& name, int channels, int dim, int d_ff,
                   const AttentionConfig& cfg, CounterRng& rng);

  const FactoredAttention<Scalar>& attention() const { return attention_; }
  const Dense<Scalar>& ffn_in(int c) const { return ffn_in_[c]; }
  const Dense<Scalar>& ffn_out(int c) const { return ffn_out_[c]; }

  ChannelStack<Scalar> forward(const ParamStore<Scalar>& store, const ChannelStack<Scalar>& x, int geos, int times,
                               const std::vector<bool>& active, Cache* cache = nullptr) const;

  /// Returns dL/dx given dL/dout.
  ChannelStack<Scalar> backward(ParamStore<Scalar>& store, const Cache& cache, const ChannelStack<Scalar>& x,
                                const ChannelStack<Scalar>& dout, int geos, int times,
                                const std::vector<bool>& active) const;

 private:
  FactoredAttention<Scalar> attention_;
  std::vector<Dense<Scalar>> ffn_in_;
  std::vector<Dense<Scalar>> ffn_out_;
};

extern template class FactoredAttention<float>;
extern template class FactoredAttention<double>;
extern template class TransformerLayer<float>;
extern template class TransformerLayer<double>;

}  // namespace nnn
