#include "nnn/attention.hpp"

#include <atomic>
#include <limits>

#include "nnn/errors.hpp"

namespace nnn {

namespace {
std::atomic<std::uint64_t> g_score_evaluations{0};
}

std::uint64_t time_score_evaluations() { return g_score_evaluations.load(); }

void AttentionConfig::validate() const {
  if (lookback_window < 1) fail(ErrorCategory::config, "lookback window must be at least 1");
  if (!(temperature > 0.0)) fail(ErrorCategory::config, "attention temperature must be positive");
  if (hidden < 1) fail(ErrorCategory::config, "time-score MLP width must be positive");
}

template <typename Scalar>
FactoredAttention<Scalar>::FactoredAttention(ParamStore<Scalar>& store, const std::string& name, int channels,
                                             int dim, const AttentionConfig& cfg, CounterRng& rng)
    : channels_(channels), dim_(dim), cfg_(cfg) {
  cfg.validate();
  const int score_in = cfg.attention_by_channel ? 1 + channels : 1;
  time_hidden_ = Dense<Scalar>::create(store, name + "/time_scale/hidden", score_in, cfg.hidden, rng);
  time_out_ = Dense<Scalar>::create(store, name + "/time_scale/out", cfg.hidden, 1, rng);
  psi_ = store.add(name + "/channel_scores", Matrix<Scalar>::Identity(channels, channels));
  const int n_proj = cfg.shared_out_proj ? 1 : channels;
  for (int c = 0; c < n_proj; ++c) {
    const std::string suffix = cfg.shared_out_proj ? "" : std::to_string(c);
    out_proj_.push_back(Dense<Scalar>::create(store, name + "/out_proj" + suffix, dim, dim, rng));
  }
}

// Rows are ordered (channel, lag) when scores depend on the channel.
template <typename Scalar>
Matrix<Scalar> FactoredAttention<Scalar>::lag_mlp_input(int n_lags) const {
  const int groups = cfg_.attention_by_channel ? channels_ : 1;
  Matrix<Scalar> input = Matrix<Scalar>::Zero(groups * n_lags, cfg_.attention_by_channel ? 1 + channels_ : 1);
  for (int c = 0; c < groups; ++c) {
    for (int l = 0; l < n_lags; ++l) {
      input(c * n_lags + l, 0) = static_cast<Scalar>(static_cast<double>(l) / cfg_.lookback_window);
      if (cfg_.attention_by_channel) input(c * n_lags + l, 1 + c) = Scalar(1);
    }
  }
  return input;
}

// Scores for lags 0..n_lags-1, shape (n_lags, C).
template <typename Scalar>
Matrix<Scalar> FactoredAttention<Scalar>::lag_scores(const ParamStore<Scalar>& store, int n_lags,
                                                     Matrix<Scalar>* input_out, Matrix<Scalar>* pre_out) const {
  Matrix<Scalar> input = lag_mlp_input(n_lags);
  g_score_evaluations += static_cast<std::uint64_t>(input.rows());
  Matrix<Scalar> pre = time_hidden_.forward(store, input);
  Matrix<Scalar> raw = time_out_.forward(store, relu(pre).eval());
  Matrix<Scalar> scores(n_lags, channels_);
  for (int c = 0; c < channels_; ++c) {
    const int group = cfg_.attention_by_channel ? c : 0;
    for (int l = 0; l < n_lags; ++l) scores(l, c) = raw(group * n_lags + l, 0);
  }
  if (input_out) *input_out = std::move(input);
  if (pre_out) *pre_out = std::move(pre);
  return scores;
}

template <typename Scalar>
std::vector<Matrix<Scalar>> FactoredAttention<Scalar>::temporal_scores(const ParamStore<Scalar>& store,
                                                                       int times) const {
  if (times < 1) fail(ErrorCategory::shape_mismatch, "temporal scores need T >= 1");
  // One MLP row per distinct signed lag t - t' in [-(T-1), T-1] and channel.
  const int span = 2 * times - 1;
  const int groups = cfg_.attention_by_channel ? channels_ : 1;
  Matrix<Scalar> input = Matrix<Scalar>::Zero(groups * span, cfg_.attention_by_channel ? 1 + channels_ : 1);
  for (int c = 0; c < groups; ++c) {
    for (int k = 0; k < span; ++k) {
      const int lag = k - (times - 1);
      input(c * span + k, 0) = static_cast<Scalar>(static_cast<double>(lag) / cfg_.lookback_window);
      if (cfg_.attention_by_channel) input(c * span + k, 1 + c) = Scalar(1);
    }
  }
  g_score_evaluations += static_cast<std::uint64_t>(input.rows());
  Matrix<Scalar> raw = time_out_.forward(store, relu(time_hidden_.forward(store, input)).eval());
  std::vector<Matrix<Scalar>> out(channels_, Matrix<Scalar>(times, times));
  for (int c = 0; c < channels_; ++c) {
    const int group = cfg_.attention_by_channel ? c : 0;
    for (int t = 0; t < times; ++t) {
      for (int s = 0; s < times; ++s) out[c](t, s) = raw(group * span + (t - s) + times - 1, 0);
    }
  }
  return out;
}

template <typename Scalar>
std::vector<Matrix<Scalar>> FactoredAttention<Scalar>::temporal_weights(const ParamStore<Scalar>& store,
                                                                        int times) const {
  const int n_lags = lags(times);
  const Matrix<Scalar> scores = lag_scores(store, n_lags, nullptr, nullptr);
  constexpr Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();
  std::vector<Matrix<Scalar>> out;
  out.reserve(channels_);
  for (int c = 0; c < channels_; ++c) {
    Matrix<Scalar> masked = Matrix<Scalar>::Constant(times, times, neg_inf);
    for (int t = 0; t < times; ++t) {
      for (int l = 0; l < n_lags && l <= t; ++l) masked(t, t - l) = scores(l, c);
    }
    out.push_back(softmax_rows<Scalar>(masked, static_cast<Scalar>(cfg_.temperature)));
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> FactoredAttention<Scalar>::channel_weights(const ParamStore<Scalar>& store) const {
  return softmax_rows<Scalar>(store.value(psi_), static_cast<Scalar>(cfg_.temperature));
}

template <typename Scalar>
ChannelStack<Scalar> FactoredAttention<Scalar>::attend(const ParamStore<Scalar>& store, const ChannelStack<Scalar>& x,
                                                       int geos, int times, const std::vector<bool>& active,
                                                       Cache* cache) const {
  if (static_cast<int>(x.size()) != channels_) fail(ErrorCategory::shape_mismatch, "attention channel count");
  for (const auto& m : x) {
    if (m.rows() != static_cast<Eigen::Index>(geos) * times || m.cols() != dim_) {
      fail(ErrorCategory::shape_mismatch, "attention input must be (G*T, D) per channel");
    }
  }
  const int n_lags = lags(times);
  Matrix<Scalar> mlp_input;
  Matrix<Scalar> mlp_pre;
  const Matrix<Scalar> scores = lag_scores(store, n_lags, &mlp_input, &mlp_pre);
  constexpr Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();
  std::vector<Matrix<Scalar>> weights(channels_);
  for (int c = 0; c < channels_; ++c) {
    if (!active[c]) continue;
    Matrix<Scalar> masked = Matrix<Scalar>::Constant(times, times, neg_inf);
    for (int t = 0; t < times; ++t) {
      for (int l = 0; l < n_lags && l <= t; ++l) masked(t, t - l) = scores(l, c);
    }
    weights[c] = softmax_rows<Scalar>(masked, static_cast<Scalar>(cfg_.temperature));
  }
  Matrix<Scalar> chan = channel_weights(store);

  ChannelStack<Scalar> sources(channels_);
  ChannelStack<Scalar> out(channels_);
  for (int c = 0; c < channels_; ++c) {
    if (!active[c]) continue;
    const Matrix<Scalar>* src = &x[c];
    if (cfg_.channel_mixing) {
      sources[c] = Matrix<Scalar>::Zero(x[c].rows(), dim_);
      for (int s = 0; s < channels_; ++s) sources[c] += chan(c, s) * x[s];
      src = &sources[c];
    }
    out[c].resize(x[c].rows(), dim_);
    for (int g = 0; g < geos; ++g) {
      out[c].middleRows(static_cast<Eigen::Index>(g) * times, times).noalias() =
          weights[c] * src->middleRows(static_cast<Eigen::Index>(g) * times, times);
    }
  }
  if (cache) {
    cache->time_weights = std::move(weights);
    cache->channel_weights = std::move(chan);
    cache->mlp_input = std::move(mlp_input);
    cache->mlp_pre = std::move(mlp_pre);
    cache->sources = std::move(sources);
    cache->attended = out;
  }
  return out;
}

template <typename Scalar>
ChannelStack<Scalar> FactoredAttention<Scalar>::forward(const ParamStore<Scalar>& store,
                                                        const ChannelStack<Scalar>& x, int geos, int times,
                                                        const std::vector<bool>& active, Cache* cache) const {
  ChannelStack<Scalar> attended = attend(store, x, geos, times, active, cache);
  for (int c = 0; c < channels_; ++c) {
    if (active[c]) attended[c] = out_proj(c).forward(store, attended[c]);
  }
  return attended;
}

template <typename Scalar>
void FactoredAttention<Scalar>::backward(ParamStore<Scalar>& store, const Cache& cache, const ChannelStack<Scalar>& x,
                                         const ChannelStack<Scalar>& dout, int geos, int times,
                                         const std::vector<bool>& active, ChannelStack<Scalar>& dx) const {
  const int n_lags = lags(times);
  const auto temp = static_cast<Scalar>(cfg_.temperature);
  Matrix<Scalar> dscores = Matrix<Scalar>::Zero(n_lags, channels_);
  Matrix<Scalar> dchan = Matrix<Scalar>::Zero(channels_, channels_);

  for (int c = 0; c < channels_; ++c) {
    if (!active[c]) continue;
    const Matrix<Scalar> dattended = out_proj(c).backward(store, cache.attended[c], dout[c]);
    const Matrix<Scalar>& src = cfg_.channel_mixing ? cache.sources[c] : x[c];
    const Matrix<Scalar>& w = cache.time_weights[c];
    Matrix<Scalar> dw = Matrix<Scalar>::Zero(times, times);
    Matrix<Scalar> dsrc(src.rows(), dim_);
    for (int g = 0; g < geos; ++g) {
      const auto rows = static_cast<Eigen::Index>(g) * times;
      dw.noalias() += dattended.middleRows(rows, times) * src.middleRows(rows, times).transpose();
      dsrc.middleRows(rows, times).noalias() = w.transpose() * dattended.middleRows(rows, times);
    }
    const Matrix<Scalar> dmasked = softmax_rows_backward<Scalar>(w, dw, temp);
    for (int t = 0; t < times; ++t) {
      for (int l = 0; l < n_lags && l <= t; ++l) dscores(l, c) += dmasked(t, t - l);
    }
    if (cfg_.channel_mixing) {
      for (int s = 0; s < channels_; ++s) {
        dchan(c, s) = (dsrc.array() * x[s].array()).sum();
        dx[s] += cache.channel_weights(c, s) * dsrc;
      }
    } else {
      dx[c] += dsrc;
    }
  }

  if (cfg_.channel_mixing) {
    store.grad(psi_) += softmax_rows_backward<Scalar>(cache.channel_weights, dchan, temp);
  }

  const int groups = cfg_.attention_by_channel ? channels_ : 1;
  Matrix<Scalar> draw = Matrix<Scalar>::Zero(groups * n_lags, 1);
  for (int c = 0; c < channels_; ++c) {
    const int group = cfg_.attention_by_channel ? c : 0;
    for (int l = 0; l < n_lags; ++l) draw(group * n_lags + l, 0) += dscores(l, c);
  }
  const Matrix<Scalar> hidden = relu(cache.mlp_pre);
  Matrix<Scalar> dhidden = time_out_.backward(store, hidden, draw);
  dhidden = (cache.mlp_pre.array() > Scalar(0)).select(dhidden, Scalar(0));
  time_hidden_.backward(store, cache.mlp_input, dhidden, false);
}

// TransformerLayer -------------------------------------------------------------

template <typename Scalar>
TransformerLayer<Scalar>::TransformerLayer(ParamStore<Scalar>& store, const std::string& name, int channels, int dim,
                                           int d_ff, const AttentionConfig& cfg, CounterRng& rng)
    : attention_(store, name + "/attention", channels, dim, cfg, rng) {
  for (int c = 0; c < channels; ++c) {
    ffn_in_.push_back(Dense<Scalar>::create(store, name + "/ffn" + std::to_string(c) + "/in", dim, d_ff, rng));
    ffn_out_.push_back(Dense<Scalar>::create(store, name + "/ffn" + std::to_string(c) + "/out", d_ff, dim, rng));
  }
}

template <typename Scalar>
ChannelStack<Scalar> TransformerLayer<Scalar>::forward(const ParamStore<Scalar>& store, const ChannelStack<Scalar>& x,
                                                       int geos, int times, const std::vector<bool>& active,
                                                       Cache* cache) const {
  ChannelStack<Scalar> y = attention_.forward(store, x, geos, times, active, cache ? &cache->attention : nullptr);
  const auto channels = static_cast<int>(x.size());
  ChannelStack<Scalar> hidden(channels);
  ChannelStack<Scalar> out(channels);
  for (int c = 0; c < channels; ++c) {
    if (!active[c]) {
      out[c] = x[c];
      continue;
    }
    y[c] += x[c];
    hidden[c] = relu(ffn_in_[c].forward(store, y[c]));
    out[c] = y[c] + ffn_out_[c].forward(store, hidden[c]);
  }
  if (cache) {
    cache->after_attention = std::move(y);
    cache->ffn_hidden = std::move(hidden);
  }
  return out;
}

template <typename Scalar>
ChannelStack<Scalar> TransformerLayer<Scalar>::backward(ParamStore<Scalar>& store, const Cache& cache,
                                                        const ChannelStack<Scalar>& x,
                                                        const ChannelStack<Scalar>& dout, int geos, int times,
                                                        const std::vector<bool>& active) const {
  const auto channels = static_cast<int>(x.size());
  ChannelStack<Scalar> dy(channels);
  ChannelStack<Scalar> dx(channels);
  for (int c = 0; c < channels; ++c) {
    if (!active[c]) {
      dx[c] = dout[c];
      continue;
    }
    Matrix<Scalar> dhidden = ffn_out_[c].backward(store, cache.ffn_hidden[c], dout[c]);
    dhidden = (cache.ffn_hidden[c].array() > Scalar(0)).select(dhidden, Scalar(0));
    dy[c] = dout[c] + ffn_in_[c].backward(store, cache.after_attention[c], dhidden);
    dx[c] = dy[c];
  }
  attention_.backward(store, cache.attention, x, dy, geos, times, active, dx);
  return dx;
}

template class FactoredAttention<float>;
template class FactoredAttention<double>;
template class TransformerLayer<float>;
template class TransformerLayer<double>;

}  // namespace nnn
