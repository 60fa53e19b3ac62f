#include "nnn/model.hpp"

#include <algorithm>
#include <cmath>

#include "nnn/errors.hpp"

namespace nnn {

void ModelConfig::validate() const {
  if (n_layers < 0) fail(ErrorCategory::config, "Transformer Blocks must be >= 0");
  if (d_ff < 1) fail(ErrorCategory::config, "feed-forward width must be positive");
  if (head.n_layers < 0 || head.layer_size < 1) fail(ErrorCategory::config, "bad head size");
  if (!(balancing >= 0.0 && balancing <= 1.0)) fail(ErrorCategory::config, "balancing must lie in [0, 1]");
  if (!(l1 >= 0.0)) fail(ErrorCategory::config, "L1 coefficient must be >= 0");
  if (search_inputs.empty()) fail(ErrorCategory::config, "search head needs at least one input channel");
  attention.validate();
}

Normalization fit_normalization(const MediaTensor& x, const std::vector<Cell>& cells) {
  if (cells.empty()) fail(ErrorCategory::config, "normalization needs at least one cell");
  Normalization n;
  const int target = x.target_channel();
  n.channel_scale.assign(x.num_channels(), 0.0);
  double sales = 0.0;
  for (const Cell& cell : cells) {
    for (int c = 0; c < x.num_channels(); ++c) n.channel_scale[c] += channel_volume(x, cell.g, cell.t, c);
    sales += std::abs(x.at(cell.g, cell.t, target, 0));
  }
  for (double& s : n.channel_scale) {
    s /= static_cast<double>(cells.size());
    if (!(s > 0.0)) s = 1.0;
  }
  n.sales_scale = sales / static_cast<double>(cells.size());
  if (!(n.sales_scale > 0.0)) n.sales_scale = 1.0;
  return n;
}

LossCells loss_cells(const SplitSets& sets, int geos, int train_end) {
  LossCells cells;
  cells.sales = sets.train;
  for (int g = 0; g < geos; ++g) {
    for (int t = 0; t < train_end; ++t) cells.search.push_back({g, t});
  }
  return cells;
}

template <typename Scalar>
NnnModel<Scalar>::NnnModel(const ModelConfig& cfg, std::vector<ChannelSpec> channels, int geos, int dim,
                           ParamStore<Scalar>& store)
    : cfg_(cfg), channels_(std::move(channels)), geos_(geos), dim_(dim) {
  cfg_.validate();
  // Reuse the tensor's registry checks.
  MediaTensor registry(1, 1, channels_, dim);
  target_ = registry.target_channel();
  search_ = registry.organic_channel();
  const int n_channels = static_cast<int>(channels_.size());

  CounterRng rng(cfg_.seed, 0x4d0de1);
  for (int i = 0; i < cfg_.n_layers; ++i) {
    layers_.emplace_back(store, "layer" + std::to_string(i), n_channels, dim, cfg_.d_ff, cfg_.attention, rng);
  }
  std::vector<int> sales;
  if (cfg_.sales_channels.empty()) {
    for (int c = 0; c < n_channels; ++c) {
      if (c != target_) sales.push_back(c);
    }
  } else {
    for (const auto& name : cfg_.sales_channels) sales.push_back(registry.channel_index(name));
  }
  for (int c : sales) {
    if (c == target_) fail(ErrorCategory::config, "the target channel cannot feed the sales head");
  }
  std::vector<int> search;
  for (const auto& name : cfg_.search_inputs) search.push_back(registry.channel_index(name));
  sales_head_ = SalesMultiHead<Scalar>(store, "sales_head", dim, geos, sales, search_, cfg_.head, rng);
  search_head_ = SearchHead<Scalar>(store, "search_head", dim, search, cfg_.head, rng);
  channel_scale_ = store.add("normalization/channel_scale", Matrix<Scalar>::Ones(1, n_channels), false);
  sales_scale_ = store.add("normalization/sales_scale", Matrix<Scalar>::Ones(1, 1), false);
}

template <typename Scalar>
void NnnModel<Scalar>::set_normalization(ParamStore<Scalar>& store, const Normalization& norm) const {
  if (norm.channel_scale.size() != channels_.size()) {
    fail(ErrorCategory::shape_mismatch, "normalization channel count differs from model");
  }
  for (std::size_t c = 0; c < channels_.size(); ++c) {
    store.value(channel_scale_)(0, c) = cfg_.normalize ? static_cast<Scalar>(norm.channel_scale[c]) : Scalar(1);
  }
  store.value(sales_scale_)(0, 0) = cfg_.normalize ? static_cast<Scalar>(norm.sales_scale) : Scalar(1);
}

template <typename Scalar>
Normalization NnnModel<Scalar>::normalization(const ParamStore<Scalar>& store) const {
  Normalization n;
  for (std::size_t c = 0; c < channels_.size(); ++c) n.channel_scale.push_back(store.value(channel_scale_)(0, c));
  n.sales_scale = store.value(sales_scale_)(0, 0);
  return n;
}

template <typename Scalar>
ChannelStack<Scalar> NnnModel<Scalar>::encode(const ParamStore<Scalar>& store, const MediaTensor& x) const {
  if (x.num_channels() != static_cast<int>(channels_.size()) || x.dim() != dim_ || x.geos() != geos_) {
    fail(ErrorCategory::shape_mismatch, "dataset shape differs from the model's");
  }
  const int times = x.times();
  const auto rows = static_cast<Eigen::Index>(geos_) * times;
  ChannelStack<Scalar> out(channels_.size());
  for (int c = 0; c < x.num_channels(); ++c) {
    out[c] = Matrix<Scalar>::Zero(rows, dim_);
    if (c == target_) continue;  // masked before anything else
    const Scalar inv = Scalar(1) / store.value(channel_scale_)(0, c);
    for (int g = 0; g < geos_; ++g) {
      for (int t = 0; t < times; ++t) {
        const auto s = x.slice(g, t, c);
        for (int d = 0; d < dim_; ++d) out[c](cell_row(g, t, times), d) = static_cast<Scalar>(s[d]) * inv;
      }
    }
    if (cfg_.head.log_scale) out[c] = log_scale_rows(out[c]);
  }
  return out;
}

template <typename Scalar>
Vector<Scalar> NnnModel<Scalar>::sales_targets(const ParamStore<Scalar>& store, const MediaTensor& x) const {
  const int times = x.times();
  const Scalar scale = store.value(sales_scale_)(0, 0);
  Vector<Scalar> y(static_cast<Eigen::Index>(geos_) * times);
  for (int g = 0; g < geos_; ++g) {
    for (int t = 0; t < times; ++t) {
      const Scalar v = static_cast<Scalar>(x.at(g, t, target_, 0)) / scale;
      y(cell_row(g, t, times)) = cfg_.head.log_scale ? std::log(std::max(v, Scalar(1e-6))) : v;
    }
  }
  return y;
}

template <typename Scalar>
Matrix<Scalar> NnnModel<Scalar>::search_targets(const ParamStore<Scalar>& store, const MediaTensor& x) const {
  const int times = x.times();
  const Scalar inv = Scalar(1) / store.value(channel_scale_)(0, search_);
  Matrix<Scalar> y(static_cast<Eigen::Index>(geos_) * times, dim_);
  for (int g = 0; g < geos_; ++g) {
    for (int t = 0; t < times; ++t) {
      const auto s = x.slice(g, t, search_);
      for (int d = 0; d < dim_; ++d) y(cell_row(g, t, times), d) = static_cast<Scalar>(s[d]) * inv;
    }
  }
  return y;
}

template <typename Scalar>
std::vector<bool> NnnModel<Scalar>::active_channels(bool with_search) const {
  std::vector<bool> active(channels_.size(), cfg_.attention.channel_mixing);
  for (int c : sales_head_.channels()) active[c] = true;
  if (with_search) {
    for (int c : search_head_.inputs()) active[c] = true;
  }
  return active;
}

template <typename Scalar>
typename NnnModel<Scalar>::Output NnnModel<Scalar>::forward(const ParamStore<Scalar>& store,
                                                            const ChannelStack<Scalar>& x, int times,
                                                            bool with_search, Cache* cache) const {
  const std::vector<bool> active = active_channels(with_search);
  ChannelStack<Scalar> h = x;
  if (cache) {
    cache->layer_inputs.clear();
    cache->layers.assign(layers_.size(), {});
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    ChannelStack<Scalar> next = layers_[i].forward(store, h, geos_, times, active, cache ? &cache->layers[i] : nullptr);
    if (cache) cache->layer_inputs.push_back(std::move(h));
    h = std::move(next);
  }
  Output out;
  out.contributions = sales_head_.contributions(store, h, times, cache ? &cache->sales : nullptr);
  out.sales = out.contributions.front();
  for (std::size_t k = 1; k < out.contributions.size(); ++k) out.sales += out.contributions[k];
  if (with_search) out.search = search_head_.forward(store, h, cache ? &cache->search : nullptr);
  if (cache) cache->final = std::move(h);
  return out;
}

template <typename Scalar>
typename NnnModel<Scalar>::Prediction NnnModel<Scalar>::predict(const ParamStore<Scalar>& store, const MediaTensor& x,
                                                                bool with_search) const {
  const int times = x.times();
  const Output out = forward(store, encode(store, x), times, with_search);
  const double sales_scale = store.value(sales_scale_)(0, 0);
  const double search_scale = store.value(channel_scale_)(0, search_);
  Prediction p;
  auto to_grid = [&](const Vector<Scalar>& v, bool exp_scale) {
    Eigen::MatrixXd m(geos_, times);
    for (int g = 0; g < geos_; ++g) {
      for (int t = 0; t < times; ++t) {
        const double raw = v(cell_row(g, t, times));
        m(g, t) = (exp_scale ? std::exp(raw) : raw) * sales_scale;
      }
    }
    return m;
  };
  p.sales = to_grid(out.sales, cfg_.head.log_scale);
  // Log-scale contributions are additive terms of log sales and are left unscaled.
  for (const auto& c : out.contributions) {
    p.contributions.push_back(cfg_.head.log_scale ? to_grid(c, false) / sales_scale : to_grid(c, false));
  }
  if (with_search) {
    for (int g = 0; g < geos_; ++g) {
      p.search.push_back(out.search.middleRows(cell_row(g, 0, times), times).template cast<double>() * search_scale);
    }
  }
  return p;
}

template <typename Scalar>
LossValue NnnModel<Scalar>::loss(ParamStore<Scalar>& store, const ChannelStack<Scalar>& x, int times,
                                 const Vector<Scalar>& sales_target, const Matrix<Scalar>& search_target,
                                 const LossCells& cells, double balancing, double l1, bool gradient) const {
  if (cells.sales.empty()) fail(ErrorCategory::config, "loss needs at least one sales cell");
  const bool with_search = balancing < 1.0;
  if (with_search && cells.search.empty()) fail(ErrorCategory::config, "loss needs at least one search cell");
  Cache cache;
  const Output out = forward(store, x, times, with_search, gradient ? &cache : nullptr);

  LossValue value;
  Vector<Scalar> dsales;
  Matrix<Scalar> dsearch;
  if (gradient) dsales = Vector<Scalar>::Zero(out.sales.size());
  const double n_sales = static_cast<double>(cells.sales.size());
  for (const Cell& cell : cells.sales) {
    const Eigen::Index r = cell_row(cell.g, cell.t, times);
    const double e = static_cast<double>(out.sales(r)) - static_cast<double>(sales_target(r));
    value.sales += e * e;
    if (gradient) dsales(r) += static_cast<Scalar>(2.0 * balancing * e / n_sales);
  }
  value.sales /= n_sales;

  if (with_search) {
    if (gradient) dsearch = Matrix<Scalar>::Zero(out.search.rows(), dim_);
    const double n_search = static_cast<double>(cells.search.size()) * dim_;
    for (const Cell& cell : cells.search) {
      if (cell.t + 1 >= times) fail(ErrorCategory::shape_mismatch, "search cell has no next step");
      const Eigen::Index r = cell_row(cell.g, cell.t, times);
      const auto diff = (out.search.row(r) - search_target.row(r + 1)).template cast<double>().eval();
      value.search += diff.squaredNorm();
      if (gradient) dsearch.row(r) += (diff * (2.0 * (1.0 - balancing) / n_search)).template cast<Scalar>();
    }
    value.search /= n_search;
  }
  value.penalty = l1 > 0.0 ? l1 * store.l1_norm() : 0.0;
  value.total = balancing * value.sales + (1.0 - balancing) * value.search + value.penalty;
  if (!gradient) return value;

  store.zero_grad();
  const auto rows = static_cast<Eigen::Index>(geos_) * times;
  ChannelStack<Scalar> dh(channels_.size(), Matrix<Scalar>::Zero(rows, dim_));
  const bool need_dx = !layers_.empty();
  sales_head_.backward(store, cache.sales, dsales, times, dh, need_dx);
  if (with_search) search_head_.backward(store, cache.search, dsearch, dh, need_dx);
  const std::vector<bool> active = active_channels(with_search);
  for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i) {
    dh = layers_[i].backward(store, cache.layers[i], cache.layer_inputs[i], dh, geos_, times, active);
  }
  if (l1 > 0.0) store.add_l1_grad(l1);
  return value;
}

template class NnnModel<float>;
template class NnnModel<double>;

}  // namespace nnn
