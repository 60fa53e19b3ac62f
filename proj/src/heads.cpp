#include "nnn/heads.hpp"

#include "nnn/errors.hpp"

namespace nnn {

template <typename Scalar>
Matrix<Scalar> log_scale_rows(const Matrix<Scalar>& x) {
  Matrix<Scalar> out = Matrix<Scalar>::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar n = x.row(r).norm();
    if (n > Scalar(0)) out.row(r) = x.row(r) * (std::log(n) / n);
  }
  return out;
}

// SalesHead ------------------------------------------------------------------------

template <typename Scalar>
SalesHead<Scalar>::SalesHead(ParamStore<Scalar>& store, const std::string& name, int dim, int geos, bool use_geo,
                             const HeadConfig& cfg, CounterRng& rng)
    : dim_(dim), geos_(geos), use_geo_(use_geo), log_scale_(cfg.log_scale) {
  MlpResnetConfig mlp_cfg{cfg.n_layers, cfg.layer_size, false, 1};
  mlp_ = MlpResnet<Scalar>(store, name + "/mlp", use_geo ? dim + geos : dim, mlp_cfg, rng);
  if (use_geo) {
    // Linear scale multiplies by |m_g| starting at 1; log scale adds m_g starting at 0.
    geo_mult_ = store.add(name + "/geo_multiplier", cfg.log_scale ? Matrix<Scalar>::Zero(geos, 1)
                                                                  : Matrix<Scalar>::Ones(geos, 1));
  }
}

template <typename Scalar>
Matrix<Scalar> SalesHead<Scalar>::mlp_input(const Matrix<Scalar>& direction, int times) const {
  if (!use_geo_) return direction;
  Matrix<Scalar> in = Matrix<Scalar>::Zero(direction.rows(), dim_ + geos_);
  in.leftCols(dim_) = direction;
  for (Eigen::Index r = 0; r < direction.rows(); ++r) in(r, dim_ + r / times) = Scalar(1);
  return in;
}

template <typename Scalar>
Scalar SalesHead<Scalar>::geo_factor(const ParamStore<Scalar>& store, int g) const {
  if (!use_geo_) return log_scale_ ? Scalar(0) : Scalar(1);
  const Scalar m = store.value(geo_mult_)(g, 0);
  return log_scale_ ? m : std::abs(m);
}

template <typename Scalar>
Vector<Scalar> SalesHead<Scalar>::forward(const ParamStore<Scalar>& store, const Matrix<Scalar>& x, int times,
                                          Cache* cache) const {
  if (x.cols() != dim_) fail(ErrorCategory::shape_mismatch, "sales head input width differs from D");
  if (use_geo_ && x.rows() != static_cast<Eigen::Index>(geos_) * times) {
    fail(ErrorCategory::shape_mismatch, "sales head geo count differs from input");
  }
  const Eigen::Index n = x.rows();
  Vector<Scalar> volume = x.rowwise().norm();
  Matrix<Scalar> direction(n, dim_);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (volume(r) > Scalar(0)) {
      direction.row(r) = x.row(r) / volume(r);
    } else {
      direction.row(r).setZero();
    }
  }
  auto* mlp_cache = cache ? &cache->mlp : nullptr;
  const Vector<Scalar> logits = mlp_.forward(store, mlp_input(direction, times), mlp_cache).col(0);
  Vector<Scalar> y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Scalar m = geo_factor(store, static_cast<int>(r / times));
    y(r) = log_scale_ ? volume(r) - softplus(logits(r)) + m : volume(r) * sigmoid(logits(r)) * m;
  }
  if (cache) {
    cache->volume = std::move(volume);
    cache->direction = std::move(direction);
    cache->logits = logits;
  }
  return y;
}

template <typename Scalar>
Matrix<Scalar> SalesHead<Scalar>::backward(ParamStore<Scalar>& store, const Cache& cache, const Vector<Scalar>& dy,
                                           int times, bool need_dx) const {
  const Eigen::Index n = dy.size();
  Vector<Scalar> dvolume(n);
  Matrix<Scalar> dlogits(n, 1);
  for (Eigen::Index r = 0; r < n; ++r) {
    const int g = static_cast<int>(r / times);
    const Scalar p = sigmoid(cache.logits(r));
    const Scalar v = cache.volume(r);
    if (log_scale_) {
      dvolume(r) = dy(r);
      dlogits(r, 0) = -dy(r) * p;
      if (use_geo_) store.grad(geo_mult_)(g, 0) += dy(r);
    } else {
      const Scalar m = geo_factor(store, g);
      dvolume(r) = dy(r) * p * m;
      dlogits(r, 0) = dy(r) * v * m * p * (Scalar(1) - p);
      if (use_geo_) {
        const Scalar w = store.value(geo_mult_)(g, 0);
        store.grad(geo_mult_)(g, 0) += dy(r) * v * p * Scalar((w > 0) - (w < 0));
      }
    }
  }
  Matrix<Scalar> din = mlp_.backward(store, cache.mlp, dlogits, need_dx);
  if (!need_dx) return {};
  Matrix<Scalar> dx(n, dim_);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Scalar v = cache.volume(r);
    if (v > Scalar(0)) {
      const auto ddir = din.row(r).head(dim_);
      const auto dir = cache.direction.row(r);
      dx.row(r) = (ddir - dir * ddir.dot(dir)) / v + dvolume(r) * dir;
    } else {
      dx.row(r).setZero();
    }
  }
  return dx;
}

// SalesMultiHead -------------------------------------------------------------------

template <typename Scalar>
SalesMultiHead<Scalar>::SalesMultiHead(ParamStore<Scalar>& store, const std::string& name, int dim, int geos,
                                       std::vector<int> channels_to_use, int geo_channel, const HeadConfig& cfg,
                                       CounterRng& rng)
    : channels_(std::move(channels_to_use)) {
  if (channels_.empty()) fail(ErrorCategory::config, "sales head needs at least one channel");
  for (int c : channels_) {
    heads_.emplace_back(store, name + "/channel" + std::to_string(c), dim, geos, c == geo_channel, cfg, rng);
  }
}

template <typename Scalar>
std::vector<Vector<Scalar>> SalesMultiHead<Scalar>::contributions(const ParamStore<Scalar>& store,
                                                                  const ChannelStack<Scalar>& x, int times,
                                                                  Cache* cache) const {
  std::vector<Vector<Scalar>> out;
  if (cache) cache->heads.resize(heads_.size());
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    out.push_back(heads_[k].forward(store, x[channels_[k]], times, cache ? &cache->heads[k] : nullptr));
  }
  return out;
}

template <typename Scalar>
Vector<Scalar> SalesMultiHead<Scalar>::forward(const ParamStore<Scalar>& store, const ChannelStack<Scalar>& x,
                                               int times, Cache* cache) const {
  auto parts = contributions(store, x, times, cache);
  Vector<Scalar> sum = parts.front();
  for (std::size_t k = 1; k < parts.size(); ++k) sum += parts[k];
  if (cache) cache->contributions = std::move(parts);
  return sum;
}

template <typename Scalar>
void SalesMultiHead<Scalar>::backward(ParamStore<Scalar>& store, const Cache& cache, const Vector<Scalar>& dy,
                                      int times, ChannelStack<Scalar>& dx, bool need_dx) const {
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    Matrix<Scalar> d = heads_[k].backward(store, cache.heads[k], dy, times, need_dx);
    if (need_dx) dx[channels_[k]] += d;
  }
}

// SearchHead ---------------------------------------------------------------------

template <typename Scalar>
SearchHead<Scalar>::SearchHead(ParamStore<Scalar>& store, const std::string& name, int dim, std::vector<int> inputs,
                               const HeadConfig& cfg, CounterRng& rng)
    : dim_(dim), inputs_(std::move(inputs)) {
  if (inputs_.empty()) fail(ErrorCategory::config, "search head needs at least one input channel");
  MlpResnetConfig mlp_cfg{cfg.n_layers, cfg.layer_size, false, dim};
  mlp_ = MlpResnet<Scalar>(store, name + "/mlp", dim * static_cast<int>(inputs_.size()), mlp_cfg, rng);
}

template <typename Scalar>
Matrix<Scalar> SearchHead<Scalar>::forward(const ParamStore<Scalar>& store, const ChannelStack<Scalar>& x,
                                           Cache* cache) const {
  const Eigen::Index n = x[inputs_.front()].rows();
  Matrix<Scalar> in(n, dim_ * static_cast<Eigen::Index>(inputs_.size()));
  for (std::size_t k = 0; k < inputs_.size(); ++k) in.middleCols(k * dim_, dim_) = x[inputs_[k]];
  return mlp_.forward(store, in, cache ? &cache->mlp : nullptr);
}

template <typename Scalar>
void SearchHead<Scalar>::backward(ParamStore<Scalar>& store, const Cache& cache, const Matrix<Scalar>& dy,
                                  ChannelStack<Scalar>& dx, bool need_dx) const {
  Matrix<Scalar> din = mlp_.backward(store, cache.mlp, dy, need_dx);
  if (!need_dx) return;
  for (std::size_t k = 0; k < inputs_.size(); ++k) dx[inputs_[k]] += din.middleCols(k * dim_, dim_);
}

// PassthroughHead ------------------------------------------------------------------

template <typename Scalar>
PassthroughHead<Scalar>::PassthroughHead(ParamStore<Scalar>& store, const std::string& name, int dim, int native_dim)
    : dim_(dim), native_dim_(native_dim) {
  weight_ = store.add(name + "/kernel", Matrix<Scalar>::Identity(dim, native_dim), false);
  bias_ = store.add(name + "/bias", Matrix<Scalar>::Zero(1, native_dim), false);
}

template <typename Scalar>
Matrix<Scalar> PassthroughHead<Scalar>::forward(const ParamStore<Scalar>& store, const Matrix<Scalar>& x) const {
  Matrix<Scalar> out = Matrix<Scalar>::Zero(x.rows(), dim_);
  out.leftCols(native_dim_).noalias() = x * store.value(weight_);
  out.leftCols(native_dim_).rowwise() += store.value(bias_).row(0);
  return out;
}

template Matrix<float> log_scale_rows<float>(const Matrix<float>&);
template Matrix<double> log_scale_rows<double>(const Matrix<double>&);
template class SalesHead<float>;
template class SalesHead<double>;
template class SalesMultiHead<float>;
template class SalesMultiHead<double>;
template class SearchHead<float>;
template class SearchHead<double>;
template class PassthroughHead<float>;
template class PassthroughHead<double>;

}  // namespace nnn
