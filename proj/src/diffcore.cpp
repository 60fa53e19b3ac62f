#include "nnn/diffcore.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

#include "nnn/errors.hpp"

namespace nnn {

// ParamStore -------------------------------------------------------------------

template <typename Scalar>
ParamId ParamStore<Scalar>::add(std::string name, Matrix<Scalar> init, bool trainable) {
  if (find(name)) fail(ErrorCategory::config, "duplicate parameter name '" + name + "'");
  Entry e{std::move(name), std::move(init), {}, trainable};
  e.grad = Matrix<Scalar>::Zero(e.value.rows(), e.value.cols());
  entries_.push_back(std::move(e));
  return ParamId{static_cast<int>(entries_.size()) - 1};
}

template <typename Scalar>
std::optional<ParamId> ParamStore<Scalar>::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return ParamId{static_cast<int>(i)};
  }
  return std::nullopt;
}

template <typename Scalar>
std::size_t ParamStore<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.trainable) n += static_cast<std::size_t>(e.value.size());
  }
  return n;
}

template <typename Scalar>
void ParamStore<Scalar>::zero_grad() {
  for (auto& e : entries_) e.grad.setZero();
}

template <typename Scalar>
double ParamStore<Scalar>::l1_norm() const {
  double sum = 0.0;
  for (const auto& e : entries_) {
    if (e.trainable) sum += e.value.template cast<double>().cwiseAbs().sum();
  }
  return sum;
}

template <typename Scalar>
void ParamStore<Scalar>::add_l1_grad(double lambda) {
  if (lambda == 0.0) return;
  const auto l = static_cast<Scalar>(lambda);
  for (auto& e : entries_) {
    if (!e.trainable) continue;
    e.grad += l * e.value.unaryExpr([](Scalar v) { return Scalar((v > 0) - (v < 0)); });
  }
}

template <typename Scalar>
double ParamStore<Scalar>::sparsity(double threshold) const {
  std::size_t small = 0;
  std::size_t total = 0;
  for (const auto& e : entries_) {
    if (!e.trainable) continue;
    total += static_cast<std::size_t>(e.value.size());
    small += static_cast<std::size_t>((e.value.array().abs() < static_cast<Scalar>(threshold)).count());
  }
  return total == 0 ? 0.0 : static_cast<double>(small) / static_cast<double>(total);
}

template <typename Scalar>
template <typename Other>
void ParamStore<Scalar>::assign_from(const ParamStore<Other>& other) {
  if (other.entries().size() != entries_.size()) {
    fail(ErrorCategory::shape_mismatch, "checkpoint parameter count differs from model");
  }
  for (const auto& src : other.entries()) {
    auto id = find(src.name);
    if (!id) fail(ErrorCategory::shape_mismatch, "checkpoint has unknown parameter '" + src.name + "'");
    auto& dst = entries_[id->index];
    if (dst.value.rows() != src.value.rows() || dst.value.cols() != src.value.cols()) {
      fail(ErrorCategory::shape_mismatch, "checkpoint shape mismatch for '" + src.name + "'");
    }
    dst.value = src.value.template cast<Scalar>();
  }
}

template <typename Scalar>
Matrix<Scalar> glorot_uniform(int rows, int cols, CounterRng& rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  Matrix<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(rng.uniform(-limit, limit));
  return m;
}

// Softmax ---------------------------------------------------------------------

template <typename Scalar>
Matrix<Scalar> softmax_rows(const Matrix<Scalar>& scores, Scalar temperature) {
  Matrix<Scalar> out = Matrix<Scalar>::Zero(scores.rows(), scores.cols());
  constexpr Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Scalar max = neg_inf;
    for (Eigen::Index c = 0; c < scores.cols(); ++c) max = std::max(max, scores(r, c));
    if (max == neg_inf) continue;  // nothing to attend to
    Scalar sum = 0;
    for (Eigen::Index c = 0; c < scores.cols(); ++c) {
      if (scores(r, c) == neg_inf) continue;
      out(r, c) = std::exp((scores(r, c) - max) / temperature);
      sum += out(r, c);
    }
    out.row(r) /= sum;
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> softmax_rows_backward(const Matrix<Scalar>& weights, const Matrix<Scalar>& dweights,
                                     Scalar temperature) {
  Vector<Scalar> inner = (weights.array() * dweights.array()).rowwise().sum();
  Matrix<Scalar> d = weights.array() * (dweights.colwise() - inner).array();
  return d / temperature;
}

// Dense -------------------------------------------------------------------------

template <typename Scalar>
Dense<Scalar> Dense<Scalar>::create(ParamStore<Scalar>& store, const std::string& name, int in, int out,
                                    CounterRng& rng, bool use_bias) {
  Dense d;
  d.in = in;
  d.out = out;
  d.weight = store.add(name + "/kernel", glorot_uniform<Scalar>(in, out, rng));
  if (use_bias) d.bias = store.add(name + "/bias", Matrix<Scalar>::Zero(1, out));
  return d;
}

template <typename Scalar>
Matrix<Scalar> Dense<Scalar>::forward(const ParamStore<Scalar>& store, const Matrix<Scalar>& x) const {
  Matrix<Scalar> y(x.rows(), out);
  y.noalias() = x * store.value(weight);
  if (bias.valid()) y.rowwise() += store.value(bias).row(0);
  return y;
}

template <typename Scalar>
Matrix<Scalar> Dense<Scalar>::backward(ParamStore<Scalar>& store, const Matrix<Scalar>& x, const Matrix<Scalar>& dy,
                                       bool need_dx) const {
  store.grad(weight).noalias() += x.transpose() * dy;
  if (bias.valid()) store.grad(bias) += dy.colwise().sum();
  if (!need_dx) return {};
  Matrix<Scalar> dx(dy.rows(), in);
  dx.noalias() = dy * store.value(weight).transpose();
  return dx;
}

// MlpResnet ---------------------------------------------------------------------

template <typename Scalar>
MlpResnet<Scalar>::MlpResnet(ParamStore<Scalar>& store, const std::string& name, int d_in,
                             const MlpResnetConfig& cfg, CounterRng& rng)
    : d_in_(d_in), cfg_(cfg) {
  if (cfg.n_layers < 0) fail(ErrorCategory::config, "MLPResnet n_layers must be nonnegative");
  if (cfg.project_back && cfg.output_dim) {
    fail(ErrorCategory::config, "MLPResnet cannot both project back and use output_dim");
  }
  input_ = Dense<Scalar>::create(store, name + "/dense_in", d_in, cfg.layer_size, rng);
  for (int i = 0; i < cfg.n_layers; ++i) {
    blocks_.push_back(Dense<Scalar>::create(store, name + "/block" + std::to_string(i), cfg.layer_size,
                                            cfg.layer_size, rng));
  }
  if (cfg.project_back || cfg.output_dim) {
    output_ = Dense<Scalar>::create(store, name + "/dense_out", cfg.layer_size,
                                    cfg.project_back ? d_in : *cfg.output_dim, rng);
    has_output_ = true;
  }
}

template <typename Scalar>
int MlpResnet<Scalar>::output_dim() const {
  return has_output_ ? output_.out : cfg_.layer_size;
}

template <typename Scalar>
Matrix<Scalar> MlpResnet<Scalar>::forward(const ParamStore<Scalar>& store, const Matrix<Scalar>& x,
                                          Cache* cache) const {
  Matrix<Scalar> h = input_.forward(store, x);
  if (cache) {
    cache->input = x;
    cache->hidden.clear();
    cache->pre.clear();
  }
  for (const auto& block : blocks_) {
    Matrix<Scalar> pre = block.forward(store, h);
    if (cache) cache->hidden.push_back(h);
    h += relu(pre);
    if (cache) cache->pre.push_back(std::move(pre));
  }
  if (cache) cache->hidden.push_back(h);
  if (!has_output_) return h;
  return output_.forward(store, h);
}

template <typename Scalar>
Matrix<Scalar> MlpResnet<Scalar>::backward(ParamStore<Scalar>& store, const Cache& cache, const Matrix<Scalar>& dy,
                                           bool need_dx) const {
  Matrix<Scalar> dh = has_output_ ? output_.backward(store, cache.hidden.back(), dy) : dy;
  for (int i = static_cast<int>(blocks_.size()) - 1; i >= 0; --i) {
    Matrix<Scalar> dpre = (cache.pre[i].array() > Scalar(0)).select(dh, Scalar(0));
    dh += blocks_[i].backward(store, cache.hidden[i], dpre);
  }
  return input_.backward(store, cache.input, dh, need_dx);
}

// grad_check ---------------------------------------------------------------------

GradCheckReport grad_check(const std::function<double(const ParamStore<double>&)>& value_fn,
                           const std::function<void(ParamStore<double>&)>& grad_fn, ParamStore<double>& store,
                           const GradCheckOptions& options) {
  store.zero_grad();
  grad_fn(store);

  struct Coord {
    int entry;
    Eigen::Index index;
  };
  std::vector<Coord> coords;
  const auto& entries = store.entries();
  for (int e = 0; e < static_cast<int>(entries.size()); ++e) {
    if (!entries[e].trainable) continue;
    for (Eigen::Index i = 0; i < entries[e].value.size(); ++i) coords.push_back({e, i});
  }
  if (coords.size() > options.exhaustive_limit) {
    CounterRng rng(options.seed, 0x67c);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(std::min(options.sample_size, coords.size()));
  }

  GradCheckReport report;
  for (const auto& [e, i] : coords) {
    auto& entry = store.entries()[e];
    const double saved = entry.value.data()[i];
    entry.value.data()[i] = saved + options.step;
    const double plus = value_fn(store);
    entry.value.data()[i] = saved - options.step;
    const double minus = value_fn(store);
    entry.value.data()[i] = saved;

    const double numeric = (plus - minus) / (2.0 * options.step);
    const double analytic = entry.grad.data()[i];
    const double abs_err = std::abs(numeric - analytic);
    const double rel_err = abs_err / std::max({std::abs(numeric), std::abs(analytic), options.floor});
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    if (rel_err > report.max_rel_error) {
      report.max_rel_error = rel_err;
      report.worst_param = entry.name;
      report.worst_index = static_cast<int>(i);
    }
    ++report.checked;
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

// Checkpoints --------------------------------------------------------------------

namespace {
constexpr char kParamMagic[4] = {'N', 'N', 'N', 'P'};
constexpr std::uint32_t kParamVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) fail(ErrorCategory::format, "truncated checkpoint");
  return v;
}
}  // namespace

template <typename Scalar>
void save_params(const ParamStore<Scalar>& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCategory::missing_file, "cannot open '" + path.string() + "' for writing");
  out.write(kParamMagic, 4);
  put<std::uint32_t>(out, kParamVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.entries().size()));
  for (const auto& e : store.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.cols()));
    put<std::uint8_t>(out, e.trainable ? 1 : 0);
    Matrix<float> f = e.value.template cast<float>();
    out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
  }
}

ParamStore<float> load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::missing_file, "cannot open checkpoint '" + path.string() + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kParamMagic, 4) != 0) {
    fail(ErrorCategory::format, "not a checkpoint file (bad magic)");
  }
  if (take<std::uint32_t>(in) != kParamVersion) fail(ErrorCategory::format, "unsupported checkpoint version");
  const auto count = take<std::uint32_t>(in);
  ParamStore<float> store;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = take<std::uint32_t>(in);
    if (len > 4096) fail(ErrorCategory::format, "implausible parameter name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) fail(ErrorCategory::format, "truncated checkpoint");
    const auto rows = take<std::uint32_t>(in);
    const auto cols = take<std::uint32_t>(in);
    const bool trainable = take<std::uint8_t>(in) != 0;
    Matrix<float> m(rows, cols);
    const auto bytes = static_cast<std::streamsize>(m.size() * sizeof(float));
    if (!in.read(reinterpret_cast<char*>(m.data()), bytes)) fail(ErrorCategory::format, "truncated checkpoint");
    store.add(std::move(name), std::move(m), trainable);
  }
  return store;
}

template class ParamStore<float>;
template class ParamStore<double>;
template void ParamStore<float>::assign_from(const ParamStore<float>&);
template void ParamStore<float>::assign_from(const ParamStore<double>&);
template void ParamStore<double>::assign_from(const ParamStore<float>&);
template void ParamStore<double>::assign_from(const ParamStore<double>&);
template Matrix<float> glorot_uniform<float>(int, int, CounterRng&);
template Matrix<double> glorot_uniform<double>(int, int, CounterRng&);
template Matrix<float> softmax_rows<float>(const Matrix<float>&, float);
template Matrix<double> softmax_rows<double>(const Matrix<double>&, double);
template Matrix<float> softmax_rows_backward<float>(const Matrix<float>&, const Matrix<float>&, float);
template Matrix<double> softmax_rows_backward<double>(const Matrix<double>&, const Matrix<double>&, double);
template struct Dense<float>;
template struct Dense<double>;
template class MlpResnet<float>;
template class MlpResnet<double>;
template void save_params<float>(const ParamStore<float>&, const std::filesystem::path&);
template void save_params<double>(const ParamStore<double>&, const std::filesystem::path&);

}  // namespace nnn
