#include "nnn/probe.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "nnn/rng.hpp"

namespace nnn {

Eigen::VectorXd anchor(const MediaTensor& x, int c) {
  Eigen::VectorXd a = Eigen::VectorXd::Zero(x.dim());
  for (int g = 0; g < x.geos(); ++g) {
    for (int t = 0; t < x.times(); ++t) {
      const auto s = x.slice(g, t, c);
      for (int d = 0; d < x.dim(); ++d) a(d) += s[d];
    }
  }
  return a / (static_cast<double>(x.geos()) * x.times());
}

Eigen::MatrixXd geo_context(const MediaTensor& x, int k) {
  Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(x.geos(), x.dim());
  for (int g = 0; g < x.geos(); ++g) {
    for (int t = 0; t < x.times(); ++t) {
      const auto s = x.slice(g, t, k);
      for (int d = 0; d < x.dim(); ++d) mu(g, d) += s[d];
    }
  }
  return mu / static_cast<double>(x.times());
}

double norm_std(const MediaTensor& x, int c, const std::vector<Cell>& cells) {
  if (cells.size() < 2) return 0.0;
  double sum = 0.0;
  double sq = 0.0;
  for (const Cell& cell : cells) {
    const double v = channel_volume(x, cell.g, cell.t, c);
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(cells.size());
  const double mean = sum / n;
  return std::sqrt(std::max(0.0, (sq - n * mean * mean) / (n - 1.0)));
}

Prober::Prober(const MediaTensor& x, const ProbeConfig& cfg, const std::vector<Cell>& cells)
    : cfg_(cfg), base_(x.geos(), 1, x.channels(), x.dim()) {
  channel_ = x.channel_index(cfg.channel);
  if (channel_ == x.target_channel()) fail(ErrorCategory::config, "cannot probe the target channel");
  scale_ = cfg.scale >= 0.0 ? cfg.scale : norm_std(x, channel_, cells);
  anchor_ = nnn::anchor(x, channel_);
  std::vector<int> context;
  if (cfg.context.empty()) {
    for (int c = 0; c < x.num_channels(); ++c) {
      if (c != channel_ && c != x.target_channel()) context.push_back(c);
    }
  } else {
    for (const auto& name : cfg.context) context.push_back(x.channel_index(name));
  }
  for (int k : context) {
    const Eigen::MatrixXd mu = geo_context(x, k);
    for (int g = 0; g < x.geos(); ++g) {
      for (int d = 0; d < x.dim(); ++d) base_.at(g, 0, k, d) = static_cast<float>(mu(g, d));
    }
  }
}

MediaTensor Prober::input(const Eigen::VectorXd& v) const {
  if (v.size() != base_.dim()) fail(ErrorCategory::shape_mismatch, "probe vector width differs from D");
  Eigen::VectorXd dir = v;
  if (cfg_.normalize_input) {
    const double n = v.norm();
    dir = n > 0.0 ? Eigen::VectorXd(v / n) : Eigen::VectorXd::Zero(v.size());
  }
  const Eigen::VectorXd slot = scale_ * dir + anchor_;
  MediaTensor x = base_;
  for (int g = 0; g < x.geos(); ++g) {
    for (int d = 0; d < x.dim(); ++d) x.at(g, 0, channel_, d) = static_cast<float>(slot(d));
  }
  return x;
}

Eigen::MatrixXd landscape_samples(const Eigen::VectorXd& best, const Eigen::VectorXd& worst, const ProbeConfig& cfg) {
  const double sigma = cfg.sigma_factor * (best - worst).norm();
  CounterRng rng(cfg.seed, 0x1a2d5ca9e);
  const int half = cfg.samples / 2;
  Eigen::MatrixXd out(2 * half, best.size());
  for (int i = 0; i < 2 * half; ++i) {
    const Eigen::VectorXd& center = i < half ? best : worst;
    for (Eigen::Index d = 0; d < best.size(); ++d) out(i, d) = center(d) + sigma * rng.normal();
  }
  return out;
}

Eigen::MatrixXd pca_2d(const Eigen::MatrixXd& rows) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows.rows(), 2);
  if (rows.rows() == 0) return out;
  const Eigen::MatrixXd centered = rows.rowwise() - rows.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index d = cov.rows();
  // Eigenvalues ascend; take the last two columns, largest first.
  for (int k = 0; k < 2 && k < d; ++k) {
    Eigen::VectorXd axis = eig.eigenvectors().col(d - 1 - k);
    // Fix the sign so the projection is deterministic.
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0) axis = -axis;
    out.col(k) = centered * axis;
  }
  return out;
}

}  // namespace nnn
