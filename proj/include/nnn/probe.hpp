#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nnn/attribution.hpp"
#include "nnn/media_tensor.hpp"

namespace nnn {

struct ProbeConfig {
  std::string channel = "search";
  /// Multiplier on the probed direction; negative means the default from the data.
  double scale = -1.0;
  /// Context channels filled with per-geo means; empty means every other non-target channel.
  std::vector<std::string> context;
  /// Probe with v / |v| so the scale alone sets the magnitude.
  bool normalize_input = true;
  int samples = 400;
  double sigma_factor = 0.25;
  std::uint64_t seed = 11;
};

/// Mean of X[g, t, c, :] over every (g, t).
Eigen::VectorXd anchor(const MediaTensor& x, int c);

/// (G, D) per-geo time means of channel k.
Eigen::MatrixXd geo_context(const MediaTensor& x, int k);

/// Standard deviation of the channel's slice norm over `cells`.
double norm_std(const MediaTensor& x, int c, const std::vector<Cell>& cells);

class Prober {
 public:
  /// `x` supplies the anchor and contexts; `cells` the default scale.
  Prober(const MediaTensor& x, const ProbeConfig& cfg, const std::vector<Cell>& cells);

  double scale() const { return scale_; }
  int channel() const { return channel_; }
  const Eigen::VectorXd& anchor() const { return anchor_; }

  /// (G, 1, C, D) input with the target slot at scale * v + A.
  MediaTensor input(const Eigen::VectorXd& v) const;

  template <typename Predictor>
  double score(const Predictor& predict, const Eigen::VectorXd& v) const {
    return predict(input(v), false).sales.col(0).sum();
  }

 private:
  ProbeConfig cfg_;
  MediaTensor base_;
  int channel_ = -1;
  double scale_ = 0.0;
  Eigen::VectorXd anchor_;
};

struct LandscapePoint {
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;
  int source = 0;  // 0 near e_best, 1 near e_worst
};

/// Gaussian samples around each endpoint, first half near `best`.
Eigen::MatrixXd landscape_samples(const Eigen::VectorXd& best, const Eigen::VectorXd& worst, const ProbeConfig& cfg);

/// Rows projected on their two leading principal axes.
Eigen::MatrixXd pca_2d(const Eigen::MatrixXd& rows);

template <typename Predictor>
std::vector<LandscapePoint> landscape(const Predictor& predict, const Prober& prober, const Eigen::VectorXd& best,
                                      const Eigen::VectorXd& worst, const ProbeConfig& cfg) {
  const Eigen::MatrixXd samples = landscape_samples(best, worst, cfg);
  const Eigen::MatrixXd xy = pca_2d(samples);
  std::vector<LandscapePoint> out;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    out.push_back({xy(i, 0), xy(i, 1), prober.score(predict, samples.row(i).transpose()),
                   i < samples.rows() / 2 ? 0 : 1});
  }
  return out;
}

}  // namespace nnn
