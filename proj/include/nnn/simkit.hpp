#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nnn/media_tensor.hpp"

namespace nnn {

/// Normalized geometric carryover over a window of L weeks.
Eigen::VectorXd adstock(const Eigen::VectorXd& x, double alpha, int window);

/// x^slope / (x^slope + e_c^slope).
double hill(double x, double e_c, double slope = 1.0);

/// One uniform draw per week in [lo, hi], shared by every geo.
Eigen::VectorXd gen_intent(int times, double lo, double hi, std::uint64_t seed);

/// Row t is u e_best + (1 - u) e_worst with u = (intent[t] - lo) / (hi - lo).
Eigen::MatrixXd gen_intent_embeddings(const Eigen::VectorXd& intent, double lo, double hi,
                                      const Eigen::VectorXd& e_best, const Eigen::VectorXd& e_worst);

enum class Pathway { youtube_sales = 0, youtube_search = 1, search_ads_sales = 2, search_sales = 3 };
inline constexpr int kPathways = 4;
std::string_view to_string(Pathway p);

struct PathwayParams {
  double alpha = 0.0;  // adstock retention
  double e_c = 1.0;    // Hill half-saturation
  double scale = 1.0;  // output scale; unused for youtube_search, which is solved from the share
};

struct SimConfig {
  int geos = 100;
  int times = 130;
  int dim = 64;
  std::uint64_t seed = 7;

  PathwayParams youtube_sales{0.75, 1.0, 1.443};
  PathwayParams youtube_search{0.5, 3.0, 1.0};
  PathwayParams search_ads_sales{0.3, 1.0, 0.512};
  double conversion_rate = 0.001;
  double intent_lo = 0.5;
  double intent_hi = 1.5;
  double yt_to_search_share = 0.2;
  int adstock_window = 13;
  double hill_slope = 1.0;

  double base_search = 1000.0;  // median weekly base search volume per geo
  double volume_sigma = 0.25;   // log-normal week-to-week spread
  double geo_sigma = 0.5;       // log-normal spread of per-geo scales
  /// Weight of the intent direction against a random per-cell direction in the search channel.
  double search_intent_weight = 0.5;
  /// Media channels carry intent-embedding directions; otherwise padded scalars.
  bool media_embeddings = true;

  void validate() const;
};

/// Standard high (0.5..1.5) or low (0.8..1.2) intent variance regime.
SimConfig sim_preset(const std::string& variance);

/// Mix% over (search, search_ads, youtube) in that order.
using ChannelMix = std::array<double, 3>;

struct SimOutput {
  MediaTensor tensor;  // channels: sales, search, search_ads, youtube
  SimConfig config;

  /// Per-pathway weekly intent multipliers, indexed by Pathway.
  std::array<Eigen::VectorXd, kPathways> intent;
  /// Per-pathway (T, D) intent embeddings; the search pathway's is the one mixed into the search channel.
  std::array<Eigen::MatrixXd, kPathways> pathway_embeddings;
  Eigen::VectorXd e_best;
  Eigen::VectorXd e_worst;

  Eigen::MatrixXd base_search;      // (G, T) search volume without the YouTube pathway
  Eigen::MatrixXd youtube_search;   // (G, T) search volume added by YouTube
  Eigen::MatrixXd youtube;          // (G, T) impressions
  Eigen::MatrixXd search_ads;       // (G, T) impressions

  /// (G, T) sales contributions: base search, YouTube-driven search, YouTube direct, Search Ads.
  Eigen::MatrixXd sales_base_search;
  Eigen::MatrixXd sales_youtube_search;
  Eigen::MatrixXd sales_youtube;
  Eigen::MatrixXd sales_search_ads;

  const Eigen::MatrixXd& intent_embeddings() const {
    return pathway_embeddings[static_cast<int>(Pathway::search_sales)];
  }
  Eigen::MatrixXd sales() const { return sales_base_search + sales_youtube_search + sales_youtube + sales_search_ads; }

  /// Per-channel sales totals over weeks [t0, t1); `total` reassigns YouTube-driven search to YouTube.
  std::array<double, 3> truth(int t0, int t1, bool total) const;
  ChannelMix truth_mix(int t0, int t1, bool total) const;
  ChannelMix truth_direct() const { return truth_mix(0, config.times, false); }
  ChannelMix truth_total() const { return truth_mix(0, config.times, true); }
  /// Sum of YouTube-driven search over the sum of base search.
  double youtube_search_share() const;
};

SimOutput simulate(const SimConfig& cfg);

/// Normalizes totals to percentages summing to 100 (zeros if the sum is 0).
ChannelMix to_mix(const std::array<double, 3>& totals);

}  // namespace nnn
