#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nnn/errors.hpp"
#include "nnn/media_tensor.hpp"
#include "nnn/model.hpp"

namespace nnn {

/// Original-unit model outputs over a (G, T) tensor. search[g] row t is the
/// predicted search slice for t + 1.
struct Forecast {
  Eigen::MatrixXd sales;
  std::vector<Eigen::MatrixXd> search;
};

/// Adapts a trained model to the predictor interface used below: any type with
/// `Forecast operator()(const MediaTensor&, bool with_search) const`.
class ModelPredictor {
 public:
  ModelPredictor(const NnnModel<float>& model, const ParamStore<float>& params) : model_(model), params_(params) {}
  Forecast operator()(const MediaTensor& x, bool with_search) const;

 private:
  const NnnModel<float>& model_;
  const ParamStore<float>& params_;
};

struct UnrollConfig {
  int prefix = 52;
  int horizon = 30;
  /// Explicit window starts; empty means tile [prefix, last] with stride horizon / 2.
  std::vector<int> starts;
  /// Last admissible window start; -1 means T - horizon.
  int last_start = -1;
};

std::vector<int> window_starts(const UnrollConfig& cfg, int times);

enum class AttributionMethod { zero_out, ar_unroll };
std::string_view to_string(AttributionMethod m);

struct AttributionReport {
  AttributionMethod method = AttributionMethod::zero_out;
  std::vector<std::string> channels;
  std::vector<double> attributed;  // sales units
  std::vector<double> mix;         // percent
  std::vector<int> windows;        // window starts, empty for whole-period zero-out
  int horizon = 0;
};

/// Percentages of the total; all zeros when the total is 0.
std::vector<double> mix_percent(const std::vector<double>& attributed);

struct ArTrajectory {
  Eigen::MatrixXd sales;                // (G, K)
  std::vector<Eigen::MatrixXd> search;  // per step, (G, D) search fed at that step
};

/// Copy of x with channel c zeroed for every t >= from.
MediaTensor zero_channel_from(const MediaTensor& x, int c, int from, int until = -1);

/// Sum of sales(x) - sales(x with channel c zeroed) over weeks [t0, t1).
template <typename Predictor>
double zero_out_effect(const Predictor& predict, const MediaTensor& x, int c, int t0, int t1) {
  const Forecast base = predict(x, false);
  MediaTensor cf = x;
  cf.zero_channel(c);
  const Forecast alt = predict(cf, false);
  return (base.sales.middleCols(t0, t1 - t0) - alt.sales.middleCols(t0, t1 - t0)).sum();
}

/// Unrolls K steps from `start`: observed prefix [0, start), then at each step
/// the search slot holds the previous step's prediction and media are observed,
/// or zeroed when `intervention` names them. Sales are never fed back.
template <typename Predictor>
ArTrajectory ar_unroll(const Predictor& predict, const MediaTensor& x, int start, int horizon,
                       std::optional<int> intervention = std::nullopt) {
  if (start < 1) fail(ErrorCategory::config, "unroll prefix must be at least 1 week");
  if (horizon < 0 || start + horizon > x.times()) fail(ErrorCategory::config, "unroll window exceeds the data");
  const int search = x.organic_channel();
  MediaTensor cur = x.time_slice(0, start + horizon);
  if (intervention) cur = zero_channel_from(cur, *intervention, start);
  const bool splice = !(intervention && *intervention == search);

  ArTrajectory out;
  out.sales = Eigen::MatrixXd::Zero(x.geos(), horizon);
  if (horizon == 0) return out;
  // Search for the first unrolled week comes from the prefix alone.
  Forecast f = predict(cur.time_slice(0, start), true);
  for (int k = 0; k < horizon; ++k) {
    const int t = start + k;
    Eigen::MatrixXd fed(x.geos(), x.dim());
    for (int g = 0; g < x.geos(); ++g) {
      const int row = t - 1;
      if (splice) {
        auto s = cur.slice(g, t, search);
        for (int d = 0; d < x.dim(); ++d) s[d] = static_cast<float>(f.search[g](row, d));
      }
      for (int d = 0; d < x.dim(); ++d) fed(g, d) = cur.at(g, t, search, d);
    }
    for (int g = 0; g < x.geos(); ++g) {
      if (!std::isfinite(fed.row(g).sum())) {
        fail(ErrorCategory::divergence, "non-finite search prediction at unroll step " + std::to_string(k));
      }
    }
    out.search.push_back(std::move(fed));
    f = predict(cur.time_slice(0, t + 1), true);
    out.sales.col(k) = f.sales.col(t);
  }
  return out;
}

/// Whole-period zero-out attribution over weeks [t0, t1).
template <typename Predictor>
AttributionReport attribute_zero_out(const Predictor& predict, const MediaTensor& x, const std::vector<int>& channels,
                                     int t0, int t1) {
  AttributionReport r;
  r.method = AttributionMethod::zero_out;
  for (int c : channels) {
    r.channels.push_back(x.channel(c).name);
    r.attributed.push_back(zero_out_effect(predict, x, c, t0, t1));
  }
  r.mix = mix_percent(r.attributed);
  return r;
}

/// Zero-out restricted to unroll windows: the channel is zeroed from each
/// window start and the effect summed over the window; averaged over windows.
template <typename Predictor>
AttributionReport attribute_zero_out_windows(const Predictor& predict, const MediaTensor& x,
                                             const std::vector<int>& channels, const UnrollConfig& cfg) {
  AttributionReport r;
  r.method = AttributionMethod::zero_out;
  r.windows = window_starts(cfg, x.times());
  r.horizon = cfg.horizon;
  r.attributed.assign(channels.size(), 0.0);
  for (int s : r.windows) {
    const MediaTensor cut = x.time_slice(0, s + cfg.horizon);
    const Eigen::MatrixXd base = predict(cut, false).sales.middleCols(s, cfg.horizon);
    for (std::size_t k = 0; k < channels.size(); ++k) {
      const Eigen::MatrixXd alt = predict(zero_channel_from(cut, channels[k], s), false).sales.middleCols(s, cfg.horizon);
      r.attributed[k] += (base - alt).sum() / static_cast<double>(r.windows.size());
    }
  }
  for (int c : channels) r.channels.push_back(x.channel(c).name);
  r.mix = mix_percent(r.attributed);
  return r;
}

/// Autoregressive attribution: unintervened minus intervened unroll, summed
/// over each window's horizon and averaged over windows.
template <typename Predictor>
AttributionReport attribute_ar(const Predictor& predict, const MediaTensor& x, const std::vector<int>& channels,
                               const UnrollConfig& cfg) {
  AttributionReport r;
  r.method = AttributionMethod::ar_unroll;
  r.windows = window_starts(cfg, x.times());
  r.horizon = cfg.horizon;
  r.attributed.assign(channels.size(), 0.0);
  for (int s : r.windows) {
    const Eigen::MatrixXd base = ar_unroll(predict, x, s, cfg.horizon).sales;
    for (std::size_t k = 0; k < channels.size(); ++k) {
      const Eigen::MatrixXd alt = ar_unroll(predict, x, s, cfg.horizon, channels[k]).sales;
      r.attributed[k] += (base - alt).sum() / static_cast<double>(r.windows.size());
    }
  }
  for (int c : channels) r.channels.push_back(x.channel(c).name);
  r.mix = mix_percent(r.attributed);
  return r;
}

/// National weekly sales over a pause window [start, start + length).
struct PauseResult {
  int start = 0;
  int length = 0;
  Eigen::VectorXd baseline;    // standard inference, no pause
  Eigen::VectorXd standard;    // standard inference, channel paused
  Eigen::VectorXd ar_baseline; // unrolled, no pause
  Eigen::VectorXd ar;          // unrolled, channel paused
  double standard_drop() const { return (baseline - standard).sum(); }
  double ar_drop() const { return (ar_baseline - ar).sum(); }
};

template <typename Predictor>
PauseResult pause_simulation(const Predictor& predict, const MediaTensor& x, int c, int start, int length) {
  if (start < 1 || length < 0 || start + length > x.times()) fail(ErrorCategory::config, "pause window outside data");
  PauseResult r;
  r.start = start;
  r.length = length;
  const MediaTensor cut = x.time_slice(0, start + length);
  auto national = [&](const Eigen::MatrixXd& m, int from) {
    return Eigen::VectorXd(m.middleCols(from, length).colwise().sum().transpose());
  };
  r.baseline = national(predict(cut, false).sales, start);
  r.standard = national(predict(zero_channel_from(cut, c, start), false).sales, start);
  r.ar_baseline = national(ar_unroll(predict, cut, start, length).sales, 0);
  r.ar = national(ar_unroll(predict, cut, start, length, c).sales, 0);
  return r;
}

}  // namespace nnn
