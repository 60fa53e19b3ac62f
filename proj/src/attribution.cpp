#include "nnn/attribution.hpp"

#include <algorithm>

namespace nnn {

Forecast ModelPredictor::operator()(const MediaTensor& x, bool with_search) const {
  auto p = model_.predict(params_, x, with_search);
  return {std::move(p.sales), std::move(p.search)};
}

std::vector<int> window_starts(const UnrollConfig& cfg, int times) {
  if (cfg.prefix < 1 || cfg.horizon < 1) fail(ErrorCategory::config, "unroll prefix and horizon must be >= 1");
  if (cfg.prefix + cfg.horizon > times) fail(ErrorCategory::config, "prefix + horizon exceeds the number of weeks");
  if (!cfg.starts.empty()) {
    for (int s : cfg.starts) {
      if (s < 1 || s + cfg.horizon > times) fail(ErrorCategory::config, "window start outside data");
    }
    return cfg.starts;
  }
  const int last = cfg.last_start < 0 ? times - cfg.horizon : std::min(cfg.last_start, times - cfg.horizon);
  if (last < cfg.prefix) fail(ErrorCategory::config, "no unroll window fits before the last start");
  const int stride = std::max(1, cfg.horizon / 2);
  std::vector<int> starts;
  for (int s = cfg.prefix; s <= last; s += stride) starts.push_back(s);
  return starts;
}

std::string_view to_string(AttributionMethod m) {
  return m == AttributionMethod::zero_out ? "zero_out" : "ar";
}

std::vector<double> mix_percent(const std::vector<double>& attributed) {
  double total = 0.0;
  for (double a : attributed) total += a;
  std::vector<double> mix(attributed.size(), 0.0);
  if (total == 0.0) return mix;
  for (std::size_t i = 0; i < attributed.size(); ++i) mix[i] = 100.0 * attributed[i] / total;
  return mix;
}

MediaTensor zero_channel_from(const MediaTensor& x, int c, int from, int until) {
  MediaTensor out = x;
  const int end = until < 0 ? x.times() : until;
  for (int g = 0; g < x.geos(); ++g) {
    for (int t = from; t < end; ++t) {
      for (float& v : out.slice(g, t, c)) v = 0.0f;
    }
  }
  return out;
}

}  // namespace nnn
