#include "nnn/simkit.hpp"

#include <cmath>

#include "nnn/errors.hpp"
#include "nnn/rng.hpp"

namespace nnn {

namespace {

enum Stream : std::uint64_t {
  intent_stream = 0x1000,
  endpoint_stream = 0x2000,
  geo_stream = 0x3000,
  volume_stream = 0x4000,
  direction_stream = 0x5000,
};

Eigen::VectorXd normal_vector(int dim, CounterRng& rng) {
  Eigen::VectorXd v(dim);
  for (int d = 0; d < dim; ++d) v(d) = rng.normal();
  return v;
}

Eigen::VectorXd unit(const Eigen::VectorXd& v) {
  const double n = v.norm();
  return n > 0.0 ? Eigen::VectorXd(v / n) : v;
}

}  // namespace

Eigen::VectorXd adstock(const Eigen::VectorXd& x, double alpha, int window) {
  if (!(alpha >= 0.0 && alpha < 1.0)) fail(ErrorCategory::config, "adstock retention must lie in [0, 1)");
  if (window < 1) fail(ErrorCategory::config, "adstock window must be >= 1");
  double norm = 0.0;
  for (int l = 0; l < window; ++l) norm += std::pow(alpha, l);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
  for (Eigen::Index t = 0; t < x.size(); ++t) {
    double w = 1.0;
    for (Eigen::Index l = 0; l <= std::min<Eigen::Index>(t, window - 1); ++l) {
      y(t) += w * x(t - l);
      w *= alpha;
    }
    y(t) /= norm;
  }
  return y;
}

double hill(double x, double e_c, double slope) {
  if (x <= 0.0) return 0.0;
  const double a = std::pow(x, slope);
  return a / (a + std::pow(e_c, slope));
}

Eigen::VectorXd gen_intent(int times, double lo, double hi, std::uint64_t seed) {
  if (lo > hi) fail(ErrorCategory::config, "intent range is inverted");
  CounterRng rng(seed, intent_stream);
  Eigen::VectorXd v(times);
  for (int t = 0; t < times; ++t) v(t) = rng.uniform(lo, hi);
  return v;
}

Eigen::MatrixXd gen_intent_embeddings(const Eigen::VectorXd& intent, double lo, double hi,
                                      const Eigen::VectorXd& e_best, const Eigen::VectorXd& e_worst) {
  Eigen::MatrixXd out(intent.size(), e_best.size());
  for (Eigen::Index t = 0; t < intent.size(); ++t) {
    const double u = hi > lo ? (intent(t) - lo) / (hi - lo) : 0.5;
    out.row(t) = (u * e_best + (1.0 - u) * e_worst).transpose();
  }
  return out;
}

std::string_view to_string(Pathway p) {
  switch (p) {
    case Pathway::youtube_sales: return "youtube_sales";
    case Pathway::youtube_search: return "youtube_search";
    case Pathway::search_ads_sales: return "search_ads_sales";
    case Pathway::search_sales: return "search_sales";
  }
  return "unknown";
}

void SimConfig::validate() const {
  if (geos < 1 || times < 1 || dim < 1) fail(ErrorCategory::config, "simulation shape must be positive");
  if (!(intent_lo > 0.0 && intent_lo <= intent_hi)) fail(ErrorCategory::config, "intent range must satisfy 0 < lo <= hi");
  if (yt_to_search_share < 0.0) fail(ErrorCategory::config, "YouTube-to-search share would make volumes negative");
  if (conversion_rate < 0.0) fail(ErrorCategory::config, "conversion rate must be >= 0");
  if (search_intent_weight < 0.0 || search_intent_weight > 1.0) {
    fail(ErrorCategory::config, "search intent weight must lie in [0, 1]");
  }
  for (const auto* p : {&youtube_sales, &youtube_search, &search_ads_sales}) {
    if (!(p->alpha >= 0.0 && p->alpha < 1.0) || !(p->e_c > 0.0) || p->scale < 0.0) {
      fail(ErrorCategory::config, "bad pathway parameters");
    }
  }
}

SimConfig sim_preset(const std::string& variance) {
  SimConfig cfg;
  if (variance == "high") {
    cfg.intent_lo = 0.5;
    cfg.intent_hi = 1.5;
  } else if (variance == "low") {
    cfg.intent_lo = 0.8;
    cfg.intent_hi = 1.2;
  } else {
    fail(ErrorCategory::config, "variance must be high or low, got " + variance);
  }
  return cfg;
}

std::array<double, 3> SimOutput::truth(int t0, int t1, bool total) const {
  const int n = t1 - t0;
  const double base = sales_base_search.middleCols(t0, n).sum();
  const double mediated = sales_youtube_search.middleCols(t0, n).sum();
  const double sa = sales_search_ads.middleCols(t0, n).sum();
  const double yt = sales_youtube.middleCols(t0, n).sum();
  if (total) return {base, sa, yt + mediated};
  return {base + mediated, sa, yt};
}

ChannelMix SimOutput::truth_mix(int t0, int t1, bool total) const { return to_mix(truth(t0, t1, total)); }

double SimOutput::youtube_search_share() const { return youtube_search.sum() / base_search.sum(); }

ChannelMix to_mix(const std::array<double, 3>& totals) {
  const double s = totals[0] + totals[1] + totals[2];
  if (s == 0.0) return {0.0, 0.0, 0.0};
  return {100.0 * totals[0] / s, 100.0 * totals[1] / s, 100.0 * totals[2] / s};
}

SimOutput simulate(const SimConfig& cfg) {
  cfg.validate();
  const int G = cfg.geos;
  const int T = cfg.times;
  const int D = cfg.dim;
  SimOutput out;
  out.config = cfg;

  for (int p = 0; p < kPathways; ++p) {
    out.intent[p] = gen_intent(T, cfg.intent_lo, cfg.intent_hi, CounterRng::mix(cfg.seed + p));
  }
  CounterRng endpoints(cfg.seed, endpoint_stream);
  out.e_best = normal_vector(D, endpoints);
  out.e_worst = normal_vector(D, endpoints);
  for (int p = 0; p < kPathways; ++p) {
    out.pathway_embeddings[p] = gen_intent_embeddings(out.intent[p], cfg.intent_lo, cfg.intent_hi, out.e_best,
                                                      out.e_worst);
  }

  // Base volumes: per-geo log-normal scale times per-week log-normal noise.
  out.base_search.resize(G, T);
  out.youtube.resize(G, T);
  out.search_ads.resize(G, T);
  CounterRng geo_rng(cfg.seed, geo_stream);
  for (int g = 0; g < G; ++g) {
    const double s_scale = std::exp(cfg.geo_sigma * geo_rng.normal());
    const double y_scale = std::exp(cfg.geo_sigma * geo_rng.normal());
    const double a_scale = std::exp(cfg.geo_sigma * geo_rng.normal());
    CounterRng rng(cfg.seed, volume_stream + g);
    for (int t = 0; t < T; ++t) {
      out.base_search(g, t) = cfg.base_search * s_scale * std::exp(cfg.volume_sigma * rng.normal());
      out.youtube(g, t) = y_scale * std::exp(cfg.volume_sigma * rng.normal());
      out.search_ads(g, t) = a_scale * std::exp(cfg.volume_sigma * rng.normal());
    }
  }

  const auto& yt_search_intent = out.intent[static_cast<int>(Pathway::youtube_search)];
  const auto& yt_sales_intent = out.intent[static_cast<int>(Pathway::youtube_sales)];
  const auto& sa_intent = out.intent[static_cast<int>(Pathway::search_ads_sales)];
  const auto& search_intent = out.intent[static_cast<int>(Pathway::search_sales)];

  out.youtube_search.resize(G, T);
  out.sales_youtube.resize(G, T);
  out.sales_search_ads.resize(G, T);
  for (int g = 0; g < G; ++g) {
    const Eigen::VectorXd yt = out.youtube.row(g).transpose();
    const Eigen::VectorXd sa = out.search_ads.row(g).transpose();
    const Eigen::VectorXd yt_fast = adstock(yt, cfg.youtube_search.alpha, cfg.adstock_window);
    const Eigen::VectorXd yt_slow = adstock(yt, cfg.youtube_sales.alpha, cfg.adstock_window);
    const Eigen::VectorXd sa_ad = adstock(sa, cfg.search_ads_sales.alpha, cfg.adstock_window);
    for (int t = 0; t < T; ++t) {
      out.youtube_search(g, t) = yt_search_intent(t) * hill(yt_fast(t), cfg.youtube_search.e_c, cfg.hill_slope);
      out.sales_youtube(g, t) = yt_sales_intent(t) * cfg.youtube_sales.scale *
                                hill(yt_slow(t), cfg.youtube_sales.e_c, cfg.hill_slope);
      out.sales_search_ads(g, t) = sa_intent(t) * cfg.search_ads_sales.scale *
                                   hill(sa_ad(t), cfg.search_ads_sales.e_c, cfg.hill_slope);
    }
  }
  // Scale the YouTube-driven search so it adds the configured share of base search.
  const double raw = out.youtube_search.sum();
  if (raw > 0.0) out.youtube_search *= cfg.yt_to_search_share * out.base_search.sum() / raw;

  out.sales_base_search.resize(G, T);
  out.sales_youtube_search.resize(G, T);
  for (int g = 0; g < G; ++g) {
    for (int t = 0; t < T; ++t) {
      const double k = cfg.conversion_rate * search_intent(t);
      out.sales_base_search(g, t) = k * out.base_search(g, t);
      out.sales_youtube_search(g, t) = k * out.youtube_search(g, t);
    }
  }

  const int media_dim = cfg.media_embeddings ? D : 1;
  std::vector<ChannelSpec> channels{{"sales", ChannelKind::target, 1},
                                    {"search", ChannelKind::organic, D},
                                    {"search_ads", ChannelKind::media, media_dim},
                                    {"youtube", ChannelKind::media, media_dim}};
  std::vector<std::int64_t> weeks(T);
  for (int t = 0; t < T; ++t) weeks[t] = t;
  MediaTensor x(G, T, channels, D, weeks);
  const Eigen::MatrixXd sales = out.sales();
  const auto& search_emb = out.intent_embeddings();
  const auto& yt_emb = out.pathway_embeddings[static_cast<int>(Pathway::youtube_sales)];
  const auto& sa_emb = out.pathway_embeddings[static_cast<int>(Pathway::search_ads_sales)];
  auto put = [&](int g, int t, int c, const Eigen::VectorXd& v) {
    auto s = x.slice(g, t, c);
    for (int d = 0; d < D; ++d) s[d] = static_cast<float>(v(d));
  };
  for (int g = 0; g < G; ++g) {
    CounterRng rng(cfg.seed, direction_stream + g);
    for (int t = 0; t < T; ++t) {
      x.set_scalar(g, t, 0, static_cast<float>(sales(g, t)));
      const Eigen::VectorXd random_dir = unit(normal_vector(D, rng));
      const Eigen::VectorXd intent_dir = unit(search_emb.row(t).transpose());
      const Eigen::VectorXd dir =
          unit(cfg.search_intent_weight * intent_dir + (1.0 - cfg.search_intent_weight) * random_dir);
      put(g, t, 1, dir * (out.base_search(g, t) + out.youtube_search(g, t)));
      if (cfg.media_embeddings) {
        put(g, t, 2, unit(sa_emb.row(t).transpose()) * out.search_ads(g, t));
        put(g, t, 3, unit(yt_emb.row(t).transpose()) * out.youtube(g, t));
      } else {
        x.set_scalar(g, t, 2, static_cast<float>(out.search_ads(g, t)));
        x.set_scalar(g, t, 3, static_cast<float>(out.youtube(g, t)));
      }
    }
  }
  out.tensor = std::move(x);
  return out;
}

}  // namespace nnn
