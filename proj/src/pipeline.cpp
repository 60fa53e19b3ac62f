#include "nnn/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "nnn/errors.hpp"

namespace nnn {

TrainedModel train_experiment(const MediaTensor& x, const Experiment& e) {
  TrainedModel m;
  m.experiment = e;
  m.sets = split(x, e.split, e.split_seed);
  TrainResult r = train(x, m.sets, e.split.train_end, e.model, e.train, e.phases);
  m.model = std::move(r.model);
  m.params = std::move(r.params);
  m.trace = std::move(r.trace);
  return m;
}

TrainedModel load_trained(const MediaTensor& x, const Experiment& e, const std::filesystem::path& checkpoint) {
  TrainedModel m;
  m.experiment = e;
  m.sets = split(x, e.split, e.split_seed);
  m.model = NnnModel<float>(e.model, x.channels(), x.geos(), x.dim(), m.params);
  m.params.assign_from(load_params(checkpoint));
  return m;
}

std::string experiment_key(const MediaTensor& x, const Experiment& e) {
  const std::string text = std::to_string(dataset_hash(x)) + "\n" + to_config(e).echo() + kToolVersion;
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TrainedModel train_cached(const MediaTensor& x, const Experiment& e, const std::filesystem::path& cache_dir) {
  if (cache_dir.empty()) return train_experiment(x, e);
  std::filesystem::create_directories(cache_dir);
  const auto path = cache_dir / (experiment_key(x, e) + ".nnp");
  if (std::filesystem::exists(path)) return load_trained(x, e, path);
  TrainedModel m = train_experiment(x, e);
  const auto tmp = path.string() + ".tmp";
  save_params(m.params, tmp);
  std::filesystem::rename(tmp, path);
  return m;
}

std::vector<int> sim_channels(const MediaTensor& x) {
  return {x.channel_index("search"), x.channel_index("search_ads"), x.channel_index("youtube")};
}

double mix_error(const std::vector<double>& mix, const ChannelMix& truth) {
  if (mix.size() != truth.size()) fail(ErrorCategory::shape_mismatch, "mix sizes differ");
  double e = 0.0;
  for (std::size_t i = 0; i < mix.size(); ++i) e += std::abs(mix[i] - truth[i]);
  return e / static_cast<double>(mix.size());
}

SweepResult l1_sweep(const MediaTensor& x, const Experiment& base, const std::vector<double>& grid,
                     const std::optional<ChannelMix>& truth, const std::filesystem::path& cache_dir) {
  SweepResult out;
  for (double lambda : grid) {
    Experiment e = base;
    e.model.l1 = lambda;
    TrainedModel m = train_cached(x, e, cache_dir);
    SweepRow row;
    row.lambda = lambda;
    row.metrics = evaluate(m.model, m.params, x, m.sets);
    if (!m.trace.empty()) row.metrics.final_loss = m.trace.back().loss;
    if (truth) {
      row.attribution = attribute_zero_out(m.predictor(), x, sim_channels(x), 0, e.split.train_end + 1);
      row.attribution_error = mix_error(row.attribution.mix, *truth);
    }
    out.rows.push_back(std::move(row));
  }
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    if (out.best < 0 || out.rows[i].metrics.val.mape < out.rows[out.best].metrics.val.mape) {
      out.best = static_cast<int>(i);
    }
  }
  return out;
}

Json to_json(const SplitMetrics& m) {
  return Json{{"mape", m.mape}, {"r2", m.r2},       {"cell_mape", m.cell_mape},
              {"cell_r2", m.cell_r2}, {"weeks", m.weeks}, {"cells", m.cells}};
}

Json to_json(const MetricsReport& m) {
  return Json{{"train", to_json(m.train)},
              {"val", to_json(m.val)},
              {"test", to_json(m.test)},
              {"sparsity", m.sparsity},
              {"sparsity_threshold", kSparsityThreshold},
              {"parameter_count", m.parameter_count},
              {"final_loss", m.final_loss}};
}

Json to_json(const AttributionReport& r) {
  Json channels = Json::array();
  for (std::size_t i = 0; i < r.channels.size(); ++i) {
    channels.push_back({{"channel", r.channels[i]}, {"attributed", r.attributed[i]}, {"mix", r.mix[i]}});
  }
  return Json{{"method", std::string(to_string(r.method))},
              {"channels", channels},
              {"windows", r.windows},
              {"horizon", r.horizon}};
}

Json to_json(const PauseResult& p) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return Json{{"start", p.start},
              {"length", p.length},
              {"baseline", vec(p.baseline)},
              {"standard", vec(p.standard)},
              {"ar_baseline", vec(p.ar_baseline)},
              {"ar", vec(p.ar)},
              {"standard_drop", p.standard_drop()},
              {"ar_drop", p.ar_drop()}};
}

Json truth_json(const SimOutput& sim) {
  const auto& c = sim.config;
  auto mix = [](const ChannelMix& m) { return Json{{"search", m[0]}, {"search_ads", m[1]}, {"youtube", m[2]}}; };
  Json intents = Json::object();
  for (int p = 0; p < kPathways; ++p) {
    const auto& v = sim.intent[p];
    intents[std::string(to_string(static_cast<Pathway>(p)))] = std::vector<double>(v.data(), v.data() + v.size());
  }
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return Json{{"seed", c.seed},
              {"config",
               {{"geos", c.geos},
                {"weeks", c.times},
                {"dim", c.dim},
                {"intent_lo", c.intent_lo},
                {"intent_hi", c.intent_hi},
                {"conversion_rate", c.conversion_rate},
                {"yt_to_search_share", c.yt_to_search_share},
                {"yt_sales_scale", c.youtube_sales.scale},
                {"sa_sales_scale", c.search_ads_sales.scale},
                {"adstock_window", c.adstock_window},
                {"hill_slope", c.hill_slope},
                {"media_embeddings", c.media_embeddings},
                {"search_intent_weight", c.search_intent_weight}}},
              {"direct_mix", mix(sim.truth_direct())},
              {"total_mix", mix(sim.truth_total())},
              {"youtube_search_share", sim.youtube_search_share()},
              {"intent", intents},
              {"e_best", vec(sim.e_best)},
              {"e_worst", vec(sim.e_worst)}};
}

void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::missing_file, "cannot write '" + path.string() + "'");
  out << text;
}

std::filesystem::path new_run_dir(const std::filesystem::path& root, const std::string& name) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
  std::filesystem::create_directories(root);
  const std::string stem = name + "-" + stamp;
  std::filesystem::path dir = root / stem;
  for (int n = 1; !std::filesystem::create_directory(dir); ++n) dir = root / (stem + "-" + std::to_string(n));
  return dir;
}

Json run_end_to_end(const Config& cfg) {
  const SimConfig sim_cfg = sim_config_from(cfg, sim_preset(cfg.get("sim_variance", "high")));
  const SimOutput sim = simulate(sim_cfg);
  const Experiment e = experiment_from(cfg);
  const TrainedModel m = train_experiment(sim.tensor, e);
  MetricsReport metrics = evaluate(m.model, m.params, sim.tensor, m.sets);
  if (!m.trace.empty()) metrics.final_loss = m.trace.back().loss;
  const auto channels = sim_channels(sim.tensor);
  const auto zero = attribute_zero_out(m.predictor(), sim.tensor, channels, 0, e.split.train_end + 1);
  return Json{{"dataset_hash", dataset_hash(sim.tensor)},
              {"metrics", to_json(metrics)},
              {"zero_out", to_json(zero)},
              {"truth_direct", truth_json(sim)["direct_mix"]}};
}

}  // namespace nnn
