// nnn: simulate, train, evaluate, attribute and probe from the command line.

#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "nnn/pipeline.hpp"

namespace fs = std::filesystem;
using namespace nnn;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string out = "runs";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key = value config file");
  cmd->add_option("--set", c.sets, "override one config key (key=value), repeatable");
  cmd->add_option("--out", c.out, "root directory for run directories")->capture_default_str();
}

// NNN_SEED overrides every seed key.
void apply_seed_env(Config& cfg) {
  const char* env = std::getenv("NNN_SEED");
  if (!env || !*env) return;
  for (const char* key : {"sim_seed", "model_seed", "train_seed", "split_seed", "probe_seed"}) cfg.set(key, env);
}

Config load_config(const Common& c) {
  Config cfg = c.config.empty() ? Config{} : Config::load(c.config);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) fail(ErrorCategory::config, "--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  apply_seed_env(cfg);
  cfg.check_keys();
  return cfg;
}

MediaTensor load_any_dataset(const std::string& path) {
  if (path.size() > 4 && path.substr(path.size() - 4) == ".csv") return load_dataset_csv(path);
  return load_dataset(path);
}

/// Records outputs and writes manifest.json, checking every listed file exists.
class Manifest {
 public:
  Manifest(fs::path dir, std::string command, const Config& cfg) : dir_(std::move(dir)) {
    j_["tool_version"] = kToolVersion;
    j_["command"] = std::move(command);
    Json echo = Json::object();
    for (const auto& [k, v] : cfg.values()) echo[k] = v;
    j_["config"] = echo;
    Json seeds = Json::object();
    for (const char* key : {"sim_seed", "model_seed", "train_seed", "split_seed", "probe_seed"}) {
      if (cfg.has(key)) seeds[key] = cfg.get(key, "");
    }
    j_["seeds"] = seeds;
    j_["outputs"] = Json::array();
  }
  void set(const std::string& key, Json value) { j_[key] = std::move(value); }
  fs::path output(const std::string& name) {
    j_["outputs"].push_back(name);
    return dir_ / name;
  }
  void finish() {
    for (const auto& name : j_["outputs"]) {
      if (!fs::exists(dir_ / name.get<std::string>())) {
        fail(ErrorCategory::missing_file, "run output missing: " + name.get<std::string>());
      }
    }
    write_json(dir_ / "manifest.json", j_);
    std::cout << dir_.string() << "\n";
  }

 private:
  fs::path dir_;
  Json j_;
};

Eigen::MatrixXd actual_sales(const MediaTensor& x) {
  Eigen::MatrixXd a(x.geos(), x.times());
  const int target = x.target_channel();
  for (int g = 0; g < x.geos(); ++g) {
    for (int t = 0; t < x.times(); ++t) a(g, t) = x.at(g, t, target, 0);
  }
  return a;
}

std::string national_csv(const MediaTensor& x, const Eigen::MatrixXd& pred, const SplitSpec& s) {
  const Eigen::MatrixXd actual = actual_sales(x);
  std::ostringstream os;
  os.precision(10);
  os << "week,window,predicted,actual\n";
  for (int t = 0; t < x.times(); ++t) {
    const char* window = t <= s.train_end ? "train" : (t >= s.test_start ? "test" : "gap");
    os << t << "," << window << "," << pred.col(t).sum() << "," << actual.col(t).sum() << "\n";
  }
  return os.str();
}

std::string loss_csv(const std::vector<StepLog>& trace) {
  std::ostringstream os;
  os.precision(10);
  os << "step,loss,grad_norm,lr\n";
  for (const auto& s : trace) os << s.step << "," << s.loss << "," << s.grad_norm << "," << s.lr << "\n";
  return os.str();
}

void write_run_config(Manifest& m, const Experiment& e) {
  write_text(m.output("config.cfg"), to_config(e).echo());
}

struct LoadedRun {
  Experiment experiment;
  TrainedModel model;
};

LoadedRun load_run(const MediaTensor& x, const std::string& run_dir) {
  const fs::path dir(run_dir);
  Config cfg = Config::load(dir / "config.cfg");
  LoadedRun r;
  r.experiment = experiment_from(cfg);
  r.model = load_trained(x, r.experiment, dir / "checkpoint.nnp");
  return r;
}

int cmd_simulate(const Common& c, const std::string& variance, std::optional<std::uint64_t> seed, int geos, int weeks,
                 int dim, const std::string& media) {
  Config cfg = load_config(c);
  SimConfig s = sim_config_from(cfg, sim_preset(cfg.get("sim_variance", variance)));
  if (seed && !std::getenv("NNN_SEED")) s.seed = *seed;
  if (geos > 0) s.geos = geos;
  if (weeks > 0) s.times = weeks;
  if (dim > 0) s.dim = dim;
  if (media == "scalar") s.media_embeddings = false;
  else if (media != "embedding") fail(ErrorCategory::config, "--media must be embedding or scalar");
  cfg.set("sim_seed", std::to_string(s.seed));
  const SimOutput sim = simulate(s);
  const fs::path dir = new_run_dir(c.out, "simulate");
  Manifest m(dir, "simulate", cfg);
  save_dataset(sim.tensor, m.output("dataset.nnt"));
  write_json(m.output("truth.json"), truth_json(sim));
  m.set("dataset_hash", std::to_string(dataset_hash(sim.tensor)));
  m.finish();
  return 0;
}

int cmd_train(const Common& c, const std::string& dataset) {
  Config cfg = load_config(c);
  const MediaTensor x = load_any_dataset(dataset);
  const Experiment e = experiment_from(cfg);
  const TrainedModel t = train_experiment(x, e);
  MetricsReport metrics = evaluate(t.model, t.params, x, t.sets);
  if (!t.trace.empty()) metrics.final_loss = t.trace.back().loss;

  const fs::path dir = new_run_dir(c.out, "train");
  Manifest m(dir, "train", cfg);
  m.set("dataset", fs::absolute(dataset).string());
  m.set("dataset_hash", std::to_string(dataset_hash(x)));
  save_params(t.params, m.output("checkpoint.nnp"));
  m.set("checkpoint", "checkpoint.nnp");
  write_run_config(m, e);
  write_json(m.output("metrics.json"), to_json(metrics));
  write_text(m.output("loss.csv"), loss_csv(t.trace));
  write_text(m.output("national.csv"), national_csv(x, t.model.predict(t.params, x, false).sales, e.split));
  m.finish();
  return 0;
}

int cmd_eval(const Common& c, const std::string& dataset, const std::string& run) {
  const Config cfg = load_config(c);
  const MediaTensor x = load_any_dataset(dataset);
  const LoadedRun r = load_run(x, run);
  const MetricsReport metrics = evaluate(r.model.model, r.model.params, x, r.model.sets);
  const fs::path dir = new_run_dir(c.out, "eval");
  Manifest m(dir, "eval", cfg);
  m.set("dataset_hash", std::to_string(dataset_hash(x)));
  m.set("checkpoint", fs::absolute(fs::path(run) / "checkpoint.nnp").string());
  write_json(m.output("metrics.json"), to_json(metrics));
  write_text(m.output("national.csv"),
             national_csv(x, r.model.model.predict(r.model.params, x, false).sales, r.experiment.split));
  m.finish();
  return 0;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      grid.push_back(std::stod(item));
    } catch (const std::exception&) {
      fail(ErrorCategory::config, "bad lambda '" + item + "'");
    }
  }
  if (grid.empty()) fail(ErrorCategory::config, "empty lambda grid");
  return grid;
}

std::optional<ChannelMix> read_truth_mix(const std::string& path) {
  if (path.empty()) return std::nullopt;
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::missing_file, "cannot open truth file '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
    const auto& d = j.at("direct_mix");
    return ChannelMix{d.at("search").get<double>(), d.at("search_ads").get<double>(), d.at("youtube").get<double>()};
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCategory::format, std::string("bad truth file: ") + ex.what());
  }
}

int cmd_sweep(const Common& c, const std::string& dataset, const std::string& lambdas, const std::string& truth_path,
              int jobs) {
  const Config cfg = load_config(c);
  const MediaTensor x = load_any_dataset(dataset);
  const Experiment base = experiment_from(cfg);
  const std::vector<double> grid = parse_grid(lambdas);
  const auto truth = read_truth_mix(truth_path);

  // Independent workers, one lambda each; results land in grid order.
  std::vector<SweepRow> rows(grid.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      try {
        rows[i] = l1_sweep(x, base, {grid[i]}, truth).rows.front();
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int k = 0; k < std::max(1, jobs); ++k) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);

  int best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].metrics.val.mape < rows[best].metrics.val.mape) best = static_cast<int>(i);
  }
  Json table = Json::array();
  std::ostringstream csv;
  csv.precision(10);
  csv << "lambda,val_mape,val_r2,test_mape,test_r2,sparsity,attribution_error\n";
  for (const auto& r : rows) {
    Json row{{"lambda", r.lambda}, {"metrics", to_json(r.metrics)}};
    if (r.attribution_error) {
      row["attribution"] = to_json(r.attribution);
      row["attribution_error"] = *r.attribution_error;
    }
    table.push_back(row);
    csv << r.lambda << "," << r.metrics.val.mape << "," << r.metrics.val.r2 << "," << r.metrics.test.mape << ","
        << r.metrics.test.r2 << "," << r.metrics.sparsity << ","
        << (r.attribution_error ? std::to_string(*r.attribution_error) : "") << "\n";
  }
  const fs::path dir = new_run_dir(c.out, "sweep");
  Manifest m(dir, "sweep", cfg);
  m.set("dataset_hash", std::to_string(dataset_hash(x)));
  write_run_config(m, base);
  write_json(m.output("sweep.json"), Json{{"rows", table}, {"best_lambda", rows[best].lambda}});
  write_text(m.output("sweep.csv"), csv.str());
  m.finish();
  return 0;
}

std::vector<int> attribution_channels(const MediaTensor& x, const std::vector<std::string>& names) {
  std::vector<int> out;
  if (names.empty()) {
    for (int c = 0; c < x.num_channels(); ++c) {
      if (c != x.target_channel()) out.push_back(c);
    }
  } else {
    for (const auto& n : names) out.push_back(x.channel_index(n));
  }
  return out;
}

int cmd_attribute(const Common& c, const std::string& dataset, const std::string& run, const std::string& method,
                  const std::vector<std::string>& names, bool include_test) {
  const Config cfg = load_config(c);
  const MediaTensor x = load_any_dataset(dataset);
  const LoadedRun r = load_run(x, run);
  const auto channels = attribution_channels(x, names);
  const auto predict = r.model.predictor();
  const int end = include_test ? x.times() : r.experiment.split.train_end + 1;
  UnrollConfig u = r.experiment.unroll;
  if (u.last_start < 0) u.last_start = end - u.horizon;
  AttributionReport report;
  if (method == "zero_out") {
    report = attribute_zero_out(predict, x, channels, 0, end);
  } else if (method == "ar") {
    report = attribute_ar(predict, x.time_slice(0, end), channels, u);
  } else {
    fail(ErrorCategory::config, "--method must be zero_out or ar");
  }
  const fs::path dir = new_run_dir(c.out, "attribute");
  Manifest m(dir, "attribute", cfg);
  m.set("dataset_hash", std::to_string(dataset_hash(x)));
  write_json(m.output("attribution.json"), to_json(report));
  std::ostringstream csv;
  csv.precision(10);
  csv << "channel,attributed,mix\n";
  for (std::size_t i = 0; i < report.channels.size(); ++i) {
    csv << report.channels[i] << "," << report.attributed[i] << "," << report.mix[i] << "\n";
  }
  write_text(m.output("attribution.csv"), csv.str());
  m.finish();
  return 0;
}

int cmd_pause(const Common& c, const std::string& dataset, const std::string& run, const std::string& channel,
              int start, int length) {
  const Config cfg = load_config(c);
  const MediaTensor x = load_any_dataset(dataset);
  const LoadedRun r = load_run(x, run);
  const PauseResult p = pause_simulation(r.model.predictor(), x, x.channel_index(channel), start, length);
  const fs::path dir = new_run_dir(c.out, "pause");
  Manifest m(dir, "pause", cfg);
  write_json(m.output("pause.json"), to_json(p));
  std::ostringstream csv;
  csv.precision(10);
  csv << "week,baseline,standard_paused,ar_baseline,ar_paused\n";
  for (int k = 0; k < length; ++k) {
    csv << start + k << "," << p.baseline(k) << "," << p.standard(k) << "," << p.ar_baseline(k) << "," << p.ar(k)
        << "\n";
  }
  write_text(m.output("pause.csv"), csv.str());
  m.finish();
  return 0;
}

std::vector<Eigen::VectorXd> read_embeddings(const std::string& path, int dim) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::missing_file, "cannot open embeddings '" + path + "'");
  std::vector<Eigen::VectorXd> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    try {
      while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    } catch (const std::exception&) {
      if (out.empty() && vals.empty()) continue;  // header
      fail(ErrorCategory::format, "bad number in embeddings file: " + line);
    }
    if (static_cast<int>(vals.size()) != dim) {
      fail(ErrorCategory::shape_mismatch, "embedding width " + std::to_string(vals.size()) + " differs from D");
    }
    out.push_back(Eigen::Map<Eigen::VectorXd>(vals.data(), dim));
  }
  return out;
}

int cmd_probe(const Common& c, const std::string& dataset, const std::string& run, const std::string& channel,
              const std::string& embeddings, const std::string& truth_path) {
  const Config cfg = load_config(c);
  const MediaTensor x = load_any_dataset(dataset);
  const LoadedRun r = load_run(x, run);
  ProbeConfig pc = r.experiment.probe;
  pc.channel = channel;
  const Prober prober(x, pc, r.model.sets.train);
  const auto predict = r.model.predictor();

  const fs::path dir = new_run_dir(c.out, "probe");
  Manifest m(dir, "probe", cfg);
  m.set("probe_scale", prober.scale());
  if (!embeddings.empty()) {
    std::ostringstream csv;
    csv.precision(10);
    csv << "index,score\n";
    const auto vs = read_embeddings(embeddings, x.dim());
    for (std::size_t i = 0; i < vs.size(); ++i) csv << i << "," << prober.score(predict, vs[i]) << "\n";
    write_text(m.output("scores.csv"), csv.str());
  }
  if (!truth_path.empty()) {
    std::ifstream in(truth_path);
    if (!in) fail(ErrorCategory::missing_file, "cannot open truth file '" + truth_path + "'");
    const Json j = Json::parse(in);
    auto vec = [&](const char* key) {
      const auto v = j.at(key).get<std::vector<double>>();
      if (static_cast<int>(v.size()) != x.dim()) fail(ErrorCategory::shape_mismatch, "endpoint width differs from D");
      return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), x.dim()));
    };
    const Eigen::VectorXd best = vec("e_best");
    const Eigen::VectorXd worst = vec("e_worst");
    const auto points = landscape(predict, prober, best, worst, pc);
    std::ostringstream csv;
    csv.precision(10);
    csv << "x,y,score,source\n";
    for (const auto& p : points) csv << p.x << "," << p.y << "," << p.score << "," << (p.source ? "worst" : "best") << "\n";
    write_text(m.output("landscape.csv"), csv.str());
    m.set("score_best", prober.score(predict, best));
    m.set("score_worst", prober.score(predict, worst));
  }
  m.finish();
  return 0;
}

int cmd_inspect_attention(const Common& c, const std::string& dataset, const std::string& run) {
  const Config cfg = load_config(c);
  const MediaTensor x = load_any_dataset(dataset);
  const LoadedRun r = load_run(x, run);
  const auto& model = r.model.model;
  std::ostringstream csv;
  csv.precision(10);
  csv << "layer,channel,lag,weight\n";
  const int T = x.times();
  for (int i = 0; i < model.num_layers(); ++i) {
    const auto& attn = model.layer(i).attention();
    const auto w = attn.temporal_weights(r.model.params, T);
    const int window = std::min(T, attn.config().lookback_window);
    for (int ch = 0; ch < x.num_channels(); ++ch) {
      for (int lag = 0; lag < window; ++lag) {
        double sum = 0.0;
        for (int t = lag; t < T; ++t) sum += w[ch](t, t - lag);
        csv << i << "," << x.channel(ch).name << "," << lag << "," << sum / (T - lag) << "\n";
      }
    }
  }
  const fs::path dir = new_run_dir(c.out, "inspect-attention");
  Manifest m(dir, "inspect-attention", cfg);
  write_text(m.output("attention.csv"), csv.str());
  m.finish();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural marketing-mix modeling toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Common common;
  std::string dataset, run, method = "zero_out", channel = "youtube", lambdas = "1e-7,1e-6,1e-5,1e-4,1e-3";
  std::string truth, embeddings, variance = "high", media = "embedding";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> channels;
  int geos = 0, weeks = 0, dim = 0, jobs = 1, start = 80, length = 20;
  bool include_test = false;

  auto* simulate_cmd = app.add_subcommand("simulate", "generate a synthetic dataset and its ground truth");
  add_common(simulate_cmd, common);
  simulate_cmd->add_option("--variance", variance, "high or low intent variance")->capture_default_str();
  simulate_cmd->add_option("--seed", seed, "simulation seed");
  simulate_cmd->add_option("--geos", geos, "number of geos");
  simulate_cmd->add_option("--weeks", weeks, "number of weeks");
  simulate_cmd->add_option("--dim", dim, "embedding width D");
  simulate_cmd->add_option("--media", media, "embedding or scalar media channels")->capture_default_str();

  auto* train_cmd = app.add_subcommand("train", "train a model and report metrics");
  add_common(train_cmd, common);
  train_cmd->add_option("--dataset", dataset, ".nnt or .csv dataset")->required();

  auto* sweep_cmd = app.add_subcommand("sweep", "L1 grid search");
  add_common(sweep_cmd, common);
  sweep_cmd->add_option("--dataset", dataset)->required();
  sweep_cmd->add_option("--lambdas", lambdas, "comma-separated L1 grid")->capture_default_str();
  sweep_cmd->add_option("--truth", truth, "truth.json for attribution error");
  sweep_cmd->add_option("--jobs", jobs, "parallel workers")->capture_default_str();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained run");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--dataset", dataset)->required();
  eval_cmd->add_option("--run", run, "train run directory")->required();

  auto* attribute_cmd = app.add_subcommand("attribute", "counterfactual sales attribution");
  add_common(attribute_cmd, common);
  attribute_cmd->add_option("--dataset", dataset)->required();
  attribute_cmd->add_option("--run", run)->required();
  attribute_cmd->add_option("--method", method, "zero_out or ar")->capture_default_str();
  attribute_cmd->add_option("--channels", channels, "channels to attribute (default: all non-target)");
  attribute_cmd->add_flag("--include-test", include_test, "attribute over every week, not only training");

  auto* pause_cmd = app.add_subcommand("pause", "marketing pause simulation");
  add_common(pause_cmd, common);
  pause_cmd->add_option("--dataset", dataset)->required();
  pause_cmd->add_option("--run", run)->required();
  pause_cmd->add_option("--channel", channel)->capture_default_str();
  pause_cmd->add_option("--start", start)->capture_default_str();
  pause_cmd->add_option("--len", length)->capture_default_str();

  auto* probe_cmd = app.add_subcommand("probe", "score embeddings through a trained model");
  add_common(probe_cmd, common);
  probe_cmd->add_option("--dataset", dataset)->required();
  probe_cmd->add_option("--run", run)->required();
  probe_cmd->add_option("--channel", channel, "channel to probe")->default_val("search");
  probe_cmd->add_option("--embeddings", embeddings, "CSV of D-wide rows to score");
  probe_cmd->add_option("--truth", truth, "truth.json; writes a landscape around its endpoints");

  auto* inspect_cmd = app.add_subcommand("inspect-attention", "dump learned temporal attention by lag");
  add_common(inspect_cmd, common);
  inspect_cmd->add_option("--dataset", dataset)->required();
  inspect_cmd->add_option("--run", run)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorCategory::config);
  }

  try {
    if (*simulate_cmd) return cmd_simulate(common, variance, seed, geos, weeks, dim, media);
    if (*train_cmd) return cmd_train(common, dataset);
    if (*sweep_cmd) return cmd_sweep(common, dataset, lambdas, truth, jobs);
    if (*eval_cmd) return cmd_eval(common, dataset, run);
    if (*attribute_cmd) return cmd_attribute(common, dataset, run, method, channels, include_test);
    if (*pause_cmd) return cmd_pause(common, dataset, run, channel, start, length);
    if (*probe_cmd) return cmd_probe(common, dataset, run, channel, embeddings, truth);
    if (*inspect_cmd) return cmd_inspect_attention(common, dataset, run);
  } catch (const Error& e) {
    std::cerr << "error [" << category_name(e.category()) << "]: " << e.what() << "\n";
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
