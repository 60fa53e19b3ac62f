#include "nnn/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "nnn/errors.hpp"

namespace nnn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Accepts plain numbers and a trailing k for thousands ("5k").
double parse_number(const std::string& key, const std::string& raw) {
  std::string s = trim(raw);
  double mult = 1.0;
  if (!s.empty() && (s.back() == 'k' || s.back() == 'K')) {
    mult = 1000.0;
    s.pop_back();
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v * mult;
  } catch (const std::exception&) {
    fail(ErrorCategory::config, "key '" + key + "' expects a number, got '" + raw + "'");
  }
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      // Hyperparameter table names.
      "Learning Rate", "Warm-up Steps", "Training Steps", "Gradient Noise", "Global Norm Clip",
      "Initial Learning Rate", "Decay Steps", "L1 Regularization", "Prediction Head Layers", "Head Size",
      "Transformer Blocks", "Transformer Feed Forward Size", "Balancing coefficient",
      // Model.
      "lookback_window", "temperature", "channel_mixing", "attention_by_channel", "time_score_hidden",
      "shared_out_proj", "log_scale", "sales_channels", "search_inputs", "normalize", "model_seed",
      // Training.
      "train_seed", "schedule", "adam_beta1", "adam_beta2", "adam_epsilon", "phases",
      // Split.
      "train_end", "test_start", "val_fraction", "split_seed",
      // Attribution.
      "unroll_prefix", "unroll_horizon", "unroll_last_start",
      // Probe.
      "probe_channel", "probe_scale", "probe_context", "probe_normalize", "probe_samples", "probe_sigma_factor",
      "probe_seed",
      // Simulator.
      "sim_variance", "sim_geos", "sim_weeks", "sim_dim", "sim_seed", "sim_intent_lo", "sim_intent_hi",
      "sim_conversion_rate", "sim_yt_search_share", "sim_yt_sales_scale", "sim_sa_sales_scale",
      "sim_media_embeddings", "sim_search_intent_weight", "sim_adstock_window", "sim_hill_slope",
      "sim_base_search", "sim_volume_sigma", "sim_geo_sigma"};
  return keys;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::missing_file, "cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  Config c;
  c.parse_into(ss.str(), path.parent_path(), 0);
  return c;
}

Config Config::parse(const std::string& text, const std::filesystem::path& base_dir) {
  Config c;
  c.parse_into(text, base_dir, 0);
  return c;
}

void Config::parse_into(const std::string& text, const std::filesystem::path& base_dir, int depth) {
  if (depth > 16) fail(ErrorCategory::config, "config includes nest too deeply (cycle?)");
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    if (s.rfind("include ", 0) == 0) {
      const std::filesystem::path p = base_dir / trim(s.substr(8));
      std::ifstream f(p);
      if (!f) fail(ErrorCategory::missing_file, "cannot open included config '" + p.string() + "'");
      std::stringstream ss;
      ss << f.rdbuf();
      parse_into(ss.str(), p.parent_path(), depth + 1);
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCategory::config, "config line " + std::to_string(lineno) + " is not key = value: " + s);
    }
    set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
}

void Config::set(const std::string& key, const std::string& value) {
  if (key.empty()) fail(ErrorCategory::config, "empty config key");
  values_[key] = value;
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number(key, it->second);
}

int Config::get_int(const std::string& key, int fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const double v = parse_number(key, it->second);
  if (v != static_cast<double>(static_cast<long long>(v))) {
    fail(ErrorCategory::config, "key '" + key + "' expects an integer, got '" + it->second + "'");
  }
  return static_cast<int>(v);
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    fail(ErrorCategory::config, "key '" + key + "' expects an unsigned integer, got '" + it->second + "'");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(ErrorCategory::config, "key '" + key + "' expects a boolean, got '" + it->second + "'");
}

std::vector<std::string> Config::get_list(const std::string& key, const std::vector<std::string>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::string> out;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void Config::check_keys() const {
  for (const auto& [k, v] : values_) {
    if (!known_keys().count(k)) fail(ErrorCategory::config, "unknown config key '" + k + "'");
  }
}

std::string Config::echo() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::vector<Phase> parse_phases(const std::string& text) {
  std::vector<Phase> phases;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) fail(ErrorCategory::config, "phase '" + item + "' must be steps:balancing");
    Phase p;
    p.steps = static_cast<int>(parse_number("phases", item.substr(0, colon)));
    p.balancing = parse_number("phases", item.substr(colon + 1));
    if (p.steps < 0 || p.balancing < 0.0 || p.balancing > 1.0) fail(ErrorCategory::config, "bad phase " + item);
    phases.push_back(p);
  }
  return phases;
}

std::string format_phases(const std::vector<Phase>& phases) {
  std::string out;
  for (std::size_t i = 0; i < phases.size(); ++i) {
    out += (i ? "," : "") + std::to_string(phases[i].steps) + ":" + num(phases[i].balancing);
  }
  return out;
}

Experiment experiment_from(const Config& cfg) {
  cfg.check_keys();
  Experiment e;
  ModelConfig& m = e.model;
  m.n_layers = cfg.get_int("Transformer Blocks", m.n_layers);
  m.d_ff = cfg.get_int("Transformer Feed Forward Size", m.d_ff);
  m.head.n_layers = cfg.get_int("Prediction Head Layers", m.head.n_layers);
  m.head.layer_size = cfg.get_int("Head Size", m.head.layer_size);
  m.head.log_scale = cfg.get_bool("log_scale", m.head.log_scale);
  m.balancing = cfg.get_double("Balancing coefficient", m.balancing);
  m.l1 = cfg.get_double("L1 Regularization", m.l1);
  m.attention.lookback_window = cfg.get_int("lookback_window", m.attention.lookback_window);
  m.attention.temperature = cfg.get_double("temperature", m.attention.temperature);
  m.attention.channel_mixing = cfg.get_bool("channel_mixing", m.attention.channel_mixing);
  m.attention.attention_by_channel = cfg.get_bool("attention_by_channel", m.attention.attention_by_channel);
  m.attention.hidden = cfg.get_int("time_score_hidden", m.attention.hidden);
  m.attention.shared_out_proj = cfg.get_bool("shared_out_proj", m.attention.shared_out_proj);
  m.sales_channels = cfg.get_list("sales_channels", m.sales_channels);
  m.search_inputs = cfg.get_list("search_inputs", m.search_inputs);
  m.normalize = cfg.get_bool("normalize", m.normalize);
  m.seed = cfg.get_u64("model_seed", m.seed);
  m.validate();

  TrainConfig& t = e.train;
  t.learning_rate = cfg.get_double("Learning Rate", t.learning_rate);
  t.warmup_steps = cfg.get_int("Warm-up Steps", t.warmup_steps);
  t.steps = cfg.get_int("Training Steps", t.steps);
  t.grad_noise = cfg.get_double("Gradient Noise", t.grad_noise);
  t.clip_norm = cfg.get_double("Global Norm Clip", t.clip_norm);
  t.initial_lr = cfg.get_double("Initial Learning Rate", t.initial_lr);
  t.decay_steps = cfg.get_int("Decay Steps", t.decay_steps);
  t.schedule = cfg.get("schedule", t.schedule);
  t.beta1 = cfg.get_double("adam_beta1", t.beta1);
  t.beta2 = cfg.get_double("adam_beta2", t.beta2);
  t.epsilon = cfg.get_double("adam_epsilon", t.epsilon);
  t.seed = cfg.get_u64("train_seed", t.seed);
  t.validate();

  e.split.train_end = cfg.get_int("train_end", 104);
  e.split.test_start = cfg.get_int("test_start", 105);
  e.split.val_fraction = cfg.get_double("val_fraction", 0.1);
  e.split_seed = cfg.get_u64("split_seed", e.split_seed);
  if (cfg.has("phases")) e.phases = parse_phases(cfg.get("phases", ""));

  e.unroll.prefix = cfg.get_int("unroll_prefix", e.unroll.prefix);
  e.unroll.horizon = cfg.get_int("unroll_horizon", e.unroll.horizon);
  e.unroll.last_start = cfg.get_int("unroll_last_start", e.unroll.last_start);

  ProbeConfig& p = e.probe;
  p.channel = cfg.get("probe_channel", p.channel);
  p.scale = cfg.get_double("probe_scale", p.scale);
  p.context = cfg.get_list("probe_context", p.context);
  p.normalize_input = cfg.get_bool("probe_normalize", p.normalize_input);
  p.samples = cfg.get_int("probe_samples", p.samples);
  p.sigma_factor = cfg.get_double("probe_sigma_factor", p.sigma_factor);
  p.seed = cfg.get_u64("probe_seed", p.seed);
  return e;
}

SimConfig sim_config_from(const Config& cfg, SimConfig s) {
  cfg.check_keys();
  if (cfg.has("sim_variance")) {
    const SimConfig preset = sim_preset(cfg.get("sim_variance", "high"));
    s.intent_lo = preset.intent_lo;
    s.intent_hi = preset.intent_hi;
  }
  s.geos = cfg.get_int("sim_geos", s.geos);
  s.times = cfg.get_int("sim_weeks", s.times);
  s.dim = cfg.get_int("sim_dim", s.dim);
  s.seed = cfg.get_u64("sim_seed", s.seed);
  s.intent_lo = cfg.get_double("sim_intent_lo", s.intent_lo);
  s.intent_hi = cfg.get_double("sim_intent_hi", s.intent_hi);
  s.conversion_rate = cfg.get_double("sim_conversion_rate", s.conversion_rate);
  s.yt_to_search_share = cfg.get_double("sim_yt_search_share", s.yt_to_search_share);
  s.youtube_sales.scale = cfg.get_double("sim_yt_sales_scale", s.youtube_sales.scale);
  s.search_ads_sales.scale = cfg.get_double("sim_sa_sales_scale", s.search_ads_sales.scale);
  s.media_embeddings = cfg.get_bool("sim_media_embeddings", s.media_embeddings);
  s.search_intent_weight = cfg.get_double("sim_search_intent_weight", s.search_intent_weight);
  s.adstock_window = cfg.get_int("sim_adstock_window", s.adstock_window);
  s.hill_slope = cfg.get_double("sim_hill_slope", s.hill_slope);
  s.base_search = cfg.get_double("sim_base_search", s.base_search);
  s.volume_sigma = cfg.get_double("sim_volume_sigma", s.volume_sigma);
  s.geo_sigma = cfg.get_double("sim_geo_sigma", s.geo_sigma);
  s.validate();
  return s;
}

Config to_config(const Experiment& e) {
  Config c;
  const ModelConfig& m = e.model;
  c.set("Transformer Blocks", std::to_string(m.n_layers));
  c.set("Transformer Feed Forward Size", std::to_string(m.d_ff));
  c.set("Prediction Head Layers", std::to_string(m.head.n_layers));
  c.set("Head Size", std::to_string(m.head.layer_size));
  c.set("log_scale", m.head.log_scale ? "true" : "false");
  c.set("Balancing coefficient", num(m.balancing));
  c.set("L1 Regularization", num(m.l1));
  c.set("lookback_window", std::to_string(m.attention.lookback_window));
  c.set("temperature", num(m.attention.temperature));
  c.set("channel_mixing", m.attention.channel_mixing ? "true" : "false");
  c.set("attention_by_channel", m.attention.attention_by_channel ? "true" : "false");
  c.set("time_score_hidden", std::to_string(m.attention.hidden));
  c.set("shared_out_proj", m.attention.shared_out_proj ? "true" : "false");
  if (!m.sales_channels.empty()) c.set("sales_channels", join(m.sales_channels));
  c.set("search_inputs", join(m.search_inputs));
  c.set("normalize", m.normalize ? "true" : "false");
  c.set("model_seed", std::to_string(m.seed));

  const TrainConfig& t = e.train;
  c.set("Learning Rate", num(t.learning_rate));
  c.set("Warm-up Steps", std::to_string(t.warmup_steps));
  c.set("Training Steps", std::to_string(t.steps));
  c.set("Gradient Noise", num(t.grad_noise));
  c.set("Global Norm Clip", num(t.clip_norm));
  c.set("Initial Learning Rate", num(t.initial_lr));
  c.set("Decay Steps", std::to_string(t.decay_steps));
  c.set("schedule", t.schedule);
  c.set("adam_beta1", num(t.beta1));
  c.set("adam_beta2", num(t.beta2));
  c.set("adam_epsilon", num(t.epsilon));
  c.set("train_seed", std::to_string(t.seed));

  c.set("train_end", std::to_string(e.split.train_end));
  c.set("test_start", std::to_string(e.split.test_start));
  c.set("val_fraction", num(e.split.val_fraction));
  c.set("split_seed", std::to_string(e.split_seed));
  if (!e.phases.empty()) c.set("phases", format_phases(e.phases));

  c.set("unroll_prefix", std::to_string(e.unroll.prefix));
  c.set("unroll_horizon", std::to_string(e.unroll.horizon));
  c.set("unroll_last_start", std::to_string(e.unroll.last_start));

  const ProbeConfig& p = e.probe;
  c.set("probe_channel", p.channel);
  c.set("probe_scale", num(p.scale));
  if (!p.context.empty()) c.set("probe_context", join(p.context));
  c.set("probe_normalize", p.normalize_input ? "true" : "false");
  c.set("probe_samples", std::to_string(p.samples));
  c.set("probe_sigma_factor", num(p.sigma_factor));
  c.set("probe_seed", std::to_string(p.seed));
  return c;
}

}  // namespace nnn
