#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nnn/attribution.hpp"
#include "nnn/media_tensor.hpp"
#include "nnn/model.hpp"
#include "nnn/probe.hpp"
#include "nnn/simkit.hpp"
#include "nnn/trainer.hpp"

namespace nnn {

/// Flat `key = value` settings. Lines starting with '#' are comments and
/// `include other.cfg` pulls in another file relative to the including one;
/// later assignments win.
class Config {
 public:
  static Config load(const std::filesystem::path& path);
  static Config parse(const std::string& text, const std::filesystem::path& base_dir = ".");

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated list; missing key gives the fallback.
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;

  /// Rejects keys outside the known set.
  void check_keys() const;
  /// Serialized `key = value` lines, sorted by key.
  std::string echo() const;

 private:
  void parse_into(const std::string& text, const std::filesystem::path& base_dir, int depth);
  std::map<std::string, std::string> values_;
};

/// Everything a train/evaluate/attribute run needs beyond the dataset.
struct Experiment {
  ModelConfig model;
  TrainConfig train;
  SplitSpec split{104, 0.1, 105};
  std::uint64_t split_seed = 1;
  std::vector<Phase> phases;  // empty: one phase of Training Steps at the balancing coefficient
  UnrollConfig unroll;
  ProbeConfig probe;
};

Experiment experiment_from(const Config& cfg);
SimConfig sim_config_from(const Config& cfg, SimConfig base);

/// "5000:0.5,5000:0.99" -> phases.
std::vector<Phase> parse_phases(const std::string& text);
std::string format_phases(const std::vector<Phase>& phases);

/// Writes an Experiment back out using the same keys.
Config to_config(const Experiment& e);

}  // namespace nnn
