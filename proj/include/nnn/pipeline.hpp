#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nnn/config.hpp"

namespace nnn {

inline constexpr const char* kToolVersion = "0.3.0";

using Json = nlohmann::ordered_json;

struct TrainedModel {
  Experiment experiment;
  SplitSets sets;
  NnnModel<float> model;
  ParamStore<float> params;
  std::vector<StepLog> trace;

  ModelPredictor predictor() const { return ModelPredictor(model, params); }
};

/// Splits, trains and returns the model with its split.
TrainedModel train_experiment(const MediaTensor& x, const Experiment& e);

/// Rebuilds a model for `x` from an experiment and a checkpoint.
TrainedModel load_trained(const MediaTensor& x, const Experiment& e, const std::filesystem::path& checkpoint);

/// Trains, or reloads a checkpoint previously trained from the same dataset and settings.
TrainedModel train_cached(const MediaTensor& x, const Experiment& e, const std::filesystem::path& cache_dir);

/// Hash of the dataset and the full experiment echo.
std::string experiment_key(const MediaTensor& x, const Experiment& e);

/// Sales channels in (search, search_ads, youtube) order for simulator datasets.
std::vector<int> sim_channels(const MediaTensor& x);

/// Mean absolute difference of two mixes, in points.
double mix_error(const std::vector<double>& mix, const ChannelMix& truth);

struct SweepRow {
  double lambda = 0.0;
  MetricsReport metrics;
  AttributionReport attribution;
  std::optional<double> attribution_error;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  int best = -1;  // lowest validation (roll-up) MAPE
};

/// Trains one model per lambda with everything else fixed. Attribution error is
/// reported when `truth` is given; zero-out over the training weeks is used.
SweepResult l1_sweep(const MediaTensor& x, const Experiment& base, const std::vector<double>& grid,
                     const std::optional<ChannelMix>& truth, const std::filesystem::path& cache_dir = {});

Json to_json(const SplitMetrics& m);
Json to_json(const MetricsReport& m);
Json to_json(const AttributionReport& r);
Json to_json(const PauseResult& p);
Json truth_json(const SimOutput& sim);

void write_json(const std::filesystem::path& path, const Json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Creates `root/<name>-<UTC timestamp>[-n]`; never reuses an existing directory.
std::filesystem::path new_run_dir(const std::filesystem::path& root, const std::string& name);

/// Simulate -> train -> evaluate -> attribute from one config, fully in memory.
/// The returned JSON holds only deterministic quantities.
Json run_end_to_end(const Config& cfg);

}  // namespace nnn
