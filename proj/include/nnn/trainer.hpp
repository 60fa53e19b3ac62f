#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nnn/diffcore.hpp"
#include "nnn/metrics.hpp"
#include "nnn/model.hpp"

namespace nnn {

struct TrainConfig {
  double learning_rate = 1e-4;
  int warmup_steps = 100;
  int steps = 5000;
  double initial_lr = 1e-7;
  int decay_steps = 14000;
  double clip_norm = 1.0;
  double grad_noise = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// "cosine" or "constant" after warm-up.
  std::string schedule = "cosine";
  std::uint64_t seed = 0;

  void validate() const;
};

/// Linear warm-up from initial_lr to learning_rate, then the decay shape toward decay_steps.
double learning_rate_at(const TrainConfig& cfg, int step);

/// Adam moments for every array in a store; `step` counts completed updates.
template <typename Scalar>
struct AdamState {
  std::vector<Matrix<Scalar>> m;
  std::vector<Matrix<Scalar>> v;
  int step = 0;
};

struct StepLog {
  int step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;  // before clipping
  double lr = 0.0;
};

/// Fills the store's gradients for the current values and returns the loss.
template <typename Scalar>
using Objective = std::function<double(ParamStore<Scalar>&)>;

/// Runs `steps` full-gradient Adam updates: clip to global norm, add Gaussian
/// noise, step with the schedule. Continues from `state`. Throws divergence on
/// a non-finite loss or gradient.
template <typename Scalar>
std::vector<StepLog> optimize(ParamStore<Scalar>& store, const Objective<Scalar>& objective, const TrainConfig& cfg,
                              int steps, AdamState<Scalar>& state);

/// One (steps, balancing) stage of a training plan.
struct Phase {
  int steps = 0;
  double balancing = 0.5;
};

struct TrainResult {
  ModelConfig model_config;
  NnnModel<float> model;
  ParamStore<float> params;
  std::vector<StepLog> trace;
  std::vector<Phase> phases;
};

/// Builds a model, fits its normalization on the train cells and trains it on
/// the window up to train_end. An empty plan means one phase of cfg.steps at
/// the model's balancing coefficient.
TrainResult train(const MediaTensor& x, const SplitSets& sets, int train_end, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, std::vector<Phase> phases = {});

struct MetricsReport {
  SplitMetrics train;
  SplitMetrics val;
  SplitMetrics test;
  double sparsity = 0.0;
  std::size_t parameter_count = 0;
  double final_loss = 0.0;
};

inline constexpr double kSparsityThreshold = 1e-6;

MetricsReport evaluate(const NnnModel<float>& model, const ParamStore<float>& params, const MediaTensor& x,
                       const SplitSets& sets);

extern template std::vector<StepLog> optimize<float>(ParamStore<float>&, const Objective<float>&,
                                                     const TrainConfig&, int, AdamState<float>&);
extern template std::vector<StepLog> optimize<double>(ParamStore<double>&, const Objective<double>&,
                                                      const TrainConfig&, int, AdamState<double>&);

}  // namespace nnn
