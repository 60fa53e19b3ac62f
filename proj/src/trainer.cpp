#include "nnn/trainer.hpp"

#include <cmath>
#include <numbers>

#include "nnn/errors.hpp"

namespace nnn {

void TrainConfig::validate() const {
  if (steps < 0 || warmup_steps < 0) fail(ErrorCategory::config, "step counts must be >= 0");
  if (warmup_steps >= steps && steps > 0) fail(ErrorCategory::config, "Warm-up Steps must be below the step count");
  if (learning_rate < 0.0 || initial_lr < 0.0) fail(ErrorCategory::config, "learning rates must be >= 0");
  if (!(clip_norm > 0.0)) fail(ErrorCategory::config, "clip norm must be positive");
  if (grad_noise < 0.0) fail(ErrorCategory::config, "gradient noise must be >= 0");
  if (schedule != "cosine" && schedule != "constant") fail(ErrorCategory::config, "unknown schedule " + schedule);
}

double learning_rate_at(const TrainConfig& cfg, int step) {
  if (step < cfg.warmup_steps) {
    const double f = static_cast<double>(step) / cfg.warmup_steps;
    return cfg.initial_lr + f * (cfg.learning_rate - cfg.initial_lr);
  }
  if (cfg.schedule == "constant" || cfg.decay_steps <= cfg.warmup_steps) return cfg.learning_rate;
  const double f = std::min(1.0, static_cast<double>(step - cfg.warmup_steps) / (cfg.decay_steps - cfg.warmup_steps));
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * f));
}

template <typename Scalar>
std::vector<StepLog> optimize(ParamStore<Scalar>& store, const Objective<Scalar>& objective, const TrainConfig& cfg,
                              int steps, AdamState<Scalar>& state) {
  cfg.validate();
  auto& entries = store.entries();
  if (state.m.size() != entries.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& e : entries) {
      state.m.push_back(Matrix<Scalar>::Zero(e.value.rows(), e.value.cols()));
      state.v.push_back(Matrix<Scalar>::Zero(e.value.rows(), e.value.cols()));
    }
  }
  std::vector<StepLog> log;
  log.reserve(steps);
  for (int i = 0; i < steps; ++i) {
    const int step = state.step;
    const double loss = objective(store);
    double sq = 0.0;
    for (const auto& e : entries) {
      if (e.trainable) sq += e.grad.template cast<double>().squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(loss) || !std::isfinite(norm)) {
      fail(ErrorCategory::divergence, "training diverged at step " + std::to_string(step) + " (loss " +
                                          std::to_string(loss) + ")");
    }
    const double clip = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
    const double lr = learning_rate_at(cfg, step);
    CounterRng noise(cfg.seed, 0x6e6f15e0000ULL + static_cast<std::uint64_t>(step));
    const double t = step + 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    const auto b1 = static_cast<Scalar>(cfg.beta1);
    const auto b2 = static_cast<Scalar>(cfg.beta2);
    for (std::size_t k = 0; k < entries.size(); ++k) {
      auto& e = entries[k];
      if (!e.trainable) continue;
      Matrix<Scalar> g = e.grad * static_cast<Scalar>(clip);
      if (cfg.grad_noise > 0.0) {
        Scalar* p = g.data();
        const Eigen::Index n = g.size();
        for (Eigen::Index j = 0; j < n; j += 2) {
          const auto [z0, z1] = noise.normal_pair();
          p[j] += static_cast<Scalar>(cfg.grad_noise * z0);
          if (j + 1 < n) p[j + 1] += static_cast<Scalar>(cfg.grad_noise * z1);
        }
      }
      state.m[k] = b1 * state.m[k] + (Scalar(1) - b1) * g;
      state.v[k] = b2 * state.v[k] + (Scalar(1) - b2) * g.cwiseProduct(g);
      const auto step_size = static_cast<Scalar>(lr / bc1);
      const auto root_bc2 = static_cast<Scalar>(std::sqrt(bc2));
      e.value.array() -=
          step_size * state.m[k].array() / (state.v[k].array().sqrt() / root_bc2 + static_cast<Scalar>(cfg.epsilon));
    }
    ++state.step;
    log.push_back({step, loss, norm, lr});
  }
  return log;
}

template std::vector<StepLog> optimize<float>(ParamStore<float>&, const Objective<float>&, const TrainConfig&, int,
                                              AdamState<float>&);
template std::vector<StepLog> optimize<double>(ParamStore<double>&, const Objective<double>&, const TrainConfig&, int,
                                               AdamState<double>&);

TrainResult train(const MediaTensor& x, const SplitSets& sets, int train_end, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, std::vector<Phase> phases) {
  if (train_end < 1 || train_end >= x.times()) fail(ErrorCategory::config, "train_end outside the dataset");
  if (phases.empty()) phases.push_back({cfg.steps, model_cfg.balancing});
  TrainResult result;
  result.model_config = model_cfg;
  result.phases = phases;
  result.model = NnnModel<float>(model_cfg, x.channels(), x.geos(), x.dim(), result.params);
  result.model.set_normalization(result.params, fit_normalization(x, sets.train));

  // Causal model: the training window alone determines every training prediction.
  const MediaTensor window = x.time_slice(0, train_end + 1);
  const int times = window.times();
  const ChannelStack<float> inputs = result.model.encode(result.params, window);
  const Vector<float> sales_target = result.model.sales_targets(result.params, window);
  const Matrix<float> search_target = result.model.search_targets(result.params, window);
  const LossCells cells = loss_cells(sets, x.geos(), train_end);

  AdamState<float> state;
  for (const Phase& phase : phases) {
    Objective<float> objective = [&](ParamStore<float>& store) {
      return result.model
          .loss(store, inputs, times, sales_target, search_target, cells, phase.balancing, model_cfg.l1, true)
          .total;
    };
    auto log = optimize(result.params, objective, cfg, phase.steps, state);
    result.trace.insert(result.trace.end(), log.begin(), log.end());
  }
  return result;
}

MetricsReport evaluate(const NnnModel<float>& model, const ParamStore<float>& params, const MediaTensor& x,
                       const SplitSets& sets) {
  const auto pred = model.predict(params, x, false);
  Eigen::MatrixXd actual(x.geos(), x.times());
  const int target = x.target_channel();
  for (int g = 0; g < x.geos(); ++g) {
    for (int t = 0; t < x.times(); ++t) actual(g, t) = x.at(g, t, target, 0);
  }
  MetricsReport r;
  r.train = evaluate_cells(pred.sales, actual, sets.train);
  r.val = evaluate_cells(pred.sales, actual, sets.val);
  r.test = evaluate_cells(pred.sales, actual, sets.test);
  r.sparsity = params.sparsity(kSparsityThreshold);
  r.parameter_count = params.parameter_count();
  return r;
}

}  // namespace nnn
