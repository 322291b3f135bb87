#pragma once

// The training loop shared by the flow-matching model and the diffusion
// baseline: one (t, ε, z) draw per cloud per step, batch-mean loss, Adam with
// the half-constant / half-linear learning-rate schedule.

#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "swarmflow/checkpoint.hpp"
#include "swarmflow/diffusion.hpp"
#include "swarmflow/flowmatch.hpp"

namespace swarmflow {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainLogEntry {
  std::size_t step = 0;
  double loss = 0.0;
  double field = 0.0;
  double kl = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TrainLogEntry> log;  // one entry per step
};

inline FlowSchedule flow_schedule(const TrainConfig& c) { return {c.horizon, c.sigma_min}; }

inline DiffusionSchedule diffusion_schedule(const TrainConfig& c) {
  return DiffusionSchedule::linear(c.diffusion_steps, c.beta_start, c.beta_end);
}

// Fresh parameters; the init stream is derived from the seed so that it is
// independent of the per-step draws.
inline ParamStore init_params(const TrainConfig& c) {
  Rng rng(c.seed ^ 0x9e3779b97f4a7c15ULL);
  ParamStore p;
  Networks(c.model).init(p, rng);
  return p;
}

// One optimizer step over a batch; returns batch-mean loss terms.
inline TrainLogEntry train_step(const Networks& nets, const TrainConfig& c, const std::vector<Tensor>& dataset,
                                Checkpoint& ckpt, Rng& rng, std::size_t step) {
  const FlowSchedule flow = flow_schedule(c);
  const DiffusionSchedule diffusion = diffusion_schedule(c);
  Graph g(ckpt.params, true);
  std::vector<ad::Var> losses;
  TrainLogEntry entry;
  entry.step = step;
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  for (std::size_t b = 0; b < c.batch_size; ++b) {
    const Tensor& x0 = dataset[pick(rng)];
    const LossTerms terms = c.algorithm == Algorithm::FlowMatching ? cfm_loss(g, nets, flow, x0, rng)
                                                                   : ddpm_loss(g, nets, diffusion, x0, rng);
    losses.push_back(terms.total);
    entry.field += terms.field / static_cast<double>(c.batch_size);
    entry.kl += terms.kl / static_cast<double>(c.batch_size);
  }
  ad::Var total = losses.front();
  for (std::size_t i = 1; i < losses.size(); ++i) total = ad::add(total, losses[i]);
  total = ad::scale(total, 1.0 / static_cast<double>(c.batch_size));
  entry.loss = total.value().item();
  g.backward(total);
  entry.learning_rate = scheduled_lr(c.learning_rate, step, c.steps, c.final_lr_fraction);
  adam_step(ckpt.params, g.gradients(), ckpt.optimizer, entry.learning_rate);
  return entry;
}

// Trains from scratch. `observer` (optional) sees every log entry.
inline TrainResult train(const std::vector<PointCloud>& dataset, const TrainConfig& config,
                         const std::function<void(const TrainLogEntry&)>& observer = {}) {
  config.validate();
  if (dataset.empty()) throw TrainingError("training dataset is empty");
  std::vector<Tensor> clouds;
  for (const auto& cloud : dataset) {
    if (cloud.empty()) throw TrainingError("training dataset contains an empty cloud");
    clouds.push_back(to_tensor(cloud));
  }
  const Networks nets(config.model);
  TrainResult result;
  Checkpoint& ckpt = result.checkpoint;
  ckpt.config = config;
  ckpt.params = init_params(config);
  Rng rng(config.seed);
  for (std::size_t step = 0; step < config.steps; ++step) {
    TrainLogEntry entry;
    try {
      entry = train_step(nets, config, clouds, ckpt, rng, step);
    } catch (const ad::NonFiniteError& e) {
      throw TrainingError("non-finite value at step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(entry.loss)) {
      std::ostringstream os;
      os << "loss became non-finite at step " << step << " (field " << entry.field << ", kl " << entry.kl << ")";
      throw TrainingError(os.str());
    }
    ckpt.step = step + 1;
    ckpt.final_loss = entry.loss;
    if (observer) observer(entry);
    result.log.push_back(entry);
  }
  return result;
}

inline std::string format_train_log(const std::vector<TrainLogEntry>& log) {
  std::string out = "# step loss field kl lr\n";
  for (const auto& e : log) {
    out += std::to_string(e.step) + ' ' + format_double(e.loss) + ' ' + format_double(e.field) + ' ' +
           format_double(e.kl) + ' ' + format_double(e.learning_rate) + '\n';
  }
  return out;
}

}  // namespace swarmflow
