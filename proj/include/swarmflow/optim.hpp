#pragma once

#include <cmath>
#include <cstdint>

#include "swarmflow/params.hpp"

namespace swarmflow {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  ParamStore first_moment;
  ParamStore second_moment;
  std::uint64_t step = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// Bias-corrected Adam. Moment buffers are created on first use.
inline void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state, double lr,
                      const AdamConfig& cfg = {}) {
  if (state.first_moment.size() == 0) {
    for (const auto& [name, value] : params) {
      state.first_moment.add(name, Tensor(value.shape()));
      state.second_moment.add(name, Tensor(value.shape()));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, value] : params) {
    const Tensor& g = grads.at(name);
    Tensor& m = state.first_moment.at(name);
    Tensor& v = state.second_moment.at(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
    }
  }
}

// Constant for the first half of training, then linear down to
// `final_fraction` of the base rate at the last step.
inline double scheduled_lr(double base, std::size_t step, std::size_t total, double final_fraction = 0.1) {
  const std::size_t knee = total / 2;
  if (step < knee || total <= knee + 1) return base;
  const double frac = static_cast<double>(step - knee) / static_cast<double>(total - 1 - knee);
  return base * (1.0 - (1.0 - final_fraction) * frac);
}

}  // namespace swarmflow
