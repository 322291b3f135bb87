#pragma once

// Drone-show generation: draw a shape latent through the bijector, start the
// agents from Gaussian noise and Euler-integrate the learned field from t = T
// to 0, passing every step's velocities through ORCA.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "swarmflow/checkpoint.hpp"
#include "swarmflow/diffusion.hpp"
#include "swarmflow/flowmatch.hpp"
#include "swarmflow/navigation.hpp"
#include "swarmflow/trajectory.hpp"

namespace swarmflow {

struct SampleConfig {
  std::size_t agents = 2048;
  std::size_t steps = 100;
  bool use_orca = true;
  std::uint64_t seed = 0;
  double kappa = 0.06;
  // Zero selects the defaults: τ = 10 Δt, neighbor radius 4κ.
  double tau = 0.0;
  double neighbor_radius = 0.0;

  void validate() const {
    if (agents == 0) throw std::invalid_argument("sampling needs at least one agent");
    if (steps == 0) throw std::invalid_argument("sampling needs at least one step");
    if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
    if (tau < 0.0 || neighbor_radius < 0.0) throw std::invalid_argument("tau and neighbor_radius must be non-negative");
  }

  // Navigation settings for one step. The speed cap is twice the fastest
  // preferred velocity, but never below κ / Δt so overlapping agents can
  // always separate within a step.
  NavConfig nav(double dt, const PointCloud& preferred) const {
    double fastest = 0.0;
    for (const Vec3& v : preferred) fastest = std::max(fastest, norm(v));
    NavConfig n = NavConfig::with_defaults(kappa, dt, std::max(2.0 * fastest, kappa / dt));
    if (tau > 0.0) n.tau = tau;
    if (neighbor_radius > 0.0) n.neighbor_radius = neighbor_radius;
    return n;
  }
};

namespace detail {

// Runs the step loop; `preferred_at(x, t)` gives the preferred velocities of
// the frame at time t (in units of t).
template <typename Field>
TrajectoryLog integrate(PointCloud start, double horizon, const SampleConfig& cfg, Field&& preferred_at) {
  TrajectoryLog log(std::move(start), cfg.steps, horizon);
  log.meta.kappa = cfg.kappa;
  log.meta.seed = cfg.seed;
  log.meta.horizon = horizon;
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    const PointCloud& x = log.positions().back();
    PointCloud preferred = preferred_at(x, log.times()[k]);
    if (!std::all_of(preferred.begin(), preferred.end(), [](const Vec3& v) { return is_finite(v); })) {
      throw ad::NonFiniteError("sampling produced a non-finite velocity at step " + std::to_string(k));
    }
    PointCloud applied = cfg.use_orca ? orca_adjust(preferred, x, cfg.nav(log.dt(), preferred)) : preferred;
    log.advance(std::move(preferred), std::move(applied));
  }
  return log;
}

}  // namespace detail

// Gen-Swarms sampling from a given latent and start cloud. The field predicts
// dx/dt' with t' = (T - t) / T, so the velocity in units of t is V / T.
inline TrajectoryLog sample_from(const Networks& nets, const ParamStore& params, const FlowSchedule& sched,
                                 const Tensor& z, PointCloud start, const SampleConfig& cfg) {
  cfg.validate();
  sched.validate();
  TrajectoryLog log = detail::integrate(std::move(start), sched.horizon, cfg, [&](const PointCloud& x, double t) {
    PointCloud v = to_cloud(nets.field.evaluate(params, to_tensor(x), t, z));
    for (Vec3& vi : v) vi = vi / sched.horizon;
    return v;
  });
  log.meta.algorithm = cfg.use_orca ? "gen-swarms" : "cfm";
  return log;
}

inline void require_algorithm(const Checkpoint& ckpt, Algorithm expected) {
  if (ckpt.config.algorithm != expected) {
    throw std::invalid_argument("checkpoint was trained with algorithm '" + to_string(ckpt.config.algorithm) +
                                "', expected '" + to_string(expected) + "'");
  }
}

// Draw order: w for the latent, then X_T.
inline TrajectoryLog sample(const Checkpoint& ckpt, const SampleConfig& cfg) {
  require_algorithm(ckpt, Algorithm::FlowMatching);
  cfg.validate();
  const Networks nets(ckpt.config.model);
  Rng rng(cfg.seed);
  const Tensor z = nets.sample_latent(ckpt.params, rng);
  PointCloud start = to_cloud(randn(rng, cfg.agents, 3));
  return sample_from(nets, ckpt.params, {ckpt.config.horizon, ckpt.config.sigma_min}, z, std::move(start), cfg);
}

// Diffusion baseline with the checkpoint's own step count; `cfg.steps` is
// ignored because the chain length is fixed by training.
inline TrajectoryLog sample_diffusion(const Checkpoint& ckpt, const SampleConfig& cfg) {
  require_algorithm(ckpt, Algorithm::Diffusion);
  cfg.validate();
  const Networks nets(ckpt.config.model);
  TrajectoryLog log = ddpm_sample(nets, ckpt.params, DiffusionSchedule::linear(ckpt.config.diffusion_steps,
                                                                                ckpt.config.beta_start,
                                                                                ckpt.config.beta_end),
                                  cfg.agents, cfg.seed);
  log.meta.kappa = cfg.kappa;
  return log;
}

// Baseline that navigates from X_T straight to a precomputed final cloud:
// agent i heads for goal i at the speed that arrives exactly at t = 0.
inline TrajectoryLog sample_cfm_plus_orca(const PointCloud& goals, PointCloud start, const SampleConfig& cfg,
                                          double horizon = 1.0) {
  cfg.validate();
  if (goals.size() != start.size()) {
    throw std::invalid_argument("goal count " + std::to_string(goals.size()) + " does not match agent count " +
                                std::to_string(start.size()));
  }
  TrajectoryLog log = detail::integrate(std::move(start), horizon, cfg, [&](const PointCloud& x, double t) {
    PointCloud v(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) v[i] = (goals[i] - x[i]) / t;
    return v;
  });
  log.meta.algorithm = "cfm+orca";
  return log;
}

// Euler integration of the exact conditional field toward a known X₀.
inline TrajectoryLog integrate_exact_target(PointCloud start, const PointCloud& x0, const FlowSchedule& sched,
                                            std::size_t steps) {
  sched.validate();
  if (x0.size() != start.size()) throw std::invalid_argument("target and start clouds differ in size");
  SampleConfig cfg;
  cfg.agents = std::max<std::size_t>(start.size(), 1);
  cfg.steps = steps;
  cfg.use_orca = false;
  TrajectoryLog log = detail::integrate(std::move(start), sched.horizon, cfg, [&](const PointCloud& x, double t) {
    PointCloud v(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) v[i] = conditional_field(sched, x[i], x0[i], t) / sched.horizon;
    return v;
  });
  log.meta.algorithm = "exact-target";
  return log;
}

}  // namespace swarmflow
