#pragma once

// DDPM baseline with ε-prediction, sharing the field network, encoder and
// bijector prior with the flow model.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "swarmflow/flowmatch.hpp"
#include "swarmflow/models.hpp"
#include "swarmflow/trajectory.hpp"

namespace swarmflow {

class DiffusionSchedule {
 public:
  static DiffusionSchedule linear(std::size_t steps = 100, double beta_start = 1e-4, double beta_end = 0.05) {
    if (steps == 0) throw std::invalid_argument("diffusion schedule needs at least one step");
    if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
      throw std::invalid_argument("diffusion betas must satisfy 0 < beta_start <= beta_end < 1");
    }
    DiffusionSchedule s;
    s.betas_.resize(steps);
    s.alpha_bars_.resize(steps + 1);
    s.alpha_bars_[0] = 1.0;
    for (std::size_t i = 0; i < steps; ++i) {
      const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
      s.betas_[i] = beta_start + (beta_end - beta_start) * frac;
      s.alpha_bars_[i + 1] = s.alpha_bars_[i] * (1.0 - s.betas_[i]);
    }
    return s;
  }

  std::size_t steps() const { return betas_.size(); }
  // 1-based step index.
  double beta(std::size_t t) const { return betas_.at(t - 1); }
  double alpha(std::size_t t) const { return 1.0 - beta(t); }
  // ᾱ_t = Π_{s ≤ t} (1 - β_s), with ᾱ_0 = 1.
  double alpha_bar(std::size_t t) const { return alpha_bars_.at(t); }
  // Network time input in (0, 1].
  double time_input(std::size_t t) const { return static_cast<double>(t) / static_cast<double>(steps()); }

  void check_step(std::size_t t) const {
    if (t > steps()) {
      throw std::out_of_range("diffusion step " + std::to_string(t) + " outside [0, " + std::to_string(steps()) + "]");
    }
  }

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

// X_t = √ᾱ_t X₀ + √(1 - ᾱ_t) ε; t = 0 returns X₀.
inline Tensor ddpm_forward_sample(const DiffusionSchedule& sched, const Tensor& x0, std::size_t t, const Tensor& noise) {
  sched.check_step(t);
  if (x0.shape() != noise.shape()) {
    throw ShapeError("diffusion sample: data " + shape_string(x0.shape()) + " vs noise " + shape_string(noise.shape()));
  }
  const double a = std::sqrt(sched.alpha_bar(t));
  const double b = std::sqrt(1.0 - sched.alpha_bar(t));
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * noise[i];
  return out;
}

inline LossTerms ddpm_loss(Graph& g, const Networks& nets, const DiffusionSchedule& sched, const Tensor& x0,
                           std::size_t t, const Tensor& noise, const Tensor& latent_noise) {
  if (t == 0) throw std::out_of_range("diffusion training step must be >= 1");
  const EncoderOutput q = nets.encoder.forward(g, g.constant(x0));
  const ad::Var z = PointSetEncoder::reparameterize(q, g.constant(latent_noise));
  const ad::Var xt = g.constant(ddpm_forward_sample(sched, x0, t, noise));
  const ad::Var predicted = nets.field.forward(g, xt, sched.time_input(t), z);
  const ad::Var field = mean_point_sq_error(g.constant(noise), predicted);
  const ad::Var kl = kl_divergence(g, nets.prior, z, q);
  return {combine_loss(field, kl, x0.rows()), field.value().item(), kl.value().item()};
}

inline LossTerms ddpm_loss(Graph& g, const Networks& nets, const DiffusionSchedule& sched, const Tensor& x0, Rng& rng) {
  const Tensor latent_noise = randn(rng, 1, nets.config.latent_dim);
  const auto t = std::uniform_int_distribution<std::size_t>(1, sched.steps())(rng);
  const Tensor noise = randn(rng, x0.rows(), 3);
  return ddpm_loss(g, nets, sched, x0, t, noise, latent_noise);
}

// Ancestral sampling with σ_t² = β_t (no noise on the last step). Every
// intermediate cloud becomes a frame; the logged velocity of a step is its
// displacement divided by Δt = 1 / T_steps. `stochastic = false` drops the
// injected noise.
inline TrajectoryLog ddpm_sample_from(const Networks& nets, const ParamStore& params, const DiffusionSchedule& sched,
                                      const Tensor& z, PointCloud start, Rng& rng, bool stochastic = true) {
  const std::size_t steps = sched.steps();
  TrajectoryLog log(std::move(start), steps, 1.0);
  log.meta.algorithm = "diffusion";
  for (std::size_t t = steps; t >= 1; --t) {
    const PointCloud& x = log.positions().back();
    const Tensor eps = nets.field.evaluate(params, to_tensor(x), sched.time_input(t), z);
    const double coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
    const double sigma = std::sqrt(sched.beta(t));
    PointCloud velocity(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      Vec3 next = inv_sqrt_alpha * (x[i] - coef * Vec3{eps(i, 0), eps(i, 1), eps(i, 2)});
      if (stochastic && t > 1) next += sigma * Vec3{standard_normal(rng), standard_normal(rng), standard_normal(rng)};
      velocity[i] = (next - x[i]) / log.dt();
    }
    if (!std::all_of(velocity.begin(), velocity.end(), [](const Vec3& v) { return is_finite(v); })) {
      throw ad::NonFiniteError("diffusion sampling diverged at step " + std::to_string(t));
    }
    log.advance(velocity, velocity);
  }
  return log;
}

// Draw order: w for the latent, then X_T, then per-step noise.
inline TrajectoryLog ddpm_sample(const Networks& nets, const ParamStore& params, const DiffusionSchedule& sched,
                                 std::size_t agents, std::uint64_t seed) {
  if (agents == 0) throw std::invalid_argument("need at least one agent");
  Rng rng(seed);
  const Tensor z = nets.sample_latent(params, rng);
  PointCloud start = to_cloud(randn(rng, agents, 3));
  TrajectoryLog log = ddpm_sample_from(nets, params, sched, z, std::move(start), rng);
  log.meta.seed = seed;
  return log;
}

}  // namespace swarmflow
