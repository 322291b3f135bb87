#pragma once

// Conditional flow matching along the optimal-transport Gaussian path
//   x_t = σ_t ε + t' x₀,   σ_t = 1 - (1 - σ_min) t',   t' = (T - t) / T
// whose conditional velocity dx/dt' = x₀ - (1 - σ_min) ε does not depend on t.

#include <stdexcept>
#include <string>

#include "swarmflow/models.hpp"

namespace swarmflow {

struct FlowSchedule {
  double horizon = 1.0;
  double sigma_min = 1e-4;

  void validate() const {
    if (!(horizon > 0.0)) throw std::invalid_argument("flow horizon T must be positive");
    if (!(sigma_min > 0.0 && sigma_min < 1.0)) throw std::invalid_argument("sigma_min must lie in (0, 1)");
  }

  void check_time(double t) const {
    if (!(t >= 0.0 && t <= horizon)) {
      throw std::out_of_range("time " + std::to_string(t) + " outside [0, " + std::to_string(horizon) + "]");
    }
  }

  // t' = (T - t) / T: 0 at the noise end, 1 at the data end.
  double progress(double t) const { return (horizon - t) / horizon; }
  double sigma(double t) const { return 1.0 - (1.0 - sigma_min) * progress(t); }
};

inline Tensor sample_path_point(const FlowSchedule& sched, const Tensor& x0, double t, const Tensor& noise) {
  sched.check_time(t);
  if (x0.shape() != noise.shape()) {
    throw ShapeError("path point: data " + shape_string(x0.shape()) + " vs noise " + shape_string(noise.shape()));
  }
  const double tp = sched.progress(t);
  const double s = sched.sigma(t);
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * noise[i] + tp * x0[i];
  return out;
}

// V* = X₀ - (1 - σ_min) ε
inline Tensor target_field(const FlowSchedule& sched, const Tensor& x0, const Tensor& noise) {
  if (x0.shape() != noise.shape()) {
    throw ShapeError("target field: data " + shape_string(x0.shape()) + " vs noise " + shape_string(noise.shape()));
  }
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x0[i] - (1.0 - sched.sigma_min) * noise[i];
  return out;
}

// Conditional field written as a function of the current position:
//   v*(x | x₀, t) = (x₀ - (1 - σ_min) x) / (1 - (1 - σ_min) t')
inline Vec3 conditional_field(const FlowSchedule& sched, const Vec3& x, const Vec3& x0, double t) {
  const double a = 1.0 - sched.sigma_min;
  return (x0 - a * x) / (1.0 - a * sched.progress(t));
}

inline Tensor conditional_field(const FlowSchedule& sched, const Tensor& x, const Tensor& x0, double t) {
  if (x.shape() != x0.shape() || x.cols() != 3) {
    throw ShapeError("conditional field: " + shape_string(x.shape()) + " vs " + shape_string(x0.shape()));
  }
  Tensor out(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const Vec3 v = conditional_field(sched, {x(r, 0), x(r, 1), x(r, 2)}, {x0(r, 0), x0(r, 1), x0(r, 2)}, t);
    out(r, 0) = v.x;
    out(r, 1) = v.y;
    out(r, 2) = v.z;
  }
  return out;
}

struct LossTerms {
  ad::Var total;
  double field = 0.0;  // mean per-point squared error
  double kl = 0.0;     // per-cloud KL estimate
};

// The objective sums the squared error over the N points and adds one KL
// term per cloud; it is reported divided by N, i.e. field + KL / N.
inline ad::Var combine_loss(const ad::Var& field, const ad::Var& kl, std::size_t points) {
  return ad::add(field, ad::scale(kl, 1.0 / static_cast<double>(points)));
}

// Mean over points of the squared vector error, summed over xyz.
inline ad::Var mean_point_sq_error(const ad::Var& target, const ad::Var& predicted) {
  return ad::scale(ad::sum(ad::square(ad::sub(target, predicted))), 1.0 / static_cast<double>(target.rows()));
}

// Loss for one cloud with every random draw supplied: time t, path noise
// (N, 3) and the encoder's reparameterization noise (1, d).
inline LossTerms cfm_loss(Graph& g, const Networks& nets, const FlowSchedule& sched, const Tensor& x0, double t,
                          const Tensor& noise, const Tensor& latent_noise) {
  const EncoderOutput q = nets.encoder.forward(g, g.constant(x0));
  const ad::Var z = PointSetEncoder::reparameterize(q, g.constant(latent_noise));
  const ad::Var xt = g.constant(sample_path_point(sched, x0, t, noise));
  const ad::Var target = g.constant(target_field(sched, x0, noise));
  const ad::Var field = mean_point_sq_error(target, nets.field.forward(g, xt, t, z));
  const ad::Var kl = kl_divergence(g, nets.prior, z, q);
  return {combine_loss(field, kl, x0.rows()), field.value().item(), kl.value().item()};
}

// Draw order: latent noise, then t ~ U(0, T), then path noise.
inline LossTerms cfm_loss(Graph& g, const Networks& nets, const FlowSchedule& sched, const Tensor& x0, Rng& rng) {
  const Tensor latent_noise = randn(rng, 1, nets.config.latent_dim);
  const double t = std::uniform_real_distribution<double>(0.0, sched.horizon)(rng);
  const Tensor noise = randn(rng, x0.rows(), 3);
  return cfm_loss(g, nets, sched, x0, t, noise, latent_noise);
}

}  // namespace swarmflow
