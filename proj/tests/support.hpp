#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "swarmflow/swarmflow.hpp"

namespace swarmflow::testing {

// d = 8 configuration small enough for exhaustive finite differences.
inline ModelConfig small_model_config() {
  ModelConfig c;
  c.latent_dim = 8;
  c.field_hidden = 12;
  c.field_blocks = 3;
  c.encoder_widths = {10, 12, 16};
  c.coupling_layers = 4;
  c.coupling_hidden = 10;
  return c;
}

// Initialized parameters plus Gaussian jitter, so zero-initialized layers
// (the bijector's scale and shift) take part in the check.
inline ParamStore jittered_params(const ModelConfig& cfg, std::uint64_t seed, double jitter = 0.1) {
  Rng rng(seed);
  ParamStore p;
  Networks(cfg).init(p, rng);
  for (auto& [_, t] : p) {
    for (double& v : t.data()) v += jitter * standard_normal(rng);
  }
  return p;
}

inline PointCloud random_cloud(Rng& rng, std::size_t n, double scale = 1.0) {
  PointCloud c(n);
  for (Vec3& p : c) p = scale * Vec3{standard_normal(rng), standard_normal(rng), standard_normal(rng)};
  return c;
}

struct GradientReport {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

// Relative error |analytic - numeric| / max(|analytic|, |numeric|, 1e-6) for
// every parameter scalar, with central differences of step eps.
inline GradientReport check_gradients(ParamStore params, const std::function<ad::Var(Graph&)>& loss,
                                      double eps = 1e-5) {
  ParamStore analytic;
  {
    Graph g(params, true);
    const ad::Var l = loss(g);
    g.backward(l);
    analytic = g.gradients();
  }
  const auto eval = [&] {
    Graph g(params, false);
    return loss(g).value().item();
  };
  GradientReport report;
  for (auto& [name, tensor] : params) {
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double saved = tensor[i];
      tensor[i] = saved + eps;
      const double up = eval();
      tensor[i] = saved - eps;
      const double down = eval();
      tensor[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic.at(name)[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace swarmflow::testing
