#pragma once

// The three trainable networks: the gated contextual vector field, the
// max-pooled point-set encoder and the affine-coupling prior bijector.

#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "swarmflow/autodiff.hpp"
#include "swarmflow/params.hpp"

namespace swarmflow {

struct ModelConfig {
  std::size_t latent_dim = 256;
  std::size_t field_hidden = 128;
  std::size_t field_blocks = 6;
  std::vector<std::size_t> encoder_widths{64, 128, 256};
  std::size_t coupling_layers = 14;
  std::size_t coupling_hidden = 128;

  void validate() const {
    if (latent_dim < 2) throw std::invalid_argument("latent_dim must be at least 2");
    if (field_blocks < 1 || field_hidden < 1) throw std::invalid_argument("field network needs blocks and width");
    if (encoder_widths.empty()) throw std::invalid_argument("encoder needs at least one layer");
    if (coupling_hidden < 1) throw std::invalid_argument("coupling_hidden must be positive");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

namespace detail {

inline ad::Var linear(Graph& g, const ad::Var& x, const std::string& prefix) {
  return ad::add(ad::matmul(x, g.param(prefix + ".W")), g.param(prefix + ".b"));
}

inline void add_linear(ParamStore& p, Rng& rng, const std::string& prefix, std::size_t in, std::size_t out) {
  p.add(prefix + ".W", init_weight(rng, in, out));
  p.add(prefix + ".b", Tensor::zeros(1, out));
}

// Row sums as a matmul with a ones column: (m, n) -> (m, 1).
inline ad::Var row_sum(Graph& g, const ad::Var& x) {
  return ad::matmul(x, g.constant(Tensor({x.cols(), 1}, 1.0)));
}

}  // namespace detail

// (t, sin 2πt, cos 2πt)
inline Tensor time_embedding(double t) {
  const double w = 2.0 * std::numbers::pi * t;
  return Tensor::row({t, std::sin(w), std::cos(w)});
}

// Per-point velocity field v(x_i, t, z). Each block computes
//   h' = h·W_h + sigmoid(ctx·W_g + b_g) ⊙ (ctx·W_c) + b,   ctx = [emb(t), z]
// with tanh between blocks and a linear 3-wide output.
class GatedContextualNet {
 public:
  explicit GatedContextualNet(ModelConfig cfg) : cfg_(std::move(cfg)) {}

  std::string block(std::size_t i) const { return "field.b" + std::to_string(i); }

  void init(ParamStore& p, Rng& rng) const {
    const std::size_t ctx = 3 + cfg_.latent_dim;
    for (std::size_t i = 0; i < cfg_.field_blocks; ++i) {
      const std::size_t in = i == 0 ? 3 : cfg_.field_hidden;
      const std::size_t out = i + 1 == cfg_.field_blocks ? 3 : cfg_.field_hidden;
      p.add(block(i) + ".Wh", init_weight(rng, in, out));
      p.add(block(i) + ".Wg", init_weight(rng, ctx, out));
      p.add(block(i) + ".bg", Tensor::zeros(1, out));
      p.add(block(i) + ".Wc", init_weight(rng, ctx, out));
      p.add(block(i) + ".b", Tensor::zeros(1, out));
    }
  }

  // points: (M, 3); z: (1, d). Returns (M, 3).
  ad::Var forward(Graph& g, const ad::Var& points, double t, const ad::Var& z) const {
    if (points.cols() != 3) throw ShapeError("vector field expects (M, 3) points, got " + shape_string(points.shape()));
    if (z.rows() != 1 || z.cols() != cfg_.latent_dim) {
      throw ShapeError("latent dimension mismatch: expected (1, " + std::to_string(cfg_.latent_dim) + "), got " +
                       shape_string(z.shape()));
    }
    const ad::Var ctx = ad::concat_cols({g.constant(time_embedding(t)), z});
    ad::Var h = points;
    for (std::size_t i = 0; i < cfg_.field_blocks; ++i) {
      const std::string b = block(i);
      const ad::Var gate = ad::sigmoid(ad::add(ad::matmul(ctx, g.param(b + ".Wg")), g.param(b + ".bg")));
      const ad::Var context = ad::add(ad::mul(gate, ad::matmul(ctx, g.param(b + ".Wc"))), g.param(b + ".b"));
      h = ad::add(ad::matmul(h, g.param(b + ".Wh")), context);
      if (i + 1 < cfg_.field_blocks) h = ad::tanh(h);
    }
    return h;
  }

  Tensor evaluate(const ParamStore& p, const Tensor& points, double t, const Tensor& z) const {
    Graph g(p, false);
    return forward(g, g.constant(points), t, g.constant(z)).value();
  }

  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
};

struct EncoderOutput {
  ad::Var mean;
  ad::Var log_var;
};

// Shared per-point ReLU MLP, column max over points, then linear heads for
// the posterior mean and log-variance.
class PointSetEncoder {
 public:
  explicit PointSetEncoder(ModelConfig cfg) : cfg_(std::move(cfg)) {}

  void init(ParamStore& p, Rng& rng) const {
    std::size_t in = 3;
    for (std::size_t i = 0; i < cfg_.encoder_widths.size(); ++i) {
      detail::add_linear(p, rng, "enc.l" + std::to_string(i), in, cfg_.encoder_widths[i]);
      in = cfg_.encoder_widths[i];
    }
    detail::add_linear(p, rng, "enc.mean", in, cfg_.latent_dim);
    detail::add_linear(p, rng, "enc.logvar", in, cfg_.latent_dim);
  }

  EncoderOutput forward(Graph& g, const ad::Var& cloud) const {
    if (cloud.cols() != 3 || cloud.rows() == 0) {
      throw ShapeError("encoder expects a non-empty (N, 3) cloud, got " + shape_string(cloud.shape()));
    }
    ad::Var h = cloud;
    for (std::size_t i = 0; i < cfg_.encoder_widths.size(); ++i) {
      h = ad::relu(detail::linear(g, h, "enc.l" + std::to_string(i)));
    }
    const ad::Var pooled = ad::max_rows(h);
    return {detail::linear(g, pooled, "enc.mean"), detail::linear(g, pooled, "enc.logvar")};
  }

  // Reparameterized draw z = μ + exp(½ logσ²) ⊙ ε with ε: (1, d).
  static ad::Var reparameterize(const EncoderOutput& q, const ad::Var& noise) {
    return ad::add(q.mean, ad::mul(ad::exp(ad::scale(q.log_var, 0.5)), noise));
  }

  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
};

struct BijectorResult {
  ad::Var value;    // (B, d)
  ad::Var log_det;  // (B, 1)
};

// Stack of affine coupling layers mapping base noise w to latent z. Layer k
// keeps the dims with parity k % 2 fixed and transforms the rest:
//   b' = b ⊙ exp(s) + m,   s = γ ⊙ tanh(·),   log|det| = Σ s
class CouplingBijector {
 public:
  explicit CouplingBijector(ModelConfig cfg) : cfg_(std::move(cfg)) {
    const std::size_t d = cfg_.latent_dim;
    for (std::size_t parity = 0; parity < 2; ++parity) {
      std::vector<std::size_t> fixed, free, perm(d);
      for (std::size_t i = 0; i < d; ++i) (i % 2 == parity ? fixed : free).push_back(i);
      for (std::size_t j = 0; j < fixed.size(); ++j) perm[fixed[j]] = j;
      for (std::size_t j = 0; j < free.size(); ++j) perm[free[j]] = fixed.size() + j;
      fixed_[parity] = std::move(fixed);
      free_[parity] = std::move(free);
      unpermute_[parity] = std::move(perm);
    }
  }

  std::string layer(std::size_t k) const { return "prior.c" + std::to_string(k); }

  // Final scale/shift layers start at zero, so a fresh bijector is the identity.
  void init(ParamStore& p, Rng& rng) const {
    for (std::size_t k = 0; k < cfg_.coupling_layers; ++k) {
      const std::size_t nf = fixed_[k % 2].size(), nt = free_[k % 2].size();
      detail::add_linear(p, rng, layer(k) + ".hidden", nf, cfg_.coupling_hidden);
      p.add(layer(k) + ".scale.W", Tensor::zeros(cfg_.coupling_hidden, nt));
      p.add(layer(k) + ".scale.b", Tensor::zeros(1, nt));
      p.add(layer(k) + ".shift.W", Tensor::zeros(cfg_.coupling_hidden, nt));
      p.add(layer(k) + ".shift.b", Tensor::zeros(1, nt));
      p.add(layer(k) + ".gamma", Tensor({1, nt}, 1.0));
    }
  }

  BijectorResult forward(Graph& g, const ad::Var& w) const { return run(g, w, true); }
  BijectorResult inverse(Graph& g, const ad::Var& z) const { return run(g, z, false); }

  const ModelConfig& config() const { return cfg_; }

 private:
  BijectorResult run(Graph& g, const ad::Var& input, bool forward) const {
    if (input.cols() != cfg_.latent_dim) {
      throw ShapeError("bijector expects width " + std::to_string(cfg_.latent_dim) + ", got " +
                       shape_string(input.shape()));
    }
    ad::Var x = input;
    ad::Var log_det = g.constant(Tensor::zeros(input.rows(), 1));
    const std::size_t n = cfg_.coupling_layers;
    for (std::size_t step = 0; step < n; ++step) {
      const std::size_t k = forward ? step : n - 1 - step;
      const std::size_t parity = k % 2;
      const std::string name = layer(k);
      try {
        const ad::Var fixed = ad::gather_cols(x, fixed_[parity]);
        const ad::Var moving = ad::gather_cols(x, free_[parity]);
        const ad::Var h = ad::tanh(detail::linear(g, fixed, name + ".hidden"));
        const ad::Var s = ad::mul(g.param(name + ".gamma"), ad::tanh(detail::linear(g, h, name + ".scale")));
        const ad::Var shift = detail::linear(g, h, name + ".shift");
        ad::Var moved;
        if (forward) {
          moved = ad::add(ad::mul(moving, ad::exp(s)), shift);
          log_det = ad::add(log_det, detail::row_sum(g, s));
        } else {
          moved = ad::mul(ad::sub(moving, shift), ad::exp(ad::scale(s, -1.0)));
          log_det = ad::sub(log_det, detail::row_sum(g, s));
        }
        x = ad::gather_cols(ad::concat_cols({fixed, moved}), unpermute_[parity]);
      } catch (const ad::NonFiniteError& e) {
        throw ad::NonFiniteError("coupling layer " + std::to_string(k) + ": " + e.what());
      }
    }
    return {x, log_det};
  }

  ModelConfig cfg_;
  std::vector<std::size_t> fixed_[2], free_[2], unpermute_[2];
};

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Single-sample estimate log q(z|X) - log q(z), where the prior density is
// N(w; 0, I) pulled back through the bijector: w = F⁻¹(z).
inline ad::Var kl_divergence(Graph& g, const CouplingBijector& prior, const ad::Var& z, const EncoderOutput& q) {
  const double d = static_cast<double>(z.cols());
  const ad::Var diff_sq = ad::square(ad::sub(z, q.mean));
  const ad::Var quad = ad::sum(ad::add(q.log_var, ad::mul(diff_sq, ad::exp(ad::scale(q.log_var, -1.0)))));
  const ad::Var log_posterior = ad::add_scalar(ad::scale(quad, -0.5), -0.5 * d * kLog2Pi);
  const BijectorResult base = prior.inverse(g, z);
  const ad::Var log_base = ad::add_scalar(ad::scale(ad::sum(ad::square(base.value)), -0.5), -0.5 * d * kLog2Pi);
  const ad::Var log_prior = ad::add(log_base, ad::sum(base.log_det));
  return ad::sub(log_posterior, log_prior);
}

// KL(N(μ, σ²) || N(0, I)) = ½ Σ (μ² + σ² - log σ² - 1)
inline double gaussian_kl_closed_form(std::span<const double> mean, std::span<const double> log_var) {
  double kl = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    kl += mean[i] * mean[i] + std::exp(log_var[i]) - log_var[i] - 1.0;
  }
  return 0.5 * kl;
}

// All three networks sharing one parameter store.
struct Networks {
  explicit Networks(const ModelConfig& cfg) : config(cfg), field(cfg), encoder(cfg), prior(cfg) {
    cfg.validate();
  }

  void init(ParamStore& p, Rng& rng) const {
    field.init(p, rng);
    encoder.init(p, rng);
    prior.init(p, rng);
  }

  // z = F(w) for a fresh w ~ N(0, I).
  Tensor sample_latent(const ParamStore& p, Rng& rng) const {
    Graph g(p, false);
    return prior.forward(g, g.constant(randn(rng, 1, config.latent_dim))).value.value();
  }

  ModelConfig config;
  GatedContextualNet field;
  PointSetEncoder encoder;
  CouplingBijector prior;
};

}  // namespace swarmflow
