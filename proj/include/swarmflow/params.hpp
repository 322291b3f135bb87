#pragma once

#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

#include "swarmflow/autodiff.hpp"

namespace swarmflow {

using Rng = std::mt19937_64;

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return n(rng);
}

inline Tensor randn(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor t = Tensor::zeros(rows, cols);
  for (double& v : t.data()) v = standard_normal(rng);
  return t;
}

// Named parameter tensors. Iteration order is the lexicographic name order,
// which fixes the order of every reduction over parameters.
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor>;

  void add(const std::string& name, Tensor value) {
    if (!tensors_.emplace(name, std::move(value)).second) {
      throw std::invalid_argument("duplicate parameter '" + name + "'");
    }
  }
  void set(const std::string& name, Tensor value) { at(name) = std::move(value); }

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  Tensor& at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
  }
  const Tensor& at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors_) n += t.size();
    return n;
  }

  Map::const_iterator begin() const { return tensors_.begin(); }
  Map::const_iterator end() const { return tensors_.end(); }
  Map::iterator begin() { return tensors_.begin(); }
  Map::iterator end() { return tensors_.end(); }
  std::size_t size() const { return tensors_.size(); }

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  Map tensors_;
};

// Gaussian init scaled by 1/sqrt(fan_in) for an (in, out) weight.
inline Tensor init_weight(Rng& rng, std::size_t in, std::size_t out) {
  Tensor w = randn(rng, in, out);
  const double s = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& v : w.data()) v *= s;
  return w;
}

// A tape plus lazily bound parameter leaves. With track_grads off every
// parameter is a constant, so evaluation records no backward closures.
class Graph {
 public:
  explicit Graph(const ParamStore& params, bool track_grads = true)
      : params_(params), track_grads_(track_grads) {}

  ad::Tape& tape() { return tape_; }

  ad::Var param(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const Tensor& value = params_.at(name);
    ad::Var v = track_grads_ ? tape_.variable(value) : tape_.constant(value);
    bound_.emplace(name, v);
    return v;
  }

  ad::Var constant(Tensor value) { return tape_.constant(std::move(value)); }
  ad::Var variable(Tensor value) { return tape_.variable(std::move(value)); }

  void backward(const ad::Var& loss) { tape_.backward(loss); }

  // One gradient per parameter in the store; parameters the loss never
  // touched get zeros.
  ParamStore gradients() {
    ParamStore out;
    for (const auto& [name, value] : params_) {
      auto it = bound_.find(name);
      out.add(name, it == bound_.end() ? Tensor(value.shape()) : it->second.grad());
    }
    return out;
  }

 private:
  const ParamStore& params_;
  bool track_grads_;
  ad::Tape tape_;
  std::map<std::string, ad::Var> bound_;
};

}  // namespace swarmflow
