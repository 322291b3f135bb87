#pragma once

// Reverse-mode differentiation over rank-2 tensors. A Tape records every op
// in creation order, which is already a topological order, so backward is a
// single reverse sweep that visits each node once.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "swarmflow/tensor.hpp"

namespace swarmflow::ad {

class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class Tape;

class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) { return push(std::move(value), false, {}, "constant"); }
  Var variable(Tensor value) { return push(std::move(value), true, {}, "variable"); }

  Var push(Tensor value, bool requires_grad, BackwardFn backward, const char* op) {
    if (!value.all_finite()) {
      throw NonFiniteError(std::string("non-finite value produced by ") + op + " with shape " +
                           shape_string(value.shape()));
    }
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, std::move(backward)});
    return Var(this, nodes_.size() - 1);
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  const Tensor& grad(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.size() == 0) n.grad = Tensor(n.value.shape());
    return n.grad;
  }

  // Adds into the gradient buffer of node `id`; no-op for constants.
  std::span<double> grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Tensor(n.value.shape());
    return n.grad.data();
  }

  void backward(const Var& loss) {
    if (&loss.tape() != this) throw std::invalid_argument("backward: loss belongs to another tape");
    if (loss.value().size() != 1) {
      throw ShapeError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
    }
    for (auto& n : nodes_) n.grad = Tensor{};
    grad_buffer(loss.id())[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
      n.backward(*this, n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline const Tensor& Var::grad() const { return tape_->grad(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}
inline MutMap as_matrix(std::span<double> d, std::size_t rows, std::size_t cols) {
  return MutMap(d.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline void require_rank2(const Var& a, const char* op) {
  if (a.value().rank() != 2) {
    throw ShapeError(std::string(op) + ": expected rank-2 operand, got " + shape_string(a.shape()));
  }
}

inline void require_same_tape(const Var& a, const Var& b, const char* op) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}

[[noreturn]] inline void mismatch(const char* op, const Var& a, const Var& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                   shape_string(b.shape()));
}

enum class Broadcast { None, RhsRow, LhsRow };

inline Broadcast broadcast_kind(const Var& a, const Var& b, const char* op) {
  require_rank2(a, op);
  require_rank2(b, op);
  require_same_tape(a, b, op);
  if (a.shape() == b.shape()) return Broadcast::None;
  if (a.cols() == b.cols() && b.rows() == 1) return Broadcast::RhsRow;
  if (a.cols() == b.cols() && a.rows() == 1) return Broadcast::LhsRow;
  mismatch(op, a, b);
}

// Reduces a gradient of shape (m, n) onto a broadcast (1, n) operand.
inline void accumulate_reduced(std::span<double> dst, const Tensor& g, bool reduce_rows) {
  if (!reduce_rows) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
    return;
  }
  const std::size_t n = g.cols();
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t c = 0; c < n; ++c) dst[c] += g(r, c);
  }
}

template <typename Fwd, typename Dfdx>
Var unary(const Var& a, const char* op, Fwd fwd, Dfdx dfdx) {
  require_rank2(a, op);
  Tensor out(a.shape());
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
  const std::size_t ia = a.id();
  Tape& tape = a.tape();
  if (!a.requires_grad()) return tape.push(std::move(out), false, {}, op);
  return tape.push(std::move(out), true,
                   [ia, dfdx](Tape& t, const Tensor& g) {
                     const Tensor& xv = t.value(ia);
                     auto d = t.grad_buffer(ia);
                     for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * dfdx(xv[i]);
                   },
                   op);
}

}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  detail::require_same_tape(a, b, "matmul");
  if (a.cols() != b.rows()) detail::mismatch("matmul", a, b);
  const std::size_t m = a.rows(), n = b.cols();
  Tensor out = Tensor::zeros(m, n);
  detail::as_matrix(out.data(), m, n).noalias() = detail::as_matrix(a.value()) * detail::as_matrix(b.value());
  const bool rg = a.requires_grad() || b.requires_grad();
  const std::size_t ia = a.id(), ib = b.id();
  Tape& tape = a.tape();
  return tape.push(std::move(out), rg,
                   [ia, ib](Tape& t, const Tensor& g) {
                     const auto gm = detail::as_matrix(g);
                     if (t.requires_grad(ia)) {
                       const Tensor& bv = t.value(ib);
                       auto da = t.grad_buffer(ia);
                       detail::as_matrix(da, g.rows(), bv.rows()).noalias() += gm * detail::as_matrix(bv).transpose();
                     }
                     if (t.requires_grad(ib)) {
                       const Tensor& av = t.value(ia);
                       auto db = t.grad_buffer(ib);
                       detail::as_matrix(db, av.cols(), g.cols()).noalias() += detail::as_matrix(av).transpose() * gm;
                     }
                   },
                   "matmul");
}

namespace detail {

template <typename Op, typename DLhs, typename DRhs>
Var binary(const Var& a, const Var& b, const char* op, Op f, DLhs dlhs, DRhs drhs) {
  const Broadcast bc = broadcast_kind(a, b, op);
  const Shape out_shape = bc == Broadcast::LhsRow ? b.shape() : a.shape();
  Tensor out(out_shape);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t n = out.cols();
  auto ai = [&](std::size_t i) { return bc == Broadcast::LhsRow ? av[i % n] : av[i]; };
  auto bi = [&](std::size_t i) { return bc == Broadcast::RhsRow ? bv[i % n] : bv[i]; };
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(ai(i), bi(i));
  const bool rg = a.requires_grad() || b.requires_grad();
  const std::size_t ia = a.id(), ib = b.id();
  Tape& tape = a.tape();
  return tape.push(
      std::move(out), rg,
      [ia, ib, bc, dlhs, drhs](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(ia);
        const Tensor& y = t.value(ib);
        const std::size_t cols = g.cols();
        auto xv = [&](std::size_t i) { return bc == Broadcast::LhsRow ? x[i % cols] : x[i]; };
        auto yv = [&](std::size_t i) { return bc == Broadcast::RhsRow ? y[i % cols] : y[i]; };
        if (t.requires_grad(ia)) {
          Tensor ga(g.shape());
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * dlhs(xv(i), yv(i));
          accumulate_reduced(t.grad_buffer(ia), ga, bc == Broadcast::LhsRow);
        }
        if (t.requires_grad(ib)) {
          Tensor gb(g.shape());
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * drhs(xv(i), yv(i));
          accumulate_reduced(t.grad_buffer(ib), gb, bc == Broadcast::RhsRow);
        }
      },
      op);
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Var sub(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Var mul(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

inline Var scale(const Var& a, double s) {
  return detail::unary(a, "scale", [s](double x) { return s * x; }, [s](double) { return s; });
}

inline Var add_scalar(const Var& a, double s) {
  return detail::unary(a, "add_scalar", [s](double x) { return x + s; }, [](double) { return 1.0; });
}

inline Var square(const Var& a) {
  return detail::unary(a, "square", [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

inline Var sigmoid(const Var& a) {
  auto f = [](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  };
  return detail::unary(a, "sigmoid", f, [f](double x) {
    const double s = f(x);
    return s * (1.0 - s);
  });
}

inline Var tanh(const Var& a) {
  return detail::unary(a, "tanh", [](double x) { return std::tanh(x); }, [](double x) {
    const double th = std::tanh(x);
    return 1.0 - th * th;
  });
}

inline Var relu(const Var& a) {
  return detail::unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                       [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var exp(const Var& a) {
  return detail::unary(a, "exp", [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

inline Var log(const Var& a) {
  return detail::unary(a, "log", [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

inline Var sin(const Var& a) {
  return detail::unary(a, "sin", [](double x) { return std::sin(x); }, [](double x) { return std::cos(x); });
}

inline Var cos(const Var& a) {
  return detail::unary(a, "cos", [](double x) { return std::cos(x); }, [](double x) { return -std::sin(x); });
}

inline Var sum(const Var& a) {
  detail::require_rank2(a, "sum");
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.tape().push(Tensor::scalar(s), a.requires_grad(),
                       [ia](Tape& t, const Tensor& g) {
                         auto d = t.grad_buffer(ia);
                         for (double& v : d) v += g[0];
                       },
                       "sum");
}

inline Var mean(const Var& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

// Column-wise max over rows: (m, n) -> (1, n). The subgradient flows to the
// argmax row; ties go to the lowest row index.
inline Var max_rows(const Var& a) {
  detail::require_rank2(a, "max_rows");
  const Tensor& x = a.value();
  if (x.rows() == 0) throw ShapeError("max_rows: empty operand");
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros(1, n);
  std::vector<std::size_t> argmax(n, 0);
  for (std::size_t c = 0; c < n; ++c) {
    double best = x(0, c);
    for (std::size_t r = 1; r < m; ++r) {
      if (x(r, c) > best) {
        best = x(r, c);
        argmax[c] = r;
      }
    }
    out(0, c) = best;
  }
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out), a.requires_grad(),
                       [ia, n, argmax = std::move(argmax)](Tape& t, const Tensor& g) {
                         auto d = t.grad_buffer(ia);
                         for (std::size_t c = 0; c < n; ++c) d[argmax[c] * n + c] += g[c];
                       },
                       "max_rows");
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  bool rg = false;
  for (const auto& p : parts) {
    detail::require_rank2(p, "concat_cols");
    detail::require_same_tape(parts.front(), p, "concat_cols");
    if (p.rows() != m) detail::mismatch("concat_cols", parts.front(), p);
    n += p.cols();
    rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros(m, n);
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // (node id, column offset)
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, off + c) = v(r, c);
    }
    spans.emplace_back(p.id(), off);
    off += v.cols();
  }
  return parts.front().tape().push(std::move(out), rg,
                                   [spans = std::move(spans)](Tape& t, const Tensor& g) {
                                     for (const auto& [id, offset] : spans) {
                                       if (!t.requires_grad(id)) continue;
                                       const std::size_t w = t.value(id).cols();
                                       auto d = t.grad_buffer(id);
                                       for (std::size_t r = 0; r < g.rows(); ++r) {
                                         for (std::size_t c = 0; c < w; ++c) d[r * w + c] += g(r, offset + c);
                                       }
                                     }
                                   },
                                   "concat_cols");
}

// Picks columns by index (repeats allowed); backward scatter-adds.
inline Var gather_cols(const Var& a, const std::vector<std::size_t>& index) {
  detail::require_rank2(a, "gather_cols");
  const Tensor& x = a.value();
  for (std::size_t c : index) {
    if (c >= x.cols()) {
      throw ShapeError("gather_cols: column " + std::to_string(c) + " out of range for shape " +
                       shape_string(x.shape()));
    }
  }
  const std::size_t m = x.rows(), n = index.size(), src_cols = x.cols();
  Tensor out = Tensor::zeros(m, n);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out(r, c) = x(r, index[c]);
  }
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out), a.requires_grad(),
                       [ia, index, src_cols](Tape& t, const Tensor& g) {
                         auto d = t.grad_buffer(ia);
                         for (std::size_t r = 0; r < g.rows(); ++r) {
                           for (std::size_t c = 0; c < index.size(); ++c) d[r * src_cols + index[c]] += g(r, c);
                         }
                       },
                       "gather_cols");
}

inline Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for shape " + shape_string(a.shape()));
  }
  std::vector<std::size_t> index(end - begin);
  std::iota(index.begin(), index.end(), begin);
  return gather_cols(a, index);
}

}  // namespace swarmflow::ad
