#include <gtest/gtest.h>

#include "support.hpp"

using namespace swarmflow;
namespace sft = swarmflow::testing;

namespace {

ParamStore two_inputs(Shape a, Shape b, std::uint64_t seed, double offset = 0.0) {
  Rng rng(seed);
  ParamStore p;
  Tensor ta(a), tb(b);
  for (double& v : ta.data()) v = standard_normal(rng) + offset;
  for (double& v : tb.data()) v = standard_normal(rng) + offset;
  p.add("a", ta);
  p.add("b", tb);
  return p;
}

// Contracts the output against a fixed pseudo-random weight so every output
// entry contributes a distinct gradient.
ad::Var contract(Graph& g, const ad::Var& out) {
  Tensor w(out.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.7 * static_cast<double>(i) + 0.3);
  return ad::sum(ad::mul(out, g.constant(w)));
}

void expect_gradients(const ParamStore& p, const std::function<ad::Var(Graph&, ad::Var, ad::Var)>& op) {
  const auto report = sft::check_gradients(p, [&](Graph& g) { return contract(g, op(g, g.param("a"), g.param("b"))); });
  EXPECT_LT(report.max_rel_error, 1e-6) << report.worst;
}

}  // namespace

TEST(Autodiff, BinaryOpsMatchFiniteDifferences) {
  expect_gradients(two_inputs({3, 4}, {4, 2}, 1), [](Graph&, ad::Var a, ad::Var b) { return ad::matmul(a, b); });
  expect_gradients(two_inputs({3, 4}, {3, 4}, 2), [](Graph&, ad::Var a, ad::Var b) { return ad::add(a, b); });
  expect_gradients(two_inputs({3, 4}, {1, 4}, 3), [](Graph&, ad::Var a, ad::Var b) { return ad::sub(a, b); });
  expect_gradients(two_inputs({1, 4}, {3, 4}, 4), [](Graph&, ad::Var a, ad::Var b) { return ad::sub(a, b); });
  expect_gradients(two_inputs({3, 4}, {1, 4}, 5), [](Graph&, ad::Var a, ad::Var b) { return ad::mul(a, b); });
  expect_gradients(two_inputs({3, 2}, {3, 3}, 6),
                   [](Graph&, ad::Var a, ad::Var b) { return ad::concat_cols({a, b, a}); });
}

TEST(Autodiff, UnaryOpsMatchFiniteDifferences) {
  const ParamStore p = two_inputs({4, 3}, {1, 1}, 7);
  expect_gradients(p, [](Graph&, ad::Var a, ad::Var) { return ad::sigmoid(a); });
  expect_gradients(p, [](Graph&, ad::Var a, ad::Var) { return ad::tanh(a); });
  expect_gradients(p, [](Graph&, ad::Var a, ad::Var) { return ad::relu(a); });
  expect_gradients(p, [](Graph&, ad::Var a, ad::Var) { return ad::exp(a); });
  expect_gradients(p, [](Graph&, ad::Var a, ad::Var) { return ad::sin(a); });
  expect_gradients(p, [](Graph&, ad::Var a, ad::Var) { return ad::cos(a); });
  expect_gradients(p, [](Graph&, ad::Var a, ad::Var) { return ad::square(a); });
  expect_gradients(p, [](Graph&, ad::Var a, ad::Var) { return ad::add_scalar(ad::scale(a, -2.5), 1.0); });
  expect_gradients(p, [](Graph&, ad::Var a, ad::Var) { return ad::max_rows(a); });
  expect_gradients(p, [](Graph&, ad::Var a, ad::Var) { return ad::gather_cols(a, {2, 0, 2}); });
  expect_gradients(p, [](Graph&, ad::Var a, ad::Var) { return ad::slice_cols(a, 1, 3); });
  expect_gradients(p, [](Graph&, ad::Var a, ad::Var) { return ad::mean(a); });
  expect_gradients(two_inputs({4, 3}, {1, 1}, 8, 3.0), [](Graph&, ad::Var a, ad::Var) { return ad::log(a); });
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
  ParamStore p;
  p.add("x", Tensor::scalar(1.5));
  Graph g(p);
  const ad::Var x = g.param("x");
  const ad::Var y = ad::mul(ad::mul(x, x), x);  // x³
  g.backward(y);
  EXPECT_DOUBLE_EQ(g.gradients().at("x")[0], 3.0 * 1.5 * 1.5);
}

TEST(Autodiff, MaxRowsTieGoesToLowestIndex) {
  ad::Tape t;
  const ad::Var a = t.variable(Tensor({3, 1}, {2.0, 2.0, 1.0}));
  const ad::Var m = ad::max_rows(a);
  t.backward(ad::sum(m));
  EXPECT_EQ(a.grad()[0], 1.0);
  EXPECT_EQ(a.grad()[1], 0.0);
}

TEST(Autodiff, ShapeMismatchNamesBothShapes) {
  ad::Tape t;
  const ad::Var a = t.constant(Tensor::zeros(2, 3));
  const ad::Var b = t.constant(Tensor::zeros(4, 5));
  try {
    ad::matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2, 3)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(4, 5)"), std::string::npos) << msg;
  }
  EXPECT_THROW(ad::add(a, b), ShapeError);
}

TEST(Autodiff, NonFiniteValuesAreReportedAtTheOp) {
  ad::Tape t;
  const ad::Var a = t.constant(Tensor::row({-1.0}));
  try {
    ad::log(a);
    FAIL() << "expected NonFiniteError";
  } catch (const ad::NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("log"), std::string::npos);
  }
  EXPECT_THROW(ad::exp(t.constant(Tensor::row({1000.0}))), ad::NonFiniteError);
}

TEST(Autodiff, BackwardRequiresScalarLoss) {
  ad::Tape t;
  const ad::Var a = t.variable(Tensor::zeros(2, 2));
  EXPECT_THROW(t.backward(a), ShapeError);
}

TEST(Autodiff, ConstantsReceiveNoGradient) {
  ad::Tape t;
  const ad::Var c = t.constant(Tensor::row({1.0, 2.0}));
  const ad::Var v = t.variable(Tensor::row({3.0, 4.0}));
  const ad::Var out = ad::sum(ad::mul(c, v));
  EXPECT_FALSE(ad::mul(c, c).requires_grad());
  t.backward(out);
  EXPECT_EQ(v.grad()[0], 1.0);
  EXPECT_EQ(v.grad()[1], 2.0);
}
