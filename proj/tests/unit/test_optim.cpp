#include <gtest/gtest.h>

#include "oracle_values.hpp"
#include "swarmflow/optim.hpp"

using namespace swarmflow;

TEST(Adam, MatchesHandTrace) {
  ParamStore p;
  p.add("w", Tensor::row({0.5, -1.0, 2.0}));
  AdamState state;
  for (std::size_t step = 0; step < 3; ++step) {
    ParamStore g;
    g.add("w", Tensor::row({oracle::kAdamGrads[3 * step], oracle::kAdamGrads[3 * step + 1],
                            oracle::kAdamGrads[3 * step + 2]}));
    adam_step(p, g, state, 0.01);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p.at("w")[i], oracle::kAdamTrace[3 * step + i], 1e-15);
  }
  EXPECT_EQ(state.step, 3u);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParamStore p;
  p.add("w", Tensor::row({1.0, 2.0}));
  ParamStore g;
  g.add("w", Tensor::zeros(1, 2));
  AdamState state;
  adam_step(p, g, state, 0.1);
  EXPECT_EQ(p.at("w"), Tensor::row({1.0, 2.0}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // With bias correction the first update is lr · sign(g) up to ε.
  ParamStore p;
  p.add("w", Tensor::row({0.0, 0.0}));
  ParamStore g;
  g.add("w", Tensor::row({3.0, -0.001}));
  AdamState state;
  adam_step(p, g, state, 0.05);
  EXPECT_NEAR(p.at("w")[0], -0.05, 1e-9);
  EXPECT_NEAR(p.at("w")[1], 0.05, 1e-6);
}

TEST(LearningRate, ConstantThenLinearDecay) {
  EXPECT_DOUBLE_EQ(scheduled_lr(1.0, 0, 100), 1.0);
  EXPECT_DOUBLE_EQ(scheduled_lr(1.0, 49, 100), 1.0);
  EXPECT_DOUBLE_EQ(scheduled_lr(1.0, 50, 100), 1.0);
  EXPECT_DOUBLE_EQ(scheduled_lr(1.0, 99, 100), 0.1);
  EXPECT_NEAR(scheduled_lr(2.0, 74, 100), 2.0 * (1.0 - 0.9 * 24.0 / 49.0), 1e-15);
  for (std::size_t s = 51; s < 100; ++s) EXPECT_LT(scheduled_lr(1.0, s, 100), scheduled_lr(1.0, s - 1, 100));
  EXPECT_DOUBLE_EQ(scheduled_lr(1.0, 0, 1), 1.0);
}
