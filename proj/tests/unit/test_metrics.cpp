#include <gtest/gtest.h>

#include <numbers>

#include "oracle_values.hpp"
#include "support.hpp"

using namespace swarmflow;
namespace sft = swarmflow::testing;

namespace {

PointCloud cloud_from(const std::vector<double>& v, std::size_t offset, std::size_t n) {
  PointCloud c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = {v[offset + 3 * i], v[offset + 3 * i + 1], v[offset + 3 * i + 2]};
  return c;
}

TrajectoryLog static_log(const PointCloud& x, std::size_t steps) {
  TrajectoryLog log(x, steps);
  for (std::size_t k = 0; k < steps; ++k) log.advance(PointCloud(x.size()), PointCloud(x.size()));
  return log;
}

}  // namespace

TEST(Chamfer, HandValues) {
  EXPECT_DOUBLE_EQ(chamfer({{0, 0, 0}}, {{1, 0, 0}}), 2.0);
  const PointCloud a = cloud_from(oracle::kChamferA, 0, 4);
  const PointCloud b = cloud_from(oracle::kChamferB, 0, 3);
  EXPECT_NEAR(chamfer(a, b), oracle::kChamferAB, 1e-10);
  EXPECT_EQ(chamfer(a, b), chamfer(b, a));
  EXPECT_EQ(chamfer(a, a), 0.0);
  EXPECT_THROW(chamfer({}, a), std::invalid_argument);
}

TEST(Chamfer, PositiveForDistinctSets) {
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const PointCloud a = sft::random_cloud(rng, 8), b = sft::random_cloud(rng, 5);
    EXPECT_GT(chamfer(a, b), 0.0);
  }
}

TEST(CoverageMmd, CraftedInstance) {
  std::vector<PointCloud> refs, gens;
  for (std::size_t k = 0; k < 3; ++k) {
    refs.push_back(cloud_from(oracle::kCovRefs, 6 * k, 2));
    gens.push_back(cloud_from(oracle::kCovGens, 6 * k, 2));
  }
  const CoverageResult r = cov_mmd(gens, refs);
  EXPECT_NEAR(r.cov, oracle::kCov, 1e-10);
  EXPECT_NEAR(r.cov, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.mmd, oracle::kMmd, 1e-10);
}

TEST(CoverageMmd, IdenticalSetsAndSingleGenerated) {
  Rng rng(2);
  std::vector<PointCloud> refs;
  for (int i = 0; i < 4; ++i) refs.push_back(sft::random_cloud(rng, 6));
  const CoverageResult same = cov_mmd(refs, refs);
  EXPECT_EQ(same.cov, 1.0);
  EXPECT_EQ(same.mmd, 0.0);
  EXPECT_EQ(cov_mmd({refs[2]}, refs).cov, 0.25);
  EXPECT_THROW(cov_mmd({}, refs), std::invalid_argument);
}

TEST(CoverageMmd, AddingGeneratedNeverLowersCoverage) {
  Rng rng(3);
  std::vector<PointCloud> refs, gens;
  for (int i = 0; i < 5; ++i) refs.push_back(sft::random_cloud(rng, 5));
  double prev = 0.0;
  for (int i = 0; i < 8; ++i) {
    gens.push_back(sft::random_cloud(rng, 5));
    const double cov = cov_mmd(gens, refs).cov;
    EXPECT_GE(cov, prev);
    prev = cov;
  }
}

TEST(Collisions, StaticSafeAndPermanentOverlap) {
  const auto safe = collision_rates(static_log({{0, 0, 0}, {0.06, 0, 0}, {0, 1, 0}}, 3), 0.06);
  EXPECT_EQ(safe.traj_pct, 0.0);
  EXPECT_EQ(safe.fin_pct, 0.0);
  const auto hit = collision_rates(static_log({{0, 0, 0}, {0.03, 0, 0}}, 3), 0.06);
  EXPECT_EQ(hit.traj_pct, 100.0);
  EXPECT_EQ(hit.fin_pct, 100.0);
}

TEST(Collisions, ThreeFrameHandCount) {
  // Frame 1 of 3 has agents 0 and 1 within κ; the others are clear.
  const PointCloud x0{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
  TrajectoryLog log(x0, 2);
  log.advance(PointCloud(4), {{0.9, 0, 0}, {-0.9, 0, 0}, {0, 0, 0}, {0, 0, 0}});
  log.advance(PointCloud(4), {{-0.9, 0, 0}, {0.9, 0, 0}, {0, 0, 0}, {0, 0, 0}});
  const auto r = collision_rates(log, 0.2);
  EXPECT_NEAR(r.traj_pct, 50.0 / 3.0, 1e-10);
  EXPECT_EQ(r.fin_pct, 0.0);
}

TEST(Collisions, InvariantUnderJointScaling) {
  Rng rng(4);
  TrajectoryLog log(sft::random_cloud(rng, 30, 0.05), 5);
  for (int k = 0; k < 5; ++k) log.advance(sft::random_cloud(rng, 30), sft::random_cloud(rng, 30));
  const SceneScale scene;
  const auto a = collision_rates(log, 0.06);
  const TrajectoryLog big = to_real_scale(log, scene);
  const auto b = collision_rates(big, big.meta.kappa);
  EXPECT_EQ(a.traj_pct, b.traj_pct);
  EXPECT_EQ(a.fin_pct, b.fin_pct);
  EXPECT_GT(a.traj_pct, 0.0);
}

TEST(Smoothness, ConstantVelocityIsZero) {
  TrajectoryLog log({{0, 0, 0}, {1, 1, 1}}, 6);
  for (int k = 0; k < 6; ++k) log.advance({{1, 2, 3}, {0, 0, -1}}, {{1, 2, 3}, {0, 0, -1}});
  const Smoothness s = smoothness(log);
  EXPECT_EQ(s.acc, 0.0);
  EXPECT_EQ(s.jerk, 0.0);
  EXPECT_EQ(s.dir, 0.0);
}

TEST(Smoothness, RightAngleTurn) {
  TrajectoryLog log({{0, 0, 0}}, 2);
  log.advance({{1, 0, 0}}, {{1, 0, 0}});
  log.advance({{0, 1, 0}}, {{0, 1, 0}});
  EXPECT_NEAR(smoothness(log).dir, std::numbers::pi / 2.0, 1e-15);
  EXPECT_EQ(smoothness(log).acc, 0.0);
}

TEST(Smoothness, ZeroVelocitiesSkipHeading) {
  TrajectoryLog log({{0, 0, 0}}, 3);
  log.advance({{1, 0, 0}}, {{1, 0, 0}});
  log.advance({{0, 0, 0}}, {{0, 0, 0}});
  log.advance({{0, 1, 0}}, {{0, 1, 0}});
  EXPECT_EQ(smoothness(log).dir, 0.0);
}

TEST(Smoothness, UniformAccelerationScalesWithStepSquared) {
  // Speed ramps as a·t; per-step length changes are a·Δt².
  const double a = 2.0;
  for (std::size_t steps : {10u, 20u, 40u}) {
    const double dt = 1.0 / static_cast<double>(steps);
    TrajectoryLog log({{0, 0, 0}}, steps);
    for (std::size_t k = 0; k < steps; ++k) {
      const PointCloud v{{a * dt * static_cast<double>(k), 0, 0}};
      log.advance(v, v);
    }
    const Smoothness s = smoothness(log);
    EXPECT_NEAR(s.acc, a * dt * dt, 1e-14);
    EXPECT_NEAR(s.jerk, 0.0, 1e-14);
  }
}

TEST(Smoothness, FourFrameOracle) {
  const double dt = oracle::kSmoothDt;
  const PointCloud start = cloud_from(oracle::kSmoothStart, 0, 2);
  TrajectoryLog log(start, 3, 3 * dt);
  for (std::size_t k = 0; k < 3; ++k) {
    const PointCloud v = cloud_from(oracle::kSmoothVel, 6 * k, 2);
    log.advance(v, v);
  }
  ASSERT_DOUBLE_EQ(log.dt(), dt);
  const Smoothness s = smoothness(log);
  EXPECT_NEAR(s.acc, oracle::kSmoothAcc, 1e-10);
  EXPECT_NEAR(s.jerk, oracle::kSmoothJerk, 1e-10);
  EXPECT_NEAR(s.dir, oracle::kSmoothDir, 1e-10);
}

TEST(Distance, StaticLineAndOracle) {
  EXPECT_EQ(distance_traveled(static_log({{0, 0, 0}, {2, 0, 0}}, 4)), 0.0);
  TrajectoryLog line({{0, 0, 0}}, 4);
  for (int k = 0; k < 4; ++k) line.advance({{3, 0, 0}}, {{3, 0, 0}});
  EXPECT_NEAR(distance_traveled(line), 3.0, 1e-15);

  std::vector<PointCloud> frames;
  for (std::size_t k = 0; k < 6; ++k) frames.push_back(cloud_from(oracle::kDistFrames, 15 * k, 5));
  std::vector<double> times(6);
  for (std::size_t k = 0; k < 6; ++k) times[k] = 1.0 - 0.2 * static_cast<double>(k);
  const TrajectoryLog log = TrajectoryLog::from_frames(times, frames, std::vector<PointCloud>(5, PointCloud(5)), {}, 0.2);
  EXPECT_NEAR(distance_traveled(log), oracle::kDist, 1e-12);
  double displacement = 0.0;
  for (std::size_t i = 0; i < 5; ++i) displacement += norm(frames.back()[i] - frames.front()[i]) / 5.0;
  EXPECT_GE(distance_traveled(log), displacement);
}

TEST(Report, KeyValuesAndTable) {
  Rng rng(5);
  TrajectoryLog log(sft::random_cloud(rng, 10), 4);
  for (int k = 0; k < 4; ++k) {
    const PointCloud v = sft::random_cloud(rng, 10);
    log.advance(v, v);
  }
  const MetricsReport r = evaluate({log, log}, 0.06, {log.final_frame()});
  EXPECT_EQ(r.runs, 2u);
  EXPECT_EQ(*r.cov, 1.0);
  EXPECT_EQ(*r.mmd, 0.0);
  EXPECT_DOUBLE_EQ(r.acc, smoothness(log).acc);
  const KeyValues kv = to_key_values(r);
  EXPECT_EQ(kv.at("runs"), "2");
  EXPECT_TRUE(kv.count("mmd_x1e3"));
  const std::string table = format_report_table(r);
  EXPECT_NE(table.find("MMD"), std::string::npos);
  EXPECT_NE(table.find("x1e3"), std::string::npos);
  const MetricsReport no_ref = evaluate({log}, 0.06);
  EXPECT_FALSE(no_ref.cov.has_value());
  EXPECT_EQ(to_key_values(no_ref).count("cov"), 0u);
}
