#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"

using namespace swarmflow;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int status = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("swarmflow_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  CliResult run(const std::string& args) {
    const std::string cmd = std::string(SWARMFLOW_CLI) + " " + args + " > " + (dir_ / "stdout").string() + " 2> " +
                            (dir_ / "stderr").string();
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(dir_ / "stdout"), slurp(dir_ / "stderr")};
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write_tiny_config() {
    std::ofstream(path("tiny.cfg")) << "# small model for fast runs\n"
                                       "latent_dim = 8\nfield_hidden = 12\nfield_blocks = 3\n"
                                       "encoder_widths = 10,12,16\ncoupling_layers = 4\ncoupling_hidden = 10\n"
                                       "points = 64\nsteps = 30\nlearning_rate = 0.003\nlog_every = 10\n";
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, UnknownFlagPrintsUsageAndExitsTwo) {
  const CliResult r = run("sample --checkpoint x.ckpt --bogus");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("bogus"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;
  EXPECT_EQ(run("").status, 2);
  EXPECT_EQ(run("frobnicate").status, 2);
}

TEST_F(Cli, RuntimeErrorsExitNonzeroWithMessage) {
  const CliResult r = run("sample --checkpoint " + path("missing.ckpt"));
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("missing.ckpt"), std::string::npos) << r.err;
  std::ofstream(path("bad.cfg")) << "steps = many\n";
  EXPECT_EQ(run("train --data " + path("none.xyz") + " --config " + path("bad.cfg")).status, 1);
  EXPECT_EQ(run("make-data --shape cube --out " + path("d")).status, 1);
}

TEST_F(Cli, HelpExitsZero) {
  const CliResult r = run("--help");
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("sample-cfm-orca"), std::string::npos);
}

TEST_F(Cli, PipelineRunsAndIsDeterministic) {
  write_tiny_config();
  ASSERT_EQ(run("make-data --shape sphere --points 80 --count 2 --seed 3 --out " + path("data")).status, 0);
  EXPECT_TRUE(fs::exists(path("data/sphere_001.xyz")));
  for (const char* tag : {"a", "b"}) {
    const std::string d = path(tag);
    CliResult r = run("train --data " + path("data") + " --config " + path("tiny.cfg") + " --seed 5 --out " + d);
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_NE(r.out.find("step 0"), std::string::npos);
    r = run("sample --checkpoint " + d + "/model.ckpt --steps 10 --agents 50 --seed 2 --out " + d + "/show");
    ASSERT_EQ(r.status, 0) << r.err;
    r = run("sample --checkpoint " + d + "/model.ckpt --steps 10 --agents 50 --seed 2 --no-orca --out " + d + "/plain");
    ASSERT_EQ(r.status, 0) << r.err;
    r = run("sample-cfm-orca --checkpoint " + d + "/model.ckpt --steps 10 --agents 50 --seed 2 --out " + d + "/nav");
    ASSERT_EQ(r.status, 0) << r.err;
  }
  for (const char* f : {"model.ckpt", "train_log.txt", "show/trajectory.csv", "show/trajectory.csv.meta",
                        "show/final.xyz", "plain/trajectory.csv", "nav/trajectory.csv"}) {
    EXPECT_EQ(slurp(path(std::string("a/") + f)), slurp(path(std::string("b/") + f))) << f;
    EXPECT_FALSE(slurp(path(std::string("a/") + f)).empty()) << f;
  }
  const TrajectoryLog show = load_trajectory(path("a/show/trajectory.csv"));
  EXPECT_EQ(show.agents(), 50u);
  EXPECT_EQ(show.steps(), 10u);
  EXPECT_EQ(show.meta.algorithm, "gen-swarms");
  EXPECT_EQ(load_trajectory(path("a/plain/trajectory.csv")).meta.algorithm, "cfm");
  EXPECT_EQ(load_trajectory(path("a/nav/trajectory.csv")).meta.algorithm, "cfm+orca");

  const CliResult e = run("evaluate --trajectory " + path("a/show/trajectory.csv") + " --reference " + path("data") +
                    " --out " + path("a/metrics"));
  ASSERT_EQ(e.status, 0) << e.err;
  EXPECT_NE(e.out.find("COV"), std::string::npos);
  const KeyValues m = load_key_values(path("a/metrics/metrics.txt"));
  EXPECT_TRUE(m.count("fin_coll_pct"));
  EXPECT_TRUE(m.count("mmd"));
}

TEST_F(Cli, DiffusionCheckpointSamples) {
  write_tiny_config();
  ASSERT_EQ(run("make-data --points 64 --out " + path("data")).status, 0);
  CliResult r = run("train --data " + path("data/sphere_000.xyz") + " --config " + path("tiny.cfg") +
              " --algorithm ddpm --steps 5 --out " + path("m"));
  ASSERT_EQ(r.status, 0) << r.err;
  r = run("sample-diffusion --checkpoint " + path("m/model.ckpt") + " --agents 20 --out " + path("s"));
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(load_trajectory(path("s/trajectory.csv")).meta.algorithm, "diffusion");
  // A diffusion checkpoint cannot drive flow sampling.
  EXPECT_EQ(run("sample --checkpoint " + path("m/model.ckpt") + " --out " + path("x")).status, 1);
}

TEST_F(Cli, EvaluateReportsCollisionsAndExitsZero) {
  TrajectoryLog log({{0, 0, 0}, {0.01, 0, 0}, {1, 1, 1}}, 2);
  log.advance(PointCloud(3), PointCloud(3));
  log.advance(PointCloud(3), PointCloud(3));
  save_trajectory(log, path("collide.csv"));
  const CliResult r = run("evaluate --trajectory " + path("collide.csv") + " --out " + path("m"));
  EXPECT_EQ(r.status, 0) << r.err;
  const KeyValues m = load_key_values(path("m/metrics.txt"));
  EXPECT_NEAR(parse_double(m.at("fin_coll_pct"), "fin"), 200.0 / 3.0, 1e-9);
}

TEST_F(Cli, ExportMapsToShowVolume) {
  TrajectoryLog log({{0.03, 0, 0}}, 1);
  log.advance({{3, 0, 0}}, {{3, 0, 0}});
  save_trajectory(log, path("t.csv"));
  ASSERT_EQ(run("export --trajectory " + path("t.csv") + " --scale 200 --out " + path("real")).status, 0);
  const TrajectoryLog real = load_trajectory(path("real/trajectory.csv"));
  EXPECT_NEAR(real.positions()[0][0].x, 1.0, 1e-12);
  EXPECT_NEAR(real.meta.kappa, 2.0, 1e-12);
  EXPECT_NEAR(real.final_frame()[0].x, (0.03 + 3.0) * 200.0 / 6.0, 1e-9);
}
