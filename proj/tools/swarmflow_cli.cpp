// swarmflow command-line interface: data generation, training, sampling,
// evaluation and export.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "swarmflow/swarmflow.hpp"

namespace fs = std::filesystem;
using namespace swarmflow;

namespace {

// Sampling and scene keys accepted in --config files next to the training keys.
struct RunSettings {
  std::optional<std::size_t> agents;
  std::optional<std::size_t> sample_steps;
  bool use_orca = true;
  double tau = 0.0;
  double neighbor_radius = 0.0;
  double scene_side = 0.0;
  double training_extent = 6.0;
};

void apply_run_settings(RunSettings& s, const KeyValues& kv) {
  for (const auto& [k, v] : kv) {
    if (k == "agents") s.agents = parse_uint(v, k);
    else if (k == "sample_steps") s.sample_steps = parse_uint(v, k);
    else if (k == "use_orca") {
      if (v != "true" && v != "false") throw ConfigError("use_orca must be true or false, got '" + v + "'");
      s.use_orca = v == "true";
    } else if (k == "tau") s.tau = parse_double(v, k);
    else if (k == "neighbor_radius") s.neighbor_radius = parse_double(v, k);
    else if (k == "scene_side") s.scene_side = parse_double(v, k);
    else if (k == "training_extent") s.training_extent = parse_double(v, k);
  }
}

const std::vector<std::string> kRunKeys{"agents", "sample_steps", "use_orca", "tau", "neighbor_radius",
                                        "scene_side", "training_extent"};

struct LoadedConfig {
  TrainConfig train;
  RunSettings run;
};

LoadedConfig load_config(const std::string& path) {
  LoadedConfig c;
  if (path.empty()) return c;
  const KeyValues kv = load_key_values(path);
  KeyValues train_keys;
  for (const auto& [k, v] : kv) {
    if (std::find(kRunKeys.begin(), kRunKeys.end(), k) == kRunKeys.end()) train_keys[k] = v;
  }
  try {
    apply_key_values(c.train, train_keys);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  apply_run_settings(c.run, kv);
  return c;
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) throw std::invalid_argument("--out directory must not be empty");
  fs::create_directories(dir);
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out || !(out << text)) throw FormatError("cannot write '" + path + "'");
}

// Files are taken as given; directories contribute their *.xyz files in name order.
std::vector<PointCloud> load_clouds(const std::vector<std::string>& inputs) {
  std::vector<PointCloud> clouds;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.path().extension() == ".xyz") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) throw FormatError("no .xyz files in '" + in + "'");
      for (const auto& f : files) clouds.push_back(load_pointcloud(f.string()));
    } else {
      clouds.push_back(load_pointcloud(in));
    }
  }
  return clouds;
}

SceneScale scene_for(double side, double extent) {
  SceneScale s;
  s.side = side;
  s.training_extent = extent;
  s.kappa_real = 0.06 * side / extent;
  return s;
}

void write_log_outputs(TrajectoryLog log, const std::string& out_dir, double scene_side, double extent) {
  if (scene_side > 0.0) log = to_real_scale(log, scene_for(scene_side, extent));
  ensure_dir(out_dir);
  save_trajectory(log, join(out_dir, "trajectory.csv"));
  save_pointcloud(log.final_frame(), join(out_dir, "final.xyz"));
  const CollisionRates c = collision_rates(log, log.meta.kappa);
  std::cout << log.meta.algorithm << ": " << log.agents() << " agents, " << log.steps() << " steps, FIN "
            << format_double(c.fin_pct) << "%, TRAJ " << format_double(c.traj_pct) << "% -> " << out_dir << "\n";
}

// Options shared by the sampling subcommands.
struct SampleOptions {
  std::string checkpoint;
  std::string config;
  std::string out = "out";
  std::optional<std::size_t> agents;
  std::optional<std::size_t> steps;
  std::uint64_t seed = 0;
  bool no_orca = false;
  std::optional<double> scale;
};

void add_sample_options(CLI::App* cmd, SampleOptions& o, bool with_steps = true, bool with_orca = true) {
  cmd->add_option("--checkpoint", o.checkpoint, "Trained checkpoint")->required();
  cmd->add_option("--config", o.config, "key = value config file");
  cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
  cmd->add_option("--agents", o.agents, "Number of agents M (default: training N)");
  if (with_steps) cmd->add_option("--steps", o.steps, "Euler steps (default: horizon / dt of the checkpoint)");
  cmd->add_option("--seed", o.seed, "Sampling seed")->capture_default_str();
  if (with_orca) cmd->add_flag("--no-orca", o.no_orca, "Disable collision avoidance (plain flow sampling)");
  cmd->add_option("--scale", o.scale, "Write outputs in a cube of this side length in meters (0 = training scale)");
}

struct ResolvedSample {
  Checkpoint ckpt;
  SampleConfig cfg;
  double scene_side = 0.0;
  double extent = 6.0;
};

ResolvedSample resolve(const SampleOptions& o) {
  ResolvedSample r;
  r.ckpt = load_checkpoint(o.checkpoint);
  const LoadedConfig file = load_config(o.config);
  const TrainConfig& tc = r.ckpt.config;
  r.cfg.agents = o.agents.value_or(file.run.agents.value_or(tc.points));
  const auto default_steps = static_cast<std::size_t>(std::llround(tc.horizon / tc.dt));
  r.cfg.steps = o.steps.value_or(file.run.sample_steps.value_or(std::max<std::size_t>(1, default_steps)));
  r.cfg.use_orca = file.run.use_orca && !o.no_orca;
  r.cfg.seed = o.seed;
  r.cfg.kappa = tc.kappa;
  r.cfg.tau = file.run.tau;
  r.cfg.neighbor_radius = file.run.neighbor_radius;
  r.scene_side = o.scale.value_or(file.run.scene_side);
  r.extent = file.run.training_extent;
  r.cfg.validate();
  return r;
}

int cmd_make_data(const std::string& shape, std::size_t points, std::size_t count, std::uint64_t seed,
                  const std::string& out) {
  const auto clouds = make_synthetic_dataset(parse_shape_kind(shape), points, count, seed);
  ensure_dir(out);
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%03zu.xyz", shape.c_str(), i);
    save_pointcloud(clouds[i], join(out, name));
  }
  std::cout << "wrote " << clouds.size() << " " << shape << " clouds of " << points << " points to " << out << "\n";
  return 0;
}

int cmd_train(const std::vector<std::string>& data, const std::string& config, std::optional<std::string> algorithm,
              std::optional<std::uint64_t> seed, std::optional<std::size_t> steps, const std::string& out) {
  TrainConfig c = load_config(config).train;
  if (algorithm) c.algorithm = parse_algorithm(*algorithm);
  if (seed) c.seed = *seed;
  if (steps) c.steps = *steps;
  c.validate();
  const auto clouds = prepare_training_clouds(load_clouds(data), c.points, c.seed);
  ensure_dir(out);
  const TrainResult r = train(clouds, c, [&](const TrainLogEntry& e) {
    if (e.step % std::max<std::size_t>(1, c.log_every) == 0 || e.step + 1 == c.steps) {
      std::cout << "step " << e.step << " loss " << format_double(e.loss) << " field " << format_double(e.field)
                << " kl " << format_double(e.kl) << "\n";
    }
  });
  save_checkpoint(r.checkpoint, join(out, "model.ckpt"));
  write_text(join(out, "train_log.txt"), format_train_log(r.log));
  std::cout << "saved " << join(out, "model.ckpt") << "\n";
  return 0;
}

int cmd_sample(const SampleOptions& o) {
  const ResolvedSample r = resolve(o);
  write_log_outputs(sample(r.ckpt, r.cfg), o.out, r.scene_side, r.extent);
  return 0;
}

int cmd_sample_diffusion(const SampleOptions& o) {
  const ResolvedSample r = resolve(o);
  write_log_outputs(sample_diffusion(r.ckpt, r.cfg), o.out, r.scene_side, r.extent);
  return 0;
}

// Flow sampling without avoidance fixes the goals; the agents then navigate
// from the same start cloud straight to them under ORCA.
int cmd_sample_cfm_orca(const SampleOptions& o) {
  ResolvedSample r = resolve(o);
  SampleConfig plain = r.cfg;
  plain.use_orca = false;
  const TrajectoryLog flow = sample(r.ckpt, plain);
  TrajectoryLog log = sample_cfm_plus_orca(flow.final_frame(), flow.positions().front(), r.cfg, r.ckpt.config.horizon);
  write_log_outputs(std::move(log), o.out, r.scene_side, r.extent);
  return 0;
}

int cmd_evaluate(const std::vector<std::string>& trajectories, const std::vector<std::string>& reference,
                 std::optional<double> kappa, const std::string& out) {
  std::vector<TrajectoryLog> logs;
  for (const auto& t : trajectories) logs.push_back(load_trajectory(t));
  const double k = kappa.value_or(logs.front().meta.kappa);
  const MetricsReport report = evaluate(logs, k, reference.empty() ? std::vector<PointCloud>{} : load_clouds(reference));
  std::cout << format_report_table(report);
  if (!out.empty()) {
    ensure_dir(out);
    write_text(join(out, "metrics.txt"), format_key_values(to_key_values(report)));
  }
  return 0;
}

int cmd_export(const std::string& trajectory, double side, double extent, const std::string& out) {
  const TrajectoryLog log = load_trajectory(trajectory);
  write_log_outputs(log, out, side, extent);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"swarmflow: generative drone-show trajectories with collision avoidance"};
  app.require_subcommand(1);

  std::string shape = "sphere", out = "out";
  std::size_t points = 2048, count = 1;
  std::uint64_t data_seed = 0;
  auto* make_data = app.add_subcommand("make-data", "Generate a synthetic point-cloud dataset");
  make_data->add_option("--shape", shape, "sphere | torus | two-box-plane | helix")->capture_default_str();
  make_data->add_option("--points", points, "Points per cloud")->capture_default_str();
  make_data->add_option("--count", count, "Number of clouds")->capture_default_str();
  make_data->add_option("--seed", data_seed, "Random seed")->capture_default_str();
  make_data->add_option("--out", out, "Output directory")->capture_default_str();

  std::vector<std::string> data;
  std::string train_config;
  std::optional<std::string> algorithm;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::size_t> train_steps;
  std::string train_out = "out";
  auto* train_cmd = app.add_subcommand("train", "Train a model on point clouds");
  train_cmd->add_option("--data", data, "XYZ files or directories of them")->required();
  train_cmd->add_option("--config", train_config, "key = value config file");
  train_cmd->add_option("--algorithm", algorithm, "cfm (flow matching) or ddpm (diffusion baseline)");
  train_cmd->add_option("--seed", train_seed, "Training seed");
  train_cmd->add_option("--steps", train_steps, "Optimizer steps");
  train_cmd->add_option("--out", train_out, "Output directory")->capture_default_str();

  SampleOptions flow_opts, diffusion_opts, nav_opts;
  auto* sample_cmd = app.add_subcommand("sample", "Generate a show with the flow model (ORCA on by default)");
  add_sample_options(sample_cmd, flow_opts);
  auto* diffusion_cmd = app.add_subcommand("sample-diffusion", "Generate a show with the diffusion baseline");
  add_sample_options(diffusion_cmd, diffusion_opts, false, false);
  auto* nav_cmd = app.add_subcommand("sample-cfm-orca", "Navigate to a flow-generated final cloud with ORCA");
  add_sample_options(nav_cmd, nav_opts, true, false);

  std::vector<std::string> trajectories, reference;
  std::optional<double> kappa;
  std::string eval_out;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Compute metrics for trajectory CSVs");
  evaluate_cmd->add_option("--trajectory", trajectories, "Trajectory CSV files")->required();
  evaluate_cmd->add_option("--reference", reference, "Reference XYZ clouds for COV/MMD");
  evaluate_cmd->add_option("--kappa", kappa, "Separation threshold (default: from the trajectory metadata)");
  evaluate_cmd->add_option("--out", eval_out, "Directory for metrics.txt");

  std::string export_traj, export_out = "export";
  double export_side = 200.0, export_extent = 6.0;
  auto* export_cmd = app.add_subcommand("export", "Map a trajectory to the real show volume");
  export_cmd->add_option("--trajectory", export_traj, "Trajectory CSV")->required();
  export_cmd->add_option("--scale", export_side, "Side of the show cube in meters")->capture_default_str();
  export_cmd->add_option("--extent", export_extent, "Side of the training-scale volume")->capture_default_str();
  export_cmd->add_option("--out", export_out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*make_data) return cmd_make_data(shape, points, count, data_seed, out);
    if (*train_cmd) return cmd_train(data, train_config, algorithm, train_seed, train_steps, train_out);
    if (*sample_cmd) return cmd_sample(flow_opts);
    if (*diffusion_cmd) return cmd_sample_diffusion(diffusion_opts);
    if (*nav_cmd) return cmd_sample_cfm_orca(nav_opts);
    if (*evaluate_cmd) return cmd_evaluate(trajectories, reference, kappa, eval_out);
    if (*export_cmd) return cmd_export(export_traj, export_side, export_extent, export_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
