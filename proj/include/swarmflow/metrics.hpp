#pragma once

// Evaluation: shape quality (Chamfer, COV, MMD), collisions (TRAJ, FIN),
// smoothness (ACC, JERK, DIR) and energy (DIST).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "swarmflow/config.hpp"
#include "swarmflow/parallel.hpp"
#include "swarmflow/trajectory.hpp"

namespace swarmflow {

namespace detail {

inline double mean_nearest_sq(const PointCloud& from, const PointCloud& to) {
  std::vector<double> best(from.size());
  parallel_for(from.size(), [&](std::size_t i) {
    double m = std::numeric_limits<double>::infinity();
    for (const Vec3& b : to) m = std::min(m, norm_sq(from[i] - b));
    best[i] = m;
  });
  double sum = 0.0;
  for (double b : best) sum += b;
  return sum / static_cast<double>(from.size());
}

}  // namespace detail

// Squared Chamfer distance, summed over both directions.
inline double chamfer(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer distance of an empty cloud");
  return detail::mean_nearest_sq(a, b) + detail::mean_nearest_sq(b, a);
}

struct CoverageResult {
  double cov = 0.0;
  double mmd = 0.0;
};

// COV: fraction of reference clouds that are the nearest reference of some
// generated cloud. MMD: mean over references of the distance to the closest
// generated cloud. Ties resolve to the lowest reference index.
inline CoverageResult cov_mmd(const std::vector<PointCloud>& generated, const std::vector<PointCloud>& reference) {
  if (generated.empty() || reference.empty()) throw std::invalid_argument("cov/mmd needs non-empty cloud sets");
  const std::size_t g = generated.size();
  const std::size_t r = reference.size();
  std::vector<double> d(g * r);
  for (std::size_t i = 0; i < g; ++i) {
    for (std::size_t j = 0; j < r; ++j) d[i * r + j] = chamfer(generated[i], reference[j]);
  }
  std::vector<char> covered(r, 0);
  for (std::size_t i = 0; i < g; ++i) {
    const auto row = d.begin() + static_cast<std::ptrdiff_t>(i * r);
    covered[static_cast<std::size_t>(std::min_element(row, row + static_cast<std::ptrdiff_t>(r)) - row)] = 1;
  }
  CoverageResult out;
  out.cov = static_cast<double>(std::count(covered.begin(), covered.end(), 1)) / static_cast<double>(r);
  for (std::size_t j = 0; j < r; ++j) {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g; ++i) m = std::min(m, d[i * r + j]);
    out.mmd += m;
  }
  out.mmd /= static_cast<double>(r);
  return out;
}

// Percentage of agents with some other agent strictly closer than kappa.
inline double colliding_agent_pct(const PointCloud& frame, double kappa) {
  if (frame.empty()) return 0.0;
  const double k_sq = kappa * kappa;
  std::vector<char> hit(frame.size(), 0);
  parallel_for(frame.size(), [&](std::size_t i) {
    for (std::size_t j = 0; j < frame.size(); ++j) {
      if (j != i && norm_sq(frame[i] - frame[j]) < k_sq) {
        hit[i] = 1;
        return;
      }
    }
  });
  return 100.0 * static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(frame.size());
}

struct CollisionRates {
  double traj_pct = 0.0;  // mean over all frames
  double fin_pct = 0.0;   // final frame
};

inline CollisionRates collision_rates(const TrajectoryLog& log, double kappa) {
  if (log.positions().empty()) throw std::invalid_argument("collision rates of an empty trajectory");
  CollisionRates out;
  for (const auto& frame : log.positions()) out.traj_pct += colliding_agent_pct(frame, kappa);
  out.traj_pct /= static_cast<double>(log.positions().size());
  out.fin_pct = colliding_agent_pct(log.final_frame(), kappa);
  return out;
}

struct Smoothness {
  double acc = 0.0;   // mean |change in step length|
  double jerk = 0.0;  // mean ‖second difference of the step displacements‖
  double dir = 0.0;   // mean heading change between consecutive velocities, radians
};

inline double angle_between(const Vec3& a, const Vec3& b) { return std::atan2(norm(cross(a, b)), dot(a, b)); }

// Computed from the per-step displacements v·Δt of the applied velocities,
// not from rates: finer steps give proportionally smaller variations, so the
// numbers shrink as the step count grows.
inline Smoothness smoothness(const TrajectoryLog& log) {
  const auto& v = log.applied_velocities();
  const double dt = log.dt();
  const std::size_t m = log.agents();
  Smoothness out;
  std::size_t acc_n = 0, jerk_n = 0, dir_n = 0;
  for (std::size_t k = 0; k + 1 < v.size(); ++k) {
    for (std::size_t i = 0; i < m; ++i) {
      out.acc += std::abs(norm(v[k + 1][i]) - norm(v[k][i])) * dt;
      ++acc_n;
      if (norm_sq(v[k][i]) > 0.0 && norm_sq(v[k + 1][i]) > 0.0) {
        out.dir += angle_between(v[k + 1][i], v[k][i]);
        ++dir_n;
      }
      if (k + 2 < v.size()) {
        out.jerk += norm(v[k + 2][i] - 2.0 * v[k + 1][i] + v[k][i]) * dt;
        ++jerk_n;
      }
    }
  }
  if (acc_n) out.acc /= static_cast<double>(acc_n);
  if (jerk_n) out.jerk /= static_cast<double>(jerk_n);
  if (dir_n) out.dir /= static_cast<double>(dir_n);
  return out;
}

// Mean over agents of the polyline length of their path.
inline double distance_traveled(const TrajectoryLog& log) {
  const auto& x = log.positions();
  const std::size_t m = log.agents();
  if (m == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double path = 0.0;
    for (std::size_t k = 0; k + 1 < x.size(); ++k) path += norm(x[k + 1][i] - x[k][i]);
    total += path;
  }
  return total / static_cast<double>(m);
}

inline constexpr double kMmdDisplayScale = 1e3;

struct MetricsReport {
  std::optional<double> cov;
  std::optional<double> mmd;  // raw squared-Chamfer units
  double traj_coll_pct = 0.0;
  double fin_coll_pct = 0.0;
  double acc = 0.0;
  double jerk = 0.0;
  double dir = 0.0;
  double dist = 0.0;
  std::size_t runs = 0;
};

// Averages per-run metrics over `logs`; COV/MMD compare the final frames with
// `reference` when it is non-empty. Logs should already be at the scale the
// numbers are to be reported in, with `kappa` in the same units.
inline MetricsReport evaluate(const std::vector<TrajectoryLog>& logs, double kappa,
                              const std::vector<PointCloud>& reference = {}) {
  if (logs.empty()) throw std::invalid_argument("no trajectories to evaluate");
  MetricsReport r;
  r.runs = logs.size();
  for (const auto& log : logs) {
    const CollisionRates c = collision_rates(log, kappa);
    const Smoothness s = smoothness(log);
    r.traj_coll_pct += c.traj_pct;
    r.fin_coll_pct += c.fin_pct;
    r.acc += s.acc;
    r.jerk += s.jerk;
    r.dir += s.dir;
    r.dist += distance_traveled(log);
  }
  const double n = static_cast<double>(logs.size());
  r.traj_coll_pct /= n;
  r.fin_coll_pct /= n;
  r.acc /= n;
  r.jerk /= n;
  r.dir /= n;
  r.dist /= n;
  if (!reference.empty()) {
    std::vector<PointCloud> finals;
    for (const auto& log : logs) finals.push_back(log.final_frame());
    const CoverageResult q = cov_mmd(finals, reference);
    r.cov = q.cov;
    r.mmd = q.mmd;
  }
  return r;
}

inline KeyValues to_key_values(const MetricsReport& r) {
  KeyValues kv{
      {"runs", std::to_string(r.runs)},           {"traj_coll_pct", format_double(r.traj_coll_pct)},
      {"fin_coll_pct", format_double(r.fin_coll_pct)}, {"acc", format_double(r.acc)},
      {"jerk", format_double(r.jerk)},            {"dir", format_double(r.dir)},
      {"dist", format_double(r.dist)},
  };
  if (r.cov) kv["cov"] = format_double(*r.cov);
  if (r.mmd) {
    kv["mmd"] = format_double(*r.mmd);
    kv["mmd_x1e3"] = format_double(*r.mmd * kMmdDisplayScale);
  }
  return kv;
}

inline std::string format_report_table(const MetricsReport& r) {
  auto cell = [](const std::optional<double>& v, double scale = 1.0) {
    char buf[32];
    if (!v) return std::string("-");
    std::snprintf(buf, sizeof buf, "%.4f", *v * scale);
    return std::string(buf);
  };
  char line[512];
  std::string out = "# runs: " + std::to_string(r.runs) + ", MMD shown x1e3 (squared Chamfer)\n";
  std::snprintf(line, sizeof line, "%10s %10s %10s %10s %12s %12s %10s %10s\n", "COV", "MMD", "TRAJ%", "FIN%", "ACC",
                "JERK", "DIR", "DIST");
  out += line;
  std::snprintf(line, sizeof line, "%10s %10s %10.4f %10.4f %12.4f %12.4f %10.4f %10.4f\n", cell(r.cov).c_str(),
                cell(r.mmd, kMmdDisplayScale).c_str(), r.traj_coll_pct, r.fin_coll_pct, r.acc, r.jerk, r.dir, r.dist);
  out += line;
  return out;
}

}  // namespace swarmflow
