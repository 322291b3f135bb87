#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "swarmflow/geometry.hpp"

namespace swarmflow {

struct TrajectoryMeta {
  std::string algorithm = "gen-swarms";
  std::uint64_t seed = 0;
  double kappa = 0.06;
  // Multiplier from training-scale units to the units of this log.
  double length_scale = 1.0;
  double horizon = 1.0;

  friend bool operator==(const TrajectoryMeta&, const TrajectoryMeta&) = default;
};

// Frames run from t = T down to 0. Positions are advanced by explicit Euler
// from the applied velocities, so positions[k+1] == positions[k] + dt * applied[k]
// holds bit for bit.
class TrajectoryLog {
 public:
  TrajectoryLog() = default;
  TrajectoryLog(PointCloud start, std::size_t steps, double horizon = 1.0) : horizon_(horizon), steps_(steps) {
    if (steps == 0) throw std::invalid_argument("trajectory needs at least one step");
    if (!(horizon > 0.0)) throw std::invalid_argument("trajectory horizon must be positive");
    dt_ = horizon / static_cast<double>(steps);
    times_.push_back(horizon);
    positions_.push_back(std::move(start));
  }

  // Appends one Euler step and returns the new frame.
  const PointCloud& advance(PointCloud preferred, PointCloud applied) {
    const PointCloud& last = positions_.back();
    if (applied.size() != last.size() || preferred.size() != last.size()) {
      throw std::invalid_argument("velocity count does not match agent count");
    }
    if (times_.size() > steps_) throw std::logic_error("trajectory already complete");
    PointCloud next(last.size());
    for (std::size_t i = 0; i < next.size(); ++i) next[i] = last[i] + dt_ * applied[i];
    const std::size_t k = times_.size();
    times_.push_back(horizon_ * static_cast<double>(steps_ - k) / static_cast<double>(steps_));
    positions_.push_back(std::move(next));
    applied_.push_back(std::move(applied));
    preferred_.push_back(std::move(preferred));
    return positions_.back();
  }

  // Rebuilds a log from stored frames (e.g. a CSV); Euler consistency is the
  // caller's responsibility.
  static TrajectoryLog from_frames(std::vector<double> times, std::vector<PointCloud> positions,
                                   std::vector<PointCloud> applied, std::vector<PointCloud> preferred, double dt) {
    if (positions.size() != applied.size() + 1 || times.size() != positions.size()) {
      throw std::invalid_argument("trajectory frames inconsistent: need steps+1 positions and times");
    }
    TrajectoryLog log;
    log.steps_ = applied.size();
    log.dt_ = dt;
    log.horizon_ = times.empty() ? 0.0 : times.front();
    log.times_ = std::move(times);
    log.positions_ = std::move(positions);
    log.applied_ = std::move(applied);
    log.preferred_ = preferred.empty() ? log.applied_ : std::move(preferred);
    return log;
  }

  bool complete() const { return applied_.size() == steps_; }
  std::size_t steps() const { return steps_; }
  std::size_t agents() const { return positions_.empty() ? 0 : positions_.front().size(); }
  double dt() const { return dt_; }
  double horizon() const { return horizon_; }

  const std::vector<double>& times() const { return times_; }
  const std::vector<PointCloud>& positions() const { return positions_; }
  const std::vector<PointCloud>& applied_velocities() const { return applied_; }
  const std::vector<PointCloud>& preferred_velocities() const { return preferred_; }
  const PointCloud& final_frame() const { return positions_.back(); }

  TrajectoryMeta meta;

  friend bool operator==(const TrajectoryLog&, const TrajectoryLog&) = default;

 private:
  double horizon_ = 1.0;
  std::size_t steps_ = 0;
  double dt_ = 0.0;
  std::vector<double> times_;
  std::vector<PointCloud> positions_;
  std::vector<PointCloud> applied_;
  std::vector<PointCloud> preferred_;
};

}  // namespace swarmflow
