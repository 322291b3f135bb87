#pragma once

// Reciprocal collision avoidance in 3D (ORCA with spherical agents). Every
// pair within the culling radius contributes one half-space on each agent's
// velocity; each agent then takes the velocity closest to its preferred one
// inside its half-spaces and a speed ball.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "swarmflow/geometry.hpp"
#include "swarmflow/parallel.hpp"

namespace swarmflow {

struct NavConfig {
  double kappa = 0.06;            // minimum separation; agent radius is kappa / 2
  double tau = 0.1;               // time horizon of the velocity obstacle
  double v_max = 1.0;             // speed cap
  double neighbor_radius = 0.24;  // culling distance
  double dt = 0.01;

  // τ = 10 Δt and neighbor radius 4κ.
  static NavConfig with_defaults(double kappa, double dt, double v_max = 1.0) {
    return {kappa, 10.0 * dt, v_max, 4.0 * kappa, dt};
  }

  void validate() const {
    if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
    if (!(dt > 0.0) || !(tau > dt)) throw std::invalid_argument("need 0 < dt < tau");
    if (!(v_max > 0.0)) throw std::invalid_argument("v_max must be positive");
    if (!(neighbor_radius > 0.0)) throw std::invalid_argument("neighbor_radius must be positive");
  }

  // Neighbors beyond this distance cannot close the gap to kappa within one
  // step at speeds up to v_max, so culling them keeps the per-step guarantee.
  double cull_radius() const { return std::max(neighbor_radius, kappa + 2.0 * v_max * dt); }
};

// Velocities v with (v - point) · normal >= 0 are permitted.
struct HalfSpaceConstraint {
  Vec3 point;
  Vec3 normal;

  double violation(const Vec3& v) const { return dot(normal, point - v); }
  bool contains(const Vec3& v, double tol = 0.0) const { return violation(v) <= tol; }
};

// ORCA half-space for `self` against `other`, taking half of the avoidance
// effort. Overlapping agents get the escape plane that separates them within
// one step `dt`. `fallback_normal` orients the plane when the geometry leaves
// it undefined (coincident agents); the other agent must receive its negation.
inline HalfSpaceConstraint build_orca_halfspace(const Vec3& p_self, const Vec3& v_self, const Vec3& p_other,
                                                const Vec3& v_other, double combined_radius, double tau, double dt,
                                                const Vec3& fallback_normal = {1.0, 0.0, 0.0}) {
  const Vec3 rel_pos = p_other - p_self;
  const Vec3 rel_vel = v_self - v_other;
  const double dist_sq = norm_sq(rel_pos);
  const double r = combined_radius;
  const double r_sq = r * r;
  constexpr double kTiny = 1e-300;

  Vec3 normal;
  Vec3 u;
  if (dist_sq > r_sq) {
    const Vec3 w = rel_vel - rel_pos / tau;
    const double w_len_sq = norm_sq(w);
    const double w_dot_p = dot(w, rel_pos);
    if (w_dot_p < 0.0 && w_dot_p * w_dot_p > r_sq * w_len_sq) {
      // Closest boundary point is on the cut-off sphere.
      const double w_len = std::sqrt(w_len_sq);
      normal = w / w_len;
      u = (r / tau - w_len) * normal;
    } else {
      // Closest boundary point is on the cone.
      const double a = dist_sq;
      const double b = dot(rel_pos, rel_vel);
      const double c = norm_sq(rel_vel) - norm_sq(cross(rel_pos, rel_vel)) / (dist_sq - r_sq);
      const double t = (b + std::sqrt(std::max(0.0, b * b - a * c))) / a;
      const Vec3 ww = rel_vel - t * rel_pos;
      const double ww_len = norm(ww);
      if (ww_len > kTiny) {
        normal = ww / ww_len;
        u = (r * t - ww_len) * normal;
      } else {
        normal = -normalized(rel_pos);
        u = (r * t) * normal;
      }
    }
  } else {
    const Vec3 w = rel_vel - rel_pos / dt;
    const double w_len = norm(w);
    normal = w_len > kTiny ? w / w_len : fallback_normal;
    u = (r / dt - w_len) * normal;
  }
  return {v_self + 0.5 * u, normal};
}

namespace detail {

inline constexpr double kLpEpsilon = 1e-12;

struct Line {
  Vec3 point;
  Vec3 direction;
};

// Optimum on a line restricted by planes [0, count) and the speed ball.
inline bool lp_line(const std::vector<HalfSpaceConstraint>& planes, std::size_t count, const Line& line,
                    double radius, const Vec3& target, bool direction_opt, Vec3& result) {
  const double along = dot(line.point, line.direction);
  const double disc = along * along + radius * radius - norm_sq(line.point);
  if (disc < 0.0) return false;
  const double sq = std::sqrt(disc);
  double t_left = -along - sq;
  double t_right = -along + sq;
  for (std::size_t i = 0; i < count; ++i) {
    const double numerator = dot(planes[i].point - line.point, planes[i].normal);
    const double denominator = dot(line.direction, planes[i].normal);
    if (denominator * denominator <= kLpEpsilon) {
      if (numerator > 0.0) return false;
      continue;
    }
    const double t = numerator / denominator;
    if (denominator >= 0.0) t_left = std::max(t_left, t);
    else t_right = std::min(t_right, t);
    if (t_left > t_right) return false;
  }
  if (direction_opt) {
    result = line.point + (dot(target, line.direction) > 0.0 ? t_right : t_left) * line.direction;
  } else {
    const double t = dot(line.direction, target - line.point);
    result = line.point + std::clamp(t, t_left, t_right) * line.direction;
  }
  return true;
}

// Optimum on plane `index` subject to planes [0, index) and the speed ball.
inline bool lp_plane(const std::vector<HalfSpaceConstraint>& planes, std::size_t index, double radius,
                     const Vec3& target, bool direction_opt, Vec3& result) {
  const HalfSpaceConstraint& plane = planes[index];
  const double plane_dist = dot(plane.point, plane.normal);
  const double radius_sq = radius * radius;
  if (plane_dist * plane_dist > radius_sq) return false;
  const double plane_radius_sq = radius_sq - plane_dist * plane_dist;
  const Vec3 plane_center = plane_dist * plane.normal;
  if (direction_opt) {
    const Vec3 in_plane = target - dot(target, plane.normal) * plane.normal;
    const double len_sq = norm_sq(in_plane);
    result = len_sq <= kLpEpsilon ? plane_center : plane_center + std::sqrt(plane_radius_sq / len_sq) * in_plane;
  } else {
    result = target + dot(plane.point - target, plane.normal) * plane.normal;
    if (norm_sq(result) > radius_sq) {
      const Vec3 offset = result - plane_center;
      result = plane_center + std::sqrt(plane_radius_sq / norm_sq(offset)) * offset;
    }
  }
  for (std::size_t i = 0; i < index; ++i) {
    if (planes[i].violation(result) > 0.0) {
      const Vec3 dir = cross(planes[i].normal, plane.normal);
      if (norm_sq(dir) <= kLpEpsilon) return false;
      Line line;
      line.direction = normalized(dir);
      const Vec3 line_normal = cross(line.direction, plane.normal);
      line.point = plane.point + (dot(planes[i].point - plane.point, planes[i].normal) /
                                  dot(line_normal, planes[i].normal)) *
                                     line_normal;
      if (!lp_line(planes, i, line, radius, target, direction_opt, result)) return false;
    }
  }
  return true;
}

// Incremental solve over all planes. Returns the index of the first plane
// that made the problem infeasible, or planes.size() on success.
inline std::size_t lp_space(const std::vector<HalfSpaceConstraint>& planes, double radius, const Vec3& target,
                            bool direction_opt, Vec3& result) {
  if (direction_opt) result = radius * target;
  else if (norm_sq(target) > radius * radius) result = radius * normalized(target);
  else result = target;
  for (std::size_t i = 0; i < planes.size(); ++i) {
    if (planes[i].violation(result) > 0.0) {
      const Vec3 previous = result;
      if (!lp_plane(planes, i, radius, target, direction_opt, result)) {
        result = previous;
        return i;
      }
    }
  }
  return planes.size();
}

// Infeasible case: minimizes the largest violation over all planes, starting
// from the partial solution that covered planes [0, begin).
inline void lp_least_violation(const std::vector<HalfSpaceConstraint>& planes, std::size_t begin, double radius,
                               Vec3& result) {
  double distance = 0.0;
  for (std::size_t i = begin; i < planes.size(); ++i) {
    if (planes[i].violation(result) <= distance) continue;
    std::vector<HalfSpaceConstraint> projected;
    for (std::size_t j = 0; j < i; ++j) {
      HalfSpaceConstraint plane;
      const Vec3 c = cross(planes[j].normal, planes[i].normal);
      if (norm_sq(c) <= kLpEpsilon) {
        if (dot(planes[i].normal, planes[j].normal) > 0.0) continue;
        plane.point = 0.5 * (planes[i].point + planes[j].point);
      } else {
        const Vec3 line_normal = cross(c, planes[i].normal);
        plane.point = planes[i].point + (dot(planes[j].point - planes[i].point, planes[j].normal) /
                                         dot(line_normal, planes[j].normal)) *
                                            line_normal;
      }
      plane.normal = normalized(planes[j].normal - planes[i].normal);
      projected.push_back(plane);
    }
    const Vec3 previous = result;
    if (lp_space(projected, radius, planes[i].normal, true, result) < projected.size()) result = previous;
    distance = planes[i].violation(result);
  }
}

}  // namespace detail

struct VelocitySolution {
  Vec3 velocity;
  bool feasible = true;
};

// argmin ‖v - v_pref‖ over the half-spaces intersected with ‖v‖ <= v_max.
// With an empty intersection, returns the velocity minimizing the largest
// half-space violation inside the speed ball.
inline VelocitySolution solve_velocity_lp(const Vec3& v_pref, const std::vector<HalfSpaceConstraint>& constraints,
                                          double v_max) {
  VelocitySolution out;
  const std::size_t failed = detail::lp_space(constraints, v_max, v_pref, false, out.velocity);
  if (failed < constraints.size()) {
    out.feasible = false;
    detail::lp_least_violation(constraints, failed, v_max, out.velocity);
  }
  return out;
}

struct OrcaResult {
  PointCloud velocities;
  // Velocity each agent's half-spaces were built around: its preferred
  // velocity, or zero once it has been demoted.
  PointCloud reference;
  std::vector<std::vector<std::size_t>> neighbors;
  std::vector<bool> feasible;
  std::size_t demoted = 0;
  double cull_radius = 0.0;
};

inline std::vector<std::vector<std::size_t>> find_neighbors(const PointCloud& positions, double radius) {
  const std::size_t m = positions.size();
  std::vector<std::vector<std::size_t>> out(m);
  const double r_sq = radius * radius;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      if (norm_sq(positions[j] - positions[i]) < r_sq) {
        out[i].push_back(j);
        out[j].push_back(i);
      }
    }
  }
  for (auto& n : out) std::sort(n.begin(), n.end());
  return out;
}

// Half-spaces of agent i against its neighbors, in neighbor index order.
inline std::vector<HalfSpaceConstraint> agent_constraints(std::size_t i, const PointCloud& positions,
                                                          const PointCloud& reference,
                                                          const std::vector<std::size_t>& neighbors,
                                                          const NavConfig& cfg) {
  std::vector<HalfSpaceConstraint> planes;
  planes.reserve(neighbors.size());
  for (std::size_t j : neighbors) {
    const Vec3 fallback = i < j ? Vec3{-1.0, 0.0, 0.0} : Vec3{1.0, 0.0, 0.0};
    planes.push_back(build_orca_halfspace(positions[i], reference[i], positions[j], reference[j], cfg.kappa, cfg.tau,
                                          cfg.dt, fallback));
  }
  return planes;
}

// Half-spaces are first built around the preferred velocities. When an agent
// has no feasible velocity, it and its neighbors are rebuilt around zero
// velocity; around zero every pair that is at least kappa apart admits v = 0,
// so safe configurations always end feasible. Agents that remain infeasible
// (overlapping ones) take the least-violation velocity.
inline OrcaResult orca_solve(const PointCloud& preferred, const PointCloud& positions, const NavConfig& cfg) {
  cfg.validate();
  const std::size_t m = positions.size();
  if (preferred.size() != m) throw std::invalid_argument("preferred velocity count does not match agent count");
  OrcaResult res;
  res.cull_radius = cfg.cull_radius();
  res.neighbors = find_neighbors(positions, res.cull_radius);
  res.reference = preferred;
  res.velocities.assign(m, Vec3{});
  res.feasible.assign(m, true);
  std::vector<char> demoted(m, 0), dirty(m, 1);

  while (true) {
    std::vector<char> feasible(m, 1);
    parallel_for(m, [&](std::size_t i) {
      if (!dirty[i]) {
        feasible[i] = res.feasible[i];
        return;
      }
      const auto planes = agent_constraints(i, positions, res.reference, res.neighbors[i], cfg);
      const VelocitySolution s = solve_velocity_lp(preferred[i], planes, cfg.v_max);
      res.velocities[i] = s.velocity;
      feasible[i] = s.feasible;
    });
    std::fill(dirty.begin(), dirty.end(), 0);
    bool changed = false;
    for (std::size_t i = 0; i < m; ++i) {
      res.feasible[i] = feasible[i] != 0;
      if (feasible[i]) continue;
      auto demote = [&](std::size_t k) {
        if (demoted[k]) return;
        demoted[k] = 1;
        res.reference[k] = Vec3{};
        dirty[k] = 1;
        for (std::size_t j : res.neighbors[k]) dirty[j] = 1;
        changed = true;
      };
      demote(i);
      for (std::size_t j : res.neighbors[i]) demote(j);
    }
    if (!changed) break;
  }
  res.demoted = static_cast<std::size_t>(std::count(demoted.begin(), demoted.end(), 1));
  return res;
}

inline PointCloud orca_adjust(const PointCloud& preferred, const PointCloud& positions, const NavConfig& cfg) {
  return orca_solve(preferred, positions, cfg).velocities;
}

}  // namespace swarmflow
