#pragma once

// File formats, dataset preparation and the mapping from training scale to
// the real show volume.

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "swarmflow/config.hpp"
#include "swarmflow/params.hpp"
#include "swarmflow/trajectory.hpp"

namespace swarmflow {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- XYZ point clouds ------------------------------------------------------

inline PointCloud read_pointcloud(std::istream& in, const std::string& source = "<xyz>") {
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::istringstream fields(t);
    std::string tok[4];
    std::size_t n = 0;
    while (n < 4 && fields >> tok[n]) ++n;
    if (n != 3) {
      throw FormatError(source + ":" + std::to_string(line_no) + ": expected 3 coordinates, got '" + t + "'");
    }
    double v[3];
    for (int k = 0; k < 3; ++k) {
      try {
        v[k] = parse_double(tok[k], "coordinate");
      } catch (const ConfigError&) {
        throw FormatError(source + ":" + std::to_string(line_no) + ": invalid coordinate '" + tok[k] + "'");
      }
      if (!std::isfinite(v[k])) {
        throw FormatError(source + ":" + std::to_string(line_no) + ": non-finite coordinate '" + tok[k] + "'");
      }
    }
    cloud.push_back({v[0], v[1], v[2]});
  }
  return cloud;
}

inline PointCloud load_pointcloud(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open point cloud '" + path + "'");
  return read_pointcloud(in, path);
}

inline void write_pointcloud(const PointCloud& cloud, std::ostream& out) {
  for (const Vec3& p : cloud) out << format_double(p.x) << ' ' << format_double(p.y) << ' ' << format_double(p.z) << '\n';
}

inline void save_pointcloud(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write point cloud '" + path + "'");
  write_pointcloud(cloud, out);
  if (!out) throw FormatError("write failed for '" + path + "'");
}

// ---- Normalization ---------------------------------------------------------

// x_norm = (x - centroid) / scale
struct NormalizationTransform {
  Vec3 centroid;
  double scale = 1.0;

  friend bool operator==(const NormalizationTransform&, const NormalizationTransform&) = default;
};

// Centers the cloud and divides by the standard deviation pooled over the
// three coordinates, so the cloud has zero mean and unit variance overall.
inline std::pair<PointCloud, NormalizationTransform> normalize(const PointCloud& cloud) {
  if (cloud.empty()) throw std::invalid_argument("cannot normalize an empty cloud");
  NormalizationTransform tf;
  tf.centroid = centroid(cloud);
  double ss = 0.0;
  for (const Vec3& p : cloud) ss += norm_sq(p - tf.centroid);
  tf.scale = std::sqrt(ss / (3.0 * static_cast<double>(cloud.size())));
  if (!(tf.scale > 0.0)) throw std::invalid_argument("cannot normalize a cloud with all points coincident");
  PointCloud out(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) out[i] = (cloud[i] - tf.centroid) / tf.scale;
  return {out, tf};
}

inline PointCloud denormalize(const PointCloud& cloud, const NormalizationTransform& tf) {
  PointCloud out(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) out[i] = tf.scale * cloud[i] + tf.centroid;
  return out;
}

// ---- Synthetic shapes ------------------------------------------------------

enum class ShapeKind { Sphere, Torus, TwoBoxPlane, Helix };

inline ShapeKind parse_shape_kind(const std::string& s) {
  if (s == "sphere") return ShapeKind::Sphere;
  if (s == "torus") return ShapeKind::Torus;
  if (s == "two-box-plane") return ShapeKind::TwoBoxPlane;
  if (s == "helix") return ShapeKind::Helix;
  throw std::invalid_argument("unknown shape '" + s + "' (expected sphere, torus, two-box-plane or helix)");
}

inline constexpr double kTorusMajor = 1.0;
inline constexpr double kTorusMinor = 0.35;

namespace detail {

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline Vec3 unit_sphere_point(Rng& rng) {
  while (true) {
    const Vec3 g{standard_normal(rng), standard_normal(rng), standard_normal(rng)};
    const double n = norm(g);
    if (n > 1e-12) return g / n;
  }
}

// Uniform on the surface of an axis-aligned box.
inline Vec3 box_surface_point(Rng& rng, const Vec3& lo, const Vec3& hi) {
  const Vec3 e = hi - lo;
  const double areas[3] = {e.y * e.z, e.x * e.z, e.x * e.y};
  const double total = areas[0] + areas[1] + areas[2];
  double pick = uniform01(rng) * total;
  int axis = 0;
  while (axis < 2 && pick > areas[axis]) pick -= areas[axis++];
  Vec3 p{lo.x + e.x * uniform01(rng), lo.y + e.y * uniform01(rng), lo.z + e.z * uniform01(rng)};
  const bool high = uniform01(rng) < 0.5;
  if (axis == 0) p.x = high ? hi.x : lo.x;
  if (axis == 1) p.y = high ? hi.y : lo.y;
  if (axis == 2) p.z = high ? hi.z : lo.z;
  return p;
}

}  // namespace detail

// Raw (unnormalized) samples. Sphere: unit radius. Torus: radii
// kTorusMajor / kTorusMinor around the z axis, area-uniform. Two-box-plane:
// two box surfaces standing on a square floor. Helix: three turns of radius 1.
inline PointCloud make_shape(ShapeKind kind, std::size_t n, Rng& rng) {
  PointCloud cloud;
  cloud.reserve(n);
  while (cloud.size() < n) {
    switch (kind) {
      case ShapeKind::Sphere:
        cloud.push_back(detail::unit_sphere_point(rng));
        break;
      case ShapeKind::Torus: {
        const double u = 2.0 * std::numbers::pi * detail::uniform01(rng);
        const double v = 2.0 * std::numbers::pi * detail::uniform01(rng);
        // Rejection keeps the density proportional to surface area.
        const double ring = kTorusMajor + kTorusMinor * std::cos(v);
        if (detail::uniform01(rng) * (kTorusMajor + kTorusMinor) > ring) break;
        cloud.push_back({ring * std::cos(u), ring * std::sin(u), kTorusMinor * std::sin(v)});
        break;
      }
      case ShapeKind::TwoBoxPlane: {
        const double r = detail::uniform01(rng);
        if (r < 0.4) {
          cloud.push_back({-2.0 + 4.0 * detail::uniform01(rng), -2.0 + 4.0 * detail::uniform01(rng), 0.0});
        } else if (r < 0.7) {
          cloud.push_back(detail::box_surface_point(rng, {-1.5, -0.5, 0.0}, {-0.5, 0.5, 1.0}));
        } else {
          cloud.push_back(detail::box_surface_point(rng, {0.5, -0.5, 0.0}, {1.5, 0.5, 1.5}));
        }
        break;
      }
      case ShapeKind::Helix: {
        const double s = detail::uniform01(rng);
        const double a = 3.0 * 2.0 * std::numbers::pi * s;
        cloud.push_back({std::cos(a), std::sin(a), 3.0 * s - 1.5});
        break;
      }
    }
  }
  return cloud;
}

// `count` independently sampled clouds of `n` points, each normalized.
inline std::vector<PointCloud> make_synthetic_dataset(ShapeKind kind, std::size_t n, std::size_t count,
                                                      std::uint64_t seed) {
  if (n < 2 || count == 0) throw std::invalid_argument("synthetic dataset needs n >= 2 points and count >= 1");
  Rng rng(seed);
  std::vector<PointCloud> out;
  for (std::size_t c = 0; c < count; ++c) out.push_back(normalize(make_shape(kind, n, rng)).first);
  return out;
}

// Brings arbitrary input clouds to exactly `n` points each (random subset
// without replacement when larger) and normalizes them.
inline std::vector<PointCloud> prepare_training_clouds(const std::vector<PointCloud>& clouds, std::size_t n,
                                                       std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PointCloud> out;
  for (std::size_t c = 0; c < clouds.size(); ++c) {
    PointCloud cloud = clouds[c];
    if (cloud.size() < n) {
      throw std::invalid_argument("cloud " + std::to_string(c) + " has " + std::to_string(cloud.size()) +
                                  " points, fewer than the " + std::to_string(n) + " required");
    }
    for (std::size_t i = 0; i < n && cloud.size() > n; ++i) {
      std::swap(cloud[i], cloud[std::uniform_int_distribution<std::size_t>(i, cloud.size() - 1)(rng)]);
    }
    cloud.resize(n);
    out.push_back(normalize(cloud).first);
  }
  return out;
}

// ---- Real-scale mapping ----------------------------------------------------

// Normalized clouds span roughly `training_extent` units per side; the show
// volume is a cube of `side` meters. κ maps with the same factor.
struct SceneScale {
  double side = 200.0;
  double kappa_real = 2.0;
  double training_extent = 6.0;

  double length_scale() const { return side / training_extent; }
  double kappa_training() const { return kappa_real * training_extent / side; }

  void validate() const {
    if (!(side > 0.0) || !(kappa_real > 0.0) || !(training_extent > 0.0)) {
      throw std::invalid_argument("scene scale values must be positive");
    }
  }
};

// Scales positions, velocities and κ into the show volume; time is unchanged.
inline TrajectoryLog to_real_scale(const TrajectoryLog& log, const SceneScale& scene) {
  scene.validate();
  const double s = scene.length_scale();
  auto scaled = [s](const std::vector<PointCloud>& frames) {
    std::vector<PointCloud> out = frames;
    for (auto& f : out) {
      for (Vec3& p : f) p = s * p;
    }
    return out;
  };
  TrajectoryLog out = TrajectoryLog::from_frames(log.times(), scaled(log.positions()), scaled(log.applied_velocities()),
                                                 scaled(log.preferred_velocities()), log.dt());
  out.meta = log.meta;
  out.meta.kappa = log.meta.kappa * s;
  out.meta.length_scale = log.meta.length_scale * s;
  return out;
}

// ---- Trajectory CSV --------------------------------------------------------

inline constexpr const char* kTrajectoryHeader = "t,agent,x,y,z,vx,vy,vz";

// One row per agent per frame; the final frame has zero velocity.
inline void write_trajectory_csv(const TrajectoryLog& log, std::ostream& out) {
  out << kTrajectoryHeader << '\n';
  const auto& x = log.positions();
  for (std::size_t k = 0; k < x.size(); ++k) {
    for (std::size_t i = 0; i < x[k].size(); ++i) {
      const Vec3 v = k < log.applied_velocities().size() ? log.applied_velocities()[k][i] : Vec3{};
      out << format_double(log.times()[k]) << ',' << i << ',' << format_double(x[k][i].x) << ','
          << format_double(x[k][i].y) << ',' << format_double(x[k][i].z) << ',' << format_double(v.x) << ','
          << format_double(v.y) << ',' << format_double(v.z) << '\n';
    }
  }
}

inline KeyValues trajectory_meta_values(const TrajectoryLog& log) {
  return {
      {"algorithm", log.meta.algorithm},
      {"seed", std::to_string(log.meta.seed)},
      {"steps", std::to_string(log.steps())},
      {"agents", std::to_string(log.agents())},
      {"kappa", format_double(log.meta.kappa)},
      {"length_scale", format_double(log.meta.length_scale)},
      {"horizon", format_double(log.meta.horizon)},
      {"dt", format_double(log.dt())},
  };
}

inline std::string meta_path(const std::string& csv_path) { return csv_path + ".meta"; }

inline void save_trajectory(const TrajectoryLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write trajectory '" + path + "'");
  write_trajectory_csv(log, out);
  std::ofstream meta(meta_path(path));
  if (!meta) throw FormatError("cannot write trajectory metadata '" + meta_path(path) + "'");
  meta << format_key_values(trajectory_meta_values(log));
  if (!out || !meta) throw FormatError("write failed for '" + path + "'");
}

// Reads a CSV written by write_trajectory_csv. Preferred velocities are not
// stored, so the loaded log reports the applied ones in their place.
inline TrajectoryLog read_trajectory_csv(std::istream& in, const KeyValues& meta, const std::string& source = "<csv>") {
  std::string line;
  if (!std::getline(in, line) || trim(line) != kTrajectoryHeader) {
    throw FormatError(source + ":1: expected header '" + std::string(kTrajectoryHeader) + "'");
  }
  std::vector<double> times;
  std::vector<PointCloud> positions, velocities;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(trim(item));
    const std::string where = source + ":" + std::to_string(line_no);
    if (f.size() != 8) throw FormatError(where + ": expected 8 fields, got " + std::to_string(f.size()));
    double v[8];
    try {
      for (int k = 0; k < 8; ++k) v[k] = k == 1 ? static_cast<double>(parse_uint(f[1], "agent")) : parse_double(f[k], "field");
    } catch (const ConfigError& e) {
      throw FormatError(where + ": " + e.what());
    }
    const auto agent = static_cast<std::size_t>(v[1]);
    if (agent == 0) {
      times.push_back(v[0]);
      positions.emplace_back();
      velocities.emplace_back();
    }
    if (positions.empty() || agent != positions.back().size() || v[0] != times.back()) {
      throw FormatError(where + ": rows must list agents 0..M-1 in order within each frame");
    }
    positions.back().push_back({v[2], v[3], v[4]});
    velocities.back().push_back({v[5], v[6], v[7]});
  }
  if (positions.size() < 2) throw FormatError(source + ": trajectory needs at least two frames");
  for (const auto& frame : positions) {
    if (frame.size() != positions.front().size()) throw FormatError(source + ": frames differ in agent count");
  }
  velocities.pop_back();
  const auto get = [&](const char* key) -> const std::string& {
    const auto it = meta.find(key);
    if (it == meta.end()) throw FormatError(source + ": metadata is missing '" + key + "'");
    return it->second;
  };
  TrajectoryLog log =
      TrajectoryLog::from_frames(std::move(times), std::move(positions), std::move(velocities), {}, parse_double(get("dt"), "dt"));
  log.meta.algorithm = get("algorithm");
  log.meta.seed = parse_uint(get("seed"), "seed");
  log.meta.kappa = parse_double(get("kappa"), "kappa");
  log.meta.length_scale = parse_double(get("length_scale"), "length_scale");
  log.meta.horizon = parse_double(get("horizon"), "horizon");
  return log;
}

inline TrajectoryLog load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open trajectory '" + path + "'");
  return read_trajectory_csv(in, load_key_values(meta_path(path)), path);
}

}  // namespace swarmflow
