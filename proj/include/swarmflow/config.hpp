#pragma once

// Line-oriented `key = value` configuration shared by config files, the
// checkpoint config echo and trajectory metadata sidecars.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "swarmflow/models.hpp"

namespace swarmflow {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using KeyValues = std::map<std::string, std::string>;

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Blank lines and lines starting with '#' are skipped.
inline KeyValues parse_key_values(std::istream& in, const std::string& source = "<config>") {
  KeyValues kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value', got '" + t + "'");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    kv[key] = trim(t.substr(eq + 1));
  }
  return kv;
}

inline KeyValues load_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_key_values(in, path);
}

inline std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end) throw ConfigError("invalid number for " + what + ": '" + s + "'");
  return v;
}

inline std::uint64_t parse_uint(const std::string& s, const std::string& what) {
  std::uint64_t v = 0;
  const auto* end = s.data() + s.size();
  const auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end) throw ConfigError("invalid integer for " + what + ": '" + s + "'");
  return v;
}

inline std::vector<std::size_t> parse_size_list(const std::string& s, const std::string& what) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_uint(trim(item), what));
  if (out.empty()) throw ConfigError("empty list for " + what);
  return out;
}

enum class Algorithm { FlowMatching, Diffusion };

inline std::string to_string(Algorithm a) { return a == Algorithm::FlowMatching ? "cfm" : "ddpm"; }

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "cfm") return Algorithm::FlowMatching;
  if (s == "ddpm") return Algorithm::Diffusion;
  throw ConfigError("unknown algorithm '" + s + "' (expected cfm or ddpm)");
}

struct TrainConfig {
  Algorithm algorithm = Algorithm::FlowMatching;
  double learning_rate = 1e-3;
  double final_lr_fraction = 0.1;
  std::size_t batch_size = 1;
  std::size_t steps = 2000;
  std::uint64_t seed = 1;
  std::size_t points = 2048;
  double horizon = 1.0;
  double sigma_min = 1e-4;
  // Stored for downstream sampling defaults.
  double kappa = 0.06;
  double dt = 0.01;
  std::size_t diffusion_steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.05;
  std::size_t log_every = 50;
  ModelConfig model;

  void validate() const {
    model.validate();
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
    if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) throw ConfigError("final_lr_fraction must lie in (0, 1]");
    if (batch_size == 0 || steps == 0 || points == 0) throw ConfigError("batch_size, steps and points must be positive");
    if (!(horizon > 0.0) || !(sigma_min > 0.0 && sigma_min < 1.0)) throw ConfigError("need T > 0 and 0 < sigma_min < 1");
    if (!(kappa > 0.0) || !(dt > 0.0)) throw ConfigError("kappa and dt must be positive");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline KeyValues to_key_values(const TrainConfig& c) {
  std::string widths;
  for (std::size_t i = 0; i < c.model.encoder_widths.size(); ++i) {
    widths += (i ? "," : "") + std::to_string(c.model.encoder_widths[i]);
  }
  return {
      {"algorithm", to_string(c.algorithm)},
      {"learning_rate", format_double(c.learning_rate)},
      {"final_lr_fraction", format_double(c.final_lr_fraction)},
      {"batch_size", std::to_string(c.batch_size)},
      {"steps", std::to_string(c.steps)},
      {"seed", std::to_string(c.seed)},
      {"points", std::to_string(c.points)},
      {"horizon", format_double(c.horizon)},
      {"sigma_min", format_double(c.sigma_min)},
      {"kappa", format_double(c.kappa)},
      {"dt", format_double(c.dt)},
      {"diffusion_steps", std::to_string(c.diffusion_steps)},
      {"beta_start", format_double(c.beta_start)},
      {"beta_end", format_double(c.beta_end)},
      {"log_every", std::to_string(c.log_every)},
      {"latent_dim", std::to_string(c.model.latent_dim)},
      {"field_hidden", std::to_string(c.model.field_hidden)},
      {"field_blocks", std::to_string(c.model.field_blocks)},
      {"encoder_widths", widths},
      {"coupling_layers", std::to_string(c.model.coupling_layers)},
      {"coupling_hidden", std::to_string(c.model.coupling_hidden)},
  };
}

// Applies the keys it knows; with `strict`, any other key is an error.
inline void apply_key_values(TrainConfig& c, const KeyValues& kv, bool strict = true) {
  for (const auto& [k, v] : kv) {
    if (k == "algorithm") c.algorithm = parse_algorithm(v);
    else if (k == "learning_rate") c.learning_rate = parse_double(v, k);
    else if (k == "final_lr_fraction") c.final_lr_fraction = parse_double(v, k);
    else if (k == "batch_size") c.batch_size = parse_uint(v, k);
    else if (k == "steps") c.steps = parse_uint(v, k);
    else if (k == "seed") c.seed = parse_uint(v, k);
    else if (k == "points") c.points = parse_uint(v, k);
    else if (k == "horizon") c.horizon = parse_double(v, k);
    else if (k == "sigma_min") c.sigma_min = parse_double(v, k);
    else if (k == "kappa") c.kappa = parse_double(v, k);
    else if (k == "dt") c.dt = parse_double(v, k);
    else if (k == "diffusion_steps") c.diffusion_steps = parse_uint(v, k);
    else if (k == "beta_start") c.beta_start = parse_double(v, k);
    else if (k == "beta_end") c.beta_end = parse_double(v, k);
    else if (k == "log_every") c.log_every = parse_uint(v, k);
    else if (k == "latent_dim") c.model.latent_dim = parse_uint(v, k);
    else if (k == "field_hidden") c.model.field_hidden = parse_uint(v, k);
    else if (k == "field_blocks") c.model.field_blocks = parse_uint(v, k);
    else if (k == "encoder_widths") c.model.encoder_widths = parse_size_list(v, k);
    else if (k == "coupling_layers") c.model.coupling_layers = parse_uint(v, k);
    else if (k == "coupling_hidden") c.model.coupling_hidden = parse_uint(v, k);
    else if (strict) throw ConfigError("unknown config key '" + k + "'");
  }
}

}  // namespace swarmflow
