#pragma once

// Binary checkpoint layout (all integers and floats little-endian):
//   "SWFLCKPT" u32 version
//   u64 n, n bytes of `key = value` config text
//   u64 step, f64 final_loss, u64 optimizer_step
//   3 tensor tables (params, Adam first moment, Adam second moment):
//     u64 count, then per tensor: u32 name_len, name, u32 rank, u64 dims[rank], f64 data[]

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "swarmflow/config.hpp"
#include "swarmflow/optim.hpp"

namespace swarmflow {

struct Checkpoint {
  TrainConfig config;
  ParamStore params;
  AdamState optimizer;
  std::uint64_t step = 0;
  double final_loss = 0.0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline constexpr std::array<char, 8> kCheckpointMagic{'S', 'W', 'F', 'L', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  std::array<char, sizeof(T)> bytes;
  if (!in.read(bytes.data(), sizeof(T))) throw CheckpointError("checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

inline void write_table(std::ostream& out, const ParamStore& table) {
  write_le<std::uint64_t>(out, table.size());
  for (const auto& [name, t] : table) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) write_le<std::uint64_t>(out, d);
    for (double v : t.data()) write_le<double>(out, v);
  }
}

inline ParamStore read_table(std::istream& in) {
  ParamStore table;
  const auto count = read_le<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = read_le<std::uint32_t>(in);
    if (len > 4096) throw CheckpointError("checkpoint tensor name too long");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw CheckpointError("checkpoint truncated in tensor name");
    const auto rank = read_le<std::uint32_t>(in);
    if (rank > 8) throw CheckpointError("checkpoint tensor '" + name + "' has unsupported rank");
    Shape shape(rank);
    for (auto& d : shape) d = read_le<std::uint64_t>(in);
    const std::size_t n = shape_numel(shape);
    if (n > (std::size_t{1} << 32)) throw CheckpointError("checkpoint tensor '" + name + "' too large");
    std::vector<double> data(n);
    for (auto& v : data) v = read_le<double>(in);
    table.add(name, Tensor(std::move(shape), std::move(data)));
  }
  return table;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  out.write(detail::kCheckpointMagic.data(), detail::kCheckpointMagic.size());
  detail::write_le<std::uint32_t>(out, detail::kCheckpointVersion);
  const std::string cfg = format_key_values(to_key_values(ckpt.config));
  detail::write_le<std::uint64_t>(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  detail::write_le<std::uint64_t>(out, ckpt.step);
  detail::write_le<double>(out, ckpt.final_loss);
  detail::write_le<std::uint64_t>(out, ckpt.optimizer.step);
  detail::write_table(out, ckpt.params);
  detail::write_table(out, ckpt.optimizer.first_moment);
  detail::write_table(out, ckpt.optimizer.second_moment);
  if (!out) throw CheckpointError("failed writing checkpoint");
}

inline Checkpoint load_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != detail::kCheckpointMagic) {
    throw CheckpointError("not a swarmflow checkpoint (bad magic)");
  }
  const auto version = detail::read_le<std::uint32_t>(in);
  if (version != detail::kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto cfg_len = detail::read_le<std::uint64_t>(in);
  if (cfg_len > (1u << 20)) throw CheckpointError("checkpoint config block too large");
  std::string cfg(cfg_len, '\0');
  if (!in.read(cfg.data(), static_cast<std::streamsize>(cfg_len))) throw CheckpointError("checkpoint truncated in config");
  std::istringstream cfg_stream(cfg);
  apply_key_values(ckpt.config, parse_key_values(cfg_stream, "<checkpoint config>"));
  ckpt.step = detail::read_le<std::uint64_t>(in);
  ckpt.final_loss = detail::read_le<double>(in);
  ckpt.optimizer.step = detail::read_le<std::uint64_t>(in);
  ckpt.params = detail::read_table(in);
  ckpt.optimizer.first_moment = detail::read_table(in);
  ckpt.optimizer.second_moment = detail::read_table(in);
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
  save_checkpoint(ckpt, out);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace swarmflow
