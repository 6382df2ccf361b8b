#pragma once

// Checkpoint file, little-endian:
//   "UWBM", version u16, task u16, arch hash u64, epoch u32,
//   arch: links u32, blocks u32, length u32, kernel u32, pool u32,
//         n_channels u32, channels u32[n], n_hidden u32, hidden u32[n],
//   parameter count u64, then f64 values: trainable parameters in
//   parameters() order followed by buffers() (batch-norm running stats).

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "uwbsense/model.hpp"
#include "uwbsense/recordio.hpp"

namespace uwbsense {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointInfo {
  Task task = Task::Localization;
  ArchConfig arch;
  std::uint32_t epoch = 0;
};

namespace detail {

inline void write_u16(std::ostream& out, std::uint16_t v) {
  std::uint8_t b[2];
  le::put16(b, v);
  out.write(reinterpret_cast<const char*>(b), 2);
}
inline void write_u32(std::ostream& out, std::uint32_t v) {
  std::uint8_t b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}
inline void write_u64(std::ostream& out, std::uint64_t v) {
  std::uint8_t b[8];
  le::put64(b, v);
  out.write(reinterpret_cast<const char*>(b), 8);
}
inline void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(out, bits);
}

inline void read_exact(std::istream& in, std::uint8_t* p, std::size_t n) {
  in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n))
    throw FormatError("checkpoint truncated");
}
inline std::uint16_t read_u16(std::istream& in) {
  std::uint8_t b[2];
  read_exact(in, b, 2);
  return le::get16(b);
}
inline std::uint32_t read_u32(std::istream& in) {
  std::uint8_t b[4];
  read_exact(in, b, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[i]} << (8 * i);
  return v;
}
inline std::uint64_t read_u64(std::istream& in) {
  std::uint8_t b[8];
  read_exact(in, b, 8);
  return le::get64(b);
}
inline double read_f64(std::istream& in) {
  const std::uint64_t bits = read_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace detail

template <class T>
void save_checkpoint(const std::string& path, TwoStreamNet<T>& model,
                     std::uint32_t epoch) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot create checkpoint: " + path);
  const auto& a = model.arch();
  out.write("UWBM", 4);
  detail::write_u16(out, kCheckpointVersion);
  detail::write_u16(out, static_cast<std::uint16_t>(model.task()));
  detail::write_u64(out, a.hash());
  detail::write_u32(out, epoch);
  for (int v : {a.links, a.blocks, a.length, a.kernel, a.pool})
    detail::write_u32(out, static_cast<std::uint32_t>(v));
  detail::write_u32(out, static_cast<std::uint32_t>(a.channels.size()));
  for (int c : a.channels) detail::write_u32(out, static_cast<std::uint32_t>(c));
  detail::write_u32(out, static_cast<std::uint32_t>(a.hidden.size()));
  for (int h : a.hidden) detail::write_u32(out, static_cast<std::uint32_t>(h));
  std::uint64_t count = 0;
  auto params = model.parameters();
  auto buffers = model.buffers();
  for (auto& p : params) count += p.value.size();
  for (auto& b : buffers) count += b.second.size();
  detail::write_u64(out, count);
  for (auto& p : params)
    for (T v : p.value) detail::write_f64(out, static_cast<double>(v));
  for (auto& b : buffers)
    for (T v : b.second) detail::write_f64(out, static_cast<double>(v));
  if (!out) throw Error("checkpoint write failed: " + path);
}

struct LoadedHeader {
  CheckpointInfo info;
  std::uint64_t count = 0;
};

inline LoadedHeader read_checkpoint_header(std::istream& in) {
  std::array<std::uint8_t, 4> magic{};
  detail::read_exact(in, magic.data(), 4);
  if (std::memcmp(magic.data(), "UWBM", 4) != 0)
    throw FormatError("not a checkpoint (bad magic)");
  if (detail::read_u16(in) != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version");
  LoadedHeader h;
  const auto task = detail::read_u16(in);
  if (task > 2) throw FormatError("checkpoint: bad task");
  h.info.task = static_cast<Task>(task);
  const std::uint64_t hash = detail::read_u64(in);
  h.info.epoch = detail::read_u32(in);
  auto& a = h.info.arch;
  a.links = static_cast<int>(detail::read_u32(in));
  a.blocks = static_cast<int>(detail::read_u32(in));
  a.length = static_cast<int>(detail::read_u32(in));
  a.kernel = static_cast<int>(detail::read_u32(in));
  a.pool = static_cast<int>(detail::read_u32(in));
  const auto nc = detail::read_u32(in);
  if (nc > 64) throw FormatError("checkpoint: implausible layer count");
  a.channels.assign(nc, 0);
  for (auto& c : a.channels) c = static_cast<int>(detail::read_u32(in));
  const auto nh = detail::read_u32(in);
  if (nh > 64) throw FormatError("checkpoint: implausible layer count");
  a.hidden.assign(nh, 0);
  for (auto& v : a.hidden) v = static_cast<int>(detail::read_u32(in));
  if (a.hash() != hash) throw FormatError("checkpoint: architecture hash mismatch");
  h.count = detail::read_u64(in);
  return h;
}

template <class T>
TwoStreamNet<T> load_checkpoint(const std::string& path, CheckpointInfo* info = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint: " + path);
  const auto h = read_checkpoint_header(in);
  TwoStreamNet<T> model(h.info.task, h.info.arch, 0);
  auto params = model.parameters();
  auto buffers = model.buffers();
  std::uint64_t expected = 0;
  for (auto& p : params) expected += p.value.size();
  for (auto& b : buffers) expected += b.second.size();
  if (expected != h.count) throw FormatError("checkpoint: parameter count mismatch");
  for (auto& p : params)
    for (T& v : p.value) v = static_cast<T>(detail::read_f64(in));
  for (auto& b : buffers)
    for (T& v : b.second) v = static_cast<T>(detail::read_f64(in));
  if (info) *info = h.info;
  return model;
}

}  // namespace uwbsense
