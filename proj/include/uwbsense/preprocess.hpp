#pragma once

// CIR preprocessing: fractional first-path alignment, block mean/variance of
// magnitudes, linear upsampling, and stacking of all links into labelled
// (links, 2, C, L) datapoints.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <deque>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uwbsense/channel.hpp"
#include "uwbsense/common.hpp"
#include "uwbsense/mac.hpp"
#include "uwbsense/recordio.hpp"
#include "uwbsense/scene.hpp"

namespace uwbsense {

struct PreprocessConfig {
  int m = 16;           // records per block
  int stride = 0;       // records between block starts; 0 means m
  int c = 4;            // blocks per datapoint
  double window_s = 1.0;
  double hop_s = 0.5;
  int upsample_len = 500;
  bool preamble_normalize = false;
  int nominal_preamble = 256;

  int effective_stride() const { return stride > 0 ? stride : m; }

  void validate() const {
    require(m >= 2, "M must be at least 2");
    require(stride >= 0 && effective_stride() <= m, "stride must lie in [1, M]");
    require(c >= 1, "C must be at least 1");
    require(window_s > 0, "window must be positive");
    require(hop_s > 0, "hop must be positive");
    require(upsample_len >= static_cast<int>(kCirSamples),
            "upsample length must be at least 58");
  }
};

struct AlignedCir {
  std::array<cdouble, kCirSamples> samples{};
  LinkId link;
  std::uint16_t seq = 0;
  std::uint64_t timestamp_us = 0;
  int fp_index = 0;
  int fp_frac = 0;
};

namespace detail {

/// 8-tap Hann-windowed sinc weight for offset u taps.
inline double interp_weight(double u) {
  if (std::abs(u) >= 4.0) return 0.0;
  const double s = std::abs(u) < 1e-12 ? 1.0 : std::sin(kPi * u) / (kPi * u);
  return s * 0.5 * (1.0 + std::cos(kPi * u / 4.0));
}

}  // namespace detail

/// Value of the sampled sequence at fractional position `pos`, by 8-tap
/// windowed-sinc interpolation with edge replication. Integer positions
/// return the sample itself.
template <std::size_t N>
cdouble interpolate_at(const std::array<cdouble, N>& x, double pos) {
  const double base = std::floor(pos);
  const double frac = pos - base;
  const long b = static_cast<long>(base);
  if (frac == 0.0) return x[static_cast<std::size_t>(std::clamp<long>(b, 0, N - 1))];
  cdouble acc{0.0, 0.0};
  double wsum = 0.0;
  for (long j = -3; j <= 4; ++j) {
    const double w = detail::interp_weight(frac - static_cast<double>(j));
    const long idx = std::clamp<long>(b + j, 0, static_cast<long>(N) - 1);
    acc += w * x[static_cast<std::size_t>(idx)];
    wsum += w;
  }
  return acc / wsum;
}

/// Shifts every record by its own fractional first-path offset so that all
/// first paths land on window tap `pre_fp_samples`. Integer fp_index offsets
/// are already absorbed by the FP-relative window.
inline std::vector<AlignedCir> align(std::span<const CirRecord> records,
                                     const PreprocessConfig& cfg = {}) {
  if (records.empty()) throw ValidationError("align: no records");
  const LinkId link{records.front().tx_id, records.front().rx_id};
  std::vector<AlignedCir> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.tx_id != link.tx || r.rx_id != link.rx)
      throw ValidationError("align: records from mixed links");
    double gain = 1.0;
    if (cfg.preamble_normalize && r.preamble_count > 0)
      gain = static_cast<double>(cfg.nominal_preamble) / r.preamble_count;
    std::array<cdouble, kCirSamples> raw;
    for (std::size_t k = 0; k < kCirSamples; ++k)
      raw[k] = gain * cdouble(r.samples[k].re, r.samples[k].im);
    AlignedCir a;
    a.link = link;
    a.seq = r.seq;
    a.timestamp_us = r.timestamp_us;
    a.fp_index = r.fp_index;
    a.fp_frac = r.fp_frac;
    const double shift = static_cast<double>(r.fp_frac) / kFracSteps;
    for (std::size_t k = 0; k < kCirSamples; ++k)
      a.samples[k] = interpolate_at(raw, static_cast<double>(k) + shift);
    out.push_back(a);
  }
  return out;
}

struct CirStats {
  std::vector<double> mean;      // h_m per delay bin
  std::vector<double> variance;  // h_v per delay bin
  LinkId link;
  std::uint64_t t_block_us = 0;  // timestamp of the last contributing record
  int m_count = 0;
};

/// Mean and population variance of sample magnitudes over one block,
/// accumulated with Welford's update.
inline CirStats block_statistics(std::span<const AlignedCir> block) {
  CirStats s;
  s.mean.assign(kCirSamples, 0.0);
  s.variance.assign(kCirSamples, 0.0);
  std::vector<double> m2(kCirSamples, 0.0);
  double n = 0.0;
  for (const auto& a : block) {
    n += 1.0;
    for (std::size_t k = 0; k < kCirSamples; ++k) {
      const double v = std::abs(a.samples[k]);
      const double d = v - s.mean[k];
      s.mean[k] += d / n;
      m2[k] += d * (v - s.mean[k]);
    }
  }
  for (std::size_t k = 0; k < kCirSamples; ++k)
    s.variance[k] = std::max(0.0, m2[k] / n);
  s.link = block.front().link;
  s.t_block_us = block.back().timestamp_us;
  s.m_count = static_cast<int>(block.size());
  return s;
}

/// Consecutive blocks of M records (stride M unless configured otherwise);
/// a trailing remainder shorter than M is dropped.
inline std::vector<CirStats> block_stats(std::span<const AlignedCir> aligned,
                                         int m, int stride = 0) {
  require(m >= 2, "M must be at least 2");
  if (stride <= 0) stride = m;
  require(stride <= m, "stride must not exceed M");
  std::vector<CirStats> out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(m) <= aligned.size();
       i += static_cast<std::size_t>(stride)) {
    if (i > 0)
      require(aligned[i].timestamp_us >= aligned[i - 1].timestamp_us,
              "block_stats: input must be time-ordered");
    out.push_back(block_statistics(aligned.subspan(i, static_cast<std::size_t>(m))));
  }
  return out;
}

/// Linear interpolation of a sequence onto n points over the same span.
inline std::vector<double> upsample_linear(std::span<const double> src,
                                           std::size_t n) {
  const std::size_t len = src.size();
  require(len >= 2, "upsample: need at least two source points");
  require(n >= len, "upsample: target length shorter than source");
  std::vector<double> out(n);
  const std::size_t den = n - 1;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t num = i * (len - 1);
    const std::size_t idx = num / den;
    const std::size_t rem = num % den;
    if (rem == 0) {
      out[i] = src[idx];
    } else {
      const double f = static_cast<double>(rem) / static_cast<double>(den);
      out[i] = src[idx] + f * (src[idx + 1] - src[idx]);
    }
  }
  return out;
}

inline CirStats upsample(const CirStats& stats, int n = 500) {
  require(n >= static_cast<int>(stats.mean.size()),
          "upsample: n shorter than the source");
  CirStats out = stats;
  out.mean = upsample_linear(stats.mean, static_cast<std::size_t>(n));
  out.variance = upsample_linear(stats.variance, static_cast<std::size_t>(n));
  return out;
}

struct Label {
  Task task = Task::Localization;
  Vec2 position;     // localization
  int class_id = -1;  // occupancy: count - 1; har: Activity
  bool valid = false;
};

inline int occupancy_count(const Label& l) { return l.class_id + 1; }

struct DataPoint {
  int links = 12;
  int c = 4;
  int length = 500;
  std::vector<float> tensor;  // (links, 2, c, length), row-major
  std::uint64_t t_end_us = 0;
  Label label;
  double mean_scale = 1.0;      // divisor applied to the mean plane
  double variance_scale = 1.0;  // divisor applied to the variance plane

  std::size_t index(int link, int plane, int block, int k) const {
    return ((static_cast<std::size_t>(link) * 2 + plane) * c + block) * length + k;
  }
  float at(int link, int plane, int block, int k) const {
    return tensor[index(link, plane, block, k)];
  }
  std::size_t size() const {
    return static_cast<std::size_t>(links) * 2 * c * length;
  }
};

/// A link had no block inside the datapoint window.
class IncompleteWindowError : public Error {
 public:
  using Error::Error;
};

/// Stacks the last C blocks of every link whose block time lies in
/// (t_end - window, t_end] into one normalized datapoint.
inline DataPoint build_datapoint(
    const std::map<LinkId, std::vector<CirStats>>& per_link_stats,
    const std::vector<LinkId>& links, std::uint64_t t_end_us, double window_s,
    int c, int length = 500) {
  require(window_s > 0, "window must be positive");
  require(c >= 1, "C must be at least 1");
  require(!links.empty(), "no links");
  DataPoint dp;
  dp.links = static_cast<int>(links.size());
  dp.c = c;
  dp.length = length;
  dp.t_end_us = t_end_us;
  dp.tensor.assign(dp.size(), 0.0f);
  const auto window_us = static_cast<std::uint64_t>(std::llround(window_s * 1e6));
  const std::uint64_t t_begin = t_end_us > window_us ? t_end_us - window_us : 0;

  std::vector<std::vector<double>> planes(2 * links.size() * c);
  double max_mean = 0.0, max_var = 0.0;
  for (std::size_t li = 0; li < links.size(); ++li) {
    auto it = per_link_stats.find(links[li]);
    std::vector<const CirStats*> chosen;
    if (it != per_link_stats.end()) {
      const auto& blocks = it->second;
      // Blocks are time-ordered; locate the window by binary search.
      auto hi = std::upper_bound(blocks.begin(), blocks.end(), t_end_us,
                                 [](std::uint64_t t, const CirStats& s) {
                                   return t < s.t_block_us;
                                 });
      auto lo = std::upper_bound(blocks.begin(), hi, t_begin,
                                 [](std::uint64_t t, const CirStats& s) {
                                   return t < s.t_block_us;
                                 });
      if (t_end_us <= window_us) lo = blocks.begin();
      for (auto b = lo; b != hi; ++b) chosen.push_back(&*b);
    }
    if (chosen.empty())
      throw IncompleteWindowError("link " + std::to_string(links[li].tx) + "->" +
                                  std::to_string(links[li].rx) +
                                  " has no block in the window");
    if (chosen.size() > static_cast<std::size_t>(c))
      chosen.erase(chosen.begin(), chosen.end() - c);
    while (chosen.size() < static_cast<std::size_t>(c))
      chosen.insert(chosen.begin(), chosen.front());
    for (int b = 0; b < c; ++b) {
      const auto& st = *chosen[static_cast<std::size_t>(b)];
      auto mean = st.mean.size() == static_cast<std::size_t>(length)
                      ? st.mean
                      : upsample_linear(st.mean, static_cast<std::size_t>(length));
      auto var = st.variance.size() == static_cast<std::size_t>(length)
                     ? st.variance
                     : upsample_linear(st.variance, static_cast<std::size_t>(length));
      for (double v : mean) max_mean = std::max(max_mean, std::abs(v));
      for (double v : var) max_var = std::max(max_var, std::abs(v));
      planes[(li * 2 + 0) * c + b] = std::move(mean);
      planes[(li * 2 + 1) * c + b] = std::move(var);
    }
  }
  dp.mean_scale = max_mean > 0 ? max_mean : 1.0;
  dp.variance_scale = max_var > 0 ? max_var : 1.0;
  for (std::size_t li = 0; li < links.size(); ++li) {
    for (int plane = 0; plane < 2; ++plane) {
      const double s = plane == 0 ? dp.mean_scale : dp.variance_scale;
      for (int b = 0; b < c; ++b) {
        const auto& src = planes[(li * 2 + plane) * c + b];
        float* dst = dp.tensor.data() + dp.index(static_cast<int>(li), plane, b, 0);
        for (int k = 0; k < length; ++k) {
          const double v = src[static_cast<std::size_t>(k)] / s;
          if (!std::isfinite(v)) throw NumericalError("non-finite datapoint value");
          dst[k] = static_cast<float>(v);
        }
      }
    }
  }
  return dp;
}

/// Attaches the ground truth nearest to the end of the datapoint window.
inline void label_datapoint(DataPoint& dp,
                            const std::vector<Trajectory>& trajectories,
                            Task task) {
  require(!trajectories.empty(), "labelling needs ground truth");
  const double t = static_cast<double>(dp.t_end_us) * 1e-6;
  const auto states = ground_truth_at(trajectories, t);
  dp.label = Label{};
  dp.label.task = task;
  switch (task) {
    case Task::Localization:
      if (states.size() != 1)
        throw ValidationError("localization labels need exactly one person, got " +
                              std::to_string(states.size()));
      dp.label.position = states.front().position;
      break;
    case Task::Occupancy:
      dp.label.class_id = static_cast<int>(states.size()) - 1;
      break;
    case Task::Har:
      dp.label.class_id = static_cast<int>(states.front().activity);
      break;
  }
  dp.label.valid = true;
}

/// Streaming per-link block builder: feed records in time order, collect
/// CirStats per link.
class BlockAccumulator {
 public:
  explicit BlockAccumulator(PreprocessConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  void add(const CirRecord& r) {
    const LinkId link{r.tx_id, r.rx_id};
    auto& q = pending_[link];
    const auto aligned = align(std::span<const CirRecord>(&r, 1), cfg_);
    q.buffer.push_back(aligned.front());
    if (static_cast<int>(q.buffer.size()) == cfg_.m) {
      std::vector<AlignedCir> block(q.buffer.begin(), q.buffer.end());
      stats_[link].push_back(block_statistics(block));
      for (int i = 0; i < cfg_.effective_stride(); ++i) q.buffer.pop_front();
    }
    first_us_ = std::min(first_us_, r.timestamp_us);
    last_us_ = std::max(last_us_, r.timestamp_us);
    ++records_;
  }

  const std::map<LinkId, std::vector<CirStats>>& stats() const { return stats_; }
  std::uint64_t first_timestamp_us() const { return first_us_; }
  std::uint64_t last_timestamp_us() const { return last_us_; }
  std::size_t records() const { return records_; }

 private:
  struct Queue {
    std::deque<AlignedCir> buffer;
  };
  PreprocessConfig cfg_;
  std::map<LinkId, Queue> pending_;
  std::map<LinkId, std::vector<CirStats>> stats_;
  std::uint64_t first_us_ = UINT64_MAX;
  std::uint64_t last_us_ = 0;
  std::size_t records_ = 0;
};

struct DatapointSummary {
  std::size_t built = 0;
  std::size_t incomplete = 0;
};

/// Datapoints on a hop grid t_end = first + window + k * hop covering the
/// accumulated records. Labels are attached when trajectories are given.
inline std::vector<DataPoint> make_datapoints(
    const BlockAccumulator& acc, const std::vector<LinkId>& links,
    const PreprocessConfig& cfg, const std::vector<Trajectory>* truth,
    std::optional<Task> task, DatapointSummary* summary = nullptr) {
  std::vector<DataPoint> out;
  if (acc.records() == 0) return out;
  const auto window_us = static_cast<std::uint64_t>(std::llround(cfg.window_s * 1e6));
  const auto hop_us = static_cast<std::uint64_t>(std::llround(cfg.hop_s * 1e6));
  DatapointSummary local;
  for (std::uint64_t t = acc.first_timestamp_us() + window_us;
       t <= acc.last_timestamp_us(); t += hop_us) {
    try {
      auto dp = build_datapoint(acc.stats(), links, t, cfg.window_s, cfg.c,
                                cfg.upsample_len);
      if (truth && task) label_datapoint(dp, *truth, *task);
      out.push_back(std::move(dp));
      ++local.built;
    } catch (const IncompleteWindowError&) {
      ++local.incomplete;
    }
  }
  if (summary) *summary = local;
  return out;
}

// Datapoint file: header then fixed-size entries, all little-endian.
//   header (48 bytes): "UWBD", version u16, task u16, links u32, planes u32,
//     c u32, length u32, config hash u64, count u64, reserved u64
//   entry: t_end_us u64, label x f64, label y f64, class_id i64,
//     mean_scale f64, variance_scale f64, tensor f64[links*2*c*length]

inline constexpr std::size_t kDatapointHeaderBytes = 48;
inline constexpr std::uint16_t kDatapointVersion = 1;

namespace detail {

inline void put_f64(std::uint8_t* p, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  le::put64(p, bits);
}

inline double get_f64(const std::uint8_t* p) {
  const std::uint64_t bits = le::get64(p);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void put32(std::uint8_t* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

inline std::uint32_t get32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{p[i]} << (8 * i);
  return v;
}

}  // namespace detail

struct DatapointFileHeader {
  Task task = Task::Localization;
  int links = 12;
  int c = 4;
  int length = 500;
  std::uint64_t config_hash = 0;
  std::uint64_t count = 0;
};

inline void write_datapoints(const std::string& path, Task task,
                             std::uint64_t config_hash,
                             std::span<const DataPoint> points) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot create datapoint file: " + path);
  DatapointFileHeader h;
  h.task = task;
  if (!points.empty()) {
    h.links = points.front().links;
    h.c = points.front().c;
    h.length = points.front().length;
  }
  std::array<std::uint8_t, kDatapointHeaderBytes> hb{};
  std::memcpy(hb.data(), "UWBD", 4);
  le::put16(hb.data() + 4, kDatapointVersion);
  le::put16(hb.data() + 6, static_cast<std::uint16_t>(task));
  detail::put32(hb.data() + 8, static_cast<std::uint32_t>(h.links));
  detail::put32(hb.data() + 12, 2);
  detail::put32(hb.data() + 16, static_cast<std::uint32_t>(h.c));
  detail::put32(hb.data() + 20, static_cast<std::uint32_t>(h.length));
  le::put64(hb.data() + 24, config_hash);
  le::put64(hb.data() + 32, points.size());
  out.write(reinterpret_cast<const char*>(hb.data()), hb.size());
  std::vector<std::uint8_t> buf;
  for (const auto& dp : points) {
    require(dp.links == h.links && dp.c == h.c && dp.length == h.length,
            "datapoints with mixed shapes");
    buf.assign(48 + 8 * dp.size(), 0);
    std::uint8_t* p = buf.data();
    le::put64(p, dp.t_end_us);
    detail::put_f64(p + 8, dp.label.position.x);
    detail::put_f64(p + 16, dp.label.position.y);
    le::put64(p + 24, static_cast<std::uint64_t>(static_cast<std::int64_t>(dp.label.class_id)));
    detail::put_f64(p + 32, dp.mean_scale);
    detail::put_f64(p + 40, dp.variance_scale);
    p += 48;
    for (float v : dp.tensor) {
      detail::put_f64(p, static_cast<double>(v));
      p += 8;
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
  }
  if (!out) throw Error("datapoint write failed: " + path);
}

inline DatapointFileHeader read_datapoint_header(std::istream& in) {
  std::array<std::uint8_t, kDatapointHeaderBytes> hb{};
  in.read(reinterpret_cast<char*>(hb.data()), hb.size());
  if (in.gcount() != static_cast<std::streamsize>(hb.size()) ||
      std::memcmp(hb.data(), "UWBD", 4) != 0)
    throw FormatError("not a datapoint file (bad magic)");
  if (le::get16(hb.data() + 4) != kDatapointVersion)
    throw FormatError("unsupported datapoint file version");
  DatapointFileHeader h;
  const auto task = le::get16(hb.data() + 6);
  if (task > 2) throw FormatError("datapoint file: bad task");
  h.task = static_cast<Task>(task);
  h.links = static_cast<int>(detail::get32(hb.data() + 8));
  if (detail::get32(hb.data() + 12) != 2)
    throw FormatError("datapoint file: plane count must be 2");
  h.c = static_cast<int>(detail::get32(hb.data() + 16));
  h.length = static_cast<int>(detail::get32(hb.data() + 20));
  h.config_hash = le::get64(hb.data() + 24);
  h.count = le::get64(hb.data() + 32);
  return h;
}

struct DatapointFile {
  DatapointFileHeader header;
  std::vector<DataPoint> points;
};

inline DatapointFile read_datapoints(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open datapoint file: " + path);
  DatapointFile f;
  f.header = read_datapoint_header(in);
  const auto& h = f.header;
  const std::size_t n = static_cast<std::size_t>(h.links) * 2 * h.c * h.length;
  std::vector<std::uint8_t> buf(48 + 8 * n);
  for (std::uint64_t i = 0; i < h.count; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
      throw FormatError("datapoint file truncated");
    DataPoint dp;
    dp.links = h.links;
    dp.c = h.c;
    dp.length = h.length;
    const std::uint8_t* p = buf.data();
    dp.t_end_us = le::get64(p);
    dp.label.task = h.task;
    dp.label.position = {detail::get_f64(p + 8), detail::get_f64(p + 16)};
    dp.label.class_id = static_cast<int>(static_cast<std::int64_t>(le::get64(p + 24)));
    dp.label.valid = true;
    dp.mean_scale = detail::get_f64(p + 32);
    dp.variance_scale = detail::get_f64(p + 40);
    p += 48;
    dp.tensor.resize(n);
    for (std::size_t k = 0; k < n; ++k, p += 8)
      dp.tensor[k] = static_cast<float>(detail::get_f64(p));
    f.points.push_back(std::move(dp));
  }
  return f;
}

}  // namespace uwbsense
