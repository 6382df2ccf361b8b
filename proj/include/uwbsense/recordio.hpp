#pragma once

// 250-byte CIR record codec and the append-only capture container.
//
// Record layout, all fields little-endian:
//   offset  size  field
//        0     2  seq
//        2     2  fp_index
//        4     2  fp_frac (0..63)
//        6     2  preamble_count
//        8     2  tx_id
//       10     2  rx_id
//       12     6  timestamp_us (48-bit)
//       18   232  58 x (real i16, imag i16)
//
// Capture header (16 bytes): "UWBC", version u16, radio-config hash u64,
// reserved u16 (zero). Records follow back to back.

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uwbsense/channel.hpp"
#include "uwbsense/common.hpp"

namespace uwbsense {

inline constexpr std::size_t kRecordBytes = 250;
inline constexpr std::size_t kRecordMetaBytes = 18;
inline constexpr std::size_t kCaptureHeaderBytes = 16;
inline constexpr std::uint16_t kCaptureVersion = 1;
inline constexpr std::uint64_t kTimestampMask = (std::uint64_t{1} << 48) - 1;

struct CirRecord {
  std::uint16_t seq = 0;
  std::uint16_t fp_index = 0;
  std::uint16_t fp_frac = 0;
  std::uint16_t preamble_count = 0;
  std::uint16_t tx_id = 0;
  std::uint16_t rx_id = 1;
  std::uint64_t timestamp_us = 0;  // 48 significant bits
  std::array<IqSample, kCirSamples> samples{};

  friend bool operator==(const CirRecord&, const CirRecord&) = default;
};

using RecordBytes = std::array<std::uint8_t, kRecordBytes>;

namespace le {

inline void put16(std::uint8_t* p, std::uint16_t v) {
  p[0] = static_cast<std::uint8_t>(v);
  p[1] = static_cast<std::uint8_t>(v >> 8);
}

inline void put48(std::uint8_t* p, std::uint64_t v) {
  for (int i = 0; i < 6; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

inline void put64(std::uint8_t* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

inline std::uint16_t get16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint64_t get48(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 6; ++i) v |= std::uint64_t{p[i]} << (8 * i);
  return v;
}

inline std::uint64_t get64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{p[i]} << (8 * i);
  return v;
}

}  // namespace le

inline RecordBytes encode_record(const CirRecord& r) {
  if (r.fp_frac >= kFracSteps)
    throw FormatError("fp_frac out of range: " + std::to_string(r.fp_frac));
  if (r.tx_id == r.rx_id) throw FormatError("tx_id equals rx_id");
  if (r.timestamp_us > kTimestampMask)
    throw FormatError("timestamp exceeds 48 bits");
  RecordBytes out{};
  std::uint8_t* p = out.data();
  le::put16(p + 0, r.seq);
  le::put16(p + 2, r.fp_index);
  le::put16(p + 4, r.fp_frac);
  le::put16(p + 6, r.preamble_count);
  le::put16(p + 8, r.tx_id);
  le::put16(p + 10, r.rx_id);
  le::put48(p + 12, r.timestamp_us);
  p += kRecordMetaBytes;
  for (const auto& s : r.samples) {
    le::put16(p, static_cast<std::uint16_t>(s.re));
    le::put16(p + 2, static_cast<std::uint16_t>(s.im));
    p += 4;
  }
  return out;
}

inline CirRecord decode_record(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kRecordBytes)
    throw FormatError("record must be 250 bytes, got " +
                      std::to_string(bytes.size()));
  const std::uint8_t* p = bytes.data();
  CirRecord r;
  r.seq = le::get16(p + 0);
  r.fp_index = le::get16(p + 2);
  r.fp_frac = le::get16(p + 4);
  r.preamble_count = le::get16(p + 6);
  r.tx_id = le::get16(p + 8);
  r.rx_id = le::get16(p + 10);
  r.timestamp_us = le::get48(p + 12);
  if (r.fp_frac >= kFracSteps)
    throw FormatError("corrupt record: fp_frac " + std::to_string(r.fp_frac));
  if (r.tx_id == r.rx_id) throw FormatError("corrupt record: tx_id == rx_id");
  p += kRecordMetaBytes;
  for (auto& s : r.samples) {
    s.re = static_cast<std::int16_t>(le::get16(p));
    s.im = static_cast<std::int16_t>(le::get16(p + 2));
    p += 4;
  }
  return r;
}

/// Appends records to a capture file; one writer per file.
class CaptureWriter {
 public:
  /// Creates (truncates) `path` and writes the header.
  CaptureWriter(const std::string& path, std::uint64_t radio_hash)
      : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw ValidationError("cannot create capture file: " + path);
    std::array<std::uint8_t, kCaptureHeaderBytes> h{};
    std::memcpy(h.data(), "UWBC", 4);
    le::put16(h.data() + 4, kCaptureVersion);
    le::put64(h.data() + 6, radio_hash);
    out_.write(reinterpret_cast<const char*>(h.data()), h.size());
  }

  void write(const CirRecord& r) {
    const auto bytes = encode_record(r);
    out_.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    if (!out_) throw Error("capture write failed");
    ++count_;
  }

  std::size_t count() const { return count_; }

  void close() { out_.close(); }

 private:
  std::ofstream out_;
  std::size_t count_ = 0;
};

/// Streams records from a capture file without loading it whole.
class CaptureReader {
 public:
  explicit CaptureReader(const std::string& path)
      : in_(path, std::ios::binary) {
    if (!in_) throw ValidationError("cannot open capture file: " + path);
    std::array<std::uint8_t, kCaptureHeaderBytes> h{};
    in_.read(reinterpret_cast<char*>(h.data()), h.size());
    if (in_.gcount() != static_cast<std::streamsize>(h.size()) ||
        std::memcmp(h.data(), "UWBC", 4) != 0)
      throw FormatError("not a capture file (bad magic): " + path);
    version_ = le::get16(h.data() + 4);
    if (version_ != kCaptureVersion)
      throw FormatError("unsupported capture version " + std::to_string(version_));
    radio_hash_ = le::get64(h.data() + 6);
  }

  /// Next record, or nullopt at end of file. A trailing partial record is
  /// dropped and reported through truncated_bytes().
  std::optional<CirRecord> next() {
    RecordBytes buf;
    in_.read(reinterpret_cast<char*>(buf.data()), buf.size());
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got == kRecordBytes) return decode_record(buf);
    truncated_bytes_ += got;
    return std::nullopt;
  }

  std::uint64_t radio_hash() const { return radio_hash_; }
  std::uint16_t version() const { return version_; }
  std::size_t truncated_bytes() const { return truncated_bytes_; }
  bool truncated() const { return truncated_bytes_ != 0; }

 private:
  std::ifstream in_;
  std::uint16_t version_ = 0;
  std::uint64_t radio_hash_ = 0;
  std::size_t truncated_bytes_ = 0;
};

inline void capture_write(const std::string& path,
                          std::span<const CirRecord> records,
                          std::uint64_t radio_hash) {
  CaptureWriter w(path, radio_hash);
  for (const auto& r : records) w.write(r);
}

struct CaptureContents {
  std::uint64_t radio_hash = 0;
  std::vector<CirRecord> records;
  std::size_t truncated_bytes = 0;
};

inline CaptureContents capture_read(const std::string& path) {
  CaptureReader reader(path);
  CaptureContents out;
  out.radio_hash = reader.radio_hash();
  while (auto r = reader.next()) out.records.push_back(*r);
  out.truncated_bytes = reader.truncated_bytes();
  return out;
}

}  // namespace uwbsense
