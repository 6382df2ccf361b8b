#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

#include "uwbsense/recordio.hpp"

using namespace uwbsense;
namespace fs = std::filesystem;

namespace {

CirRecord random_record(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u16(0, 0xffff), i16(-32768, 32767), frac(0, 63);
  CirRecord r;
  r.seq = static_cast<std::uint16_t>(u16(rng));
  r.fp_index = static_cast<std::uint16_t>(u16(rng));
  r.fp_frac = static_cast<std::uint16_t>(frac(rng));
  r.preamble_count = static_cast<std::uint16_t>(u16(rng));
  r.tx_id = static_cast<std::uint16_t>(u16(rng));
  do {
    r.rx_id = static_cast<std::uint16_t>(u16(rng));
  } while (r.rx_id == r.tx_id);
  r.timestamp_us = rng() & kTimestampMask;
  for (auto& s : r.samples) {
    s.re = static_cast<std::int16_t>(i16(rng));
    s.im = static_cast<std::int16_t>(i16(rng));
  }
  return r;
}

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("uwbsense_test_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(Record, SpecificFieldOffsets) {
  CirRecord r;
  r.seq = 0x0102;
  r.fp_index = 745;
  r.fp_frac = 37;
  r.preamble_count = 256;
  r.tx_id = 1;
  r.rx_id = 2;
  r.timestamp_us = 0x0000a1b2c3d4e5f6ULL;
  r.samples[0] = {-1, 2};
  r.samples[57] = {32767, -32768};
  const auto b = encode_record(r);
  EXPECT_EQ(b.size(), 250u);
  EXPECT_EQ(b[0], 0x02);
  EXPECT_EQ(b[1], 0x01);
  EXPECT_EQ(b[2], 745 & 0xff);
  EXPECT_EQ(b[3], 745 >> 8);
  EXPECT_EQ(b[4], 37);
  EXPECT_EQ(b[7], 1);  // 256 little-endian
  EXPECT_EQ(b[8], 1);
  EXPECT_EQ(b[10], 2);
  const std::uint8_t ts[6] = {0xf6, 0xe5, 0xd4, 0xc3, 0xb2, 0xa1};
  for (int i = 0; i < 6; ++i) EXPECT_EQ(b[12 + i], ts[i]);
  EXPECT_EQ(b[18], 0xff);
  EXPECT_EQ(b[19], 0xff);
  EXPECT_EQ(b[20], 0x02);
  EXPECT_EQ(b[21], 0x00);
  EXPECT_EQ(b[246], 0xff);
  EXPECT_EQ(b[247], 0x7f);
  EXPECT_EQ(b[248], 0x00);
  EXPECT_EQ(b[249], 0x80);
  EXPECT_EQ(decode_record(b), r);
}

TEST(Record, FuzzRoundTrip) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 1000; ++i) {
    const auto r = random_record(rng);
    const auto b = encode_record(r);
    ASSERT_EQ(b.size(), kRecordBytes);
    ASSERT_EQ(decode_record(b), r);
    ASSERT_EQ(encode_record(decode_record(b)), b);
  }
}

TEST(Record, EncodeRejectsInvalidFields) {
  CirRecord r;
  r.fp_frac = 64;
  EXPECT_THROW(encode_record(r), FormatError);
  r.fp_frac = 0;
  r.rx_id = r.tx_id;
  EXPECT_THROW(encode_record(r), FormatError);
  r.rx_id = 3;
  r.timestamp_us = kTimestampMask + 1;
  EXPECT_THROW(encode_record(r), FormatError);
}

TEST(Record, DecodeRejectsWrongLengthAndCorruptFields) {
  CirRecord r;
  auto b = encode_record(r);
  std::vector<std::uint8_t> short_buf(b.begin(), b.begin() + 249);
  EXPECT_THROW(decode_record(short_buf), FormatError);
  std::vector<std::uint8_t> long_buf(251, 0);
  EXPECT_THROW(decode_record(long_buf), FormatError);
  b[4] = 64;
  EXPECT_THROW(decode_record(b), FormatError);
  b = encode_record(r);
  b[10] = b[8];
  b[11] = b[9];
  EXPECT_THROW(decode_record(b), FormatError);
}

TEST(Capture, WriteReadRoundTrip) {
  const auto path = temp_file("cap.uwbc");
  std::mt19937_64 rng(5);
  std::vector<CirRecord> recs;
  for (int i = 0; i < 300; ++i) recs.push_back(random_record(rng));
  capture_write(path.string(), recs, 0xdeadbeefcafef00dULL);
  EXPECT_EQ(fs::file_size(path), kCaptureHeaderBytes + 300 * kRecordBytes);
  const auto back = capture_read(path.string());
  EXPECT_EQ(back.radio_hash, 0xdeadbeefcafef00dULL);
  EXPECT_EQ(back.truncated_bytes, 0u);
  EXPECT_EQ(back.records, recs);
  fs::remove(path);
}

TEST(Capture, TruncatedTailIsReported) {
  const auto path = temp_file("trunc.uwbc");
  std::mt19937_64 rng(6);
  std::vector<CirRecord> recs = {random_record(rng), random_record(rng)};
  capture_write(path.string(), recs, 1);
  fs::resize_file(path, fs::file_size(path) - 100);
  const auto back = capture_read(path.string());
  ASSERT_EQ(back.records.size(), 1u);
  EXPECT_EQ(back.records[0], recs[0]);
  EXPECT_EQ(back.truncated_bytes, 150u);
  fs::remove(path);
}

TEST(Capture, RejectsBadMagicAndMissingFile) {
  const auto path = temp_file("bad.uwbc");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACAPTURE_____";
  }
  EXPECT_THROW(CaptureReader(path.string()), FormatError);
  fs::remove(path);
  EXPECT_THROW(CaptureReader("/nonexistent/dir/x.uwbc"), ValidationError);
}
