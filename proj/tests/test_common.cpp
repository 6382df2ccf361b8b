#include <gtest/gtest.h>

#include "uwbsense/common.hpp"
#include "uwbsense/kvconfig.hpp"

using namespace uwbsense;

TEST(KvConfig, ParsesKeysCommentsAndWhitespace) {
  auto kv = KvConfig::parse(
      "# scene\n"
      "room_width = 7.5\n"
      "  anchor.0.x=1.25   # trailing comment\n"
      "\n"
      "name = hello world\n");
  EXPECT_DOUBLE_EQ(kv.get_double("room_width", 0), 7.5);
  EXPECT_DOUBLE_EQ(kv.get_double("anchor.0.x", 0), 1.25);
  EXPECT_EQ(kv.get_string("name", ""), "hello world");
  EXPECT_EQ(kv.get_int("missing", 42), 42);
}

TEST(KvConfig, RejectsMalformedLines) {
  EXPECT_THROW(KvConfig::parse("no equals sign\n"), ValidationError);
  EXPECT_THROW(KvConfig::parse(" = 3\n"), ValidationError);
}

TEST(KvConfig, RejectsBadNumbersAndBooleans) {
  auto kv = KvConfig::parse("a = 1.5x\nb = maybe\nc = -3\n");
  EXPECT_THROW(kv.get_double("a", 0), ValidationError);
  EXPECT_THROW(kv.get_bool("b", false), ValidationError);
  EXPECT_THROW(kv.get_u64("c", 0), ValidationError);
}

TEST(KvConfig, CanonicalTextRoundTrips) {
  KvConfig kv;
  kv.set("z", "1");
  kv.set("a", format_double(0.1));
  const auto text = kv.to_string();
  EXPECT_EQ(text, "a = 0.1\nz = 1\n");
  EXPECT_EQ(KvConfig::parse(text).to_string(), text);
}

TEST(FormatDouble, ShortestRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 6489.6, 1e-300, -2.5e17}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(Seeds, DeriveSeedSeparatesStreams) {
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
}

TEST(Seeds, Fnv1aKnownVector) {
  // Published FNV-1a 64-bit test vectors.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Task, NamesRoundTrip) {
  for (Task t : {Task::Localization, Task::Occupancy, Task::Har})
    EXPECT_EQ(task_from_string(to_string(t)), t);
  EXPECT_THROW(task_from_string("counting"), ValidationError);
  EXPECT_EQ(task_outputs(Task::Localization), 2);
  EXPECT_EQ(task_outputs(Task::Occupancy), 4);
  EXPECT_EQ(task_outputs(Task::Har), 3);
}
