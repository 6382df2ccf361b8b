#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace uwbsense {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: violated precondition, malformed config, unknown id.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Query outside the covered range (e.g. a timestamp past the trajectory end).
class OutOfRangeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Wire or file format violation: wrong length, bad magic, corrupt field.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Leading-edge detector found no sample above threshold.
class DetectionFailure : public Error {
 public:
  using Error::Error;
};

/// Degenerate numeric input or divergence during optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ValidationError(what);
}

/// Estimation target of a dataset or model.
enum class Task : int { Localization = 0, Occupancy = 1, Har = 2 };

/// Output width of the estimator head for a task.
inline int task_outputs(Task t) {
  switch (t) {
    case Task::Localization: return 2;
    case Task::Occupancy: return 4;
    case Task::Har: return 3;
  }
  return 0;
}

inline bool is_classification(Task t) { return t != Task::Localization; }

inline const char* to_string(Task t) {
  switch (t) {
    case Task::Localization: return "localization";
    case Task::Occupancy: return "occupancy";
    case Task::Har: return "har";
  }
  return "?";
}

inline Task task_from_string(const std::string& s) {
  if (s == "localization") return Task::Localization;
  if (s == "occupancy") return Task::Occupancy;
  if (s == "har") return Task::Har;
  throw ValidationError("unknown task: " + s);
}

/// Speed of light in meters per nanosecond.
inline constexpr double kSpeedOfLight = 0.299792458;
inline constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;

  double norm() const { return std::hypot(x, y); }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

/// SplitMix64 step; used to derive independent substream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for a named substream of `master`. Order of tags matters.
template <class... Tags>
std::uint64_t derive_seed(std::uint64_t master, Tags... tags) {
  std::uint64_t s = splitmix64(master);
  ((s = splitmix64(s ^ static_cast<std::uint64_t>(tags))), ...);
  return s;
}

/// FNV-1a, 64-bit.
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace uwbsense
