#pragma once

// Multipath CIR synthesis: image-method path enumeration plus band-limited
// rendering, leading-edge detection and DW1000-style windowing/quantization.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "uwbsense/common.hpp"
#include "uwbsense/kvconfig.hpp"
#include "uwbsense/scene.hpp"

namespace uwbsense {

inline constexpr std::size_t kCirSamples = 58;
inline constexpr int kFracSteps = 64;

using cdouble = std::complex<double>;

struct RadioConfig {
  int channel_number = 5;
  double carrier_frequency_mhz = 6489.6;
  double bandwidth_mhz = 499.2;
  // CIR accumulator taps are spaced at half the chip period, 1/(2*499.2 MHz).
  double sample_spacing_ns = 1000.0 / 998.4;
  int preamble_length = 256;
  int window_length = static_cast<int>(kCirSamples);
  int pre_fp_samples = 3;
  int buffer_length = 1016;
  double rolloff = 0.25;
  double detection_factor = 6.0;  // threshold in units of the noise floor
  double full_scale_fraction = 0.25;
  double pulse_support_ns = 40.0;

  void validate() const {
    require(carrier_frequency_mhz > 0 && bandwidth_mhz > 0,
            "carrier and bandwidth must be positive");
    require(sample_spacing_ns > 0, "sample_spacing must be positive");
    require(window_length == static_cast<int>(kCirSamples),
            "window_length must be 58");
    require(pre_fp_samples >= 0 && pre_fp_samples < window_length,
            "pre_fp_samples out of range");
    require(rolloff >= 0 && rolloff <= 1, "rolloff must lie in [0, 1]");
    require(full_scale_fraction > 0 && full_scale_fraction <= 1,
            "full_scale_fraction must lie in (0, 1]");
    require(preamble_length > 0, "preamble_length must be positive");
  }

  static RadioConfig from_kv(const KvConfig& kv) {
    RadioConfig c;
    c.channel_number = static_cast<int>(kv.get_int("radio.channel", c.channel_number));
    c.carrier_frequency_mhz =
        kv.get_double("radio.carrier_frequency_mhz", c.carrier_frequency_mhz);
    c.bandwidth_mhz = kv.get_double("radio.bandwidth_mhz", c.bandwidth_mhz);
    c.sample_spacing_ns =
        kv.get_double("radio.sample_spacing_ns", c.sample_spacing_ns);
    c.preamble_length =
        static_cast<int>(kv.get_int("radio.preamble_length", c.preamble_length));
    c.window_length =
        static_cast<int>(kv.get_int("radio.window_length", c.window_length));
    c.pre_fp_samples =
        static_cast<int>(kv.get_int("radio.pre_fp_samples", c.pre_fp_samples));
    c.rolloff = kv.get_double("radio.rolloff", c.rolloff);
    c.detection_factor =
        kv.get_double("radio.detection_factor", c.detection_factor);
    c.full_scale_fraction =
        kv.get_double("radio.full_scale_fraction", c.full_scale_fraction);
    c.validate();
    return c;
  }

  void write_kv(KvConfig& kv) const {
    kv.set("radio.channel", std::to_string(channel_number));
    kv.set("radio.carrier_frequency_mhz", format_double(carrier_frequency_mhz));
    kv.set("radio.bandwidth_mhz", format_double(bandwidth_mhz));
    kv.set("radio.sample_spacing_ns", format_double(sample_spacing_ns));
    kv.set("radio.preamble_length", std::to_string(preamble_length));
    kv.set("radio.window_length", std::to_string(window_length));
    kv.set("radio.pre_fp_samples", std::to_string(pre_fp_samples));
    kv.set("radio.rolloff", format_double(rolloff));
    kv.set("radio.detection_factor", format_double(detection_factor));
    kv.set("radio.full_scale_fraction", format_double(full_scale_fraction));
  }

  std::uint64_t hash() const {
    KvConfig kv;
    write_kv(kv);
    return fnv1a64(kv.to_string());
  }
};

enum class PathKind { LineOfSight, WallReflection, PersonScatter };

struct PathComponent {
  double delay_ns = 0.0;
  cdouble gain{0.0, 0.0};
  PathKind kind = PathKind::LineOfSight;
  int order = 0;       // reflection order for WallReflection
  int person_id = -1;  // for PersonScatter
};

struct IqSample {
  std::int16_t re = 0;
  std::int16_t im = 0;
  friend bool operator==(IqSample, IqSample) = default;
};

struct RawCir {
  std::array<IqSample, kCirSamples> samples{};
  int fp_index = 0;
  int fp_frac = 0;
  int preamble_count = 0;
  double noise_floor = 0.0;  // RMS noise magnitude, digital units
  friend bool operator==(const RawCir&, const RawCir&) = default;
};

/// Unit-energy raised-cosine pulse for the given bandwidth and roll-off,
/// evaluated at t nanoseconds.
inline double pulse(double t_ns, double bandwidth_mhz, double rolloff) {
  const double b = bandwidth_mhz * 1e-3;  // GHz
  const double x = b * t_ns;
  const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(kPi * x) / (kPi * x);
  const double q = 2.0 * rolloff * x;
  double taper;
  if (std::abs(std::abs(q) - 1.0) < 1e-9)
    taper = kPi / 4.0;
  else
    taper = std::cos(kPi * rolloff * x) / (1.0 - q * q);
  const double energy_scale = std::sqrt(b / (1.0 - rolloff / 4.0));
  return energy_scale * sinc * taper;
}

namespace detail {

inline cdouble carrier_phase(double delay_ns, double carrier_mhz) {
  const double phi = -2.0 * kPi * std::fmod(carrier_mhz * 1e-3 * delay_ns, 1.0);
  return {std::cos(phi), std::sin(phi)};
}

inline void push_wall_path(std::vector<PathComponent>& out, Vec2 image, Vec2 rx,
                           int order, double reflectivity, double carrier_mhz) {
  const double len = distance(image, rx);
  const double delay = len / kSpeedOfLight;
  const double mag = std::pow(reflectivity, order) / len;
  out.push_back({delay, mag * carrier_phase(delay, carrier_mhz),
                 PathKind::WallReflection, order, -1});
}

}  // namespace detail

/// Propagation paths between two anchors: line of sight, image-method wall
/// reflections up to `max_order`, and one bistatic scatter path per person.
/// Sorted by delay.
inline std::vector<PathComponent> enumerate_paths(
    const Scene& scene, int tx, int rx, const std::vector<PersonState>& persons,
    int max_order, const RadioConfig& radio = {}) {
  require(tx != rx, "tx and rx must differ");
  require(max_order >= 0 && max_order <= 2, "max_order must be 0, 1 or 2");
  const Vec2 a = scene.anchor(tx).position;
  const Vec2 b = scene.anchor(rx).position;
  const double fc = radio.carrier_frequency_mhz;
  const double w = scene.width(), l = scene.length();
  const double refl = scene.reflectivity();

  std::vector<PathComponent> out;
  {
    const double d = distance(a, b);
    const double delay = d / kSpeedOfLight;
    out.push_back({delay, (1.0 / d) * detail::carrier_phase(delay, fc),
                   PathKind::LineOfSight, 0, -1});
  }
  if (max_order >= 1) {
    for (Vec2 img : {Vec2{-a.x, a.y}, Vec2{2 * w - a.x, a.y}, Vec2{a.x, -a.y},
                     Vec2{a.x, 2 * l - a.y}})
      detail::push_wall_path(out, img, b, 1, refl, fc);
  }
  if (max_order >= 2) {
    // Distinct second-order images of a rectangle: two same-axis double
    // reflections per axis plus the four corner images.
    for (Vec2 img :
         {Vec2{a.x + 2 * w, a.y}, Vec2{a.x - 2 * w, a.y}, Vec2{a.x, a.y + 2 * l},
          Vec2{a.x, a.y - 2 * l}, Vec2{-a.x, -a.y}, Vec2{-a.x, 2 * l - a.y},
          Vec2{2 * w - a.x, -a.y}, Vec2{2 * w - a.x, 2 * l - a.y}})
      detail::push_wall_path(out, img, b, 2, refl, fc);
  }
  for (std::size_t i = 0; i < persons.size(); ++i) {
    const auto& p = persons[i];
    const double d1 = std::max(distance(a, p.position), 0.1);
    const double d2 = std::max(distance(p.position, b), 0.1);
    const double delay = (d1 + d2) / kSpeedOfLight;
    out.push_back({delay, (p.rcs / (d1 * d2)) * detail::carrier_phase(delay, fc),
                   PathKind::PersonScatter, 0, static_cast<int>(i)});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const PathComponent& x, const PathComponent& y) {
                     return x.delay_ns < y.delay_ns;
                   });
  return out;
}

/// Noise-free continuous CIR sampled at taps first_tap .. first_tap+count-1
/// (tap k sits at k * sample_spacing ns). Linear in the path gains.
inline std::vector<cdouble> render_cir(const std::vector<PathComponent>& paths,
                                       const RadioConfig& cfg, long first_tap,
                                       std::size_t count) {
  std::vector<cdouble> out(count, cdouble{0.0, 0.0});
  const double ts = cfg.sample_spacing_ns;
  for (const auto& p : paths) {
    const long lo = std::max<long>(
        first_tap,
        static_cast<long>(std::floor((p.delay_ns - cfg.pulse_support_ns) / ts)));
    const long hi = std::min<long>(
        first_tap + static_cast<long>(count) - 1,
        static_cast<long>(std::ceil((p.delay_ns + cfg.pulse_support_ns) / ts)));
    for (long k = lo; k <= hi; ++k) {
      const double v = pulse(static_cast<double>(k) * ts - p.delay_ns,
                             cfg.bandwidth_mhz, cfg.rolloff);
      out[static_cast<std::size_t>(k - first_tap)] += v * p.gain;
    }
  }
  return out;
}

/// Knobs of synthesize_cir that are not radio settings.
struct SynthOptions {
  bool add_noise = true;
  bool fp_dither = true;  // ±1 step jitter on the reported fractional FP
  /// Overrides the strongest-path full-scale mapping (digital units per unit
  /// amplitude) when set.
  std::optional<double> fixed_scale;
  /// Forces the integer first-path index when set (skips detection).
  std::optional<int> fixed_fp_index;
};

namespace detail {

/// Circularly symmetric complex Gaussian with E|n|^2 = 1, a pure function of
/// (key, tap).
inline cdouble unit_noise(std::uint64_t key, long tap) {
  const std::uint64_t h1 = splitmix64(key ^ static_cast<std::uint64_t>(tap) * 0x9e3779b97f4a7c15ULL);
  const std::uint64_t h2 = splitmix64(h1);
  const double u1 = (static_cast<double>(h1 >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = static_cast<double>(h2 >> 11) * 0x1.0p-53;
  const double r = std::sqrt(-std::log(u1));  // E r^2 = 1
  return {r * std::cos(2 * kPi * u2), r * std::sin(2 * kPi * u2)};
}

inline std::int16_t quantize(double v) {
  const double r = std::nearbyint(v);
  return static_cast<std::int16_t>(std::clamp(r, -32768.0, 32767.0));
}

}  // namespace detail

/// Renders, detects the first path, windows and quantizes one reception.
/// Consumes exactly one draw from `rng` for the noise stream key and, when
/// dithering, one more for the FP jitter.
inline RawCir synthesize_cir(const std::vector<PathComponent>& paths,
                             const RadioConfig& cfg, double snr_db,
                             std::mt19937_64& rng, const SynthOptions& opt = {}) {
  require(!paths.empty(), "synthesize_cir needs at least one path");
  require(std::isfinite(snr_db), "snr_db must be finite");
  cfg.validate();

  double strongest = 0.0;
  double earliest = std::numeric_limits<double>::infinity();
  double latest = -std::numeric_limits<double>::infinity();
  for (const auto& p : paths) {
    strongest = std::max(strongest, std::abs(p.gain));
    earliest = std::min(earliest, p.delay_ns);
    latest = std::max(latest, p.delay_ns);
  }
  if (strongest <= 0.0) throw NumericalError("all path gains are zero");

  const double ts = cfg.sample_spacing_ns;
  const double peak = strongest * pulse(0.0, cfg.bandwidth_mhz, cfg.rolloff);
  const double noise_rms = peak * std::pow(10.0, -snr_db / 20.0);
  const std::uint64_t noise_key = rng();

  auto tap_value = [&](long tap, cdouble clean) {
    return opt.add_noise ? clean + noise_rms * detail::unit_noise(noise_key, tap)
                         : clean;
  };

  double fp_delay = earliest;
  int fp_index = 0;
  int fp_frac = 0;
  if (opt.fixed_fp_index) {
    fp_index = *opt.fixed_fp_index;
  } else {
    // Leading-edge detection: earliest tap whose magnitude exceeds the
    // threshold. A strong path can push a precursor sidelobe over the
    // threshold a few taps early, so the hit is attributed to the earliest
    // path that is not more than one main lobe before it.
    const long scan_lo = std::max<long>(0, static_cast<long>(std::floor(earliest / ts)) - 8);
    const long scan_hi = static_cast<long>(std::ceil(latest / ts)) + 8;
    const auto clean = render_cir(paths, cfg, scan_lo,
                                  static_cast<std::size_t>(scan_hi - scan_lo + 1));
    const double threshold = cfg.detection_factor * noise_rms;
    long hit = -1;
    for (long k = scan_lo; k <= scan_hi; ++k) {
      if (std::abs(tap_value(k, clean[static_cast<std::size_t>(k - scan_lo)])) > threshold) {
        hit = k;
        break;
      }
    }
    if (hit < 0) throw DetectionFailure("no tap above the leading-edge threshold");
    const double lobe = 1.0 / (cfg.bandwidth_mhz * 1e-3) / ts + 0.5;  // taps
    fp_delay = std::numeric_limits<double>::infinity();
    for (const auto& p : paths) {
      if (p.delay_ns / ts >= static_cast<double>(hit) - lobe)
        fp_delay = std::min(fp_delay, p.delay_ns);
    }
    if (!std::isfinite(fp_delay)) fp_delay = static_cast<double>(hit) * ts;
    const double fp_taps = fp_delay / ts;
    fp_index = static_cast<int>(std::floor(fp_taps));
    fp_frac = static_cast<int>(std::lround((fp_taps - fp_index) * kFracSteps));
    if (opt.fp_dither) {
      std::uniform_int_distribution<int> jitter(-1, 1);
      fp_frac += jitter(rng);
    }
    if (fp_frac >= kFracSteps) {
      fp_frac -= kFracSteps;
      ++fp_index;
    } else if (fp_frac < 0) {
      fp_frac += kFracSteps;
      --fp_index;
    }
  }
  require(fp_index >= 0 && fp_index < cfg.buffer_length,
          "first path outside the CIR buffer");

  const double scale = opt.fixed_scale.value_or(
      cfg.full_scale_fraction * 32767.0 / peak);
  const long start = fp_index - cfg.pre_fp_samples;
  const auto clean = render_cir(paths, cfg, start, kCirSamples);
  RawCir out;
  for (std::size_t k = 0; k < kCirSamples; ++k) {
    const cdouble v = scale * tap_value(start + static_cast<long>(k), clean[k]);
    out.samples[k] = {detail::quantize(v.real()), detail::quantize(v.imag())};
  }
  out.fp_index = fp_index;
  out.fp_frac = fp_frac;
  out.preamble_count = cfg.preamble_length;
  out.noise_floor = opt.add_noise ? scale * noise_rms : 0.0;
  return out;
}

}  // namespace uwbsense
