#pragma once

// Simulated environment: rectangular room, anchor placement, and the people
// moving through it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "uwbsense/common.hpp"
#include "uwbsense/kvconfig.hpp"

namespace uwbsense {

struct AnchorPose {
  int id = 0;
  Vec2 position;
};

enum class Activity : int { Moving = 0, Standing = 1, Sitting = 2 };

inline const char* to_string(Activity a) {
  switch (a) {
    case Activity::Moving: return "moving";
    case Activity::Standing: return "standing";
    case Activity::Sitting: return "sitting";
  }
  return "?";
}

inline Activity activity_from_string(const std::string& s) {
  if (s == "moving") return Activity::Moving;
  if (s == "standing") return Activity::Standing;
  if (s == "sitting") return Activity::Sitting;
  throw ValidationError("unknown activity: " + s);
}

/// Kinematic parameters of the trajectory generator.
struct MotionModel {
  double mean_speed = 1.0;        // m/s
  double speed_reversion = 0.5;   // 1/s
  double speed_diffusion = 0.35;  // m/s per sqrt(s)
  double min_speed = 0.3;
  double max_speed = 2.0;
  double turn_reversion = 1.0;    // 1/s, on angular velocity
  double turn_diffusion = 1.5;    // rad/s per sqrt(s)
  double wall_margin = 0.3;       // keep-out band along every wall, m
  double jitter_rms = 0.005;      // stationary micro-motion, m
  double jitter_radius = 0.015;   // hard cap on stationary excursion, m
  double jitter_max_speed = 0.04;  // m/s
};

struct SceneConfig {
  double room_width = 6.0;   // along x
  double room_length = 6.0;  // along y
  double wall_reflectivity = 0.6;
  std::vector<AnchorPose> anchors = {
      {0, {0.5, 0.5}}, {1, {5.5, 0.5}}, {2, {5.5, 5.5}}, {3, {0.5, 5.5}}};
  std::uint64_t rng_seed = 1;
  double person_rcs = 0.5;
  double sitting_rcs_factor = 0.6;
  double sample_period = 0.1;  // s
  int max_persons = 4;
  MotionModel motion;

  static SceneConfig from_kv(const KvConfig& kv) {
    SceneConfig c;
    c.room_width = kv.get_double("room_width", c.room_width);
    c.room_length = kv.get_double("room_length", c.room_length);
    c.wall_reflectivity =
        kv.get_double("wall_reflectivity", c.wall_reflectivity);
    c.rng_seed = kv.get_u64("rng_seed", c.rng_seed);
    c.person_rcs = kv.get_double("person_rcs", c.person_rcs);
    c.sitting_rcs_factor =
        kv.get_double("sitting_rcs_factor", c.sitting_rcs_factor);
    c.sample_period = kv.get_double("sample_period", c.sample_period);
    c.max_persons = static_cast<int>(kv.get_int("max_persons", c.max_persons));
    c.motion.mean_speed = kv.get_double("motion.mean_speed", c.motion.mean_speed);
    c.motion.wall_margin =
        kv.get_double("motion.wall_margin", c.motion.wall_margin);

    // anchor.<id>.x / anchor.<id>.y; any anchor key replaces the default set.
    std::set<int> ids;
    for (const auto& [key, value] : kv.entries()) {
      if (key.rfind("anchor.", 0) != 0) continue;
      auto dot = key.find('.', 7);
      if (dot == std::string::npos)
        throw ValidationError("malformed anchor key: " + key);
      auto field = key.substr(dot + 1);
      if (field != "x" && field != "y")
        throw ValidationError("malformed anchor key: " + key);
      try {
        ids.insert(std::stoi(key.substr(7, dot - 7)));
      } catch (const std::exception&) {
        throw ValidationError("malformed anchor id: " + key);
      }
    }
    if (!ids.empty()) {
      c.anchors.clear();
      for (int id : ids) {
        auto p = "anchor." + std::to_string(id);
        if (!kv.has(p + ".x") || !kv.has(p + ".y"))
          throw ValidationError("anchor " + std::to_string(id) +
                                " needs both x and y");
        c.anchors.push_back(
            {id, {kv.get_double(p + ".x", 0), kv.get_double(p + ".y", 0)}});
      }
    }
    return c;
  }

  void write_kv(KvConfig& kv) const {
    kv.set("room_width", format_double(room_width));
    kv.set("room_length", format_double(room_length));
    kv.set("wall_reflectivity", format_double(wall_reflectivity));
    kv.set("rng_seed", std::to_string(rng_seed));
    kv.set("person_rcs", format_double(person_rcs));
    kv.set("sitting_rcs_factor", format_double(sitting_rcs_factor));
    kv.set("sample_period", format_double(sample_period));
    kv.set("max_persons", std::to_string(max_persons));
    kv.set("motion.mean_speed", format_double(motion.mean_speed));
    kv.set("motion.wall_margin", format_double(motion.wall_margin));
    for (const auto& a : anchors) {
      auto p = "anchor." + std::to_string(a.id);
      kv.set(p + ".x", format_double(a.position.x));
      kv.set(p + ".y", format_double(a.position.y));
    }
  }
};

/// A validated SceneConfig.
class Scene {
 public:
  const SceneConfig& config() const { return cfg_; }
  double width() const { return cfg_.room_width; }
  double length() const { return cfg_.room_length; }
  double reflectivity() const { return cfg_.wall_reflectivity; }
  const std::vector<AnchorPose>& anchors() const { return cfg_.anchors; }

  const AnchorPose& anchor(int id) const {
    for (const auto& a : cfg_.anchors)
      if (a.id == id) return a;
    throw ValidationError("unknown anchor id " + std::to_string(id));
  }

  bool contains(Vec2 p) const {
    return p.x >= 0.0 && p.x <= cfg_.room_width && p.y >= 0.0 &&
           p.y <= cfg_.room_length;
  }

  std::vector<int> anchor_ids() const {
    std::vector<int> ids;
    for (const auto& a : cfg_.anchors) ids.push_back(a.id);
    return ids;
  }

  friend bool operator==(const Scene& a, const Scene& b) {
    if (a.cfg_.anchors.size() != b.cfg_.anchors.size()) return false;
    for (std::size_t i = 0; i < a.cfg_.anchors.size(); ++i) {
      if (a.cfg_.anchors[i].id != b.cfg_.anchors[i].id ||
          !(a.cfg_.anchors[i].position == b.cfg_.anchors[i].position))
        return false;
    }
    return a.cfg_.room_width == b.cfg_.room_width &&
           a.cfg_.room_length == b.cfg_.room_length &&
           a.cfg_.wall_reflectivity == b.cfg_.wall_reflectivity &&
           a.cfg_.rng_seed == b.cfg_.rng_seed &&
           a.cfg_.person_rcs == b.cfg_.person_rcs &&
           a.cfg_.sitting_rcs_factor == b.cfg_.sitting_rcs_factor;
  }

 private:
  explicit Scene(SceneConfig cfg) : cfg_(std::move(cfg)) {}
  friend Scene build_scene(const SceneConfig& config);

  SceneConfig cfg_;
};

inline Scene build_scene(const SceneConfig& config) {
  require(config.room_width > 0.0 && config.room_length > 0.0,
          "room dimensions must be positive");
  require(config.wall_reflectivity >= 0.0 && config.wall_reflectivity <= 1.0,
          "wall_reflectivity must lie in [0, 1]");
  require(config.anchors.size() >= 2, "a scene needs at least 2 anchors");
  require(config.person_rcs > 0.0, "person_rcs must be positive");
  require(config.sitting_rcs_factor > 0.0 && config.sitting_rcs_factor <= 1.0,
          "sitting_rcs_factor must lie in (0, 1]");
  require(config.sample_period > 0.0, "sample_period must be positive");
  require(config.max_persons >= 1, "max_persons must be at least 1");
  std::set<int> ids;
  for (const auto& a : config.anchors) {
    require(ids.insert(a.id).second,
            "duplicate anchor id " + std::to_string(a.id));
    require(a.id >= 0 && a.id <= 0xffff,
            "anchor id out of range: " + std::to_string(a.id));
    const auto p = a.position;
    require(p.x > 0.0 && p.x < config.room_width && p.y > 0.0 &&
                p.y < config.room_length,
            "anchor " + std::to_string(a.id) + " is not strictly inside the room");
  }
  return Scene(config);
}

struct PersonState {
  Vec2 position;
  Vec2 velocity;
  Activity activity = Activity::Moving;
  double rcs = 1.0;

  double speed() const { return velocity.norm(); }
};

struct TimedState {
  double t = 0.0;  // s
  PersonState state;
};

struct Trajectory {
  int person_id = 0;
  double sample_period = 0.1;
  std::vector<TimedState> samples;

  double start() const { return samples.front().t; }
  double end() const { return samples.back().t; }
};

namespace detail {

inline double reflect_into(double v, double lo, double hi) {
  // Mirror a coordinate back into [lo, hi]; one fold suffices for steps
  // shorter than the interval.
  if (v < lo) v = 2 * lo - v;
  if (v > hi) v = 2 * hi - v;
  return std::clamp(v, lo, hi);
}

inline Trajectory moving_trajectory(const Scene& scene, int person_id,
                                    std::size_t n, std::mt19937_64& rng) {
  const auto& cfg = scene.config();
  const auto& m = cfg.motion;
  const double dt = cfg.sample_period;
  const double lo_x = m.wall_margin, hi_x = scene.width() - m.wall_margin;
  const double lo_y = m.wall_margin, hi_y = scene.length() - m.wall_margin;
  require(hi_x > lo_x && hi_y > lo_y, "room too small for the wall margin");

  std::uniform_real_distribution<double> ux(lo_x, hi_x), uy(lo_y, hi_y);
  std::uniform_real_distribution<double> uang(-kPi, kPi);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Vec2 pos{ux(rng), uy(rng)};
  double heading = uang(rng);
  double speed = std::clamp(m.mean_speed, m.min_speed, m.max_speed);
  double omega = 0.0;

  Trajectory traj;
  traj.person_id = person_id;
  traj.sample_period = dt;
  traj.samples.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    Vec2 vel{speed * std::cos(heading), speed * std::sin(heading)};
    // Reflect the velocity before stepping so that the next sample is
    // exactly pos + vel * dt and stays inside the margin box.
    Vec2 next = pos + dt * vel;
    if (next.x < lo_x || next.x > hi_x) {
      vel.x = -vel.x;
      heading = kPi - heading;
    }
    if (next.y < lo_y || next.y > hi_y) {
      vel.y = -vel.y;
      heading = -heading;
    }
    traj.samples.push_back(
        {static_cast<double>(k) * dt,
         PersonState{pos, vel, Activity::Moving, cfg.person_rcs}});
    pos = pos + dt * vel;
    pos.x = std::clamp(pos.x, lo_x, hi_x);
    pos.y = std::clamp(pos.y, lo_y, hi_y);

    speed += m.speed_reversion * (m.mean_speed - speed) * dt +
             m.speed_diffusion * std::sqrt(dt) * gauss(rng);
    speed = std::clamp(speed, m.min_speed, m.max_speed);
    omega += -m.turn_reversion * omega * dt +
             m.turn_diffusion * std::sqrt(dt) * gauss(rng);
    heading += omega * dt;
  }
  return traj;
}

inline Trajectory stationary_trajectory(const Scene& scene, int person_id,
                                        Activity activity, std::size_t n,
                                        std::mt19937_64& rng) {
  const auto& cfg = scene.config();
  const auto& m = cfg.motion;
  const double dt = cfg.sample_period;
  const double margin = std::max(m.wall_margin, 0.5);
  require(scene.width() > 2 * margin && scene.length() > 2 * margin,
          "room too small for stationary placement");
  std::uniform_real_distribution<double> ux(margin, scene.width() - margin);
  std::uniform_real_distribution<double> uy(margin, scene.length() - margin);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Vec2 centre{ux(rng), uy(rng)};
  const double rcs = activity == Activity::Sitting
                         ? cfg.person_rcs * cfg.sitting_rcs_factor
                         : cfg.person_rcs;

  // Micro-jitter: AR(1) offset around the fixed point with stationary RMS
  // jitter_rms per axis, step length and radius capped.
  const double a = 0.95;
  const double step_sigma = m.jitter_rms * std::sqrt(1.0 - a * a);
  const double max_step = m.jitter_max_speed * dt;
  std::vector<Vec2> offsets(n + 1);
  Vec2 off{0.0, 0.0};
  for (std::size_t k = 0; k <= n; ++k) {
    offsets[k] = off;
    Vec2 target{a * off.x + step_sigma * gauss(rng),
                a * off.y + step_sigma * gauss(rng)};
    Vec2 step = target - off;
    if (double len = step.norm(); len > max_step) step = (max_step / len) * step;
    Vec2 next = off + step;
    if (double r = next.norm(); r > m.jitter_radius)
      next = (m.jitter_radius / r) * next;
    off = next;
  }

  Trajectory traj;
  traj.person_id = person_id;
  traj.sample_period = dt;
  traj.samples.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    Vec2 vel = (1.0 / dt) * (offsets[k + 1] - offsets[k]);
    traj.samples.push_back({static_cast<double>(k) * dt,
                            PersonState{centre + offsets[k], vel, activity, rcs}});
  }
  return traj;
}

}  // namespace detail

/// `count` independent trajectories covering [0, duration] at the scene's
/// sample period.
inline std::vector<Trajectory> sample_trajectory(const Scene& scene,
                                                 double duration,
                                                 Activity activity, int count,
                                                 std::uint64_t seed) {
  require(duration > 0.0, "duration must be positive");
  require(count >= 1 && count <= scene.config().max_persons,
          "person count must lie in [1, " +
              std::to_string(scene.config().max_persons) + "]");
  const double dt = scene.config().sample_period;
  const auto n = static_cast<std::size_t>(std::ceil(duration / dt - 1e-9)) + 1;
  std::vector<Trajectory> out;
  for (int p = 0; p < count; ++p) {
    std::mt19937_64 rng(derive_seed(seed, 0x7472616aULL, p));
    if (activity == Activity::Moving)
      out.push_back(detail::moving_trajectory(scene, p, n, rng));
    else
      out.push_back(detail::stationary_trajectory(scene, p, activity, n, rng));
  }
  return out;
}

/// Per person, the sample whose timestamp is nearest to t (ties go to the
/// earlier sample).
inline std::vector<PersonState> ground_truth_at(
    const std::vector<Trajectory>& trajectories, double t) {
  std::vector<PersonState> out;
  out.reserve(trajectories.size());
  for (const auto& tr : trajectories) {
    if (tr.samples.empty()) throw ValidationError("empty trajectory");
    const double period = tr.sample_period;
    if (t < tr.start() - period || t > tr.end() + period)
      throw OutOfRangeError("time " + format_double(t) +
                            " s outside trajectory range");
    auto it = std::lower_bound(
        tr.samples.begin(), tr.samples.end(), t,
        [](const TimedState& s, double v) { return s.t < v; });
    if (it == tr.samples.end()) {
      out.push_back(tr.samples.back().state);
    } else if (it == tr.samples.begin()) {
      out.push_back(it->state);
    } else {
      auto prev = std::prev(it);
      out.push_back((t - prev->t) <= (it->t - t) ? prev->state : it->state);
    }
  }
  return out;
}

}  // namespace uwbsense
