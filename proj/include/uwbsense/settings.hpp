#pragma once

// Key/value configuration for the stages that have no from_kv of their own,
// plus the contiguous-time dataset split shared by the CLI and the tests.

#include <span>
#include <string>
#include <vector>

#include "uwbsense/kvconfig.hpp"
#include "uwbsense/pipeline.hpp"
#include "uwbsense/train.hpp"

namespace uwbsense {

inline PreprocessConfig preprocess_from_kv(const KvConfig& kv) {
  PreprocessConfig p;
  p.m = static_cast<int>(kv.get_int("preprocess.m", p.m));
  p.stride = static_cast<int>(kv.get_int("preprocess.stride", p.stride));
  p.c = static_cast<int>(kv.get_int("preprocess.c", p.c));
  p.window_s = kv.get_double("preprocess.window_s", p.window_s);
  p.hop_s = kv.get_double("preprocess.hop_s", p.hop_s);
  p.upsample_len = static_cast<int>(kv.get_int("preprocess.upsample_len", p.upsample_len));
  p.preamble_normalize = kv.get_bool("preprocess.preamble_normalize", p.preamble_normalize);
  p.nominal_preamble = static_cast<int>(kv.get_int("preprocess.nominal_preamble", p.nominal_preamble));
  p.validate();
  return p;
}

inline void write_kv(KvConfig& kv, const PreprocessConfig& p) {
  kv.set("preprocess.m", std::to_string(p.m));
  kv.set("preprocess.stride", std::to_string(p.stride));
  kv.set("preprocess.c", std::to_string(p.c));
  kv.set("preprocess.window_s", format_double(p.window_s));
  kv.set("preprocess.hop_s", format_double(p.hop_s));
  kv.set("preprocess.upsample_len", std::to_string(p.upsample_len));
  kv.set("preprocess.preamble_normalize", p.preamble_normalize ? "true" : "false");
  kv.set("preprocess.nominal_preamble", std::to_string(p.nominal_preamble));
}

inline std::uint64_t config_hash(const PreprocessConfig& p) {
  KvConfig kv;
  write_kv(kv, p);
  return fnv1a64(kv.to_string());
}

inline TrainConfig train_from_kv(const KvConfig& kv) {
  TrainConfig t;
  t.learning_rate = kv.get_double("train.learning_rate", t.learning_rate);
  t.batch_size = static_cast<int>(kv.get_int("train.batch_size", t.batch_size));
  t.epochs = static_cast<int>(kv.get_int("train.epochs", t.epochs));
  t.weight_decay = kv.get_double("train.weight_decay", t.weight_decay);
  t.cosine_schedule = kv.get_bool("train.cosine_schedule", t.cosine_schedule);
  const auto opt = kv.get_string("train.optimizer", "adam");
  if (opt == "adam")
    t.optimizer = nn::OptimizerKind::Adam;
  else if (opt == "sgd")
    t.optimizer = nn::OptimizerKind::Sgd;
  else
    throw ValidationError("train.optimizer must be adam or sgd, got " + opt);
  t.validate();
  return t;
}

inline void write_kv(KvConfig& kv, const TrainConfig& t) {
  kv.set("train.learning_rate", format_double(t.learning_rate));
  kv.set("train.batch_size", std::to_string(t.batch_size));
  kv.set("train.epochs", std::to_string(t.epochs));
  kv.set("train.weight_decay", format_double(t.weight_decay));
  kv.set("train.cosine_schedule", t.cosine_schedule ? "true" : "false");
  kv.set("train.optimizer", t.optimizer == nn::OptimizerKind::Adam ? "adam" : "sgd");
}

/// Scene, radio, MAC and emission settings; duration/activity/persons come
/// from sim.* keys.
inline SimulationSpec simulation_from_kv(const KvConfig& kv) {
  SimulationSpec s;
  s.scene = SceneConfig::from_kv(kv);
  s.radio = RadioConfig::from_kv(kv);
  s.timing = TimingConfig::from_kv(kv);
  s.emit.max_order = static_cast<int>(kv.get_int("sim.max_order", s.emit.max_order));
  s.emit.snr_db = kv.get_double("sim.snr_db", s.emit.snr_db);
  s.emit.sampling_jitter = kv.get_bool("sim.sampling_jitter", s.emit.sampling_jitter);
  s.duration_s = kv.get_double("sim.duration_s", s.duration_s);
  s.activity = activity_from_string(kv.get_string("sim.activity", to_string(s.activity)));
  s.persons = static_cast<int>(kv.get_int("sim.persons", s.persons));
  require(s.duration_s > 0.0, "sim.duration_s must be positive");
  require(s.persons >= 1 && s.persons <= s.scene.max_persons,
          "sim.persons must lie in [1, max_persons]");
  return s;
}

inline void write_kv(KvConfig& kv, const SimulationSpec& s) {
  s.scene.write_kv(kv);
  s.radio.write_kv(kv);
  s.timing.write_kv(kv);
  kv.set("sim.max_order", std::to_string(s.emit.max_order));
  kv.set("sim.snr_db", format_double(s.emit.snr_db));
  kv.set("sim.sampling_jitter", s.emit.sampling_jitter ? "true" : "false");
  kv.set("sim.duration_s", format_double(s.duration_s));
  kv.set("sim.activity", to_string(s.activity));
  kv.set("sim.persons", std::to_string(s.persons));
}

struct Split {
  std::vector<DataPoint> train, val, test;
};

/// Splits every run (a maximal stretch of increasing t_end) into leading,
/// middle and trailing time segments with the given fractions. Datapoints
/// whose window overlaps the previous segment are dropped so adjacent
/// segments share no records.
inline Split split_by_time(std::span<const DataPoint> points, double train_frac = 0.70,
                           double val_frac = 0.15, double window_s = 1.0) {
  require(train_frac > 0 && val_frac >= 0 && train_frac + val_frac <= 1.0,
          "split fractions must be positive and sum to at most 1");
  Split out;
  const auto guard = static_cast<std::uint64_t>(window_s * 1e6);
  std::size_t start = 0;
  while (start < points.size()) {
    std::size_t end = start + 1;
    while (end < points.size() && points[end].t_end_us > points[end - 1].t_end_us) ++end;
    const std::uint64_t t0 = points[start].t_end_us;
    const std::uint64_t t1 = points[end - 1].t_end_us;
    const double span = static_cast<double>(t1 - t0);
    const auto b1 = t0 + static_cast<std::uint64_t>(span * train_frac);
    const auto b2 = t0 + static_cast<std::uint64_t>(span * (train_frac + val_frac));
    for (std::size_t i = start; i < end; ++i) {
      const auto t = points[i].t_end_us;
      if (t <= b1)
        out.train.push_back(points[i]);
      else if (t <= b2) {
        if (t > b1 + guard) out.val.push_back(points[i]);
      } else if (t > b2 + guard) {
        out.test.push_back(points[i]);
      }
    }
    start = end;
  }
  return out;
}

}  // namespace uwbsense
