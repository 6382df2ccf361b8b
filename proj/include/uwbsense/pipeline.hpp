#pragma once

// Glue between the simulator and preprocessing: run a scene for a while,
// stream the resulting records into a sink, and read/write ground-truth
// trajectories as CSV.

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "uwbsense/channel.hpp"
#include "uwbsense/mac.hpp"
#include "uwbsense/preprocess.hpp"
#include "uwbsense/scene.hpp"

namespace uwbsense {

struct SimulationSpec {
  SceneConfig scene;
  RadioConfig radio;
  TimingConfig timing;
  EmitOptions emit;
  double duration_s = 60.0;
  Activity activity = Activity::Moving;
  int persons = 1;
  std::uint64_t seed = 1;
};

struct SimulationOutput {
  std::vector<Trajectory> truth;
  EmitSummary summary;
};

/// Trajectories, beacon schedule and CIR synthesis use independent streams
/// derived from spec.seed.
inline SimulationOutput simulate(const SimulationSpec& spec,
                                 const std::function<void(const CirRecord&)>& sink) {
  require(spec.duration_s > 0.0, "duration must be positive");
  const Scene scene = build_scene(spec.scene);
  spec.radio.validate();
  SimulationOutput out;
  out.truth = sample_trajectory(scene, spec.duration_s, spec.activity, spec.persons,
                                derive_seed(spec.seed, 0x747275ULL));
  const auto events = run_aloha(scene.anchor_ids(), spec.duration_s, spec.timing,
                                derive_seed(spec.seed, 0x6d6163ULL));
  out.summary = emit_records(events, out.truth, scene, spec.radio, spec.emit,
                             derive_seed(spec.seed, 0x636972ULL), sink);
  return out;
}

struct LabelledRun {
  std::vector<DataPoint> points;
  std::vector<Trajectory> truth;
  EmitSummary summary;
  DatapointSummary windows;
};

/// simulate() piped straight into preprocessing, without keeping records.
inline LabelledRun simulate_datapoints(const SimulationSpec& spec,
                                       const PreprocessConfig& pre, Task task) {
  BlockAccumulator acc(pre);
  auto sim = simulate(spec, [&](const CirRecord& r) { acc.add(r); });
  LabelledRun run;
  run.truth = std::move(sim.truth);
  run.summary = sim.summary;
  const auto links = directed_links(build_scene(spec.scene).anchor_ids());
  run.points = make_datapoints(acc, links, pre, &run.truth, task, &run.windows);
  return run;
}

// Trajectory CSV: person_id,t,x,y,vx,vy,activity,rcs ; one row per sample,
// persons in ascending id, samples in time order.

inline void write_trajectories_csv(const std::string& path,
                                   const std::vector<Trajectory>& trajectories) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot create " + path);
  out << "person_id,t,x,y,vx,vy,activity,rcs\n";
  for (const auto& tr : trajectories)
    for (const auto& s : tr.samples)
      out << tr.person_id << "," << format_double(s.t) << ","
          << format_double(s.state.position.x) << ","
          << format_double(s.state.position.y) << ","
          << format_double(s.state.velocity.x) << ","
          << format_double(s.state.velocity.y) << "," << to_string(s.state.activity)
          << "," << format_double(s.state.rcs) << "\n";
  if (!out) throw Error("write failed: " + path);
}

inline std::vector<Trajectory> read_trajectories_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open truth file: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("person_id,t,x,y", 0) != 0)
    throw FormatError(path + ": missing trajectory header");
  std::map<int, Trajectory> by_id;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 8)
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected 8 fields");
    try {
      const int id = std::stoi(f[0]);
      TimedState s;
      s.t = std::stod(f[1]);
      s.state.position = {std::stod(f[2]), std::stod(f[3])};
      s.state.velocity = {std::stod(f[4]), std::stod(f[5])};
      s.state.activity = activity_from_string(f[6]);
      s.state.rcs = std::stod(f[7]);
      auto& tr = by_id[id];
      tr.person_id = id;
      if (!tr.samples.empty() && s.t <= tr.samples.back().t)
        throw FormatError(path + ":" + std::to_string(lineno) +
                          ": samples out of time order");
      tr.samples.push_back(s);
    } catch (const std::logic_error&) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  std::vector<Trajectory> out;
  for (auto& [id, tr] : by_id) {
    if (tr.samples.size() >= 2) tr.sample_period = tr.samples[1].t - tr.samples[0].t;
    out.push_back(std::move(tr));
  }
  if (out.empty()) throw FormatError(path + ": no trajectory samples");
  return out;
}

}  // namespace uwbsense
