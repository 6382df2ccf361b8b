#pragma once

// Simplified-ALOHA beacon network: every node broadcasts, waits out its
// processing time plus a random backoff (optionally cut short by a beacon
// heard during the backoff), and broadcasts again. Overlapping airtimes
// collide.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "uwbsense/channel.hpp"
#include "uwbsense/common.hpp"
#include "uwbsense/kvconfig.hpp"
#include "uwbsense/recordio.hpp"
#include "uwbsense/scene.hpp"

namespace uwbsense {

struct TimingConfig {
  double processing_us = 8000.0;
  double backoff_max_us = 100.0;
  double airtime_us = 180.0;
  /// Transmit at the end of a clean reception heard during the backoff
  /// window. Off by default: with identical processing times every node
  /// that defers to the same reception fires at the same instant, and the
  /// resulting collisions repeat cycle after cycle.
  bool defer_on_receive = false;
  /// Per-node clock skew in ppm, indexed like node_ids; missing entries are 0.
  std::vector<double> clock_skew_ppm;

  static TimingConfig from_kv(const KvConfig& kv) {
    TimingConfig t;
    t.processing_us = kv.get_double("mac.processing_us", t.processing_us);
    t.backoff_max_us = kv.get_double("mac.backoff_max_us", t.backoff_max_us);
    t.airtime_us = kv.get_double("mac.airtime_us", t.airtime_us);
    t.defer_on_receive = kv.get_bool("mac.defer_on_receive", t.defer_on_receive);
    return t;
  }

  void write_kv(KvConfig& kv) const {
    kv.set("mac.processing_us", format_double(processing_us));
    kv.set("mac.backoff_max_us", format_double(backoff_max_us));
    kv.set("mac.airtime_us", format_double(airtime_us));
    kv.set("mac.defer_on_receive", defer_on_receive ? "true" : "false");
  }
};

struct LinkId {
  int tx = 0;
  int rx = 0;
  friend auto operator<=>(const LinkId&, const LinkId&) = default;
};

/// All ordered (tx, rx) pairs with tx != rx, sorted.
inline std::vector<LinkId> directed_links(std::vector<int> ids) {
  std::sort(ids.begin(), ids.end());
  std::vector<LinkId> out;
  for (int a : ids)
    for (int b : ids)
      if (a != b) out.push_back({a, b});
  return out;
}

struct BeaconEvent {
  int tx_id = 0;
  std::uint16_t seq = 0;
  double t_start_us = 0.0;
  double t_airtime_us = 0.0;
  bool collided = false;
};

inline std::vector<BeaconEvent> run_aloha(const std::vector<int>& node_ids,
                                          double duration_s,
                                          const TimingConfig& timing,
                                          std::uint64_t seed) {
  require(node_ids.size() >= 2, "ALOHA needs at least 2 nodes");
  require(duration_s > 0.0, "duration must be positive");
  require(timing.airtime_us > 0.0, "airtime must be positive");
  require(timing.processing_us >= timing.airtime_us,
          "processing time must cover the airtime");
  require(timing.backoff_max_us >= 0.0, "backoff must be non-negative");

  const std::size_t n = node_ids.size();
  const double horizon = duration_s * 1e6;
  const double inf = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(derive_seed(seed, 0x616c6f6861ULL));
  std::uniform_real_distribution<double> backoff(0.0, timing.backoff_max_us);

  auto processing = [&](std::size_t node) {
    const double ppm =
        node < timing.clock_skew_ppm.size() ? timing.clock_skew_ppm[node] : 0.0;
    return timing.processing_us * (1.0 + ppm * 1e-6);
  };

  auto draw_backoff = [&] {
    return timing.backoff_max_us > 0.0 ? backoff(rng) : 0.0;
  };

  // Nodes boot in turn, evenly spread over one cycle; the random backoffs
  // then let their relative phases drift. No deferral before a node's first
  // own transmission.
  std::vector<double> next_tx(n), window_start(n, inf);
  std::vector<std::uint16_t> seq(n, 0);
  const double cycle = timing.processing_us + 0.5 * timing.backoff_max_us;
  for (std::size_t i = 0; i < n; ++i)
    next_tx[i] = cycle * static_cast<double>(i) / static_cast<double>(n) + draw_backoff();

  std::vector<BeaconEvent> events;
  struct Pending {
    std::size_t event;
    double t_end;
  };
  std::vector<Pending> pending;  // receptions in flight, ordered by t_end

  for (;;) {
    std::size_t node = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (next_tx[i] < next_tx[node]) node = i;
    const double t_tx = next_tx[node];
    const bool rx_first = !pending.empty() && pending.front().t_end <= t_tx;

    if (rx_first) {
      const auto p = pending.front();
      pending.erase(pending.begin());
      if (p.t_end >= horizon) continue;
      const auto& ev = events[p.event];
      if (ev.collided || !timing.defer_on_receive) continue;
      for (std::size_t i = 0; i < n; ++i) {
        if (node_ids[i] == ev.tx_id) continue;
        if (window_start[i] <= p.t_end && p.t_end < next_tx[i]) next_tx[i] = p.t_end;
      }
      continue;
    }

    if (t_tx >= horizon) break;
    BeaconEvent ev{node_ids[node], seq[node]++, t_tx, timing.airtime_us, false};
    for (auto it = events.rbegin(); it != events.rend(); ++it) {
      // Starts are non-decreasing and airtimes equal, so the first
      // non-overlapping predecessor ends the scan.
      if (it->t_start_us + it->t_airtime_us <= t_tx) break;
      it->collided = true;
      ev.collided = true;
    }
    events.push_back(ev);
    pending.push_back({events.size() - 1, t_tx + timing.airtime_us});
    window_start[node] = t_tx + processing(node);
    next_tx[node] = window_start[node] + draw_backoff();
  }
  return events;
}

struct EmitOptions {
  int max_order = 1;
  double snr_db = 25.0;
  /// Random sub-tap receiver sampling phase per reception.
  bool sampling_jitter = true;
  SynthOptions synth;
};

struct EmitSummary {
  std::size_t beacons = 0;
  std::size_t collided = 0;
  std::size_t records = 0;
  std::size_t detection_drops = 0;

  std::string to_text() const {
    std::ostringstream os;
    os << "beacons = " << beacons << "\n"
       << "collided = " << collided << "\n"
       << "records = " << records << "\n"
       << "detection_drops = " << detection_drops << "\n";
    return os.str();
  }
};

/// One CirRecord per other node for every non-collided beacon, synthesized
/// from the scene state at the beacon start. Records are delivered to `sink`
/// in event order, receivers in ascending id.
inline EmitSummary emit_records(const std::vector<BeaconEvent>& events,
                                const std::vector<Trajectory>& trajectories,
                                const Scene& scene, const RadioConfig& radio,
                                const EmitOptions& opt, std::uint64_t seed,
                                const std::function<void(const CirRecord&)>& sink) {
  radio.validate();
  auto receivers = scene.anchor_ids();
  std::sort(receivers.begin(), receivers.end());
  EmitSummary summary;
  double last_t = -std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < events.size(); ++e) {
    const auto& ev = events[e];
    require(ev.t_start_us >= last_t, "events must be time-ordered");
    last_t = ev.t_start_us;
    ++summary.beacons;
    if (ev.collided) {
      ++summary.collided;
      continue;
    }
    const double t_s = ev.t_start_us * 1e-6;
    const auto persons = trajectories.empty()
                             ? std::vector<PersonState>{}
                             : ground_truth_at(trajectories, t_s);
    const auto timestamp =
        static_cast<std::uint64_t>(std::llround(ev.t_start_us + ev.t_airtime_us)) &
        kTimestampMask;
    for (int rx : receivers) {
      if (rx == ev.tx_id) continue;
      std::mt19937_64 rng(derive_seed(seed, 0x7278ULL, e, rx));
      auto paths = enumerate_paths(scene, ev.tx_id, rx, persons, opt.max_order, radio);
      if (opt.sampling_jitter) {
        std::uniform_real_distribution<double> phase(0.0, radio.sample_spacing_ns);
        const double shift = phase(rng);
        for (auto& p : paths) p.delay_ns += shift;
      }
      RawCir cir;
      try {
        cir = synthesize_cir(paths, radio, opt.snr_db, rng, opt.synth);
      } catch (const DetectionFailure&) {
        ++summary.detection_drops;
        continue;
      }
      CirRecord r;
      r.seq = ev.seq;
      r.fp_index = static_cast<std::uint16_t>(cir.fp_index);
      r.fp_frac = static_cast<std::uint16_t>(cir.fp_frac);
      r.preamble_count = static_cast<std::uint16_t>(cir.preamble_count);
      r.tx_id = static_cast<std::uint16_t>(ev.tx_id);
      r.rx_id = static_cast<std::uint16_t>(rx);
      r.timestamp_us = timestamp;
      r.samples = cir.samples;
      sink(r);
      ++summary.records;
    }
  }
  return summary;
}

}  // namespace uwbsense
