#pragma once

// Localization and classification metrics, error CDFs, trajectory overlays
// and their CSV exports.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "uwbsense/common.hpp"
#include "uwbsense/kvconfig.hpp"

namespace uwbsense {

struct LocMetrics {
  double mean = 0, std = 0, median = 0, p80 = 0, max = 0;
  std::size_t n = 0;
};

/// Linear-interpolated percentile of sorted data, q in [0, 1].
inline double percentile_sorted(std::span<const double> sorted, double q) {
  require(!sorted.empty(), "percentile of empty data");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double f = pos - static_cast<double>(lo);
  return sorted[lo] + f * (sorted[hi] - sorted[lo]);
}

inline LocMetrics localization_metrics(std::span<const double> errors) {
  require(!errors.empty(), "localization_metrics: no errors");
  std::vector<double> s(errors.begin(), errors.end());
  for (double e : s) require(e >= 0.0 && std::isfinite(e), "errors must be finite and >= 0");
  std::sort(s.begin(), s.end());
  LocMetrics m;
  m.n = s.size();
  // Sum in sorted order so the result is permutation-invariant bit for bit.
  m.mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(m.n);
  double ss = 0.0;
  for (double e : s) ss += (e - m.mean) * (e - m.mean);
  m.std = std::sqrt(ss / static_cast<double>(m.n));
  m.median = percentile_sorted(s, 0.5);
  m.p80 = percentile_sorted(s, 0.8);
  m.max = s.back();
  return m;
}

struct ClsMetrics {
  int num_classes = 0;
  std::vector<double> precision, recall, f1;
  std::vector<std::size_t> support;
  std::vector<int> zero_predicted;  // classes never predicted (precision set to 0)
  double macro_precision = 0, macro_recall = 0, macro_f1 = 0, accuracy = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

/// Metrics derived from a confusion matrix alone.
inline ClsMetrics metrics_from_confusion(
    const std::vector<std::vector<std::size_t>>& confusion) {
  const int k = static_cast<int>(confusion.size());
  ClsMetrics m;
  m.num_classes = k;
  m.confusion = confusion;
  m.precision.assign(k, 0.0);
  m.recall.assign(k, 0.0);
  m.f1.assign(k, 0.0);
  m.support.assign(k, 0);
  std::size_t total = 0, correct = 0;
  for (int t = 0; t < k; ++t) {
    for (int p = 0; p < k; ++p) {
      m.support[t] += confusion[t][p];
      total += confusion[t][p];
    }
    correct += confusion[t][t];
  }
  for (int c = 0; c < k; ++c) {
    std::size_t predicted = 0;
    for (int t = 0; t < k; ++t) predicted += confusion[t][c];
    const double tp = static_cast<double>(confusion[c][c]);
    if (predicted == 0) {
      m.zero_predicted.push_back(c);
    } else {
      m.precision[c] = tp / static_cast<double>(predicted);
    }
    m.recall[c] = m.support[c] ? tp / static_cast<double>(m.support[c]) : 0.0;
    const double s = m.precision[c] + m.recall[c];
    m.f1[c] = s > 0 ? 2.0 * m.precision[c] * m.recall[c] / s : 0.0;
  }
  for (int c = 0; c < k; ++c) {
    m.macro_precision += m.precision[c] / k;
    m.macro_recall += m.recall[c] / k;
    m.macro_f1 += m.f1[c] / k;
  }
  m.accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  return m;
}

inline ClsMetrics classification_metrics(std::span<const int> predicted,
                                         std::span<const int> truth,
                                         int num_classes) {
  require(predicted.size() == truth.size(),
          "classification_metrics: length mismatch");
  require(num_classes >= 1, "need at least one class");
  std::vector<std::vector<std::size_t>> confusion(
      num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(truth[i] >= 0 && truth[i] < num_classes && predicted[i] >= 0 &&
                predicted[i] < num_classes,
            "class label out of range");
    ++confusion[truth[i]][predicted[i]];
  }
  return metrics_from_confusion(confusion);
}

struct CdfPoint {
  double error = 0;
  double fraction = 0;
};

inline std::vector<CdfPoint> error_cdf(std::span<const double> errors) {
  require(!errors.empty(), "error_cdf: no errors");
  std::vector<double> s(errors.begin(), errors.end());
  std::sort(s.begin(), s.end());
  std::vector<CdfPoint> out;
  const double n = static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    out.push_back({s[i], static_cast<double>(i + 1) / n});
  return out;
}

struct TimedPosition {
  double t = 0;
  Vec2 p;
};

struct OverlayRow {
  double t = 0;
  Vec2 truth, pred, smooth;
};

/// Centered moving average of predictions over `window` samples, truncated
/// at the ends.
inline std::vector<OverlayRow> trajectory_overlay(
    std::span<const TimedPosition> preds, std::span<const TimedPosition> truths,
    int window = 5) {
  require(preds.size() == truths.size(), "trajectory_overlay: length mismatch");
  require(window >= 1, "smoothing window must be at least 1");
  for (std::size_t i = 0; i < preds.size(); ++i)
    require(std::abs(preds[i].t - truths[i].t) < 1e-9,
            "trajectory_overlay: sequences are not time-aligned");
  const long n = static_cast<long>(preds.size());
  const long before = (window - 1) / 2, after = window / 2;
  std::vector<OverlayRow> out;
  for (long i = 0; i < n; ++i) {
    const long lo = std::max(0L, i - before), hi = std::min(n - 1, i + after);
    Vec2 acc{0, 0};
    for (long j = lo; j <= hi; ++j) acc = acc + preds[static_cast<std::size_t>(j)].p;
    const auto& pr = preds[static_cast<std::size_t>(i)];
    out.push_back({pr.t, truths[static_cast<std::size_t>(i)].p, pr.p,
                   (1.0 / static_cast<double>(hi - lo + 1)) * acc});
  }
  return out;
}

namespace detail {

inline std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot create " + path);
  return out;
}

}  // namespace detail

inline void write_metrics_csv(const std::string& path, const LocMetrics& m) {
  auto out = detail::open_csv(path);
  out << "metric,value\n"
      << "n," << m.n << "\n"
      << "mean," << format_double(m.mean) << "\n"
      << "std," << format_double(m.std) << "\n"
      << "median," << format_double(m.median) << "\n"
      << "p80," << format_double(m.p80) << "\n"
      << "max," << format_double(m.max) << "\n";
}

inline void write_metrics_csv(const std::string& path, const ClsMetrics& m) {
  auto out = detail::open_csv(path);
  out << "class,precision,recall,f1,support\n";
  for (int c = 0; c < m.num_classes; ++c)
    out << c << "," << format_double(m.precision[c]) << ","
        << format_double(m.recall[c]) << "," << format_double(m.f1[c]) << ","
        << m.support[c] << "\n";
  std::size_t total = 0;
  for (auto s : m.support) total += s;
  out << "macro," << format_double(m.macro_precision) << ","
      << format_double(m.macro_recall) << "," << format_double(m.macro_f1) << ","
      << total << "\n";
  out << "accuracy," << format_double(m.accuracy) << ",,," << total << "\n";
}

inline void write_confusion_csv(const std::string& path, const ClsMetrics& m) {
  auto out = detail::open_csv(path);
  out << "true\\predicted";
  for (int c = 0; c < m.num_classes; ++c) out << "," << c;
  out << "\n";
  for (int t = 0; t < m.num_classes; ++t) {
    out << t;
    for (int p = 0; p < m.num_classes; ++p) out << "," << m.confusion[t][p];
    out << "\n";
  }
}

inline void write_cdf_csv(const std::string& path, std::span<const CdfPoint> cdf) {
  auto out = detail::open_csv(path);
  out << "error,cumulative_fraction\n";
  for (const auto& p : cdf)
    out << format_double(p.error) << "," << format_double(p.fraction) << "\n";
}

inline void write_trajectory_csv(const std::string& path,
                                 std::span<const OverlayRow> rows) {
  auto out = detail::open_csv(path);
  out << "t,x_true,y_true,x_pred,y_pred,x_smooth,y_smooth\n";
  for (const auto& r : rows)
    out << format_double(r.t) << "," << format_double(r.truth.x) << ","
        << format_double(r.truth.y) << "," << format_double(r.pred.x) << ","
        << format_double(r.pred.y) << "," << format_double(r.smooth.x) << ","
        << format_double(r.smooth.y) << "\n";
}

}  // namespace uwbsense
