#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "uwbsense/common.hpp"

namespace uwbsense::nn {

/// Euclidean distance ||pred - target||_2 (not squared). The gradient at
/// pred == target is taken as zero.
template <class T>
double l2_loss(std::span<const T> pred, std::span<const double> target,
               std::span<T> grad) {
  require(pred.size() == target.size() && grad.size() == pred.size(),
          "l2_loss: size mismatch");
  double ss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - target[i];
    ss += d * d;
  }
  const double norm = std::sqrt(ss);
  for (std::size_t i = 0; i < pred.size(); ++i)
    grad[i] = norm > 0.0
                  ? static_cast<T>((static_cast<double>(pred[i]) - target[i]) / norm)
                  : T(0);
  return norm;
}

/// Softmax cross-entropy (natural log); gradient is softmax - one_hot.
template <class T>
double cross_entropy(std::span<const T> logits, int target, std::span<T> grad) {
  require(target >= 0 && static_cast<std::size_t>(target) < logits.size(),
          "cross_entropy: class out of range");
  require(grad.size() == logits.size(), "cross_entropy: size mismatch");
  double mx = static_cast<double>(logits[0]);
  for (auto v : logits) mx = std::max(mx, static_cast<double>(v));
  double z = 0.0;
  for (auto v : logits) z += std::exp(static_cast<double>(v) - mx);
  const double log_z = mx + std::log(z);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = std::exp(static_cast<double>(logits[i]) - log_z);
    grad[i] = static_cast<T>(p - (static_cast<int>(i) == target ? 1.0 : 0.0));
  }
  return log_z - static_cast<double>(logits[static_cast<std::size_t>(target)]);
}

}  // namespace uwbsense::nn
