#pragma once

#include <cmath>
#include <vector>

#include "uwbsense/nn/layers.hpp"

namespace uwbsense::nn {

enum class OptimizerKind { Sgd, Adam };

/// Adam (or plain SGD with momentum) over a fixed list of parameter views.
/// Weight decay is added to the gradient (L2 penalty).
template <class T>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, double weight_decay,
            double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
            double momentum = 0.9)
      : kind_(kind), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2),
        eps_(eps), momentum_(momentum) {}

  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }

  void step(std::vector<ParamView<T>>& params) {
    if (m_.empty()) {
      for (auto& p : params) {
        m_.emplace_back(p.value.size(), 0.0);
        v_.emplace_back(p.value.size(), 0.0);
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k];
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = static_cast<double>(p.grad[i]) + wd_ * static_cast<double>(p.value[i]);
        if (kind_ == OptimizerKind::Adam) {
          m[i] = b1_ * m[i] + (1 - b1_) * g;
          v[i] = b2_ * v[i] + (1 - b2_) * g * g;
          const double upd = lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
          p.value[i] = static_cast<T>(static_cast<double>(p.value[i]) - upd);
        } else {
          m[i] = momentum_ * m[i] + g;
          p.value[i] = static_cast<T>(static_cast<double>(p.value[i]) - lr_ * m[i]);
        }
      }
    }
  }

 private:
  OptimizerKind kind_;
  double lr_, wd_, b1_, b2_, eps_, momentum_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace uwbsense::nn
