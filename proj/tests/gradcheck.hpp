#pragma once

// Central finite-difference probes against the hand-written backward passes.
// Shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uwbsense/nn/layers.hpp"
#include "uwbsense/model.hpp"
#include "uwbsense/nn/loss.hpp"

namespace gradcheck {

using uwbsense::nn::Batch;

struct Target {
  std::string name;
  std::span<double> values;
  std::vector<double> analytic;
};

struct Report {
  std::string layer;
  int probes = 0;
  int failures = 0;
  double worst_rel = 0.0;
  std::string worst_where;
};

struct Tolerance {
  double h = 1e-4;
  double rel = 1e-3;
  double abs_floor = 1e-5;
};

inline bool close(double analytic, double numeric, const Tolerance& tol, double* rel) {
  const double diff = std::abs(analytic - numeric);
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  *rel = scale > 0 ? diff / scale : 0.0;
  return diff <= tol.abs_floor || diff <= tol.rel * scale;
}

/// `objective` must recompute the scalar from the current contents of the
/// target spans.
inline Report probe(const std::string& layer, const std::function<double()>& objective,
                    std::vector<Target>& targets, int probes, std::uint64_t seed,
                    const Tolerance& tol = {}) {
  Report r;
  r.layer = layer;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_target(0, targets.size() - 1);
  for (int p = 0; p < probes; ++p) {
    auto& t = targets[pick_target(rng)];
    std::uniform_int_distribution<std::size_t> pick(0, t.values.size() - 1);
    const std::size_t i = pick(rng);
    const double saved = t.values[i];
    t.values[i] = saved + tol.h;
    const double up = objective();
    t.values[i] = saved - tol.h;
    const double down = objective();
    t.values[i] = saved;
    const double numeric = (up - down) / (2 * tol.h);
    double rel = 0.0;
    ++r.probes;
    if (!close(t.analytic[i], numeric, tol, &rel)) ++r.failures;
    if (rel > r.worst_rel) {
      r.worst_rel = rel;
      r.worst_where = t.name + "[" + std::to_string(i) + "]";
    }
  }
  return r;
}

inline void fill_normal(std::span<double> v, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  for (auto& x : v) x = g(rng);
}

inline double weighted_sum(const Batch<double>& y, const std::vector<double>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * w[i];
  return s;
}

inline Report conv(int probes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  uwbsense::nn::Conv1d<double> layer(3, 4, 7);
  layer.init(rng, std::sqrt(2.0));
  std::vector<uwbsense::nn::ParamView<double>> params;
  layer.collect("conv", params);
  fill_normal(params[1].value, rng, 0.1);
  Batch<double> x(2, 3, 20), y;
  fill_normal(x.data, rng);
  layer.forward(x, y, 1);
  std::vector<double> w(y.data.size());
  fill_normal(w, rng);
  Batch<double> dy = y, dx;
  dy.data = w;
  layer.backward(x, dy, &dx, 1);
  std::vector<Target> t = {
      {"weight", params[0].value, {params[0].grad.begin(), params[0].grad.end()}},
      {"bias", params[1].value, {params[1].grad.begin(), params[1].grad.end()}},
      {"input", x.data, dx.data}};
  return probe("conv", [&] {
    Batch<double> out;
    layer.forward(x, out, 1);
    return weighted_sum(out, w);
  }, t, probes, seed + 1);
}

inline Report batchnorm(int probes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  uwbsense::nn::BatchNorm1d<double> layer(3);
  std::vector<uwbsense::nn::ParamView<double>> params;
  layer.collect("bn", params);
  fill_normal(params[0].value, rng);
  fill_normal(params[1].value, rng);
  Batch<double> x(4, 3, 10), y;
  fill_normal(x.data, rng, 2.0);
  for (auto& v : x.data) v += 1.5;
  layer.forward(x, y, uwbsense::nn::Mode::Train, 1);
  std::vector<double> w(y.data.size());
  fill_normal(w, rng);
  Batch<double> dy = y, dx;
  dy.data = w;
  layer.backward(dy, dx, 1);
  std::vector<Target> t = {
      {"gamma", params[0].value, {params[0].grad.begin(), params[0].grad.end()}},
      {"beta", params[1].value, {params[1].grad.begin(), params[1].grad.end()}},
      {"input", x.data, dx.data}};
  return probe("batchnorm", [&] {
    Batch<double> out;
    layer.forward(x, out, uwbsense::nn::Mode::Train, 1);
    return weighted_sum(out, w);
  }, t, probes, seed + 1);
}

inline Report maxpool(int probes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  uwbsense::nn::MaxPool1d<double> layer(4);
  Batch<double> x(2, 3, 18), y;
  fill_normal(x.data, rng);
  layer.forward(x, y);
  std::vector<double> w(y.data.size());
  fill_normal(w, rng);
  Batch<double> dy = y, dx;
  dy.data = w;
  layer.backward(dy, dx);
  std::vector<Target> t = {{"input", x.data, dx.data}};
  return probe("maxpool", [&] {
    Batch<double> out;
    layer.forward(x, out);
    return weighted_sum(out, w);
  }, t, probes, seed + 1);
}

inline Report linear(int probes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  uwbsense::nn::Linear<double> layer(10, 5);
  layer.init(rng, std::sqrt(2.0));
  std::vector<uwbsense::nn::ParamView<double>> params;
  layer.collect("fc", params);
  fill_normal(params[1].value, rng, 0.1);
  Batch<double> x(3, 10, 1), y;
  fill_normal(x.data, rng);
  layer.forward(x, y, 1);
  std::vector<double> w(y.data.size());
  fill_normal(w, rng);
  Batch<double> dy = y, dx;
  dy.data = w;
  layer.backward(x, dy, &dx, 1);
  std::vector<Target> t = {
      {"weight", params[0].value, {params[0].grad.begin(), params[0].grad.end()}},
      {"bias", params[1].value, {params[1].grad.begin(), params[1].grad.end()}},
      {"input", x.data, dx.data}};
  return probe("fc", [&] {
    Batch<double> out;
    layer.forward(x, out, 1);
    return weighted_sum(out, w);
  }, t, probes, seed + 1);
}

inline Report relu(int probes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  uwbsense::nn::Relu<double> layer;
  Batch<double> x(2, 3, 12), y;
  fill_normal(x.data, rng);
  layer.forward(x, y);
  std::vector<double> w(y.data.size());
  fill_normal(w, rng);
  Batch<double> dy = y, dx;
  dy.data = w;
  layer.backward(y, dy, dx);
  std::vector<Target> t = {{"input", x.data, dx.data}};
  return probe("relu", [&] {
    Batch<double> out;
    layer.forward(x, out);
    return weighted_sum(out, w);
  }, t, probes, seed + 1);
}

inline Report l2(int probes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Report total;
  total.layer = "l2";
  // Fresh prediction/target pairs so the probes cover many points.
  for (int p = 0; p < probes; ++p) {
    std::vector<double> pred(2), target(2), grad(2);
    fill_normal(pred, rng, 2.0);
    fill_normal(target, rng, 2.0);
    uwbsense::nn::l2_loss<double>(pred, target, grad);
    std::vector<Target> t = {{"pred", pred, grad}};
    auto r = probe("l2", [&] {
      std::vector<double> g(2);
      return uwbsense::nn::l2_loss<double>(pred, target, g);
    }, t, 1, seed + 100 + p);
    total.probes += r.probes;
    total.failures += r.failures;
    if (r.worst_rel > total.worst_rel) {
      total.worst_rel = r.worst_rel;
      total.worst_where = r.worst_where;
    }
  }
  return total;
}

inline Report cross_entropy(int probes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Report total;
  total.layer = "cross_entropy";
  std::uniform_int_distribution<int> cls(0, 3);
  for (int p = 0; p < probes; ++p) {
    std::vector<double> logits(4), grad(4);
    fill_normal(logits, rng, 3.0);
    const int target = cls(rng);
    uwbsense::nn::cross_entropy<double>(logits, target, grad);
    std::vector<Target> t = {{"logits", logits, grad}};
    auto r = probe("cross_entropy", [&] {
      std::vector<double> g(4);
      return uwbsense::nn::cross_entropy<double>(logits, target, g);
    }, t, 1, seed + 100 + p);
    total.probes += r.probes;
    total.failures += r.failures;
    if (r.worst_rel > total.worst_rel) {
      total.worst_rel = r.worst_rel;
      total.worst_where = r.worst_where;
    }
  }
  return total;
}

/// Whole two-stream network on a small architecture, train-mode batch norm.
inline Report network(int probes, std::uint64_t seed) {
  uwbsense::ArchConfig arch;
  arch.links = 2;
  arch.blocks = 2;
  arch.length = 32;
  arch.kernel = 5;
  arch.channels = {3, 4};
  arch.pool = 2;
  arch.hidden = {6};
  uwbsense::TwoStreamNet<double> net(uwbsense::Task::Localization, arch, seed);
  std::mt19937_64 rng(seed);
  Batch<double> mean(3, arch.input_channels(), arch.length), var = mean;
  fill_normal(mean.data, rng);
  fill_normal(var.data, rng);
  const auto& y0 = net.forward(mean, var, uwbsense::nn::Mode::Train);
  std::vector<double> w(y0.data.size());
  fill_normal(w, rng);
  Batch<double> dy(y0.n, y0.channels, 1);
  dy.data = w;
  net.backward(dy);
  std::vector<Target> t;
  for (auto& p : net.parameters())
    t.push_back({p.name, p.value, {p.grad.begin(), p.grad.end()}});
  return probe("network", [&] {
    return weighted_sum(net.forward(mean, var, uwbsense::nn::Mode::Train), w);
  }, t, probes, seed + 1);
}

}  // namespace gradcheck
