#pragma once

// Two-stream convolutional estimator. The mean plane (links x C x L) and the
// variance plane each pass through their own stack of
// [conv 1x7 -> batch-norm -> ReLU -> max-pool 1x4] blocks, with links and
// blocks folded into input channels. Both flattened streams are concatenated
// and fed to a ReLU feed-forward head whose width depends on the task.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "uwbsense/common.hpp"
#include "uwbsense/nn/layers.hpp"
#include "uwbsense/preprocess.hpp"

namespace uwbsense {

struct ArchConfig {
  int links = 12;
  int blocks = 4;    // C
  int length = 500;  // delay bins after upsampling
  int kernel = 7;
  std::vector<int> channels = {16, 32, 64};
  int pool = 4;
  std::vector<int> hidden = {256, 64};

  int input_channels() const { return links * blocks; }

  int stream_length() const {
    int len = length;
    for (std::size_t i = 0; i < channels.size(); ++i) len /= pool;
    return len;
  }

  int stream_features() const { return channels.back() * stream_length(); }

  void validate() const {
    require(links >= 1 && blocks >= 1 && length >= 1, "bad input shape");
    require(kernel >= 1 && kernel % 2 == 1, "kernel must be odd");
    require(!channels.empty(), "need at least one conv block");
    require(pool >= 1, "pool must be positive");
    require(stream_length() >= 1, "input too short for the pooling stack");
  }

  std::string describe() const {
    std::ostringstream os;
    os << "links=" << links << ";blocks=" << blocks << ";length=" << length
       << ";kernel=" << kernel << ";pool=" << pool << ";channels=";
    for (int c : channels) os << c << ",";
    os << ";hidden=";
    for (int h : hidden) os << h << ",";
    return os.str();
  }

  std::uint64_t hash() const { return fnv1a64(describe()); }

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

template <class T>
class TwoStreamNet {
 public:
  TwoStreamNet(Task task, ArchConfig arch, std::uint64_t seed)
      : task_(task), arch_(std::move(arch)) {
    arch_.validate();
    std::mt19937_64 rng(derive_seed(seed, 0x696e6974ULL));
    for (auto* s : {&mean_, &var_}) {
      int in = arch_.input_channels();
      for (int ch : arch_.channels) {
        s->conv.emplace_back(in, ch, arch_.kernel);
        s->conv.back().init(rng, std::sqrt(2.0));
        s->bn.emplace_back(ch);
        s->pool.emplace_back(arch_.pool);
        in = ch;
      }
      const std::size_t n = arch_.channels.size();
      s->conv_out.resize(n);
      s->bn_out.resize(n);
      s->relu_out.resize(n);
      s->pool_out.resize(n);
    }
    int in = 2 * arch_.stream_features();
    for (int h : arch_.hidden) {
      head_.emplace_back(in, h);
      head_.back().init(rng, std::sqrt(2.0));
      in = h;
    }
    head_.emplace_back(in, task_outputs(task_));
    head_.back().init(rng, 1.0);
    head_in_.resize(head_.size());
    head_z_.resize(head_.size());
  }

  Task task() const { return task_; }
  const ArchConfig& arch() const { return arch_; }
  int outputs() const { return task_outputs(task_); }

  /// Inputs are [n][links*C][L]; returns [n][outputs][1].
  const nn::Batch<T>& forward(const nn::Batch<T>& mean_in,
                              const nn::Batch<T>& var_in, nn::Mode mode,
                              int threads = 1) {
    require(mean_in.channels == arch_.input_channels() &&
                mean_in.length == arch_.length &&
                var_in.channels == mean_in.channels &&
                var_in.length == mean_in.length && var_in.n == mean_in.n,
            "model input shape mismatch");
    const int n = mean_in.n;
    stream_forward(mean_, mean_in, mode, threads);
    stream_forward(var_, var_in, mode, threads);

    const int f = arch_.stream_features();
    auto& h0 = head_in_[0];
    h0.resize(n, 2 * f, 1);
    for (int b = 0; b < n; ++b) {
      const T* m = mean_.pool_out.back().sample(b);
      const T* v = var_.pool_out.back().sample(b);
      std::copy(m, m + f, h0.sample(b));
      std::copy(v, v + f, h0.sample(b) + f);
    }
    for (std::size_t i = 0; i < head_.size(); ++i) {
      head_[i].forward(head_in_[i], head_z_[i], threads);
      if (i + 1 < head_.size()) relu_.forward(head_z_[i], head_in_[i + 1]);
    }
    return head_z_.back();
  }

  /// Backpropagates d(loss)/d(output) from the last forward call.
  void backward(const nn::Batch<T>& dout, int threads = 1) {
    nn::Batch<T> d = dout, dprev;
    for (std::size_t i = head_.size(); i-- > 0;) {
      head_[i].backward(head_in_[i], d, &dprev, threads);
      if (i > 0) {
        relu_.backward(head_in_[i], dprev, d);
      } else {
        d = std::move(dprev);
      }
    }
    const int f = arch_.stream_features();
    const int n = d.n;
    nn::Batch<T> dm, dv;
    const auto& pm = mean_.pool_out.back();
    dm.resize(n, pm.channels, pm.length);
    dv.resize(n, pm.channels, pm.length);
    for (int b = 0; b < n; ++b) {
      const T* src = d.sample(b);
      std::copy(src, src + f, dm.sample(b));
      std::copy(src + f, src + 2 * f, dv.sample(b));
    }
    stream_backward(mean_, dm, threads);
    stream_backward(var_, dv, threads);
  }

  std::vector<nn::ParamView<T>> parameters() {
    std::vector<nn::ParamView<T>> out;
    for (auto [name, s] : {std::pair{"mean", &mean_}, std::pair{"var", &var_}}) {
      for (std::size_t i = 0; i < s->conv.size(); ++i) {
        const auto p = std::string(name) + ".block" + std::to_string(i);
        s->conv[i].collect(p + ".conv", out);
        s->bn[i].collect(p + ".bn", out);
      }
    }
    for (std::size_t i = 0; i < head_.size(); ++i)
      head_[i].collect("head.fc" + std::to_string(i), out);
    return out;
  }

  /// Non-trainable state (batch-norm running statistics).
  std::vector<std::pair<std::string, std::span<T>>> buffers() {
    std::vector<std::pair<std::string, std::span<T>>> out;
    for (auto [name, s] : {std::pair{"mean", &mean_}, std::pair{"var", &var_}})
      for (std::size_t i = 0; i < s->bn.size(); ++i)
        s->bn[i].collect_buffers(
            std::string(name) + ".block" + std::to_string(i) + ".bn", out);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto& p : parameters()) n += p.value.size();
    return n;
  }

  /// Output-layer bias, e.g. to centre a regression head.
  std::span<T> output_bias() { return head_.back().bias(); }

  /// Drops cached activations (keeps parameters and running statistics).
  void clear_cache() {
    for (auto* s : {&mean_, &var_})
      for (auto* v : {&s->conv_out, &s->bn_out, &s->relu_out, &s->pool_out})
        for (auto& b : *v) b = nn::Batch<T>{};
    for (auto& b : head_in_) b = nn::Batch<T>{};
    for (auto& b : head_z_) b = nn::Batch<T>{};
  }

 private:
  struct Stream {
    std::vector<nn::Conv1d<T>> conv;
    std::vector<nn::BatchNorm1d<T>> bn;
    std::vector<nn::MaxPool1d<T>> pool;
    nn::Relu<T> relu;
    const nn::Batch<T>* input = nullptr;
    std::vector<nn::Batch<T>> conv_out, bn_out, relu_out, pool_out;
  };

  void stream_forward(Stream& s, const nn::Batch<T>& in, nn::Mode mode, int threads) {
    s.input = &in;
    const nn::Batch<T>* x = &in;
    for (std::size_t i = 0; i < s.conv.size(); ++i) {
      s.conv[i].forward(*x, s.conv_out[i], threads);
      s.bn[i].forward(s.conv_out[i], s.bn_out[i], mode, threads);
      s.relu.forward(s.bn_out[i], s.relu_out[i]);
      s.pool[i].forward(s.relu_out[i], s.pool_out[i]);
      x = &s.pool_out[i];
    }
  }

  void stream_backward(Stream& s, nn::Batch<T>& dout, int threads) {
    nn::Batch<T> d = std::move(dout), tmp;
    for (std::size_t i = s.conv.size(); i-- > 0;) {
      s.pool[i].backward(d, tmp);
      s.relu.backward(s.relu_out[i], tmp, d);
      s.bn[i].backward(d, tmp, threads);
      const nn::Batch<T>& x = i == 0 ? *s.input : s.pool_out[i - 1];
      s.conv[i].backward(x, tmp, i == 0 ? nullptr : &d, threads);
    }
  }

  Task task_;
  ArchConfig arch_;
  Stream mean_, var_;
  std::vector<nn::Linear<T>> head_;
  nn::Relu<T> relu_;
  std::vector<nn::Batch<T>> head_in_, head_z_;
};

/// Folds datapoints into the two stream inputs: [n][link*C + block][L].
template <class T>
void make_inputs(std::span<const DataPoint* const> points, nn::Batch<T>& mean,
                 nn::Batch<T>& var) {
  require(!points.empty(), "empty batch");
  const auto& first = *points.front();
  const int n = static_cast<int>(points.size());
  mean.resize(n, first.links * first.c, first.length);
  var.resize(n, first.links * first.c, first.length);
  const std::size_t plane = static_cast<std::size_t>(first.c) * first.length;
  for (int b = 0; b < n; ++b) {
    const auto& dp = *points[static_cast<std::size_t>(b)];
    require(dp.links == first.links && dp.c == first.c && dp.length == first.length,
            "datapoints with mixed shapes in one batch");
    // ReLU and max-pool would quietly swallow a NaN, so reject it here.
    for (float v : dp.tensor)
      if (!std::isfinite(v)) throw NumericalError("non-finite value in datapoint input");
    for (int l = 0; l < dp.links; ++l) {
      const float* m = dp.tensor.data() + dp.index(l, 0, 0, 0);
      const float* v = dp.tensor.data() + dp.index(l, 1, 0, 0);
      std::copy(m, m + plane, mean.sample(b) + l * plane);
      std::copy(v, v + plane, var.sample(b) + l * plane);
    }
  }
}

struct Prediction {
  Vec2 position;              // localization
  std::vector<double> logits;  // classification

  int predicted_class() const {
    int best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
      if (logits[i] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    return best;
  }
};

/// Eval-mode predictions, batched.
template <class T>
std::vector<Prediction> predict(TwoStreamNet<T>& model,
                                std::span<const DataPoint> points,
                                int batch_size = 64, int threads = 1) {
  std::vector<Prediction> out;
  out.reserve(points.size());
  nn::Batch<T> mean, var;
  for (std::size_t start = 0; start < points.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(points.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const DataPoint*> ptrs;
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&points[i]);
    make_inputs<T>(ptrs, mean, var);
    const auto& y = model.forward(mean, var, nn::Mode::Eval, threads);
    for (int b = 0; b < y.n; ++b) {
      Prediction p;
      const T* r = y.sample(b);
      if (model.task() == Task::Localization) {
        p.position = {static_cast<double>(r[0]), static_cast<double>(r[1])};
      } else {
        for (int k = 0; k < y.channels; ++k) p.logits.push_back(static_cast<double>(r[k]));
      }
      for (int k = 0; k < y.channels; ++k)
        if (!std::isfinite(static_cast<double>(r[k])))
          throw NumericalError("non-finite model output");
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace uwbsense
