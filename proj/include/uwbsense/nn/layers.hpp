#pragma once

// Minimal reverse-mode layer set over batched 1-D feature maps. Every layer
// keeps what its backward pass needs from the last forward call; backward
// overwrites (does not accumulate) parameter gradients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uwbsense/common.hpp"
#include "uwbsense/parallel.hpp"

namespace uwbsense::nn {

/// Activations laid out as [n][channels][length].
template <class T>
struct Batch {
  int n = 0;
  int channels = 0;
  int length = 0;
  std::vector<T> data;

  Batch() = default;
  Batch(int n_, int c_, int l_)
      : n(n_), channels(c_), length(l_),
        data(static_cast<std::size_t>(n_) * c_ * l_, T(0)) {}

  void resize(int n_, int c_, int l_) {
    n = n_;
    channels = c_;
    length = l_;
    data.assign(static_cast<std::size_t>(n_) * c_ * l_, T(0));
  }
  std::size_t sample_size() const {
    return static_cast<std::size_t>(channels) * length;
  }
  T* sample(int b) { return data.data() + b * sample_size(); }
  const T* sample(int b) const { return data.data() + b * sample_size(); }
  T* row(int b, int c) { return sample(b) + static_cast<std::size_t>(c) * length; }
  const T* row(int b, int c) const {
    return sample(b) + static_cast<std::size_t>(c) * length;
  }
};

/// Named view of a trainable tensor and its gradient.
template <class T>
struct ParamView {
  std::string name;
  std::span<T> value;
  std::span<T> grad;
};

enum class Mode { Train, Eval };

namespace kernel {

template <class T>
inline void axpy(T* __restrict y, T a, const T* __restrict x, int n) {
#pragma omp simd
  for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class T>
inline T dot(const T* __restrict a, const T* __restrict b, int n) {
  T acc = T(0);
#pragma omp simd reduction(+ : acc)
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace kernel

/// 'Same'-padded 1-D convolution, stride 1, odd kernel.
template <class T>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(int in_ch, int out_ch, int kernel)
      : in_(in_ch), out_(out_ch), k_(kernel),
        w_(static_cast<std::size_t>(out_ch) * in_ch * kernel, T(0)),
        b_(static_cast<std::size_t>(out_ch), T(0)),
        gw_(w_.size(), T(0)), gb_(b_.size(), T(0)) {
    require(kernel % 2 == 1, "conv kernel must be odd");
  }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int fan_in() const { return in_ * k_; }

  void init(std::mt19937_64& rng, double gain) {
    std::normal_distribution<double> g(0.0, 1.0);
    const double s = gain / std::sqrt(static_cast<double>(fan_in()));
    for (auto& v : w_) v = static_cast<T>(s * g(rng));
    std::fill(b_.begin(), b_.end(), T(0));
  }

  void forward(const Batch<T>& x, Batch<T>& y, int threads) {
    require(x.channels == in_, "conv input channel mismatch");
    const int len = x.length;
    y.resize(x.n, out_, len);
    const int pad = k_ / 2;
    parallel_for(static_cast<std::size_t>(x.n), threads, [&](std::size_t bi) {
      const int b = static_cast<int>(bi);
      for (int o = 0; o < out_; ++o) {
        T* yr = y.row(b, o);
        std::fill(yr, yr + len, b_[o]);
        for (int i = 0; i < in_; ++i) {
          const T* xr = x.row(b, i);
          const T* wr = &w_[(static_cast<std::size_t>(o) * in_ + i) * k_];
          for (int j = 0; j < k_; ++j) {
            const int shift = j - pad;  // y[t] += w * x[t + shift]
            const int t0 = std::max(0, -shift);
            const int t1 = std::min(len, len - shift);
            kernel::axpy(yr + t0, wr[j], xr + t0 + shift, t1 - t0);
          }
        }
      }
    });
  }

  /// Parameter gradients from dy; dx only when requested.
  void backward(const Batch<T>& x, const Batch<T>& dy, Batch<T>* dx, int threads) {
    const int len = x.length;
    const int pad = k_ / 2;
    parallel_for(static_cast<std::size_t>(out_), threads, [&](std::size_t oi) {
      const int o = static_cast<int>(oi);
      T gb = T(0);
      T* gw = &gw_[static_cast<std::size_t>(o) * in_ * k_];
      std::fill(gw, gw + static_cast<std::size_t>(in_) * k_, T(0));
      for (int b = 0; b < x.n; ++b) {
        const T* dyr = dy.row(b, o);
        T s = T(0);
        for (int t = 0; t < len; ++t) s += dyr[t];
        gb += s;
        for (int i = 0; i < in_; ++i) {
          const T* xr = x.row(b, i);
          for (int j = 0; j < k_; ++j) {
            const int shift = j - pad;
            const int t0 = std::max(0, -shift);
            const int t1 = std::min(len, len - shift);
            gw[i * k_ + j] += kernel::dot(dyr + t0, xr + t0 + shift, t1 - t0);
          }
        }
      }
      gb_[o] = gb;
    });
    if (!dx) return;
    dx->resize(x.n, in_, len);
    parallel_for(static_cast<std::size_t>(x.n), threads, [&](std::size_t bi) {
      const int b = static_cast<int>(bi);
      for (int o = 0; o < out_; ++o) {
        const T* dyr = dy.row(b, o);
        for (int i = 0; i < in_; ++i) {
          T* dxr = dx->row(b, i);
          const T* wr = &w_[(static_cast<std::size_t>(o) * in_ + i) * k_];
          for (int j = 0; j < k_; ++j) {
            const int shift = j - pad;  // dx[t + shift] += w * dy[t]
            const int t0 = std::max(0, -shift);
            const int t1 = std::min(len, len - shift);
            kernel::axpy(dxr + t0 + shift, wr[j], dyr + t0, t1 - t0);
          }
        }
      }
    });
  }

  void collect(const std::string& prefix, std::vector<ParamView<T>>& out) {
    out.push_back({prefix + ".weight", w_, gw_});
    out.push_back({prefix + ".bias", b_, gb_});
  }

 private:
  int in_ = 0, out_ = 0, k_ = 1;
  std::vector<T> w_, b_, gw_, gb_;
};

/// Per-channel batch normalization over (batch, length).
template <class T>
class BatchNorm1d {
 public:
  BatchNorm1d() = default;
  explicit BatchNorm1d(int channels, double momentum = 0.1, double eps = 1e-5)
      : c_(channels), momentum_(momentum), eps_(eps),
        gamma_(static_cast<std::size_t>(channels), T(1)),
        beta_(static_cast<std::size_t>(channels), T(0)),
        ggamma_(gamma_.size(), T(0)), gbeta_(beta_.size(), T(0)),
        running_mean_(gamma_.size(), T(0)), running_var_(gamma_.size(), T(1)),
        inv_std_(gamma_.size(), 0.0) {}

  void forward(const Batch<T>& x, Batch<T>& y, Mode mode, int threads) {
    require(x.channels == c_, "batch-norm channel mismatch");
    y.resize(x.n, x.channels, x.length);
    xhat_.resize(x.n, x.channels, x.length);
    const double count = static_cast<double>(x.n) * x.length;
    parallel_for(static_cast<std::size_t>(c_), threads, [&](std::size_t ci) {
      const int c = static_cast<int>(ci);
      double mean, var;
      if (mode == Mode::Train) {
        double s = 0.0;
        for (int b = 0; b < x.n; ++b) {
          const T* r = x.row(b, c);
          for (int t = 0; t < x.length; ++t) s += r[t];
        }
        mean = s / count;
        double ss = 0.0;
        for (int b = 0; b < x.n; ++b) {
          const T* r = x.row(b, c);
          for (int t = 0; t < x.length; ++t) {
            const double d = r[t] - mean;
            ss += d * d;
          }
        }
        var = ss / count;
        const double unbiased = count > 1 ? var * count / (count - 1) : var;
        running_mean_[c] = static_cast<T>((1 - momentum_) * running_mean_[c] + momentum_ * mean);
        running_var_[c] = static_cast<T>((1 - momentum_) * running_var_[c] + momentum_ * unbiased);
      } else {
        mean = running_mean_[c];
        var = running_var_[c];
      }
      const double inv = 1.0 / std::sqrt(var + eps_);
      inv_std_[c] = inv;
      for (int b = 0; b < x.n; ++b) {
        const T* r = x.row(b, c);
        T* xh = xhat_.row(b, c);
        T* yr = y.row(b, c);
        for (int t = 0; t < x.length; ++t) {
          xh[t] = static_cast<T>((r[t] - mean) * inv);
          yr[t] = gamma_[c] * xh[t] + beta_[c];
        }
      }
    });
    mode_ = mode;
  }

  void backward(const Batch<T>& dy, Batch<T>& dx, int threads) {
    dx.resize(dy.n, dy.channels, dy.length);
    const double count = static_cast<double>(dy.n) * dy.length;
    parallel_for(static_cast<std::size_t>(c_), threads, [&](std::size_t ci) {
      const int c = static_cast<int>(ci);
      double sdy = 0.0, sdyx = 0.0;
      for (int b = 0; b < dy.n; ++b) {
        const T* d = dy.row(b, c);
        const T* xh = xhat_.row(b, c);
        for (int t = 0; t < dy.length; ++t) {
          sdy += d[t];
          sdyx += d[t] * xh[t];
        }
      }
      ggamma_[c] = static_cast<T>(sdyx);
      gbeta_[c] = static_cast<T>(sdy);
      const double g = gamma_[c] * inv_std_[c];
      for (int b = 0; b < dy.n; ++b) {
        const T* d = dy.row(b, c);
        const T* xh = xhat_.row(b, c);
        T* o = dx.row(b, c);
        if (mode_ == Mode::Train) {
          for (int t = 0; t < dy.length; ++t)
            o[t] = static_cast<T>(g * (d[t] - sdy / count - xh[t] * sdyx / count));
        } else {
          for (int t = 0; t < dy.length; ++t) o[t] = static_cast<T>(g * d[t]);
        }
      }
    });
  }

  void collect(const std::string& prefix, std::vector<ParamView<T>>& out) {
    out.push_back({prefix + ".gamma", gamma_, ggamma_});
    out.push_back({prefix + ".beta", beta_, gbeta_});
  }
  void collect_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, std::span<T>>>& out) {
    out.push_back({prefix + ".running_mean", running_mean_});
    out.push_back({prefix + ".running_var", running_var_});
  }

  std::span<const T> running_var() const { return running_var_; }

 private:
  int c_ = 0;
  double momentum_ = 0.1, eps_ = 1e-5;
  std::vector<T> gamma_, beta_, ggamma_, gbeta_, running_mean_, running_var_;
  std::vector<double> inv_std_;
  Batch<T> xhat_;
  Mode mode_ = Mode::Train;
};

template <class T>
class Relu {
 public:
  void forward(const Batch<T>& x, Batch<T>& y) {
    y.resize(x.n, x.channels, x.length);
    for (std::size_t i = 0; i < x.data.size(); ++i)
      y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
  }
  /// Uses the forward output to gate the gradient.
  void backward(const Batch<T>& y, const Batch<T>& dy, Batch<T>& dx) {
    dx.resize(dy.n, dy.channels, dy.length);
    for (std::size_t i = 0; i < dy.data.size(); ++i)
      dx.data[i] = y.data[i] > T(0) ? dy.data[i] : T(0);
  }
};

/// Non-overlapping max pooling; trailing samples that do not fill a window
/// are discarded.
template <class T>
class MaxPool1d {
 public:
  MaxPool1d() = default;
  explicit MaxPool1d(int size) : size_(size) {}

  int output_length(int len) const { return len / size_; }

  void forward(const Batch<T>& x, Batch<T>& y) {
    const int out_len = output_length(x.length);
    require(out_len > 0, "max-pool input shorter than the window");
    y.resize(x.n, x.channels, out_len);
    argmax_.assign(y.data.size(), 0);
    in_length_ = x.length;
    for (int b = 0; b < x.n; ++b) {
      for (int c = 0; c < x.channels; ++c) {
        const T* r = x.row(b, c);
        T* yr = y.row(b, c);
        int* am = &argmax_[(static_cast<std::size_t>(b) * x.channels + c) * out_len];
        for (int t = 0; t < out_len; ++t) {
          int best = t * size_;
          for (int j = 1; j < size_; ++j)
            if (r[t * size_ + j] > r[best]) best = t * size_ + j;
          yr[t] = r[best];
          am[t] = best;
        }
      }
    }
  }

  void backward(const Batch<T>& dy, Batch<T>& dx) {
    dx.resize(dy.n, dy.channels, in_length_);
    for (int b = 0; b < dy.n; ++b) {
      for (int c = 0; c < dy.channels; ++c) {
        const T* d = dy.row(b, c);
        T* o = dx.row(b, c);
        const int* am =
            &argmax_[(static_cast<std::size_t>(b) * dy.channels + c) * dy.length];
        for (int t = 0; t < dy.length; ++t) o[am[t]] += d[t];
      }
    }
  }

 private:
  int size_ = 2;
  int in_length_ = 0;
  std::vector<int> argmax_;
};

/// Fully connected layer on [n][features][1] batches.
template <class T>
class Linear {
 public:
  Linear() = default;
  Linear(int in, int out)
      : in_(in), out_(out), w_(static_cast<std::size_t>(in) * out, T(0)),
        b_(static_cast<std::size_t>(out), T(0)), gw_(w_.size(), T(0)),
        gb_(b_.size(), T(0)) {}

  int in_features() const { return in_; }
  int out_features() const { return out_; }

  void init(std::mt19937_64& rng, double gain) {
    std::normal_distribution<double> g(0.0, 1.0);
    const double s = gain / std::sqrt(static_cast<double>(in_));
    for (auto& v : w_) v = static_cast<T>(s * g(rng));
    std::fill(b_.begin(), b_.end(), T(0));
  }

  std::span<T> bias() { return b_; }

  void forward(const Batch<T>& x, Batch<T>& y, int threads) {
    require(static_cast<int>(x.sample_size()) == in_, "linear input size mismatch");
    y.resize(x.n, out_, 1);
    parallel_for(static_cast<std::size_t>(x.n), threads, [&](std::size_t bi) {
      const int b = static_cast<int>(bi);
      const T* xr = x.sample(b);
      T* yr = y.sample(b);
      for (int o = 0; o < out_; ++o)
        yr[o] = b_[o] + kernel::dot(&w_[static_cast<std::size_t>(o) * in_], xr, in_);
    });
  }

  void backward(const Batch<T>& x, const Batch<T>& dy, Batch<T>* dx, int threads) {
    parallel_for(static_cast<std::size_t>(out_), threads, [&](std::size_t oi) {
      const int o = static_cast<int>(oi);
      T* gw = &gw_[static_cast<std::size_t>(o) * in_];
      std::fill(gw, gw + in_, T(0));
      T gb = T(0);
      for (int b = 0; b < x.n; ++b) {
        const T d = dy.sample(b)[o];
        gb += d;
        kernel::axpy(gw, d, x.sample(b), in_);
      }
      gb_[o] = gb;
    });
    if (!dx) return;
    dx->resize(x.n, x.channels, x.length);
    parallel_for(static_cast<std::size_t>(x.n), threads, [&](std::size_t bi) {
      const int b = static_cast<int>(bi);
      T* dxr = dx->sample(b);
      const T* d = dy.sample(b);
      for (int o = 0; o < out_; ++o)
        kernel::axpy(dxr, d[o], &w_[static_cast<std::size_t>(o) * in_], in_);
    });
  }

  void collect(const std::string& prefix, std::vector<ParamView<T>>& out) {
    out.push_back({prefix + ".weight", w_, gw_});
    out.push_back({prefix + ".bias", b_, gb_});
  }

 private:
  int in_ = 0, out_ = 0;
  std::vector<T> w_, b_, gw_, gb_;
};

}  // namespace uwbsense::nn
