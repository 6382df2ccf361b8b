#pragma once

// Mini-batch training and fine-tuning of the two-stream estimator.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uwbsense/model.hpp"
#include "uwbsense/nn/loss.hpp"
#include "uwbsense/nn/optim.hpp"

namespace uwbsense {

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;  // mean error (m) or accuracy
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 30;
  std::uint64_t seed = 1;
  nn::OptimizerKind optimizer = nn::OptimizerKind::Adam;
  double weight_decay = 0.0;
  bool cosine_schedule = true;
  int threads = 1;
  std::function<void(const EpochRecord&)> on_epoch;

  void validate() const {
    require(learning_rate >= 0.0 && std::isfinite(learning_rate),
            "learning rate must be finite and non-negative");
    require(batch_size >= 1, "batch size must be at least 1");
    require(epochs >= 0, "epochs must be non-negative");
  }
};

/// Lower is better for localization error, higher for accuracy.
inline bool metric_improves(Task task, double candidate, double best) {
  return is_classification(task) ? candidate > best : candidate < best;
}

inline double worst_metric(Task task) {
  return is_classification(task) ? -1.0 : std::numeric_limits<double>::infinity();
}

/// Loss of one prediction row; writes d(loss)/d(row) into grad.
template <class T>
double sample_loss(Task task, std::span<const T> out, const Label& label,
                   std::span<T> grad) {
  require(label.valid && label.task == task, "label does not match the model task");
  if (task == Task::Localization) {
    const double target[2] = {label.position.x, label.position.y};
    return nn::l2_loss<T>(out, target, grad);
  }
  return nn::cross_entropy<T>(out, label.class_id, grad);
}

struct EvalSummary {
  double loss = 0.0;
  double metric = 0.0;
};

template <class T>
EvalSummary evaluate(TwoStreamNet<T>& model, std::span<const DataPoint> set,
                     int threads = 1) {
  require(!set.empty(), "evaluation set is empty");
  const auto preds = predict(model, set, 64, threads);
  double loss = 0.0, correct = 0.0;
  std::vector<T> grad(static_cast<std::size_t>(model.outputs()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    std::vector<T> row;
    if (model.task() == Task::Localization) {
      row = {static_cast<T>(preds[i].position.x), static_cast<T>(preds[i].position.y)};
    } else {
      for (double v : preds[i].logits) row.push_back(static_cast<T>(v));
      if (preds[i].predicted_class() == set[i].label.class_id) correct += 1.0;
    }
    loss += sample_loss<T>(model.task(), row, set[i].label, grad);
  }
  const double n = static_cast<double>(set.size());
  return {loss / n, is_classification(model.task()) ? correct / n : loss / n};
}

/// One optimizer step on a batch; returns the mean batch loss.
template <class T>
double train_step(TwoStreamNet<T>& model, nn::Optimizer<T>& opt,
                  std::span<const DataPoint* const> batch, int threads,
                  nn::Batch<T>& mean, nn::Batch<T>& var) {
  make_inputs<T>(batch, mean, var);
  const auto& y = model.forward(mean, var, nn::Mode::Train, threads);
  nn::Batch<T> dy(y.n, y.channels, 1);
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(y.n);
  for (int b = 0; b < y.n; ++b) {
    std::span<const T> row(y.sample(b), static_cast<std::size_t>(y.channels));
    std::span<T> g(dy.sample(b), static_cast<std::size_t>(y.channels));
    total += sample_loss<T>(model.task(), row, batch[static_cast<std::size_t>(b)]->label, g);
    for (auto& v : g) v = static_cast<T>(v * inv_n);
  }
  model.backward(dy, threads);
  auto params = model.parameters();
  opt.step(params);
  return total * inv_n;
}

template <class T>
struct TrainResult {
  TwoStreamNet<T> model;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

/// Seeded shuffled mini-batch training. Returns the checkpoint with the best
/// validation metric (the initial model when no epoch runs).
template <class T>
TrainResult<T> train(TwoStreamNet<T> model, std::span<const DataPoint> train_set,
                     std::span<const DataPoint> val_set, const TrainConfig& cfg) {
  cfg.validate();
  require(!train_set.empty(), "training set is empty");
  require(!val_set.empty(), "validation set is empty");
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x73687566ULL));
  nn::Optimizer<T> opt(cfg.optimizer, cfg.learning_rate, cfg.weight_decay);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult<T> result{model, {}, 0};
  double best = worst_metric(model.task());
  nn::Batch<T> mean, var;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.cosine_schedule && cfg.epochs > 1) {
      const double phase = static_cast<double>(epoch - 1) / cfg.epochs;
      opt.set_learning_rate(cfg.learning_rate * 0.5 * (1.0 + std::cos(kPi * phase)));
    }
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const DataPoint*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_set[order[i]]);
      const double l = train_step(model, opt, batch, cfg.threads, mean, var);
      if (!std::isfinite(l))
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) +
                             ", sample offset " + std::to_string(start) +
                             ": loss is not finite");
      loss_sum += l * static_cast<double>(batch.size());
      seen += batch.size();
    }
    const auto val = evaluate(model, val_set, cfg.threads);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(seen), val.loss, val.metric};
    result.history.push_back(rec);
    if (cfg.on_epoch) cfg.on_epoch(rec);
    if (metric_improves(model.task(), val.metric, best)) {
      best = val.metric;
      model.clear_cache();
      result.model = model;
      result.best_epoch = epoch;
    }
  }
  if (cfg.epochs == 0) result.model = model;
  result.model.clear_cache();
  return result;
}

inline constexpr int kMaxFinetuneEpochs = 50;

/// Continues training from `model` at a reduced learning rate
/// (cfg.learning_rate * lr_scale). Without a validation set the final
/// parameters are returned.
template <class T>
TrainResult<T> finetune(TwoStreamNet<T> model, std::span<const DataPoint> small_set,
                        std::span<const DataPoint> val_set, int epochs,
                        TrainConfig cfg, double lr_scale = 0.1) {
  require(!small_set.empty(), "fine-tuning set is empty");
  require(epochs >= 0 && epochs <= kMaxFinetuneEpochs,
          "fine-tuning runs at most 50 epochs");
  cfg.epochs = epochs;
  cfg.learning_rate *= lr_scale;
  if (epochs == 0) return {std::move(model), {}, 0};
  if (!val_set.empty()) {
    // Keep the incoming model unless an epoch improves on it.
    const double start = evaluate(model, val_set, cfg.threads).metric;
    auto r = train(model, small_set, val_set, cfg);
    if (r.best_epoch == 0 ||
        !metric_improves(model.task(),
                         r.history[static_cast<std::size_t>(r.best_epoch - 1)].val_metric,
                         start)) {
      model.clear_cache();
      r.model = std::move(model);
      r.best_epoch = 0;
    }
    return r;
  }
  // No validation data: train on the set itself and return the last epoch.
  cfg.cosine_schedule = false;
  TrainResult<T> result{model, {}, epochs};
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x73687566ULL));
  nn::Optimizer<T> opt(cfg.optimizer, cfg.learning_rate, cfg.weight_decay);
  std::vector<std::size_t> order(small_set.size());
  std::iota(order.begin(), order.end(), 0);
  nn::Batch<T> mean, var;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(order.size(), s + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const DataPoint*> batch;
      for (std::size_t i = s; i < e; ++i) batch.push_back(&small_set[order[i]]);
      const double l = train_step(model, opt, batch, cfg.threads, mean, var);
      if (!std::isfinite(l)) throw NumericalError("fine-tuning diverged");
      loss_sum += l * static_cast<double>(batch.size());
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()), 0.0, 0.0};
    result.history.push_back(rec);
    if (cfg.on_epoch) cfg.on_epoch(rec);
  }
  model.clear_cache();
  result.model = std::move(model);
  return result;
}

/// Sets the regression head bias to the mean training position.
template <class T>
void centre_output(TwoStreamNet<T>& model, std::span<const DataPoint> train_set) {
  if (model.task() != Task::Localization || train_set.empty()) return;
  double sx = 0.0, sy = 0.0;
  for (const auto& dp : train_set) {
    sx += dp.label.position.x;
    sy += dp.label.position.y;
  }
  auto bias = model.output_bias();
  bias[0] = static_cast<T>(sx / static_cast<double>(train_set.size()));
  bias[1] = static_cast<T>(sy / static_cast<double>(train_set.size()));
}

}  // namespace uwbsense
