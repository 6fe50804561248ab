#pragma once

// Deterministic mini-batch SGD coupling a Model, an inner loss and the discrimination
// loss, with per-epoch and per-sample telemetry.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "discrim/data.hpp"
#include "discrim/errors.hpp"
#include "discrim/loss_core.hpp"
#include "discrim/models.hpp"
#include "discrim/rng.hpp"

namespace discrim {

enum class TrainMode { Vanilla, Discrim, DiscrimNoES, DiscrimNoHL };

/// What the fluctuation telemetry tracks per sample.
enum class ImportanceSource { EffectiveWeight, Delta };

struct TrainConfig {
  int epochs = 60;
  std::size_t batch_size = 128;
  double lr = 0.1;
  std::map<int, double> lr_milestones;  // epoch e -> lr used for every epoch after e
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::Discrim;
  bool freeze_delta = false;  // keep every delta at its initial value
  bool delta_first = true;    // update delta before weighting the current batch
  bool record_samples = true;
  double fluctuation_threshold = 2.0;
  ImportanceSource importance = ImportanceSource::EffectiveWeight;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!std::isfinite(lr) || lr <= 0) throw ConfigError("lr must be > 0");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must be in [0,1)");
    if (!std::isfinite(weight_decay) || weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
    for (const auto& [epoch, value] : lr_milestones) {
      if (epoch < 0 || !std::isfinite(value) || value <= 0) throw ConfigError("invalid lr milestone");
    }
  }

  double lr_at(int epoch) const {
    double current = lr;
    for (const auto& [after, value] : lr_milestones) {
      if (epoch > after) current = value;
    }
    return current;
  }
};

// ---------------------------------------------------------------------------
// Telemetry helpers

/// Min-max normalization to [0, 1]; all zeros when the losses are all equal.
inline std::vector<double> normalized_loss_snapshot(std::span<const double> losses) {
  std::vector<double> out(losses.size(), 0.0);
  if (losses.empty()) return out;
  const auto [lo, hi] = std::minmax_element(losses.begin(), losses.end());
  const double range = *hi - *lo;
  if (!(range > 0)) return out;
  for (std::size_t i = 0; i < losses.size(); ++i) out[i] = (losses[i] - *lo) / range;
  return out;
}

/// Number of adjacent pairs whose absolute change exceeds `threshold`.
inline int fluctuation_count(std::span<const double> history, double threshold) {
  int count = 0;
  for (std::size_t e = 1; e < history.size(); ++e) {
    if (std::abs(history[e] - history[e - 1]) > threshold) ++count;
  }
  return count;
}

inline std::vector<int> fluctuation_counts(const std::vector<std::vector<double>>& histories,
                                           double threshold) {
  std::vector<int> out;
  out.reserve(histories.size());
  for (const auto& h : histories) out.push_back(fluctuation_count(h, threshold));
  return out;
}

/// Mean normalized loss of noisy-flagged samples minus that of clean ones (NaN if a group is empty).
inline double normalized_loss_gap(std::span<const double> losses, std::span<const std::uint8_t> noisy) {
  const auto normalized = normalized_loss_snapshot(losses);
  double sum[2] = {0.0, 0.0};
  std::size_t n[2] = {0, 0};
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    sum[noisy[i] ? 1 : 0] += normalized[i];
    ++n[noisy[i] ? 1 : 0];
  }
  if (n[0] == 0 || n[1] == 0) return std::numeric_limits<double>::quiet_NaN();
  return sum[1] / static_cast<double>(n[1]) - sum[0] / static_cast<double>(n[0]);
}

// ---------------------------------------------------------------------------
// Evaluation

struct Evaluation {
  bool classification = true;
  double score = 0.0;        // accuracy (classification) or MAE (regression), vs `labels`
  double clean_score = 0.0;  // same, vs `clean_labels`
  double mean_loss = 0.0;    // mean inner loss vs `labels`
  std::size_t count = 0;

  const char* score_name() const { return classification ? "accuracy" : "mae"; }
};

inline std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

/// Plain task metrics; the discrimination loss plays no part at evaluation time.
inline Evaluation evaluate(const Model& model, const Dataset& data, const InnerLoss& loss) {
  if (data.empty()) throw ConfigError("cannot evaluate on an empty dataset");
  Evaluation out;
  out.classification = data.task == Task::Classification;
  out.count = data.size();
  double score = 0.0, clean = 0.0, total_loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto prediction = model.forward(data.row(i));
    total_loss += inner_loss_and_grad(loss, prediction, data.labels[i]).value;
    if (out.classification) {
      const auto predicted = static_cast<double>(argmax(prediction));
      score += predicted == data.labels[i] ? 1.0 : 0.0;
      clean += predicted == data.clean_labels[i] ? 1.0 : 0.0;
    } else {
      score += std::abs(prediction[0] - data.labels[i]);
      clean += std::abs(prediction[0] - data.clean_labels[i]);
    }
  }
  const double n = static_cast<double>(data.size());
  out.score = score / n;
  out.clean_score = clean / n;
  out.mean_loss = total_loss / n;
  return out;
}

// ---------------------------------------------------------------------------
// Run record

struct MetricRow {
  int epoch = 0;
  std::string split;
  std::string metric;
  double value = 0.0;
};

struct SampleRow {
  int epoch = 0;
  std::size_t id = 0;
  double inner_loss = 0.0;
  double avg_loss = 0.0;
  double delta = 1.0;
  double weight = 1.0;
  bool noisy = false;
};

struct RunRecord {
  std::uint64_t seed = 0;
  std::vector<MetricRow> metrics;
  std::vector<SampleRow> samples;
  std::map<std::string, double> final_metrics;  // "split.metric" at the last epoch
  double wall_seconds = 0.0;
};

/// Passed to TrainHooks::on_step after every parameter update.
struct StepInfo {
  int epoch = 0;
  std::int64_t tick = 0;
  std::int64_t step = 0;
  double k_dyn = 0.0;
  double es = 1.0;
  double lr = 0.0;
  std::span<const std::size_t> batch;   // row indices into the training set
  std::span<const double> weights;      // effective weight per batch entry
  std::span<const double> params;       // after the update
  std::span<const SampleState> states;  // all samples, after the update
};

struct TrainHooks {
  std::function<void(const StepInfo&)> on_step;
};

/// Held-out splits evaluated at the end of each epoch.
struct EvalSplits {
  const Dataset* test = nullptr;
  const Dataset* val = nullptr;
};

struct TrainResult {
  Model model;
  RunRecord record;
  std::vector<SampleState> states;
};

/**
 * Trains `model` on `data`.
 *
 * Per mini-batch: inner losses are computed once; in the discrimination modes each
 * present sample's loss EMA and delta are updated (delta first unless
 * `delta_first == false`), and the parameter gradient is the batch mean of
 * ES/delta * dl_i/dtheta. DiscrimNoES fixes ES to 1; DiscrimNoHL uses the raw loss in
 * place of the EMA. k_dyn is frozen at the start of each clock tick, except before k1
 * exists, when the live estimate is used.
 *
 * Throws TrainingAborted on a non-finite inner loss.
 */
inline TrainResult train(Model model, const Dataset& data, const InnerLoss& loss,
                         const DiscrimConfig& discrim, const TrainConfig& config,
                         EvalSplits splits = {}, const TrainHooks& hooks = {}) {
  discrim.validate();
  config.validate();
  if (data.empty()) throw ConfigError("training set is empty");
  if (data.dim != model.input_dim()) throw DimensionMismatch(model.input_dim(), data.dim);

  const auto started = std::chrono::steady_clock::now();
  const std::size_t n = data.size();
  const bool reweight = config.mode != TrainMode::Vanilla;
  const bool use_history = config.mode != TrainMode::DiscrimNoHL;
  const bool use_es = config.mode != TrainMode::DiscrimNoES;

  TrainResult result{std::move(model), {}, std::vector<SampleState>(n)};
  Model& net = result.model;
  RunRecord& record = result.record;
  std::vector<SampleState>& states = result.states;
  record.seed = config.seed;

  ThresholdSchedule schedule(discrim);
  const std::size_t param_count = net.params().size();
  std::vector<double> velocity(param_count, 0.0);
  std::vector<double> grad(param_count, 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(config.seed, 0x5EED));

  std::vector<double> epoch_loss(n, 0.0);
  std::vector<double> epoch_weight(n, 1.0);
  std::vector<LossValue> batch_loss;
  std::vector<double> batch_values;
  std::vector<double> weights;

  std::int64_t step = 0;
  std::int64_t tick = 0;
  std::optional<double> frozen_k;
  double last_k = std::numeric_limits<double>::quiet_NaN();
  double last_es = 1.0;

  auto add_metric = [&](int epoch, const char* split, const std::string& metric, double value) {
    record.metrics.push_back({epoch, split, metric, value});
  };
  auto begin_tick = [&](std::int64_t t) {
    tick = t;
    frozen_k.reset();
    if (schedule.warmed()) frozen_k = schedule.k_dyn(tick);
  };

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = config.lr_at(epoch);
    rng.shuffle(std::span<std::size_t>(order));
    if (discrim.clock == Clock::Epoch) begin_tick(epoch);
    double loss_sum = 0.0;

    for (std::size_t start = 0; start < n; start += config.batch_size) {
      if (discrim.clock == Clock::Iteration && step % discrim.steps_per_tick == 0) {
        begin_tick(step / discrim.steps_per_tick + 1);
      }
      const std::span<const std::size_t> batch(order.data() + start,
                                               std::min(config.batch_size, n - start));

      batch_loss.clear();
      batch_values.clear();
      for (std::size_t row : batch) {
        batch_loss.push_back(inner_loss_and_grad(loss, net.forward(data.row(row)), data.labels[row]));
        const double value = batch_loss.back().value;
        if (!std::isfinite(value)) throw TrainingAborted(data.ids[row], epoch, value);
        batch_values.push_back(value);
      }
      schedule.observe(batch_values);
      const double k = frozen_k ? *frozen_k : schedule.k_dyn(tick);
      const double es = use_es ? es_factor(tick, discrim.suppressed_ticks) : 1.0;
      last_k = k;
      last_es = es;

      for (std::size_t b = 0; b < batch.size(); ++b) {
        update_avg_loss(states[batch[b]], batch_values[b], discrim.history_smoothing);
      }
      auto update_deltas = [&] {
        if (!reweight || config.freeze_delta) return;
        for (std::size_t b = 0; b < batch.size(); ++b) {
          SampleState& s = states[batch[b]];
          const double signal = use_history ? *s.avg_loss : batch_values[b];
          update_delta(s, delta_gradient(signal, k, s.delta, es, discrim.reg_strength), discrim);
        }
      };
      auto assign_weights = [&] {
        weights.assign(batch.size(), 1.0);
        if (!reweight) return;
        for (std::size_t b = 0; b < batch.size(); ++b) {
          weights[b] = effective_weight(states[batch[b]].delta, es);
        }
      };
      if (config.delta_first) {
        update_deltas();
        assign_weights();
      } else {
        assign_weights();
        update_deltas();
      }

      std::fill(grad.begin(), grad.end(), 0.0);
      const double inv_batch = 1.0 / static_cast<double>(batch.size());
      for (std::size_t b = 0; b < batch.size(); ++b) {
        net.accumulate_gradient(data.row(batch[b]), batch_loss[b].grad, weights[b] * inv_batch, grad);
        epoch_loss[batch[b]] = batch_values[b];
        epoch_weight[batch[b]] = weights[b];
        loss_sum += batch_values[b];
      }
      auto params = net.params();
      for (std::size_t j = 0; j < param_count; ++j) {
        const double direction = grad[j] + config.weight_decay * params[j];
        velocity[j] = config.momentum * velocity[j] + direction;
        params[j] -= lr * velocity[j];
      }

      ++step;
      if (discrim.clock == Clock::Iteration && step % discrim.steps_per_tick == 0) schedule.end_period();
      if (hooks.on_step) {
        hooks.on_step({epoch, tick, step, k, es, lr, batch, weights, net.params(), states});
      }
    }
    if (discrim.clock == Clock::Epoch) schedule.end_period();

    double delta_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double importance =
          config.importance == ImportanceSource::Delta ? states[i].delta : epoch_weight[i];
      record_importance(states[i], importance, config.fluctuation_threshold);
      delta_sum += states[i].delta;
      if (config.record_samples) {
        record.samples.push_back({epoch, data.ids[i], epoch_loss[i], *states[i].avg_loss,
                                  states[i].delta, epoch_weight[i], data.noisy[i] != 0});
      }
    }

    const Evaluation on_train = evaluate(net, data, loss);
    add_metric(epoch, "train", "loss", loss_sum / static_cast<double>(n));
    add_metric(epoch, "train", on_train.score_name(), on_train.score);
    add_metric(epoch, "train", std::string("clean_") + on_train.score_name(), on_train.clean_score);
    const double gap = normalized_loss_gap(epoch_loss, data.noisy);
    if (std::isfinite(gap)) add_metric(epoch, "train", "normalized_loss_gap", gap);
    add_metric(epoch, "train", "mean_delta", delta_sum / static_cast<double>(n));
    add_metric(epoch, "train", "k_dyn", last_k);
    add_metric(epoch, "train", "es", last_es);
    add_metric(epoch, "train", "lr", lr);
    for (const auto& [name, split] : {std::pair{"test", splits.test}, std::pair{"val", splits.val}}) {
      if (split == nullptr) continue;
      const Evaluation e = evaluate(net, *split, loss);
      add_metric(epoch, name, e.score_name(), e.score);
      add_metric(epoch, name, "loss", e.mean_loss);
    }
  }

  for (const MetricRow& row : record.metrics) {
    if (row.epoch == config.epochs) record.final_metrics[row.split + "." + row.metric] = row.value;
  }
  double fluct[2] = {0.0, 0.0};
  std::size_t group[2] = {0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    fluct[data.noisy[i] ? 1 : 0] += states[i].fluctuation_count;
    ++group[data.noisy[i] ? 1 : 0];
  }
  if (group[0] > 0) record.final_metrics["train.fluctuation_clean"] = fluct[0] / static_cast<double>(group[0]);
  if (group[1] > 0) record.final_metrics["train.fluctuation_noisy"] = fluct[1] / static_cast<double>(group[1]);

  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace discrim
