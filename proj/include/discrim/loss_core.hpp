#pragma once

/**
 * Stage-wise discrimination loss.
 *
 * Every sample i carries a learnable confidence delta_i. Its outer loss is
 *
 *     L_i = ES(e) * (Avg(l_i) - k_dyn(e)) / delta_i + lambda * log(delta_i)^2
 *
 * where l_i is the wrapped task ("inner") loss, Avg(l_i) its per-sample exponential
 * moving average, ES(e) a linear warm-up ramp and k_dyn(e) a tanh schedule that moves
 * from k1 (easy vs difficult split) to k2 = (1 + 2a) k1 (hard vs incorrect split).
 *
 * delta_i follows plain SGD on dL_i/d(delta_i); the model only ever sees the scalar
 * weight ES(e) / delta_i applied to dl_i/d(theta).
 *
 * The clock `e` is 1-based and counts epochs or iterations (see Clock).
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>

#include "discrim/errors.hpp"

namespace discrim {

/// How k1, the lower end of the threshold schedule, is obtained.
enum class K1Mode {
  GlobalAverage,  ///< mean inner loss over the previous clock period
  MovingAverage,  ///< batch-mean inner loss smoothed with k1_smoothing
  Constant,       ///< fixed value k1_constant
};

/// Unit of the schedule clock that drives k_dyn and ES.
enum class Clock { Epoch, Iteration };

struct DiscrimConfig {
  double switch_amplitude = 0.27;  // a
  double switch_speed = 0.54;      // p
  double switch_moment = 60.0;     // q, in clock ticks
  std::int64_t suppressed_ticks = 3;  // e_s
  double reg_strength = 0.0;       // lambda
  double history_smoothing = 0.9;  // rho, for Avg(l_i)
  double k1_smoothing = 0.9;       // rho', for K1Mode::MovingAverage
  double delta_lr = 0.1;           // tau
  K1Mode k1_mode = K1Mode::GlobalAverage;
  double k1_constant = 1.0;        // eta, for K1Mode::Constant
  double delta_min = 1e-2;
  double delta_max = 1e2;
  Clock clock = Clock::Epoch;
  std::int64_t steps_per_tick = 1;  // mini-batches per tick when clock == Iteration

  /// Throws ConfigError naming the first violated constraint.
  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(std::string("invalid discrim config: ") + what);
    };
    require(std::isfinite(switch_amplitude) && switch_amplitude > 0, "a must be > 0");
    require(std::isfinite(switch_speed) && switch_speed > 0, "p must be > 0");
    require(std::isfinite(switch_moment) && switch_moment >= 0, "q must be >= 0");
    require(suppressed_ticks >= 1, "e_s must be >= 1");
    require(std::isfinite(reg_strength) && reg_strength >= 0, "lambda must be >= 0");
    require(history_smoothing >= 0 && history_smoothing < 1, "rho must be in [0,1)");
    require(k1_smoothing >= 0 && k1_smoothing < 1, "rho_prime must be in [0,1)");
    require(std::isfinite(delta_lr) && delta_lr > 0, "tau must be > 0");
    require(k1_mode != K1Mode::Constant || (std::isfinite(k1_constant) && k1_constant > 0),
            "eta must be > 0");
    require(std::isfinite(delta_min) && delta_min > 0, "delta_min must be > 0");
    require(std::isfinite(delta_max) && delta_max > delta_min, "delta_max must exceed delta_min");
    require(delta_min <= 1.0 && 1.0 <= delta_max, "clamp range must contain 1");
    require(steps_per_tick >= 1, "steps_per_tick must be >= 1");
  }
};

/// Per-sample mutable record. Single writer (the trainer) per instance.
struct SampleState {
  double delta = 1.0;
  std::optional<double> avg_loss;
  std::optional<double> last_weight;
  int fluctuation_count = 0;

  bool operator==(const SampleState&) const = default;
};

/// (a tanh(p (e - q)) + a + 1) k1
inline double k_dyn(const DiscrimConfig& config, double k1, std::int64_t tick) {
  const double a = config.switch_amplitude;
  const double phase = config.switch_speed * (static_cast<double>(tick) - config.switch_moment);
  return (a * std::tanh(phase) + a + 1.0) * k1;
}

/// Upper plateau k2 = (1 + 2a) k1.
inline double k_upper(const DiscrimConfig& config, double k1) {
  return (1.0 + 2.0 * config.switch_amplitude) * k1;
}

/**
 * Owns the k1 estimate and evaluates k_dyn.
 *
 * GlobalAverage keeps a running sum over the current clock period; the mean is
 * finalized by end_period() and used for all later ticks. Until the first
 * finalization the running mean of what has been seen so far stands in.
 * MovingAverage starts at the first observed batch mean and smooths each further
 * batch mean with k1_smoothing.
 */
class ThresholdSchedule {
 public:
  explicit ThresholdSchedule(const DiscrimConfig& config) : config_(config) {
    if (config_.k1_mode == K1Mode::Constant) estimate_ = config_.k1_constant;
  }

  /// Feeds one mini-batch of inner losses.
  void observe(std::span<const double> losses) {
    if (losses.empty()) return;
    double sum = 0.0;
    for (double l : losses) {
      if (!std::isfinite(l)) throw NumericError("non-finite loss fed to threshold schedule");
      sum += l;
    }
    switch (config_.k1_mode) {
      case K1Mode::GlobalAverage:
        period_sum_ += sum;
        period_count_ += losses.size();
        break;
      case K1Mode::MovingAverage: {
        const double batch_mean = sum / static_cast<double>(losses.size());
        const double rho = config_.k1_smoothing;
        estimate_ = estimate_ ? rho * *estimate_ + (1.0 - rho) * batch_mean : batch_mean;
        break;
      }
      case K1Mode::Constant:
        break;
    }
  }

  /// Closes the current clock period (GlobalAverage finalizes its mean; others no-op).
  void end_period() {
    if (config_.k1_mode != K1Mode::GlobalAverage || period_count_ == 0) return;
    estimate_ = period_sum_ / static_cast<double>(period_count_);
    period_sum_ = 0.0;
    period_count_ = 0;
  }

  bool warmed() const { return estimate_.has_value() || period_count_ > 0; }

  double k1() const {
    if (estimate_) return *estimate_;
    if (period_count_ > 0) return period_sum_ / static_cast<double>(period_count_);
    throw ScheduleNotWarmed();
  }

  double k_dyn(std::int64_t tick) const {
    if (tick < 1) throw DomainError("schedule clock is 1-based");
    return discrim::k_dyn(config_, k1(), tick);
  }

  const DiscrimConfig& config() const { return config_; }

 private:
  DiscrimConfig config_;
  std::optional<double> estimate_;
  double period_sum_ = 0.0;
  std::size_t period_count_ = 0;
};

/// Early Suppression ramp: tick / e_s below e_s, 1 from there on.
inline double es_factor(std::int64_t tick, std::int64_t suppressed_ticks) {
  if (tick < suppressed_ticks) {
    return static_cast<double>(tick) / static_cast<double>(suppressed_ticks);
  }
  return 1.0;
}

/// Folds l_i into the sample's loss EMA (first observation initializes it).
inline double update_avg_loss(SampleState& state, double loss, double rho) {
  if (!std::isfinite(loss) || loss < 0) {
    throw NumericError("inner loss must be finite and nonnegative, got " + std::to_string(loss));
  }
  state.avg_loss = state.avg_loss ? rho * *state.avg_loss + (1.0 - rho) * loss : loss;
  return *state.avg_loss;
}

namespace detail {
inline void require_positive_delta(double delta) {
  if (!(delta > 0)) throw DomainError("sample weight delta must be > 0");
}
}  // namespace detail

inline double discrim_loss(double avg_loss, double k_dyn, double delta, double es,
                           double lambda) {
  detail::require_positive_delta(delta);
  const double log_delta = std::log(delta);
  return es * (avg_loss - k_dyn) / delta + lambda * log_delta * log_delta;
}

/// dL/d(delta), including the regularizer term 2 lambda log(delta) / delta.
inline double delta_gradient(double avg_loss, double k_dyn, double delta, double es,
                             double lambda) {
  detail::require_positive_delta(delta);
  return es * (k_dyn - avg_loss) / (delta * delta) + 2.0 * lambda * std::log(delta) / delta;
}

/// One clamped SGD step on delta. Returns the new value.
inline double update_delta(SampleState& state, double grad, double tau, double delta_min,
                           double delta_max) {
  if (!std::isfinite(grad)) throw NumericError("non-finite delta gradient");
  state.delta = std::clamp(state.delta - tau * grad, delta_min, delta_max);
  return state.delta;
}

inline double update_delta(SampleState& state, double grad, const DiscrimConfig& config) {
  return update_delta(state, grad, config.delta_lr, config.delta_min, config.delta_max);
}

/// Scalar multiplying dl_i/d(theta). The loss EMA is a constant w.r.t. theta.
inline double effective_weight(double delta, double es) {
  detail::require_positive_delta(delta);
  return es / delta;
}

/// Tracks importance jumps larger than `threshold` between consecutive records.
inline void record_importance(SampleState& state, double importance, double threshold) {
  if (state.last_weight && std::abs(importance - *state.last_weight) > threshold) {
    ++state.fluctuation_count;
  }
  state.last_weight = importance;
}

}  // namespace discrim
