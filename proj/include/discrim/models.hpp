#pragma once

// Small differentiable predictors with hand-written backward passes, plus the inner
// (task) losses wrapped by the discrimination loss.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "discrim/errors.hpp"
#include "discrim/rng.hpp"

namespace discrim {

struct LinearSoftmax {
  std::size_t inputs = 0;
  std::size_t classes = 0;
};

/// Fully connected ReLU network. `outputs` is the class count, or 1 for regression.
struct Mlp {
  std::size_t inputs = 0;
  std::vector<std::size_t> hidden;
  std::size_t outputs = 0;
};

struct LinearRegressor {
  std::size_t inputs = 0;
};

using Architecture = std::variant<LinearSoftmax, Mlp, LinearRegressor>;

namespace detail {

struct DenseShape {
  std::size_t in = 0;
  std::size_t out = 0;
};

// Weights of each layer are stored row-major (out x in), followed by the bias (out).
inline std::vector<DenseShape> dense_layers(const Architecture& arch) {
  return std::visit(
      [](const auto& a) -> std::vector<DenseShape> {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, LinearSoftmax>) {
          return {{a.inputs, a.classes}};
        } else if constexpr (std::is_same_v<T, LinearRegressor>) {
          return {{a.inputs, 1}};
        } else {
          std::vector<DenseShape> layers;
          std::size_t in = a.inputs;
          for (std::size_t width : a.hidden) {
            layers.push_back({in, width});
            in = width;
          }
          layers.push_back({in, a.outputs});
          return layers;
        }
      },
      arch);
}

inline std::size_t dense_param_count(const DenseShape& s) { return s.out * s.in + s.out; }

// y = W x + b
inline void dense_forward(const DenseShape& s, const double* params, const double* x, double* y) {
  const double* bias = params + s.out * s.in;
  for (std::size_t o = 0; o < s.out; ++o) {
    const double* row = params + o * s.in;
    double acc = bias[o];
    for (std::size_t i = 0; i < s.in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

}  // namespace detail

inline std::size_t parameter_count(const Architecture& arch) {
  std::size_t n = 0;
  for (const auto& layer : detail::dense_layers(arch)) n += detail::dense_param_count(layer);
  return n;
}

inline std::size_t input_dim(const Architecture& arch) {
  return std::visit([](const auto& a) { return a.inputs; }, arch);
}

inline std::size_t output_dim(const Architecture& arch) {
  return detail::dense_layers(arch).back().out;
}

inline bool is_classifier(const Architecture& arch) {
  if (std::holds_alternative<LinearRegressor>(arch)) return false;
  if (const auto* mlp = std::get_if<Mlp>(&arch)) return mlp->outputs > 1;
  return true;
}

/**
 * A predictor with a flat parameter vector.
 *
 * Parameters are initialized uniformly in [-1/sqrt(fan_in), 1/sqrt(fan_in)] from the
 * given seed (biases included). Forward/backward are const and stateless; the trainer
 * mutates `params()` between steps.
 */
class Model {
 public:
  Model(Architecture arch, std::uint64_t seed) : arch_(std::move(arch)) {
    validate();
    params_.assign(parameter_count(arch_), 0.0);
    Rng rng(seed);
    double* p = params_.data();
    for (const auto& layer : detail::dense_layers(arch_)) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(layer.in, 1)));
      const std::size_t n = detail::dense_param_count(layer);
      for (std::size_t k = 0; k < n; ++k) p[k] = rng.uniform(-bound, bound);
      p += n;
    }
  }

  Model(Architecture arch, std::vector<double> params) : arch_(std::move(arch)), params_(std::move(params)) {
    validate();
    if (params_.size() != parameter_count(arch_)) {
      throw DimensionMismatch(parameter_count(arch_), params_.size());
    }
  }

  static Model zeros(Architecture arch) {
    const std::size_t n = parameter_count(arch);
    return Model(std::move(arch), std::vector<double>(n, 0.0));
  }

  const Architecture& architecture() const { return arch_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t input_dim() const { return discrim::input_dim(arch_); }
  std::size_t output_dim() const { return discrim::output_dim(arch_); }
  bool is_classifier() const { return discrim::is_classifier(arch_); }

  /// Logits for classifiers, a single value for regressors.
  std::vector<double> forward(std::span<const double> x) const {
    check_input(x);
    const auto layers = detail::dense_layers(arch_);
    std::vector<double> current(x.begin(), x.end());
    std::vector<double> next;
    const double* p = params_.data();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      next.assign(layers[l].out, 0.0);
      detail::dense_forward(layers[l], p, current.data(), next.data());
      if (l + 1 < layers.size()) {
        for (double& v : next) v = std::max(v, 0.0);
      }
      p += detail::dense_param_count(layers[l]);
      current.swap(next);
    }
    return current;
  }

  /**
   * Adds `scale * d(upstream . prediction)/d(params)` into `grad`.
   * `upstream` is the loss gradient w.r.t. the prediction returned by forward().
   */
  void accumulate_gradient(std::span<const double> x, std::span<const double> upstream,
                           double scale, std::span<double> grad) const {
    check_input(x);
    if (upstream.size() != output_dim()) throw DimensionMismatch(output_dim(), upstream.size());
    if (grad.size() != params_.size()) throw DimensionMismatch(params_.size(), grad.size());

    const auto layers = detail::dense_layers(arch_);
    std::vector<std::size_t> offsets(layers.size());
    std::size_t offset = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      offsets[l] = offset;
      offset += detail::dense_param_count(layers[l]);
    }

    // activations[l] is the input to layer l (post-ReLU for hidden layers)
    std::vector<std::vector<double>> activations(layers.size());
    activations[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
      std::vector<double>& out = activations[l + 1];
      out.assign(layers[l].out, 0.0);
      detail::dense_forward(layers[l], params_.data() + offsets[l], activations[l].data(), out.data());
      for (double& v : out) v = std::max(v, 0.0);
    }

    std::vector<double> delta(upstream.begin(), upstream.end());
    for (std::size_t l = layers.size(); l-- > 0;) {
      const auto& s = layers[l];
      const double* w = params_.data() + offsets[l];
      double* gw = grad.data() + offsets[l];
      double* gb = gw + s.out * s.in;
      const std::vector<double>& in = activations[l];
      for (std::size_t o = 0; o < s.out; ++o) {
        const double d = scale * delta[o];
        if (d == 0.0) continue;
        double* row = gw + o * s.in;
        for (std::size_t i = 0; i < s.in; ++i) row[i] += d * in[i];
        gb[o] += d;
      }
      if (l == 0) break;
      std::vector<double> previous(s.in, 0.0);
      for (std::size_t o = 0; o < s.out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* row = w + o * s.in;
        for (std::size_t i = 0; i < s.in; ++i) previous[i] += row[i] * d;
      }
      // ReLU mask: the stored activation is zero exactly where the unit was inactive.
      for (std::size_t i = 0; i < s.in; ++i) {
        if (in[i] <= 0.0) previous[i] = 0.0;
      }
      delta.swap(previous);
    }
  }

  std::vector<double> backward(std::span<const double> x, std::span<const double> upstream) const {
    std::vector<double> grad(params_.size(), 0.0);
    accumulate_gradient(x, upstream, 1.0, grad);
    return grad;
  }

 private:
  void validate() const {
    for (const auto& layer : detail::dense_layers(arch_)) {
      if (layer.in == 0 || layer.out == 0) throw ConfigError("model layers must have nonzero width");
    }
    if (const auto* soft = std::get_if<LinearSoftmax>(&arch_); soft && soft->classes < 2) {
      throw ConfigError("linear softmax needs at least 2 classes");
    }
  }

  void check_input(std::span<const double> x) const {
    if (x.size() != input_dim()) throw DimensionMismatch(input_dim(), x.size());
  }

  Architecture arch_;
  std::vector<double> params_;
};

// ---------------------------------------------------------------------------
// Inner losses

struct CrossEntropy {};
/// (prediction - target)^2
struct SquaredError {};
/// 0.5 e^2 / beta for |e| < beta, |e| - 0.5 beta otherwise.
struct SmoothL1 {
  double beta = 1.0;
};

using InnerLoss = std::variant<CrossEntropy, SquaredError, SmoothL1>;

struct LossValue {
  double value = 0.0;
  std::vector<double> grad;  // w.r.t. the prediction
};

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> probs(logits.begin(), logits.end());
  const double peak = *std::max_element(probs.begin(), probs.end());
  double total = 0.0;
  for (double& v : probs) {
    v = std::exp(v - peak);
    total += v;
  }
  for (double& v : probs) v /= total;
  return probs;
}

inline std::size_t class_index(double target, std::size_t classes) {
  if (!(target >= 0) || target != std::floor(target) || target >= static_cast<double>(classes)) {
    throw InvalidLabel("class index " + std::to_string(target) + " outside [0, " +
                       std::to_string(classes) + ")");
  }
  return static_cast<std::size_t>(target);
}

inline LossValue inner_loss_and_grad(const InnerLoss& loss, std::span<const double> prediction,
                                     double target) {
  return std::visit(
      [&](const auto& kind) -> LossValue {
        using T = std::decay_t<decltype(kind)>;
        if constexpr (std::is_same_v<T, CrossEntropy>) {
          const std::size_t label = class_index(target, prediction.size());
          const double peak = *std::max_element(prediction.begin(), prediction.end());
          double total = 0.0;
          for (double z : prediction) total += std::exp(z - peak);
          const double log_norm = peak + std::log(total);
          LossValue out{log_norm - prediction[label], softmax(prediction)};
          out.grad[label] -= 1.0;
          // log-sum-exp rounding can leave a tiny negative value at the optimum
          out.value = std::max(out.value, 0.0);
          return out;
        } else {
          if (prediction.size() != 1) throw DimensionMismatch(1, prediction.size());
          if (!std::isfinite(target)) throw InvalidLabel("regression target must be finite");
          const double e = prediction[0] - target;
          if constexpr (std::is_same_v<T, SquaredError>) {
            return {e * e, {2.0 * e}};
          } else {
            if (std::abs(e) < kind.beta) return {0.5 * e * e / kind.beta, {e / kind.beta}};
            return {std::abs(e) - 0.5 * kind.beta, {e > 0 ? 1.0 : -1.0}};
          }
        }
      },
      loss);
}

}  // namespace discrim
