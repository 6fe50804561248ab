#pragma once

/**
 * Experiment harness: config -> ExperimentSpec, multi-seed runs with mean/std
 * aggregation, one-axis sweeps and random/grid hyperparameter search.
 *
 * Seed k of an experiment uses run seed `experiment.seed + k`. The dataset itself is
 * fixed by `dataset.seed`; label noise, initialization and batch order vary per run.
 * Aggregated std is the population std (divide by n).
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "discrim/config.hpp"
#include "discrim/data.hpp"
#include "discrim/errors.hpp"
#include "discrim/loss_core.hpp"
#include "discrim/models.hpp"
#include "discrim/record_io.hpp"
#include "discrim/rng.hpp"
#include "discrim/trainer.hpp"

namespace discrim {

struct DatasetSpec {
  std::string kind = "blobs";  // blobs | regression | mnist
  std::size_t n_train = 2000;
  std::size_t n_test = 1000;
  std::size_t dim = 2;
  std::size_t classes = 4;
  double separation = 4.0;
  double target_noise = 0.1;  // regression: std of the clean target noise
  double noise_rate = 0.0;
  double val_fraction = 0.0;  // carved from the training pool before noise injection
  std::uint64_t seed = 1;
  std::string mnist_dir;
  std::size_t max_train = 0;  // mnist: 0 keeps all
  std::size_t max_test = 0;
};

struct ModelSpec {
  std::string kind = "linear_softmax";  // linear_softmax | mlp | linear_regressor
  std::vector<std::size_t> hidden;
};

struct ExperimentSpec {
  DatasetSpec dataset;
  ModelSpec model;
  InnerLoss loss = CrossEntropy{};
  DiscrimConfig discrim;
  TrainConfig train;
  int n_seeds = 5;
  std::uint64_t base_seed = 0;
  ConfigMap search_space;  // "search.*" entries, key prefix stripped
};

// ---------------------------------------------------------------------------
// Config <-> spec

namespace detail {

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "dataset.kind", "dataset.n_train", "dataset.n_test", "dataset.dim", "dataset.classes",
      "dataset.separation", "dataset.target_noise", "dataset.noise_rate", "dataset.val_fraction",
      "dataset.seed", "dataset.mnist_dir", "dataset.max_train", "dataset.max_test",
      "model.kind", "model.hidden", "loss.kind", "loss.beta",
      "discrim.a", "discrim.p", "discrim.q", "discrim.e_s", "discrim.lambda", "discrim.rho",
      "discrim.rho_prime", "discrim.tau", "discrim.k1", "discrim.eta", "discrim.delta_min",
      "discrim.delta_max", "discrim.clock", "discrim.steps_per_tick",
      "train.epochs", "train.batch_size", "train.lr", "train.lr_decay", "train.momentum",
      "train.weight_decay", "train.mode", "train.freeze_delta", "train.delta_first",
      "train.record_samples", "train.fluct_threshold", "train.importance",
      "experiment.seeds", "experiment.seed"};
  return keys;
}

inline std::size_t get_size(const ConfigMap& c, const std::string& key, std::size_t fallback) {
  const std::int64_t v = c.get_int(key, static_cast<std::int64_t>(fallback));
  if (v < 0) throw ConfigError(key + " must be >= 0");
  return static_cast<std::size_t>(v);
}

inline std::string join_sizes(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

template <typename Enum>
Enum pick(const std::string& key, const std::string& value,
          std::initializer_list<std::pair<const char*, Enum>> options) {
  for (const auto& [name, e] : options) {
    if (value == name) return e;
  }
  std::string allowed;
  for (const auto& [name, e] : options) allowed += std::string(allowed.empty() ? "" : "|") + name;
  throw ConfigError(key + ": unknown value '" + value + "' (expected " + allowed + ")");
}

template <typename Enum>
std::string name_of(Enum value, std::initializer_list<std::pair<const char*, Enum>> options) {
  for (const auto& [name, e] : options) {
    if (e == value) return name;
  }
  return "?";
}

inline const std::initializer_list<std::pair<const char*, TrainMode>> kModes = {
    {"vanilla", TrainMode::Vanilla},
    {"discrim", TrainMode::Discrim},
    {"discrim_no_es", TrainMode::DiscrimNoES},
    {"discrim_no_hl", TrainMode::DiscrimNoHL}};
inline const std::initializer_list<std::pair<const char*, K1Mode>> kK1Modes = {
    {"ga", K1Mode::GlobalAverage}, {"ema", K1Mode::MovingAverage}, {"const", K1Mode::Constant}};
inline const std::initializer_list<std::pair<const char*, Clock>> kClocks = {
    {"epoch", Clock::Epoch}, {"iteration", Clock::Iteration}};
inline const std::initializer_list<std::pair<const char*, ImportanceSource>> kImportance = {
    {"weight", ImportanceSource::EffectiveWeight}, {"delta", ImportanceSource::Delta}};

}  // namespace detail

inline TrainMode parse_mode(const std::string& s) { return detail::pick("train.mode", s, detail::kModes); }
inline std::string mode_name(TrainMode m) { return detail::name_of(m, detail::kModes); }

/// Builds and validates a spec. Unknown keys are rejected.
inline ExperimentSpec spec_from_config(const ConfigMap& c) {
  using namespace detail;
  ExperimentSpec spec;
  for (const auto& [key, value] : c.values()) {
    if (key.rfind("search.", 0) == 0) {
      spec.search_space.set(key.substr(7), value);
    } else if (!known_keys().count(key)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }

  DatasetSpec& d = spec.dataset;
  d.kind = c.get("dataset.kind", d.kind);
  if (d.kind != "blobs" && d.kind != "regression" && d.kind != "mnist") {
    throw ConfigError("dataset.kind: unknown value '" + d.kind + "' (expected blobs|regression|mnist)");
  }
  d.n_train = get_size(c, "dataset.n_train", d.n_train);
  d.n_test = get_size(c, "dataset.n_test", d.n_test);
  d.dim = get_size(c, "dataset.dim", d.dim);
  d.classes = get_size(c, "dataset.classes", d.classes);
  d.separation = c.get_double("dataset.separation", d.separation);
  d.target_noise = c.get_double("dataset.target_noise", d.target_noise);
  d.noise_rate = c.get_double("dataset.noise_rate", d.noise_rate);
  d.val_fraction = c.get_double("dataset.val_fraction", d.val_fraction);
  d.seed = static_cast<std::uint64_t>(c.get_int("dataset.seed", static_cast<std::int64_t>(d.seed)));
  d.mnist_dir = c.get("dataset.mnist_dir", d.mnist_dir);
  d.max_train = get_size(c, "dataset.max_train", d.max_train);
  d.max_test = get_size(c, "dataset.max_test", d.max_test);
  if (!(d.noise_rate >= 0 && d.noise_rate <= 1)) throw ConfigError("dataset.noise_rate must be in [0,1]");
  if (!(d.val_fraction >= 0 && d.val_fraction < 1)) throw ConfigError("dataset.val_fraction must be in [0,1)");
  if (d.kind == "mnist" && d.mnist_dir.empty()) throw ConfigError("dataset.mnist_dir is required for mnist");

  spec.model.kind = c.get("model.kind", d.kind == "regression" ? "linear_regressor" : "linear_softmax");
  if (spec.model.kind != "linear_softmax" && spec.model.kind != "mlp" &&
      spec.model.kind != "linear_regressor") {
    throw ConfigError("model.kind: unknown value '" + spec.model.kind + "'");
  }
  for (const std::string& part : split(c.get("model.hidden", ""), ',')) {
    if (part.empty()) continue;
    const std::int64_t width = ConfigMap::parse("w=" + part).get_int("w", 0);
    if (width <= 0) throw ConfigError("model.hidden widths must be positive");
    spec.model.hidden.push_back(static_cast<std::size_t>(width));
  }

  const std::string loss = c.get("loss.kind", d.kind == "regression" ? "l2" : "cross_entropy");
  if (loss == "cross_entropy") {
    spec.loss = CrossEntropy{};
  } else if (loss == "l2") {
    spec.loss = SquaredError{};
  } else if (loss == "smooth_l1") {
    const double beta = c.get_double("loss.beta", 1.0);
    if (!(beta > 0)) throw ConfigError("loss.beta must be > 0");
    spec.loss = SmoothL1{beta};
  } else {
    throw ConfigError("loss.kind: unknown value '" + loss + "' (expected cross_entropy|l2|smooth_l1)");
  }
  const bool regression = d.kind == "regression";
  if (regression != !std::holds_alternative<CrossEntropy>(spec.loss)) {
    throw ConfigError("loss.kind does not match the dataset task");
  }

  DiscrimConfig& g = spec.discrim;
  g.switch_amplitude = c.get_double("discrim.a", g.switch_amplitude);
  g.switch_speed = c.get_double("discrim.p", g.switch_speed);
  g.switch_moment = c.get_double("discrim.q", g.switch_moment);
  g.suppressed_ticks = c.get_int("discrim.e_s", g.suppressed_ticks);
  g.reg_strength = c.get_double("discrim.lambda", g.reg_strength);
  g.history_smoothing = c.get_double("discrim.rho", g.history_smoothing);
  g.k1_smoothing = c.get_double("discrim.rho_prime", g.k1_smoothing);
  g.delta_lr = c.get_double("discrim.tau", g.delta_lr);
  g.k1_mode = pick("discrim.k1", c.get("discrim.k1", "ga"), kK1Modes);
  g.k1_constant = c.get_double("discrim.eta", g.k1_constant);
  g.delta_min = c.get_double("discrim.delta_min", g.delta_min);
  g.delta_max = c.get_double("discrim.delta_max", g.delta_max);
  g.clock = pick("discrim.clock", c.get("discrim.clock", "epoch"), kClocks);
  g.steps_per_tick = c.get_int("discrim.steps_per_tick", g.steps_per_tick);
  g.validate();

  TrainConfig& t = spec.train;
  t.epochs = static_cast<int>(c.get_int("train.epochs", t.epochs));
  t.batch_size = get_size(c, "train.batch_size", t.batch_size);
  t.lr = c.get_double("train.lr", t.lr);
  for (const std::string& part : split(c.get("train.lr_decay", ""), ',')) {
    if (part.empty()) continue;
    const auto colon = part.find(':');
    if (colon == std::string::npos) throw ConfigError("train.lr_decay entries look like epoch:lr");
    const auto epoch = ConfigMap::parse("e=" + part.substr(0, colon)).get_int("e", 0);
    t.lr_milestones[static_cast<int>(epoch)] = ConfigMap::parse_double("train.lr_decay", part.substr(colon + 1));
  }
  t.momentum = c.get_double("train.momentum", t.momentum);
  t.weight_decay = c.get_double("train.weight_decay", t.weight_decay);
  t.mode = parse_mode(c.get("train.mode", "discrim"));
  t.freeze_delta = c.get_bool("train.freeze_delta", t.freeze_delta);
  t.delta_first = c.get_bool("train.delta_first", t.delta_first);
  t.record_samples = c.get_bool("train.record_samples", t.record_samples);
  t.fluctuation_threshold = c.get_double("train.fluct_threshold", t.fluctuation_threshold);
  t.importance = pick("train.importance", c.get("train.importance", "weight"), kImportance);
  t.validate();

  spec.n_seeds = static_cast<int>(c.get_int("experiment.seeds", spec.n_seeds));
  if (spec.n_seeds < 1) throw ConfigError("experiment.seeds must be >= 1");
  spec.base_seed = static_cast<std::uint64_t>(c.get_int("experiment.seed", 0));
  return spec;
}

/// Canonical, fully resolved config. spec_from_config(to_config(s)) reproduces s.
inline ConfigMap to_config(const ExperimentSpec& spec) {
  using namespace detail;
  ConfigMap c;
  const DatasetSpec& d = spec.dataset;
  c.set("dataset.kind", d.kind);
  c.set("dataset.n_train", std::to_string(d.n_train));
  c.set("dataset.n_test", std::to_string(d.n_test));
  c.set("dataset.dim", std::to_string(d.dim));
  c.set("dataset.classes", std::to_string(d.classes));
  c.set("dataset.separation", d.separation);
  c.set("dataset.target_noise", d.target_noise);
  c.set("dataset.noise_rate", d.noise_rate);
  c.set("dataset.val_fraction", d.val_fraction);
  c.set("dataset.seed", std::to_string(d.seed));
  if (!d.mnist_dir.empty()) c.set("dataset.mnist_dir", d.mnist_dir);
  c.set("dataset.max_train", std::to_string(d.max_train));
  c.set("dataset.max_test", std::to_string(d.max_test));
  c.set("model.kind", spec.model.kind);
  if (!spec.model.hidden.empty()) c.set("model.hidden", join_sizes(spec.model.hidden));
  std::visit(
      [&](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, CrossEntropy>) c.set("loss.kind", "cross_entropy");
        if constexpr (std::is_same_v<T, SquaredError>) c.set("loss.kind", "l2");
        if constexpr (std::is_same_v<T, SmoothL1>) {
          c.set("loss.kind", "smooth_l1");
          c.set("loss.beta", l.beta);
        }
      },
      spec.loss);
  const DiscrimConfig& g = spec.discrim;
  c.set("discrim.a", g.switch_amplitude);
  c.set("discrim.p", g.switch_speed);
  c.set("discrim.q", g.switch_moment);
  c.set("discrim.e_s", std::to_string(g.suppressed_ticks));
  c.set("discrim.lambda", g.reg_strength);
  c.set("discrim.rho", g.history_smoothing);
  c.set("discrim.rho_prime", g.k1_smoothing);
  c.set("discrim.tau", g.delta_lr);
  c.set("discrim.k1", name_of(g.k1_mode, kK1Modes));
  c.set("discrim.eta", g.k1_constant);
  c.set("discrim.delta_min", g.delta_min);
  c.set("discrim.delta_max", g.delta_max);
  c.set("discrim.clock", name_of(g.clock, kClocks));
  c.set("discrim.steps_per_tick", std::to_string(g.steps_per_tick));
  const TrainConfig& t = spec.train;
  c.set("train.epochs", std::to_string(t.epochs));
  c.set("train.batch_size", std::to_string(t.batch_size));
  c.set("train.lr", t.lr);
  std::string decay;
  for (const auto& [epoch, lr] : t.lr_milestones) {
    decay += (decay.empty() ? "" : ",") + std::to_string(epoch) + ":" + format_double(lr);
  }
  if (!decay.empty()) c.set("train.lr_decay", decay);
  c.set("train.momentum", t.momentum);
  c.set("train.weight_decay", t.weight_decay);
  c.set("train.mode", mode_name(t.mode));
  c.set("train.freeze_delta", t.freeze_delta ? "true" : "false");
  c.set("train.delta_first", t.delta_first ? "true" : "false");
  c.set("train.record_samples", t.record_samples ? "true" : "false");
  c.set("train.fluct_threshold", t.fluctuation_threshold);
  c.set("train.importance", name_of(t.importance, kImportance));
  c.set("experiment.seeds", std::to_string(spec.n_seeds));
  c.set("experiment.seed", std::to_string(spec.base_seed));
  for (const auto& [key, value] : spec.search_space.values()) c.set("search." + key, value);
  return c;
}

/// Re-resolves `spec` with one key replaced (validation included).
inline ExperimentSpec with_override(const ExperimentSpec& spec, const std::string& key,
                                    const std::string& value) {
  ConfigMap c = to_config(spec);
  c.set(key, value);
  return spec_from_config(c);
}

// ---------------------------------------------------------------------------
// Data and model construction

struct ExperimentData {
  Dataset train;
  Dataset test;
  std::optional<Dataset> val;
};

inline ExperimentData build_data(const DatasetSpec& d, std::uint64_t run_seed) {
  Dataset pool;
  ExperimentData out;
  if (d.kind == "blobs") {
    pool = make_blobs(d.n_train, d.classes, d.dim, d.separation, d.seed, 0);
    out.test = make_blobs(std::max(d.n_test, d.classes), d.classes, d.dim, d.separation, d.seed, 1);
  } else if (d.kind == "regression") {
    pool = make_regression(d.n_train, d.dim, d.target_noise, d.seed, 0);
    out.test = make_regression(std::max<std::size_t>(d.n_test, 1), d.dim, d.target_noise, d.seed, 1);
  } else {
    const std::filesystem::path dir(d.mnist_dir);
    pool = load_mnist_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
    out.test = load_mnist_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
    if (d.max_train > 0 && d.max_train < pool.size()) pool = slice(pool, 0, d.max_train);
    if (d.max_test > 0 && d.max_test < out.test.size()) out.test = slice(out.test, 0, d.max_test);
  }

  const auto n_val = static_cast<std::size_t>(std::llround(d.val_fraction * static_cast<double>(pool.size())));
  if (n_val > 0) {
    if (n_val >= pool.size()) throw ConfigError("validation split leaves no training data");
    out.val = slice(pool, pool.size() - n_val, pool.size());
    pool = slice(pool, 0, pool.size() - n_val);
  }
  const std::uint64_t noise_seed = derive_seed(d.seed, 1000 + run_seed);
  if (pool.task == Task::Classification) {
    out.train = inject_symmetric_noise(std::move(pool), d.noise_rate, noise_seed);
  } else {
    out.train = inject_regression_noise(std::move(pool), d.noise_rate, noise_seed);
  }
  return out;
}

inline Architecture build_architecture(const ModelSpec& m, const Dataset& data) {
  const std::size_t outputs = data.task == Task::Classification ? data.classes : 1;
  if (m.kind == "linear_softmax") {
    if (data.task != Task::Classification) throw ConfigError("linear_softmax needs a classification dataset");
    return LinearSoftmax{data.dim, outputs};
  }
  if (m.kind == "linear_regressor") {
    if (data.task != Task::Regression) throw ConfigError("linear_regressor needs a regression dataset");
    return LinearRegressor{data.dim};
  }
  return Mlp{data.dim, m.hidden, outputs};
}

// ---------------------------------------------------------------------------
// Runs

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error_kind;
  std::string error;
  RunRecord record;
};

struct MetricStat {
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t n = 0;
};

struct ExperimentSummary {
  std::vector<SeedOutcome> seeds;
  std::map<std::string, MetricStat> aggregate;
};

/// Mean and population std; order-invariant up to floating-point summation.
inline MetricStat mean_std(std::vector<double> values) {
  MetricStat out;
  out.n = values.size();
  if (values.empty()) return out;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(sq / static_cast<double>(values.size()));
  return out;
}

inline std::map<std::string, MetricStat> aggregate(const std::vector<SeedOutcome>& seeds) {
  std::map<std::string, std::vector<double>> columns;
  for (const SeedOutcome& s : seeds) {
    if (!s.ok) continue;
    for (const auto& [metric, value] : s.record.final_metrics) {
      if (std::isfinite(value)) columns[metric].push_back(value);
    }
  }
  std::map<std::string, MetricStat> out;
  for (auto& [metric, values] : columns) out[metric] = mean_std(std::move(values));
  return out;
}

/// One training run for a given run seed. Throws on failure.
inline RunRecord run_single(const ExperimentSpec& spec, std::uint64_t run_seed) {
  const ExperimentData data = build_data(spec.dataset, run_seed);
  Model model(build_architecture(spec.model, data.train), derive_seed(run_seed, 7));
  TrainConfig train = spec.train;
  train.seed = run_seed;
  EvalSplits splits{&data.test, data.val ? &*data.val : nullptr};
  return discrim::train(std::move(model), data.train, spec.loss, spec.discrim, train, splits).record;
}

inline nlohmann::ordered_json experiment_json(const ExperimentSummary& summary, const ConfigMap& config) {
  nlohmann::ordered_json out;
  out["std"] = "population";
  nlohmann::ordered_json agg = nlohmann::ordered_json::object();
  for (const auto& [metric, stat] : summary.aggregate) {
    agg[metric] = {{"mean", stat.mean}, {"std", stat.std}, {"n", stat.n}};
  }
  out["aggregate"] = agg;
  nlohmann::ordered_json seeds = nlohmann::ordered_json::array();
  for (const SeedOutcome& s : summary.seeds) {
    nlohmann::ordered_json row;
    row["seed"] = s.seed;
    row["status"] = s.ok ? "ok" : "failed";
    if (s.ok) {
      row["run_id"] = run_id(config, s.seed);
      row["final_metrics"] = s.record.final_metrics;
    } else {
      row["error"] = {{"kind", s.error_kind}, {"message", s.error}};
    }
    seeds.push_back(row);
  }
  out["seeds"] = seeds;
  out["config"] = config_json(config);
  return out;
}

/**
 * Runs seeds base_seed + 0 .. n_seeds - 1. A failing seed is recorded and does not
 * stop the others. With a non-empty `out_dir`, writes seed_<s>/ run directories,
 * config.conf (the resolved config) and summary.json.
 */
inline ExperimentSummary run_experiment(const ExperimentSpec& spec,
                                        const std::filesystem::path& out_dir = {}) {
  ExperimentSummary summary;
  const ConfigMap config = to_config(spec);
  for (int k = 0; k < spec.n_seeds; ++k) {
    SeedOutcome outcome;
    outcome.seed = spec.base_seed + static_cast<std::uint64_t>(k);
    try {
      outcome.record = run_single(spec, outcome.seed);
      outcome.ok = true;
      if (!out_dir.empty()) {
        write_run_directory(outcome.record, config, out_dir / ("seed_" + std::to_string(outcome.seed)));
      }
    } catch (const Error& e) {
      if (dynamic_cast<const IoError*>(&e) != nullptr) throw;
      outcome.error_kind = e.kind();
      outcome.error = e.what();
    }
    summary.seeds.push_back(std::move(outcome));
  }
  summary.aggregate = aggregate(summary.seeds);
  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    detail::write_file(out_dir / "config.conf", [&](std::ostream& out) { out << config.to_text(); });
    detail::write_file(out_dir / "summary.json", [&](std::ostream& out) {
      out << experiment_json(summary, config).dump(2) << '\n';
    });
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Sweeps

inline std::string sweep_key(const std::string& axis) {
  static const std::map<std::string, std::string> keys = {{"a", "discrim.a"},
                                                          {"p", "discrim.p"},
                                                          {"q", "discrim.q"},
                                                          {"lambda", "discrim.lambda"},
                                                          {"noise_rate", "dataset.noise_rate"}};
  const auto it = keys.find(axis);
  if (it == keys.end()) throw ConfigError("unknown sweep axis '" + axis + "' (expected a|p|q|lambda|noise_rate)");
  return it->second;
}

struct SweepCell {
  double value = 0.0;
  ExperimentSummary summary;
  std::string error;  // set when the cell's spec itself was invalid
};

inline void write_sweep_csv(const std::string& axis, const std::vector<SweepCell>& cells, std::ostream& out) {
  out << "axis,value,metric,mean,std,n,failed_seeds\n";
  for (const SweepCell& cell : cells) {
    std::size_t failed = 0;
    for (const SeedOutcome& s : cell.summary.seeds) failed += s.ok ? 0 : 1;
    if (cell.summary.aggregate.empty()) {
      out << axis << ',' << format_double(cell.value) << ",,,,0," << failed << '\n';
    }
    for (const auto& [metric, stat] : cell.summary.aggregate) {
      out << axis << ',' << format_double(cell.value) << ',' << metric << ',' << format_double(stat.mean)
          << ',' << format_double(stat.std) << ',' << stat.n << ',' << failed << '\n';
    }
  }
}

/// One experiment per value of `axis`, everything else fixed. Writes sweep.csv when out_dir is set.
inline std::vector<SweepCell> run_sweep(const ExperimentSpec& spec, const std::string& axis,
                                        const std::vector<double>& values,
                                        const std::filesystem::path& out_dir = {}) {
  const std::string key = sweep_key(axis);
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<SweepCell> cells;
  for (double v : values) {
    SweepCell cell;
    cell.value = v;
    try {
      const ExperimentSpec cell_spec = with_override(spec, key, format_double(v));
      const auto dir = out_dir.empty() ? out_dir : out_dir / (axis + "_" + format_double(v));
      cell.summary = run_experiment(cell_spec, dir);
    } catch (const ConfigError& e) {
      cell.error = e.what();
    }
    cells.push_back(std::move(cell));
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    detail::write_file(out_dir / "sweep.csv", [&](std::ostream& out) { write_sweep_csv(axis, cells, out); });
  }
  return cells;
}

// ---------------------------------------------------------------------------
// Hyperparameter search

/// "lo:hi" is a uniform real range; "v1|v2|..." a finite choice; anything else a single value.
struct SearchDimension {
  std::string key;
  std::optional<std::pair<double, double>> range;
  std::vector<std::string> choices;

  bool discrete() const { return !range || range->first == range->second; }
};

inline std::vector<SearchDimension> parse_search_space(const ConfigMap& space) {
  std::vector<SearchDimension> dims;
  for (const auto& [key, value] : space.values()) {
    if (!detail::known_keys().count(key)) throw ConfigError("search key '" + key + "' is not a config key");
    SearchDimension dim{key, std::nullopt, {}};
    if (value.find('|') != std::string::npos) {
      dim.choices = split(value, '|');
    } else if (const auto colon = value.find(':'); colon != std::string::npos && key != "train.lr_decay") {
      const double lo = ConfigMap::parse_double(key, trim(value.substr(0, colon)));
      const double hi = ConfigMap::parse_double(key, trim(value.substr(colon + 1)));
      if (hi < lo) throw ConfigError("search range for " + key + " is empty");
      dim.range = std::pair{lo, hi};
      if (lo == hi) dim.choices = {format_double(lo)};
    } else {
      dim.choices = {value};
    }
    dims.push_back(std::move(dim));
  }
  return dims;
}

struct SearchTrial {
  std::map<std::string, std::string> overrides;
  double score = 0.0;  // mean validation metric over seeds (NaN if every seed failed)
  std::string error;
};

struct SearchResult {
  ExperimentSpec best;
  std::size_t best_index = 0;
  std::string metric;
  std::vector<SearchTrial> trials;
};

namespace detail {
inline bool integral_key(const std::string& key) {
  return key == "discrim.e_s" || key == "discrim.steps_per_tick" || key == "train.epochs" ||
         key == "train.batch_size" || key == "dataset.n_train" || key == "dataset.dim";
}
}  // namespace detail

/**
 * Evaluates `budget` configurations and returns the best by validation accuracy
 * (classification, maximized) or validation MAE (regression, minimized). When every
 * dimension is discrete and the grid fits in the budget the grid is enumerated in
 * order; otherwise configurations are drawn at random from `seed`.
 */
inline SearchResult search_hyperparams(const ExperimentSpec& spec, const ConfigMap& space,
                                       int budget, std::uint64_t seed,
                                       const std::filesystem::path& out_dir = {}) {
  if (budget < 1) throw ConfigError("search budget must be >= 1");
  if (!(spec.dataset.val_fraction > 0)) throw ConfigError("search needs a validation split (dataset.val_fraction > 0)");
  const auto dims = parse_search_space(space);
  if (dims.empty()) throw ConfigError("search space is empty");

  std::size_t grid = 1;
  bool all_discrete = true;
  for (const auto& d : dims) {
    all_discrete = all_discrete && d.discrete();
    grid = std::min<std::size_t>(grid * std::max<std::size_t>(d.choices.size(), 1), 1u << 30);
  }

  std::vector<std::map<std::string, std::string>> draws;
  if (all_discrete && grid <= static_cast<std::size_t>(budget)) {
    for (std::size_t g = 0; g < grid; ++g) {
      std::map<std::string, std::string> o;
      std::size_t rest = g;
      for (const auto& d : dims) {
        o[d.key] = d.choices[rest % d.choices.size()];
        rest /= d.choices.size();
      }
      draws.push_back(std::move(o));
    }
  } else {
    Rng rng(seed);
    for (int b = 0; b < budget; ++b) {
      std::map<std::string, std::string> o;
      for (const auto& d : dims) {
        if (d.range && d.range->first != d.range->second) {
          const double v = rng.uniform(d.range->first, d.range->second);
          o[d.key] = detail::integral_key(d.key) ? std::to_string(std::llround(v)) : format_double(v);
        } else {
          o[d.key] = d.choices[rng.index(d.choices.size())];
        }
      }
      draws.push_back(std::move(o));
    }
  }

  const bool classification = spec.dataset.kind != "regression";
  SearchResult result;
  result.metric = classification ? "val.accuracy" : "val.mae";
  std::optional<double> best_score;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    SearchTrial trial{draws[i], std::nan(""), {}};
    ExperimentSpec candidate = spec;
    try {
      ConfigMap c = to_config(spec);
      for (const auto& [key, value] : draws[i]) c.set(key, value);
      candidate = spec_from_config(c);
      const auto dir = out_dir.empty() ? out_dir : out_dir / ("trial_" + std::to_string(i));
      const ExperimentSummary summary = run_experiment(candidate, dir);
      const auto it = summary.aggregate.find(result.metric);
      if (it != summary.aggregate.end()) trial.score = it->second.mean;
      else trial.error = "no successful seed";
    } catch (const ConfigError& e) {
      trial.error = e.what();
    }
    if (std::isfinite(trial.score)) {
      const bool better = !best_score || (classification ? trial.score > *best_score : trial.score < *best_score);
      if (better) {
        best_score = trial.score;
        result.best = candidate;
        result.best_index = i;
      }
    }
    result.trials.push_back(std::move(trial));
  }
  if (!best_score) throw ConfigError("no search trial produced a validation score");

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    nlohmann::ordered_json log;
    log["metric"] = result.metric;
    log["best_index"] = result.best_index;
    nlohmann::ordered_json trials = nlohmann::ordered_json::array();
    for (const SearchTrial& t : result.trials) {
      nlohmann::ordered_json row;
      row["overrides"] = t.overrides;
      row["score"] = t.score;
      if (!t.error.empty()) row["error"] = t.error;
      trials.push_back(row);
    }
    log["trials"] = trials;
    detail::write_file(out_dir / "search.json", [&](std::ostream& out) { out << log.dump(2) << '\n'; });
    detail::write_file(out_dir / "best.conf", [&](std::ostream& out) { out << to_config(result.best).to_text(); });
  }
  return result;
}

}  // namespace discrim
