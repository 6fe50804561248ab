#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "discrim/data.hpp"
#include "discrim/loss_core.hpp"
#include "discrim/models.hpp"
#include "discrim/trainer.hpp"

using namespace discrim;
using Catch::Approx;

namespace {

Dataset small_blobs(std::size_t n = 100, double noise = 0.4) {
  return inject_symmetric_noise(make_blobs(n, 4, 2, 4.0, 5), noise, 6);
}

TrainConfig quick(TrainMode mode, int epochs = 5) {
  TrainConfig c;
  c.mode = mode;
  c.epochs = epochs;
  c.batch_size = 16;
  c.seed = 3;
  return c;
}

std::vector<std::vector<double>> trajectory(const Dataset& d, const DiscrimConfig& dc, const TrainConfig& tc) {
  std::vector<std::vector<double>> out;
  TrainHooks hooks;
  hooks.on_step = [&](const StepInfo& s) { out.emplace_back(s.params.begin(), s.params.end()); };
  train(Model(LinearSoftmax{2, 4}, 11), d, CrossEntropy{}, dc, tc, {}, hooks);
  return out;
}

}  // namespace

TEST_CASE("pinned delta reproduces vanilla training", "[trainer]") {
  const Dataset d = small_blobs();
  DiscrimConfig dc;
  dc.reg_strength = 0.0;
  dc.suppressed_ticks = 1;
  TrainConfig discrim_cfg = quick(TrainMode::Discrim, 10);
  discrim_cfg.freeze_delta = true;
  const auto vanilla = trajectory(d, dc, quick(TrainMode::Vanilla, 10));
  const auto pinned = trajectory(d, dc, discrim_cfg);
  REQUIRE(vanilla.size() == pinned.size());
  REQUIRE(vanilla.size() == 70);
  double worst = 0.0;
  for (std::size_t s = 0; s < vanilla.size(); ++s) {
    for (std::size_t j = 0; j < vanilla[s].size(); ++j) worst = std::max(worst, std::abs(vanilla[s][j] - pinned[s][j]));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("reweighted diverges from vanilla once delta moves", "[trainer]") {
  const Dataset d = small_blobs();
  DiscrimConfig dc;
  dc.suppressed_ticks = 1;
  const auto vanilla = trajectory(d, dc, quick(TrainMode::Vanilla));
  const auto discrim = trajectory(d, dc, quick(TrainMode::Discrim));
  CHECK(vanilla.back() != discrim.back());
}

TEST_CASE("one easy sample has a strictly decreasing delta until the clamp", "[trainer]") {
  Dataset d;
  d.task = Task::Classification;
  d.dim = 2;
  d.classes = 2;
  const std::vector<double> x = {1.0, -1.0};
  d.push_back(x, 1.0);
  DiscrimConfig dc;
  dc.k1_mode = K1Mode::Constant;
  dc.k1_constant = 50.0;
  dc.delta_lr = 0.001;
  TrainConfig tc = quick(TrainMode::Discrim, 40);
  std::vector<double> deltas;
  TrainHooks hooks;
  hooks.on_step = [&](const StepInfo& s) { deltas.push_back(s.states[0].delta); };
  train(Model(LinearSoftmax{2, 2}, 1), d, CrossEntropy{}, dc, tc, {}, hooks);
  REQUIRE(deltas.size() == 40);
  double previous = 1.0;
  bool clamped = false;
  for (double delta : deltas) {
    if (clamped) {
      CHECK(delta == dc.delta_min);
      continue;
    }
    CHECK(delta < previous);
    clamped = delta == dc.delta_min;
    previous = delta;
  }
  CHECK(clamped);
}

TEST_CASE("first step matches an independent recomputation", "[trainer]") {
  const Dataset d = small_blobs(40);
  DiscrimConfig dc;
  dc.delta_lr = 0.5;
  dc.reg_strength = 0.05;
  TrainConfig tc = quick(TrainMode::Discrim, 1);
  tc.batch_size = d.size();
  tc.momentum = 0.0;
  tc.weight_decay = 0.0;
  tc.lr = 0.3;
  const Model init(LinearSoftmax{2, 4}, 17);

  // full batch in one step: every sample is visited once, in any order
  std::vector<double> losses(d.size());
  double total = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    losses[i] = inner_loss_and_grad(CrossEntropy{}, init.forward(d.row(i)), d.labels[i]).value;
    total += losses[i];
  }
  const double k1 = total / static_cast<double>(d.size());
  const double k = (0.27 * std::tanh(0.54 * (1.0 - 60.0)) + 1.27) * k1;
  const double es = 1.0 / 3.0;
  std::vector<double> expected(init.params().begin(), init.params().end());
  std::vector<double> grad(expected.size(), 0.0);
  std::vector<double> expected_delta(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double g = es * (k - losses[i]) + 0.0;  // delta = 1, log(1) = 0
    expected_delta[i] = std::clamp(1.0 - 0.5 * g, 0.01, 100.0);
    const double w = es / expected_delta[i];
    const auto lg = inner_loss_and_grad(CrossEntropy{}, init.forward(d.row(i)), d.labels[i]);
    const auto pg = init.backward(d.row(i), lg.grad);
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += w * pg[j] / static_cast<double>(d.size());
  }
  for (std::size_t j = 0; j < expected.size(); ++j) expected[j] -= 0.3 * grad[j];

  const TrainResult r = train(init, d, CrossEntropy{}, dc, tc);
  for (std::size_t j = 0; j < expected.size(); ++j) CHECK(r.model.params()[j] == Approx(expected[j]).epsilon(1e-12));
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(r.states[i].delta == Approx(expected_delta[i]).epsilon(1e-12));
    CHECK(*r.states[i].avg_loss == Approx(losses[i]).epsilon(1e-12));
  }
}

TEST_CASE("delta order can be switched", "[trainer]") {
  const Dataset d = small_blobs(40);
  DiscrimConfig dc;
  TrainConfig late = quick(TrainMode::Discrim, 1);
  late.batch_size = d.size();
  late.delta_first = false;
  std::vector<double> weights;
  TrainHooks hooks;
  hooks.on_step = [&](const StepInfo& s) { weights.assign(s.weights.begin(), s.weights.end()); };
  train(Model(LinearSoftmax{2, 4}, 1), d, CrossEntropy{}, dc, late, {}, hooks);
  for (double w : weights) CHECK(w == Approx(1.0 / 3.0));
}

TEST_CASE("only samples in the batch change state", "[trainer]") {
  const Dataset d = small_blobs(64);
  DiscrimConfig dc;
  TrainConfig tc = quick(TrainMode::Discrim, 1);
  tc.batch_size = 16;
  bool checked = false;
  TrainHooks hooks;
  hooks.on_step = [&](const StepInfo& s) {
    if (s.step != 1) return;
    std::vector<bool> in_batch(d.size(), false);
    for (std::size_t i : s.batch) in_batch[i] = true;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (in_batch[i]) {
        CHECK(s.states[i].avg_loss.has_value());
      } else {
        CHECK(s.states[i] == SampleState{});
      }
    }
    checked = true;
  };
  train(Model(LinearSoftmax{2, 4}, 1), d, CrossEntropy{}, dc, tc, {}, hooks);
  CHECK(checked);
}

TEST_CASE("delta stays inside the clamp and avg is set after the first visit", "[trainer][property]") {
  const Dataset d = small_blobs(200);
  DiscrimConfig dc;
  dc.switch_moment = 3;
  dc.delta_lr = 5.0;
  TrainConfig tc = quick(TrainMode::Discrim, 8);
  std::vector<bool> seen(d.size(), false);
  TrainHooks hooks;
  hooks.on_step = [&](const StepInfo& s) {
    for (std::size_t i : s.batch) seen[i] = true;
    for (std::size_t i = 0; i < d.size(); ++i) {
      REQUIRE(s.states[i].delta >= dc.delta_min);
      REQUIRE(s.states[i].delta <= dc.delta_max);
      REQUIRE(s.states[i].avg_loss.has_value() == seen[i]);
    }
  };
  train(Model(LinearSoftmax{2, 4}, 1), d, CrossEntropy{}, dc, tc, {}, hooks);
}

TEST_CASE("training is deterministic", "[trainer]") {
  const Dataset d = small_blobs();
  DiscrimConfig dc;
  const TrainConfig tc = quick(TrainMode::Discrim);
  const TrainResult a = train(Model(Mlp{2, {8}, 4}, 2), d, CrossEntropy{}, dc, tc, {&d});
  const TrainResult b = train(Model(Mlp{2, {8}, 4}, 2), d, CrossEntropy{}, dc, tc, {&d});
  CHECK(std::equal(a.model.params().begin(), a.model.params().end(), b.model.params().begin()));
  CHECK(a.states == b.states);
  REQUIRE(a.record.metrics.size() == b.record.metrics.size());
  for (std::size_t i = 0; i < a.record.metrics.size(); ++i) {
    CHECK(a.record.metrics[i].value == b.record.metrics[i].value);
  }
  TrainConfig other = tc;
  other.seed = 4;
  const TrainResult c = train(Model(Mlp{2, {8}, 4}, 2), d, CrossEntropy{}, dc, other);
  CHECK_FALSE(std::equal(a.model.params().begin(), a.model.params().end(), c.model.params().begin()));
}

TEST_CASE("k_dyn is frozen within a tick", "[trainer]") {
  const Dataset d = small_blobs(128);
  DiscrimConfig dc;
  dc.switch_moment = 2;
  std::map<int, std::vector<double>> per_epoch;
  TrainHooks hooks;
  hooks.on_step = [&](const StepInfo& s) { per_epoch[s.epoch].push_back(s.k_dyn); };
  train(Model(LinearSoftmax{2, 4}, 1), d, CrossEntropy{}, dc, quick(TrainMode::Discrim, 4), {}, hooks);
  for (int e = 2; e <= 4; ++e) {
    for (double k : per_epoch[e]) CHECK(k == per_epoch[e].front());
  }
  CHECK(per_epoch[1].front() != per_epoch[1].back());
}

TEST_CASE("iteration clock advances every steps_per_tick batches", "[trainer]") {
  const Dataset d = small_blobs(32);
  DiscrimConfig dc;
  dc.clock = Clock::Iteration;
  dc.steps_per_tick = 3;
  dc.suppressed_ticks = 4;
  TrainConfig tc = quick(TrainMode::Discrim, 3);
  tc.batch_size = 8;
  std::vector<std::int64_t> ticks;
  std::vector<double> es;
  TrainHooks hooks;
  hooks.on_step = [&](const StepInfo& s) {
    ticks.push_back(s.tick);
    es.push_back(s.es);
  };
  train(Model(LinearSoftmax{2, 4}, 1), d, CrossEntropy{}, dc, tc, {}, hooks);
  REQUIRE(ticks.size() == 12);
  for (std::size_t s = 0; s < ticks.size(); ++s) {
    CHECK(ticks[s] == static_cast<std::int64_t>(s / 3 + 1));
    CHECK(es[s] == Approx(es_factor(ticks[s], 4)));
  }
}

TEST_CASE("ablation modes", "[trainer]") {
  const Dataset d = small_blobs(64);
  DiscrimConfig dc;
  TrainConfig tc = quick(TrainMode::DiscrimNoES, 1);
  tc.batch_size = 64;
  double es_seen = 0.0;
  TrainHooks hooks;
  hooks.on_step = [&](const StepInfo& s) { es_seen = s.es; };
  train(Model(LinearSoftmax{2, 4}, 1), d, CrossEntropy{}, dc, tc, {}, hooks);
  CHECK(es_seen == 1.0);

  // Without history the second visit uses the raw loss, so delta differs from full mode.
  TrainConfig full = quick(TrainMode::Discrim, 3);
  TrainConfig raw = full;
  raw.mode = TrainMode::DiscrimNoHL;
  const TrainResult a = train(Model(LinearSoftmax{2, 4}, 1), d, CrossEntropy{}, dc, full);
  const TrainResult b = train(Model(LinearSoftmax{2, 4}, 1), d, CrossEntropy{}, dc, raw);
  CHECK(a.states[0].delta != b.states[0].delta);
  CHECK(b.states[0].avg_loss.has_value());
}

TEST_CASE("non-finite loss aborts with sample and epoch", "[trainer]") {
  Dataset d = make_regression(10, 2, 0.1, 1, 0);
  const Model huge(LinearRegressor{2}, std::vector<double>{1e200, 1e200, 0.0});
  DiscrimConfig dc;
  TrainConfig tc = quick(TrainMode::Vanilla, 2);
  try {
    train(huge, d, SquaredError{}, dc, tc);
    FAIL("expected TrainingAborted");
  } catch (const TrainingAborted& e) {
    CHECK(e.epoch() == 1);
    CHECK(e.sample_id() < 10);
    CHECK(std::string(e.what()).find("sample") != std::string::npos);
  }
}

TEST_CASE("train rejects bad inputs", "[trainer]") {
  const Dataset d = small_blobs(20);
  DiscrimConfig dc;
  TrainConfig tc = quick(TrainMode::Vanilla, 1);
  CHECK_THROWS_AS(train(Model(LinearSoftmax{3, 4}, 1), d, CrossEntropy{}, dc, tc), DimensionMismatch);
  CHECK_THROWS_AS(train(Model(LinearSoftmax{2, 4}, 1), Dataset{}, CrossEntropy{}, dc, tc), ConfigError);
  TrainConfig bad = tc;
  bad.momentum = 1.0;
  CHECK_THROWS_AS(train(Model(LinearSoftmax{2, 4}, 1), d, CrossEntropy{}, dc, bad), ConfigError);
}

TEST_CASE("lr milestones", "[trainer]") {
  TrainConfig tc;
  tc.lr = 0.1;
  tc.lr_milestones = {{80, 0.01}, {100, 0.001}};
  CHECK(tc.lr_at(1) == 0.1);
  CHECK(tc.lr_at(80) == 0.1);
  CHECK(tc.lr_at(81) == 0.01);
  CHECK(tc.lr_at(101) == 0.001);
}

TEST_CASE("evaluate examples", "[trainer]") {
  SECTION("perfect predictor") {
    Dataset d;
    d.task = Task::Classification;
    d.dim = 2;
    d.classes = 2;
    const std::vector<double> a = {1.0, 0.0}, b = {0.0, 1.0};
    d.push_back(a, 0.0);
    d.push_back(b, 1.0);
    const Model m(LinearSoftmax{2, 2}, std::vector<double>{10, 0, 0, 10, 0, 0});
    CHECK(evaluate(m, d, CrossEntropy{}).score == 1.0);
  }
  SECTION("constant regressor at the mean") {
    Dataset d;
    d.task = Task::Regression;
    d.dim = 1;
    const std::vector<double> targets = {1.0, 2.0, 4.0, 9.0};
    for (double y : targets) {
      const std::vector<double> x = {y * 3.0};
      d.push_back(x, y);
    }
    const Model m(LinearRegressor{1}, std::vector<double>{0.0, 4.0});
    const Evaluation e = evaluate(m, d, SquaredError{});
    CHECK_FALSE(e.classification);
    CHECK(e.score == Approx((3.0 + 2.0 + 0.0 + 5.0) / 4.0));
    CHECK(std::string(e.score_name()) == "mae");
  }
  SECTION("zero logits on balanced classes") {
    const Dataset d = make_blobs(400, 4, 2, 4.0, 2);
    const Evaluation e = evaluate(Model::zeros(LinearSoftmax{2, 4}), d, CrossEntropy{});
    const double sigma = std::sqrt(0.25 * 0.75 / 400.0);
    CHECK(std::abs(e.score - 0.25) <= 3 * sigma);
    CHECK(e.mean_loss == Approx(std::log(4.0)));
  }
  SECTION("clean score uses clean labels") {
    const Dataset d = inject_symmetric_noise(make_blobs(400, 4, 2, 12.0, 2), 1.0, 1);
    const TrainResult r = train(Model(LinearSoftmax{2, 4}, 1), make_blobs(400, 4, 2, 12.0, 2), CrossEntropy{},
                                DiscrimConfig{}, quick(TrainMode::Vanilla, 20));
    const Evaluation e = evaluate(r.model, d, CrossEntropy{});
    CHECK(e.clean_score > 0.99);
    CHECK(e.score < 0.01);
  }
  CHECK_THROWS_AS(evaluate(Model::zeros(LinearSoftmax{2, 4}), Dataset{}, CrossEntropy{}), ConfigError);
}

TEST_CASE("telemetry examples", "[trainer]") {
  const std::vector<double> l1 = {0, 2, 4}, l2 = {3, 3, 3}, l3 = {1, 3};
  CHECK(normalized_loss_snapshot(l1) == std::vector<double>{0, 0.5, 1});
  CHECK(normalized_loss_snapshot(l2) == std::vector<double>{0, 0, 0});
  CHECK(normalized_loss_snapshot(l3) == std::vector<double>{0, 1});
  const std::vector<double> h1 = {1, 4, 1, 4}, h2 = {2, 2, 2}, h3 = {1, 2.5, 1};
  CHECK(fluctuation_count(h1, 2.0) == 3);
  CHECK(fluctuation_count(h2, 2.0) == 0);
  CHECK(fluctuation_count(h3, 2.0) == 0);
  CHECK(fluctuation_counts({{1, 4, 1, 4}, {1, 2.5, 1}}, 2.0) == std::vector<int>{3, 0});
  const std::vector<std::uint8_t> flags = {0, 0, 1};
  CHECK(normalized_loss_gap(l1, flags) == Approx(1.0 - 0.25));
  const std::vector<std::uint8_t> none = {0, 0, 0};
  CHECK(std::isnan(normalized_loss_gap(l1, none)));
}

TEST_CASE("run record contents", "[trainer]") {
  const Dataset d = small_blobs(50);
  const Dataset test = make_blobs(30, 4, 2, 4.0, 5, 1);
  TrainConfig tc = quick(TrainMode::Discrim, 3);
  const TrainResult r = train(Model(LinearSoftmax{2, 4}, 1), d, CrossEntropy{}, DiscrimConfig{}, tc, {&test});
  CHECK(r.record.samples.size() == 150);
  CHECK(r.record.samples.back().epoch == 3);
  for (const char* key : {"train.loss", "train.accuracy", "train.clean_accuracy", "train.normalized_loss_gap",
                          "train.mean_delta", "train.k_dyn", "train.es", "train.lr", "test.accuracy", "test.loss",
                          "train.fluctuation_clean", "train.fluctuation_noisy"}) {
    INFO(key);
    CHECK(r.record.final_metrics.count(key) == 1);
  }
  CHECK(r.record.final_metrics.count("val.accuracy") == 0);
  CHECK(r.record.final_metrics.at("train.es") == 1.0);
  TrainConfig quiet = tc;
  quiet.record_samples = false;
  CHECK(train(Model(LinearSoftmax{2, 4}, 1), d, CrossEntropy{}, DiscrimConfig{}, quiet).record.samples.empty());
}
