#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <string>

#include "discrim/experiment.hpp"
#include "schedule_presets.hpp"

using namespace discrim;
namespace fs = std::filesystem;

TEST_CASE("every preset file parses", "[presets]") {
  int count = 0;
  for (const auto& entry : fs::directory_iterator(DISCRIM_PRESETS)) {
    if (entry.path().extension() != ".conf") continue;
    INFO(entry.path().string());
    CHECK_NOTHROW(spec_from_config(ConfigMap::load(entry.path())));
    ++count;
  }
  CHECK(count >= static_cast<int>(kSchedulePresets.size()));
}

TEST_CASE("preset files carry the reference schedule values", "[presets]") {
  for (const SchedulePreset& p : kSchedulePresets) {
    const fs::path path = fs::path(DISCRIM_PRESETS) / (std::string(p.file) + ".conf");
    INFO(path.string());
    const ExperimentSpec spec = spec_from_config(ConfigMap::load(path));
    CHECK(spec.discrim.suppressed_ticks == p.e_s);
    CHECK(spec.discrim.switch_amplitude == p.a);
    CHECK(spec.discrim.switch_speed == p.p);
    CHECK(spec.discrim.switch_moment == p.q);
    CHECK(spec.discrim.reg_strength == p.lambda);
  }
}

TEST_CASE("special preset settings", "[presets]") {
  const ExperimentSpec wiki = spec_from_config(ConfigMap::load(fs::path(DISCRIM_PRESETS) / "wikihow.conf"));
  CHECK(wiki.discrim.clock == Clock::Iteration);
  CHECK(wiki.discrim.steps_per_tick == 1000);
  CHECK(wiki.discrim.k1_mode == K1Mode::MovingAverage);
  const ExperimentSpec l1 =
      spec_from_config(ConfigMap::load(fs::path(DISCRIM_PRESETS) / "utkface_smooth_l1_noise40.conf"));
  CHECK(std::holds_alternative<SmoothL1>(l1.loss));
  const ExperimentSpec c10 = spec_from_config(ConfigMap::load(fs::path(DISCRIM_PRESETS) / "cifar10_noise40.conf"));
  CHECK(c10.train.lr_at(81) == 0.01);
  CHECK(c10.train.lr_at(101) == 0.001);
  const ExperimentSpec mnist = spec_from_config(ConfigMap::load(fs::path(DISCRIM_PRESETS) / "mnist_noise40.conf"));
  CHECK(mnist.dataset.noise_rate == 0.4);
  CHECK(mnist.model.hidden == std::vector<std::size_t>{128});
}
