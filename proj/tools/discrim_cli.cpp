// discrim: command line harness for noise-robust training experiments.
//
//   discrim run <config> [--seeds N] [--out DIR] [--clock epoch|iteration]
//   discrim sweep <config> --axis a|p|q|lambda|noise_rate --values v1,v2,...
//   discrim search <config> --budget N
//   discrim export-fixtures [--out DIR]
//
// Exit code 0 on success. On failure a one-line JSON object {"error":...,"message":...}
// is printed to stderr and the exit code is nonzero.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "discrim/config.hpp"
#include "discrim/data.hpp"
#include "discrim/errors.hpp"
#include "discrim/experiment.hpp"
#include "discrim/record_io.hpp"

namespace fs = std::filesystem;
using namespace discrim;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<int> seeds;
  std::string out;
  std::string clock;
};

void add_common(CLI::App* cmd, CommonOptions& opts, bool needs_config = true) {
  if (needs_config) cmd->add_option("config", opts.config, "experiment config file")->required();
  cmd->add_option("--seeds", opts.seeds, "number of seeds (default: experiment.seeds, else 5)");
  cmd->add_option("--out", opts.out, "output directory");
  cmd->add_option("--clock", opts.clock, "schedule clock unit")->check(CLI::IsMember({"epoch", "iteration"}));
}

ExperimentSpec load_spec(const CommonOptions& opts) {
  ConfigMap config = ConfigMap::load(opts.config);
  if (opts.seeds) config.set("experiment.seeds", std::to_string(*opts.seeds));
  if (!opts.clock.empty()) config.set("discrim.clock", opts.clock);
  return spec_from_config(config);
}

fs::path output_dir(const CommonOptions& opts, const std::string& fallback) {
  return opts.out.empty() ? fs::path(fallback) : fs::path(opts.out);
}

void print_summary(const ExperimentSummary& summary) {
  for (const auto& [metric, stat] : summary.aggregate) {
    std::cout << metric << " = " << format_double(stat.mean) << " +- " << format_double(stat.std)
              << " (n=" << stat.n << ")\n";
  }
  for (const SeedOutcome& s : summary.seeds) {
    if (!s.ok) std::cout << "seed " << s.seed << " failed: " << s.error << "\n";
  }
}

int fail(const std::string& kind, const std::string& message, int code = 1) {
  nlohmann::json err{{"error", kind}, {"message", message}};
  std::cerr << err.dump() << std::endl;
  return code;
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> values;
  for (const std::string& part : split(text, ',')) {
    if (part.empty()) throw ConfigError("empty entry in --values");
    values.push_back(ConfigMap::parse_double("--values", part));
  }
  if (values.empty()) throw ConfigError("--values is empty");
  return values;
}

// Small recorded artifacts for downstream tooling (plots, parsers).
void export_fixtures(const fs::path& out) {
  fs::create_directories(out);

  ConfigMap run_config = ConfigMap::parse(
      "dataset.kind = blobs\n"
      "dataset.n_train = 200\n"
      "dataset.n_test = 100\n"
      "dataset.separation = 4\n"
      "dataset.noise_rate = 0.4\n"
      "discrim.a = 0.27\n"
      "discrim.p = 0.54\n"
      "discrim.q = 4\n"
      "discrim.e_s = 2\n"
      "train.epochs = 8\n"
      "train.batch_size = 32\n"
      "experiment.seeds = 1\n");
  const ExperimentSpec spec = spec_from_config(run_config);
  const ExperimentSummary summary = run_experiment(spec, out / "blobs_run");
  if (!summary.seeds.front().ok) throw Error("fixture_failed", summary.seeds.front().error);

  // Three samples with losses 0, 2, 4 -> normalized supports {0, 0.5, 1}.
  fs::create_directories(out / "normalized_losses");
  RunRecord tiny;
  tiny.samples = {{1, 0, 0.0, 0.0, 1.0, 1.0, false}, {1, 1, 2.0, 2.0, 1.0, 1.0, false}, {1, 2, 4.0, 4.0, 1.0, 1.0, true}};
  tiny.metrics = {{1, "train", "accuracy", 1.0}, {1, "test", "accuracy", 1.0}, {1, "test", "loss", 0.0}};
  write_run_directory(tiny, ConfigMap{}, out / "normalized_losses");

  fs::create_directories(out / "empty");
  std::ofstream(out / "empty" / "samples.csv", std::ios::binary);

  fs::create_directories(out / "idx");
  IdxImages images{2, 2, 2, {0, 64, 128, 255, 255, 128, 64, 0}};
  const std::vector<std::uint8_t> labels = {3, 7};
  auto write_bytes = [](const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("cannot write " + path.string());
  };
  write_bytes(out / "idx" / "images-idx3-ubyte", encode_idx_images(images));
  write_bytes(out / "idx" / "labels-idx1-ubyte", encode_idx_labels(labels));
  write_bytes(out / "idx" / "labels-wrong-magic-idx1-ubyte", encode_idx_images(images));
  auto truncated = encode_idx_images(images);
  truncated.resize(truncated.size() - 3);
  write_bytes(out / "idx" / "images-truncated-idx3-ubyte", truncated);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-robust training experiments with the discrimination loss"};
  app.require_subcommand(1);

  CommonOptions run_opts;
  auto* run_cmd = app.add_subcommand("run", "run a multi-seed experiment");
  add_common(run_cmd, run_opts);

  CommonOptions sweep_opts;
  std::string axis, values;
  auto* sweep_cmd = app.add_subcommand("sweep", "vary one hyperparameter, others fixed");
  add_common(sweep_cmd, sweep_opts);
  sweep_cmd->add_option("--axis", axis, "a|p|q|lambda|noise_rate")->required();
  sweep_cmd->add_option("--values", values, "comma-separated values")->required();

  CommonOptions search_opts;
  int budget = 0;
  std::uint64_t search_seed = 0;
  auto* search_cmd = app.add_subcommand("search", "random/grid search over search.* keys");
  add_common(search_cmd, search_opts);
  search_cmd->add_option("--budget", budget, "number of trials")->required();
  search_cmd->add_option("--search-seed", search_seed, "seed for random draws");

  CommonOptions fixture_opts;
  auto* fixtures_cmd = app.add_subcommand("export-fixtures", "write golden fixture files");
  add_common(fixtures_cmd, fixture_opts, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage_error", e.what(), 2);
  }

  try {
    if (*run_cmd) {
      const ExperimentSpec spec = load_spec(run_opts);
      const fs::path out = output_dir(run_opts, "runs/run");
      const ExperimentSummary summary = run_experiment(spec, out);
      print_summary(summary);
      std::cout << "wrote " << out.string() << "\n";
      for (const SeedOutcome& s : summary.seeds) {
        if (!s.ok) return fail("seed_failed", "one or more seeds failed; see summary.json");
      }
    } else if (*sweep_cmd) {
      const ExperimentSpec spec = load_spec(sweep_opts);
      const fs::path out = output_dir(sweep_opts, "runs/sweep");
      const auto cells = run_sweep(spec, axis, parse_values(values), out);
      for (const SweepCell& cell : cells) {
        std::cout << axis << " = " << format_double(cell.value) << "\n";
        if (!cell.error.empty()) std::cout << "  invalid: " << cell.error << "\n";
        print_summary(cell.summary);
      }
      std::cout << "wrote " << (out / "sweep.csv").string() << "\n";
    } else if (*search_cmd) {
      const ExperimentSpec spec = load_spec(search_opts);
      const fs::path out = output_dir(search_opts, "runs/search");
      const SearchResult result = search_hyperparams(spec, spec.search_space, budget, search_seed, out);
      const SearchTrial& best = result.trials[result.best_index];
      std::cout << "best trial " << result.best_index << ": " << result.metric << " = "
                << format_double(best.score) << "\n";
      for (const auto& [key, value] : best.overrides) std::cout << "  " << key << " = " << value << "\n";
      std::cout << "wrote " << (out / "best.conf").string() << "\n";
    } else if (*fixtures_cmd) {
      const fs::path out = output_dir(fixture_opts, "fixtures");
      export_fixtures(out);
      std::cout << "wrote " << out.string() << "\n";
    }
  } catch (const Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail("internal_error", e.what());
  }
  return 0;
}
