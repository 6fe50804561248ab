#pragma once

// RunRecord serialization.
//   metrics.csv  epoch,split,metric,value,seed
//   samples.csv  epoch,id,inner_loss,avg_loss,delta,weight,noisy
//   summary.json final metrics, config echo, run id

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>

#include "json.hpp"

#include "discrim/config.hpp"
#include "discrim/errors.hpp"
#include "discrim/trainer.hpp"

namespace discrim {

/// 16 hex digits of FNV-1a over the canonical config text and the seed.
inline std::string run_id(const ConfigMap& config, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  mix(config.to_text());
  mix("#seed=" + std::to_string(seed));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline void write_metrics_csv(const RunRecord& record, std::ostream& out) {
  out << "epoch,split,metric,value,seed\n";
  for (const MetricRow& row : record.metrics) {
    out << row.epoch << ',' << row.split << ',' << row.metric << ',' << format_double(row.value)
        << ',' << record.seed << '\n';
  }
}

inline void write_samples_csv(const RunRecord& record, std::ostream& out) {
  out << "epoch,id,inner_loss,avg_loss,delta,weight,noisy\n";
  for (const SampleRow& row : record.samples) {
    out << row.epoch << ',' << row.id << ',' << format_double(row.inner_loss) << ','
        << format_double(row.avg_loss) << ',' << format_double(row.delta) << ','
        << format_double(row.weight) << ',' << (row.noisy ? 1 : 0) << '\n';
  }
}

inline nlohmann::ordered_json config_json(const ConfigMap& config) {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& [key, value] : config.values()) out[key] = value;
  return out;
}

inline nlohmann::ordered_json summary_json(const RunRecord& record, const ConfigMap& config) {
  nlohmann::ordered_json out;
  out["run_id"] = run_id(config, record.seed);
  out["seed"] = record.seed;
  out["status"] = "ok";
  out["final_metrics"] = record.final_metrics;
  out["wall_seconds"] = record.wall_seconds;
  out["config"] = config_json(config);
  return out;
}

namespace detail {
template <typename Writer>
void write_file(const std::filesystem::path& path, Writer&& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  writer(out);
  if (!out) throw IoError("write failed for " + path.string());
}
}  // namespace detail

/// Writes metrics.csv, samples.csv and summary.json into `dir` (created if needed).
inline void write_run_directory(const RunRecord& record, const ConfigMap& config,
                                const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  detail::write_file(dir / "metrics.csv", [&](std::ostream& out) { write_metrics_csv(record, out); });
  detail::write_file(dir / "samples.csv", [&](std::ostream& out) { write_samples_csv(record, out); });
  detail::write_file(dir / "summary.json",
                     [&](std::ostream& out) { out << summary_json(record, config).dump(2) << '\n'; });
}

}  // namespace discrim
