#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vessel/config.hpp"
#include "vessel/dataset.hpp"
#include "vessel/metrics.hpp"
#include "vessel/model_zoo.hpp"

namespace vessel {

struct ArchitectureResult {
  Architecture architecture = Architecture::Unet;
  MetricsReport report;
  fs::path checkpoint;
};

struct BenchmarkResult {
  std::vector<ArchitectureResult> results;  // one per requested architecture, in request order
  std::string config_hash;
  std::string revision;
  std::string started_at;
  std::string finished_at;
  fs::path run_dir;
  fs::path table_csv;
  fs::path table_md;
  fs::path montage;
};

enum class TableFormat { Csv, Markdown };

// Four decimals, as in the published table.
std::string format_metric(double value);
// Rows are architectures, columns the five metric headers.
std::string emit_table(const BenchmarkResult& result, TableFormat format);
void write_tables(BenchmarkResult& result);  // results.csv / results.md under run_dir

struct MontageOptions {
  int cell = 256;         // square cell edge
  int label_width = 200;  // left column holding the row labels
  int gap = 4;
};

using PredictionSet = std::map<Architecture, std::vector<Image8>>;

// Rows: original, ground truth, then every architecture of `rows` in the
// given order; one column per sample. Throws MissingPredictionError naming
// the sample and architecture of the first absent map.
Image8 render_montage(std::span<const Sample> samples, const PredictionSet& predictions,
                      std::span<const Architecture> rows, const MontageOptions& options = {});
inline Image8 render_montage(std::span<const Sample> samples, const PredictionSet& predictions,
                             const MontageOptions& options = {}) {
  return render_montage(samples, predictions, kAllArchitectures, options);
}

struct BenchOptions {
  // Evaluate checkpoints found here instead of training.
  std::optional<fs::path> from_checkpoints;
  // Parent of the timestamped run directory.
  fs::path out_root = "runs";
  std::function<void(const std::string&)> log;
};

// Trains (or loads) and evaluates each architecture in turn on the
// configured data, then writes tables, montage, metrics.json, the resolved
// config and run.json into a fresh run directory.
BenchmarkResult run_benchmark(const ExperimentConfig& config, std::span<const Architecture> architectures,
                              const BenchOptions& options = {});

// Picks `{arch}_{seed}_{epoch}.ckpt` in `dir` for the given seed (highest
// epoch wins). Throws IOError when none exists.
fs::path find_checkpoint(const fs::path& dir, Architecture arch, std::uint64_t seed);

// metrics.json round trip, used by the `report` subcommand.
void write_metrics_json(const BenchmarkResult& result, const fs::path& path);
BenchmarkResult read_metrics_json(const fs::path& path);

// Fresh `run-YYYYmmdd-HHMMSS[-k]` directory under `root`.
fs::path make_run_dir(const fs::path& root);
std::string source_revision();
std::string utc_timestamp();

}  // namespace vessel
