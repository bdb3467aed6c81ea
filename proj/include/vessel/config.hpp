#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vessel/augment.hpp"
#include "vessel/dataset.hpp"
#include "vessel/losses.hpp"
#include "vessel/metrics.hpp"
#include "vessel/model_zoo.hpp"
#include "vessel/optimizer.hpp"
#include "vessel/preprocess.hpp"

namespace vessel {

struct DataConfig {
  std::map<DatasetId, fs::path> roots;  // absent datasets are excluded
  // Empty: the shipped combined split restricted to the datasets present.
  fs::path split_file;
};

struct ExperimentConfig {
  Architecture architecture = Architecture::Unet;
  // Architecture-independent model settings; in_channels follows the
  // architecture.
  int base_width = 64;
  int rdn_layers = 3;
  int rdn_growth = 12;
  int rse_reduction = 16;
  std::optional<fs::path> pretrained_weights;
  std::map<Architecture, fs::path> pretrained_by_arch;

  PreprocessConfig preprocess;
  AugmentConfig augment;
  LossConfig loss;
  // Per-architecture loss fields (bce_weight, dice_weight, epsilon,
  // prob_clamp) applied over `loss`.
  std::map<Architecture, std::map<std::string, double>> loss_by_arch;
  OptimizerConfig optimizer;
  int batch_size = 4;
  int max_epochs = 150;
  double val_fraction = 0.1;
  int early_stop_patience = 20;
  std::uint64_t seed = 0;
  fs::path output_dir = "runs";

  double threshold = 0.5;
  Aggregation aggregation = Aggregation::PoolCounts;
  bool use_fov = false;

  DataConfig data;
  std::vector<Architecture> bench_architectures{std::begin(kAllArchitectures),
                                                std::end(kAllArchitectures)};
  int montage_columns = 5;
  int montage_cell = 256;

  // Model spec for `arch` under these settings.
  ModelSpec model_spec(Architecture arch) const;
  ModelSpec model_spec() const { return model_spec(architecture); }
  LossConfig loss_config(Architecture arch) const;
  LossConfig loss_config() const { return loss_config(architecture); }
};

// Applies one `key = value` setting. Throws ConfigError for unknown keys
// and malformed values.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);

// Parses `key = value` lines (`#` starts a comment). Throws ConfigError
// with the line number on malformed lines.
void apply_config_text(ExperimentConfig& config, const std::string& text, const std::string& source = "config");

// Reads the file (if any), then applies `key=value` overrides in order.
// Validates the result. Throws ConfigError or IOError.
ExperimentConfig load_config(const std::optional<fs::path>& path, std::span<const std::string> overrides = {});

void validate(const ExperimentConfig& config);

// Every key with its resolved value, sorted, one per line; reading it back
// reproduces the configuration.
std::string canonical_text(const ExperimentConfig& config);
// 16 hex digits of FNV-1a over the canonical text.
std::string config_hash(const ExperimentConfig& config);

}  // namespace vessel
