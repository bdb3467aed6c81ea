#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "vessel/checkpoint.hpp"
#include "vessel/config.hpp"
#include "vessel/dataset.hpp"
#include "vessel/losses.hpp"
#include "vessel/metrics.hpp"
#include "vessel/optimizer.hpp"
#include "vessel/preprocess.hpp"

namespace vessel {

struct PreparedData {
  std::vector<NetworkInput> train;  // augmented
  std::vector<NetworkInput> val;    // un-augmented originals
};

// Loads and standardizes the training entries, holds out a seeded
// val_fraction of the originals, then augments the remainder.
// Throws DataEmptyError when there is nothing to train on.
PreparedData prepare_training_data(const ExperimentConfig& config,
                                   std::span<const ManifestEntry> train_entries);
PreparedData prepare_training_data(const ExperimentConfig& config,
                                   std::span<const NetworkInput> originals);

// One optimization step on a batch. Returns the loss of the forward pass
// that produced the gradient. When the loss or any gradient is not finite
// the update is skipped and NaN is returned. `before_update` runs once the
// gradient is known to be finite, while the parameters still hold the
// values that produced the returned loss.
double train_step(const ModelHandle& model, Optimizer& optimizer, const Tensor& batch,
                  const Tensor& target, const LossConfig& loss,
                  const std::function<void()>& before_update = {});

struct TrainOptions {
  std::function<void(const EpochRecord&)> on_epoch;
  bool write_history = true;
  bool write_checkpoint = true;
};

struct TrainResult {
  ModelHandle model;  // parameters of the best epoch
  TrainingHistory history;
  fs::path best_checkpoint;  // empty when checkpointing is off
};

// Throws ConfigError, DataEmptyError, DivergenceError (after writing the
// last finite state to `{arch}_{seed}_{epoch}.ckpt`).
TrainResult train(const ExperimentConfig& config, const CombinedDataset& data,
                  const TrainOptions& options = {});
TrainResult train(const ExperimentConfig& config, const PreparedData& data,
                  const TrainOptions& options = {});

struct EvalOptions {
  PreprocessConfig preprocess;
  double threshold = 0.5;
  Aggregation aggregation = Aggregation::PoolCounts;
  bool use_fov = false;
  // Binary maps at original resolution are retained for the first
  // `keep_predictions` samples.
  int keep_predictions = 0;
};

EvalOptions eval_options(const ExperimentConfig& config);

struct Evaluation {
  MetricsReport report;
  std::vector<Image8> predictions;
};

// Per sample: standardize → forward → resize back → threshold → count
// against the original mask → aggregate. Throws ShapeError, EmptyList.
Evaluation evaluate(const ModelHandle& model, std::span<const Sample> test_set,
                    const EvalOptions& options);
Evaluation evaluate(const ModelHandle& model, std::span<const ManifestEntry> test_set,
                    const EvalOptions& options);

// Probability map at original resolution for one sample.
std::vector<float> predict_probability(const ModelHandle& model, const Sample& sample,
                                       const PreprocessConfig& preprocess);

// Resolves configured dataset roots and the split file into a combined
// dataset. Throws DataEmptyError when no roots are configured.
CombinedDataset load_combined_dataset(const ExperimentConfig& config);

}  // namespace vessel
