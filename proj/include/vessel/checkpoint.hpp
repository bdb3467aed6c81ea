#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vessel/model_zoo.hpp"

namespace vessel {

// Binary archive of named NCHW float tensors:
//   "VSLT" u32 version, u64 count, then per tensor
//   u32 name length, name bytes, i32 n,c,h,w, float values;
//   trailer u64 FNV-1a over everything before it.
void write_tensor_archive(const std::filesystem::path& path,
                          const std::vector<std::pair<std::string, const Tensor*>>& tensors);
std::map<std::string, Tensor> read_tensor_archive(const std::filesystem::path& path);

// All parameters followed by all buffers, by dotted name.
std::vector<std::pair<std::string, const Tensor*>> model_tensors(const ModelHandle& model);
// Copies archive values into the model; every model tensor must be present
// with an identical shape. Throws SpecMismatchError otherwise.
void load_model_tensors(const ModelHandle& model, const std::map<std::string, Tensor>& archive);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_f1 = 0.0;
  double wall_seconds = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;

  bool operator==(const TrainingHistory&) const = default;
};

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EpochRecord& r);
EpochRecord epoch_from_json(const nlohmann::json& j);

// `{arch}_{seed}_{epoch}.ckpt`
std::string checkpoint_name(Architecture arch, std::uint64_t seed, int epoch);

// Writes `path` (tensor archive) and `path.json` (ModelSpec, config hash,
// history). Throws IOError when either cannot be written.
void save_checkpoint(const ModelHandle& model, const TrainingHistory& history,
                     const std::filesystem::path& path,
                     const std::string& config_hash = "");

struct LoadedCheckpoint {
  ModelHandle model;
  TrainingHistory history;
  std::string config_hash;
};
// Throws IOError on unreadable files and SpecMismatchError when the sidecar
// is corrupt or disagrees with the archive.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vessel
