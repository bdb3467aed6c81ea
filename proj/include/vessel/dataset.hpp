#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vessel/image.hpp"

namespace vessel {

namespace fs = std::filesystem;

enum class DatasetId { Drive, Stare, ChaseDb1, Hrf };
inline constexpr DatasetId kAllDatasets[] = {DatasetId::Drive, DatasetId::Stare,
                                             DatasetId::ChaseDb1, DatasetId::Hrf};

std::string dataset_token(DatasetId id);         // DRIVE, STARE, CHASE_DB1, HRF
DatasetId parse_dataset(const std::string& text);  // throws ConfigError

enum class Split { Train, Test };
std::string split_token(Split s);  // train / test
Split parse_split(const std::string& text);

struct ManifestEntry {
  DatasetId dataset = DatasetId::Drive;
  std::string id;  // image file stem, unique within a dataset
  fs::path image_path;
  fs::path mask_path;
  std::optional<fs::path> fov_path;
  Split split = Split::Train;
  int original_width = 0;
  int original_height = 0;

  // "DRIVE/21_training"
  std::string sample_id() const;
  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  DatasetId dataset_id = DatasetId::Drive;
  fs::path root;
  std::vector<ManifestEntry> entries;

  std::size_t count(Split s) const;
  bool operator==(const DatasetManifest&) const = default;
};

// Walks the documented directory layout under `root`. Every image and mask
// is decoded once to record dimensions and prove readability; pass
// `decode = false` to skip that (dimensions are then left at 0).
// Throws MissingDirectory, LayoutMismatch, OrphanImage, DecodeError.
DatasetManifest discover_dataset(const fs::path& root, DatasetId id, bool decode = true);

struct Sample {
  Image8 image;        // H×W×3
  Image8 vessel_mask;  // H×W, {0, 1}
  std::optional<Image8> fov_mask;
  DatasetId dataset = DatasetId::Drive;
  Split split = Split::Train;
  std::string sample_id;
};

// Throws DecodeError or DimensionMismatch.
Sample load_sample(const ManifestEntry& entry);

// Checks the Sample invariants; throws DimensionMismatch or NonBinaryError.
void check_sample(const Sample& s);

struct CombinedDataset {
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> test;
};

// Membership and order come from the split file. Throws
// SplitReferenceError for records naming an absent entry and for
// duplicate image paths across manifests.
CombinedDataset build_combined_split(std::span<const DatasetManifest> manifests,
                                     const fs::path& split_file);

// Line-delimited JSON with keys dataset, id, image, mask, fov, split.
// Paths are written relative to the manifest root.
struct SplitRecord {
  DatasetId dataset = DatasetId::Drive;
  std::string id;
  std::string image;
  std::string mask;
  std::optional<std::string> fov;
  Split split = Split::Train;
};

std::vector<SplitRecord> read_split_file(const fs::path& path);  // throws IOError
void write_records(const fs::path& path, std::span<const SplitRecord> records);
std::vector<SplitRecord> manifest_records(const DatasetManifest& manifest);

// Same as above over already-parsed records; `source` labels errors.
CombinedDataset build_combined_split(std::span<const DatasetManifest> manifests,
                                     std::span<const SplitRecord> records,
                                     const std::string& source = "split records");

// Shipped split files.
fs::path default_split_file();    // data/splits/combined_88_45.jsonl
fs::path drive_only_split_file();  // data/splits/drive_only.jsonl

}  // namespace vessel
