#include "vessel/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <set>

#include <json.hpp>

#include "vessel/errors.hpp"

namespace vessel {

using nlohmann::json;

std::string dataset_token(DatasetId id) {
  switch (id) {
    case DatasetId::Drive: return "DRIVE";
    case DatasetId::Stare: return "STARE";
    case DatasetId::ChaseDb1: return "CHASE_DB1";
    case DatasetId::Hrf: return "HRF";
  }
  return "?";
}

DatasetId parse_dataset(const std::string& text) {
  for (DatasetId id : kAllDatasets) {
    if (dataset_token(id) == text) return id;
  }
  throw ConfigError("unknown dataset '" + text + "'; valid: DRIVE, STARE, CHASE_DB1, HRF");
}

std::string split_token(Split s) { return s == Split::Train ? "train" : "test"; }

Split parse_split(const std::string& text) {
  if (text == "train") return Split::Train;
  if (text == "test") return Split::Test;
  throw ConfigError("unknown split '" + text + "'; valid: train, test");
}

std::string ManifestEntry::sample_id() const { return dataset_token(dataset) + "/" + id; }

std::size_t DatasetManifest::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [s](const ManifestEntry& e) { return e.split == s; }));
}

namespace {

bool is_raster(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  static const std::set<std::string> known = {".tif", ".tiff", ".gif", ".jpg", ".jpeg", ".png", ".ppm"};
  return known.count(ext) > 0;
}

// Raster files in `dir`, keyed by stem.
std::map<std::string, fs::path> rasters_by_stem(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_raster(e.path())) out.emplace(e.path().stem().string(), e.path());
  }
  return out;
}

fs::path require_dir(const fs::path& dir, DatasetId id) {
  if (!fs::is_directory(dir)) {
    throw LayoutMismatch(dataset_token(id) + ": expected directory " + dir.string());
  }
  return dir;
}

std::optional<fs::path> optional_dir(const fs::path& dir) {
  if (fs::is_directory(dir)) return dir;
  return std::nullopt;
}

struct Candidate {
  fs::path image;
  std::string stem;
  fs::path mask_dir;
  std::string mask_stem;
  std::optional<fs::path> fov_dir;
  std::string fov_stem;
  Split split = Split::Train;
};

void scan_drive(const fs::path& root, std::vector<Candidate>& out) {
  for (const auto& [sub, split] : {std::pair{"training", Split::Train}, std::pair{"test", Split::Test}}) {
    const fs::path base = require_dir(root / sub, DatasetId::Drive);
    const fs::path images = require_dir(base / "images", DatasetId::Drive);
    const fs::path manual = require_dir(base / "1st_manual", DatasetId::Drive);
    const auto fov = optional_dir(base / "mask");
    for (const auto& [stem, path] : rasters_by_stem(images)) {
      // "21_training" → manual "21_manual1", FOV "21_training_mask"
      const std::string number = stem.substr(0, stem.find('_'));
      out.push_back({path, stem, manual, number + "_manual1", fov, stem + "_mask", split});
    }
  }
}

void scan_stare(const fs::path& root, std::vector<Candidate>& out) {
  const fs::path images = require_dir(root / "stare-images", DatasetId::Stare);
  const fs::path labels = require_dir(root / "labels-ah", DatasetId::Stare);
  for (const auto& [stem, path] : rasters_by_stem(images)) {
    out.push_back({path, stem, labels, stem + ".ah", std::nullopt, "", Split::Train});
  }
}

void scan_chase(const fs::path& root, std::vector<Candidate>& out) {
  auto ends_with = [](const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (const auto& [stem, path] : rasters_by_stem(root)) {
    if (stem.rfind("Image_", 0) != 0 || ends_with(stem, "_1stHO") || ends_with(stem, "_2ndHO")) continue;
    out.push_back({path, stem, root, stem + "_1stHO", std::nullopt, "", Split::Train});
  }
  if (out.empty()) throw LayoutMismatch("CHASE_DB1: no Image_* files in " + root.string());
}

void scan_hrf(const fs::path& root, std::vector<Candidate>& out) {
  const fs::path images = require_dir(root / "images", DatasetId::Hrf);
  const fs::path manual = require_dir(root / "manual1", DatasetId::Hrf);
  const auto fov = optional_dir(root / "mask");
  for (const auto& [stem, path] : rasters_by_stem(images)) {
    out.push_back({path, stem, manual, stem, fov, stem + "_mask", Split::Train});
  }
}

// Datasets without an official partition get a fixed rule over the sorted
// listing, chosen so the four datasets add up to 88 train / 45 test.
void assign_splits(DatasetId id, std::vector<ManifestEntry>& entries) {
  const std::size_t n = entries.size();
  for (std::size_t i = 0; i < n; ++i) {
    switch (id) {
      case DatasetId::Drive: break;  // from the directory
      case DatasetId::Stare: entries[i].split = i < 11 ? Split::Train : Split::Test; break;
      case DatasetId::ChaseDb1: entries[i].split = i < 20 ? Split::Train : Split::Test; break;
      case DatasetId::Hrf: entries[i].split = i + 8 < n ? Split::Train : Split::Test; break;
    }
  }
}

}  // namespace

DatasetManifest discover_dataset(const fs::path& root, DatasetId id, bool decode) {
  if (!fs::is_directory(root)) {
    throw MissingDirectory(dataset_token(id) + ": " + root.string() + " does not exist");
  }
  std::vector<Candidate> found;
  switch (id) {
    case DatasetId::Drive: scan_drive(root, found); break;
    case DatasetId::Stare: scan_stare(root, found); break;
    case DatasetId::ChaseDb1: scan_chase(root, found); break;
    case DatasetId::Hrf: scan_hrf(root, found); break;
  }
  if (found.empty()) throw LayoutMismatch(dataset_token(id) + ": no images under " + root.string());

  std::sort(found.begin(), found.end(), [](const Candidate& a, const Candidate& b) {
    return a.image.filename().string() < b.image.filename().string();
  });

  DatasetManifest manifest;
  manifest.dataset_id = id;
  manifest.root = root;
  std::map<fs::path, std::map<std::string, fs::path>> listing;
  auto lookup = [&](const fs::path& dir, const std::string& stem) -> std::optional<fs::path> {
    auto it = listing.find(dir);
    if (it == listing.end()) it = listing.emplace(dir, rasters_by_stem(dir)).first;
    auto hit = it->second.find(stem);
    if (hit == it->second.end()) return std::nullopt;
    return hit->second;
  };

  for (const Candidate& c : found) {
    ManifestEntry e;
    e.dataset = id;
    e.id = c.stem;
    e.image_path = c.image;
    e.split = c.split;
    auto mask = lookup(c.mask_dir, c.mask_stem);
    if (!mask) {
      throw OrphanImage(dataset_token(id) + ": " + c.image.string() + " has no mask '" + c.mask_stem +
                        ".*' in " + c.mask_dir.string());
    }
    e.mask_path = *mask;
    if (c.fov_dir) e.fov_path = lookup(*c.fov_dir, c.fov_stem);
    manifest.entries.push_back(std::move(e));
  }
  assign_splits(id, manifest.entries);

  if (decode) {
    for (ManifestEntry& e : manifest.entries) {
      const Sample s = load_sample(e);
      e.original_width = s.image.width;
      e.original_height = s.image.height;
    }
  }
  return manifest;
}

void check_sample(const Sample& s) {
  auto same = [&](const Image8& m) { return m.width == s.image.width && m.height == s.image.height; };
  if (s.image.channels != 3) throw ChannelError(s.sample_id + ": image must be RGB");
  if (!same(s.vessel_mask)) {
    throw DimensionMismatch(s.sample_id + ": image " + std::to_string(s.image.width) + "x" +
                            std::to_string(s.image.height) + " vs mask " + std::to_string(s.vessel_mask.width) +
                            "x" + std::to_string(s.vessel_mask.height));
  }
  if (!is_binary(s.vessel_mask)) throw NonBinaryError(s.sample_id + ": vessel mask");
  if (s.fov_mask) {
    if (!same(*s.fov_mask)) throw DimensionMismatch(s.sample_id + ": FOV mask size differs from image");
    if (!is_binary(*s.fov_mask)) throw NonBinaryError(s.sample_id + ": FOV mask");
  }
}

Sample load_sample(const ManifestEntry& entry) {
  Sample s;
  s.dataset = entry.dataset;
  s.split = entry.split;
  s.sample_id = entry.sample_id();
  s.image = read_rgb(entry.image_path);
  s.vessel_mask = read_binary_mask(entry.mask_path);
  if (entry.fov_path) s.fov_mask = read_binary_mask(*entry.fov_path);
  check_sample(s);
  return s;
}

std::vector<SplitRecord> manifest_records(const DatasetManifest& manifest) {
  std::vector<SplitRecord> out;
  for (const ManifestEntry& e : manifest.entries) {
    SplitRecord r;
    r.dataset = e.dataset;
    r.id = e.id;
    r.image = e.image_path.lexically_relative(manifest.root).generic_string();
    r.mask = e.mask_path.lexically_relative(manifest.root).generic_string();
    if (e.fov_path) r.fov = e.fov_path->lexically_relative(manifest.root).generic_string();
    r.split = e.split;
    out.push_back(std::move(r));
  }
  return out;
}

void write_records(const fs::path& path, std::span<const SplitRecord> records) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot write " + path.string());
  for (const SplitRecord& r : records) {
    json j;
    j["dataset"] = dataset_token(r.dataset);
    j["id"] = r.id;
    j["image"] = r.image;
    j["mask"] = r.mask;
    j["fov"] = r.fov ? json(*r.fov) : json(nullptr);
    j["split"] = split_token(r.split);
    out << j.dump() << '\n';
  }
  if (!out) throw IOError("write failed: " + path.string());
}

std::vector<SplitRecord> read_split_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot read split file " + path.string());
  std::vector<SplitRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      SplitRecord r;
      r.dataset = parse_dataset(j.at("dataset").get<std::string>());
      r.id = j.at("id").get<std::string>();
      r.image = j.value("image", "");
      r.mask = j.value("mask", "");
      if (j.contains("fov") && !j["fov"].is_null()) r.fov = j["fov"].get<std::string>();
      r.split = parse_split(j.at("split").get<std::string>());
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw IOError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw IOError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

CombinedDataset build_combined_split(std::span<const DatasetManifest> manifests,
                                     const fs::path& split_file) {
  return build_combined_split(manifests, read_split_file(split_file), split_file.string());
}

CombinedDataset build_combined_split(std::span<const DatasetManifest> manifests,
                                     std::span<const SplitRecord> records, const std::string& source) {

  std::map<std::pair<DatasetId, std::string>, const ManifestEntry*> index;
  std::set<fs::path> image_paths;
  for (const DatasetManifest& m : manifests) {
    for (const ManifestEntry& e : m.entries) {
      const fs::path key = fs::absolute(e.image_path).lexically_normal();
      if (!image_paths.insert(key).second) {
        throw SplitReferenceError("image " + e.image_path.string() + " appears in more than one manifest entry");
      }
      index[{e.dataset, e.id}] = &e;
    }
  }

  CombinedDataset out;
  std::set<std::pair<DatasetId, std::string>> seen;
  for (const SplitRecord& r : records) {
    const auto key = std::pair{r.dataset, r.id};
    auto it = index.find(key);
    if (it == index.end()) {
      throw SplitReferenceError(source + " names " + dataset_token(r.dataset) + "/" + r.id +
                                ", which is in no supplied manifest");
    }
    if (!seen.insert(key).second) {
      throw SplitReferenceError(source + " lists " + dataset_token(r.dataset) + "/" + r.id + " twice");
    }
    ManifestEntry e = *it->second;
    e.split = r.split;
    (r.split == Split::Train ? out.train : out.test).push_back(std::move(e));
  }
  return out;
}

fs::path default_split_file() { return fs::path(VESSEL_SOURCE_DIR) / "data/splits/combined_88_45.jsonl"; }
fs::path drive_only_split_file() { return fs::path(VESSEL_SOURCE_DIR) / "data/splits/drive_only.jsonl"; }

}  // namespace vessel
