#include <doctest.h>

#include <fstream>
#include <set>

#include <opencv2/imgcodecs.hpp>

#include "support.hpp"
#include "vessel/config.hpp"
#include "vessel/dataset.hpp"
#include "vessel/errors.hpp"
#include "vessel/trainer.hpp"

using namespace vessel;

namespace {

// Built once: every dataset at 24×20.
const fs::path& all_trees() {
  static testing::TempDir dir("trees");
  static bool built = false;
  if (!built) {
    testing::write_all_trees(dir.path(), 24, 20);
    built = true;
  }
  return dir.path();
}

fs::path root_of(DatasetId id) { return all_trees() / dataset_token(id); }

std::vector<DatasetManifest> all_manifests() {
  std::vector<DatasetManifest> out;
  for (DatasetId id : kAllDatasets) out.push_back(discover_dataset(root_of(id), id));
  return out;
}

}  // namespace

TEST_CASE("per-dataset entry and split counts") {
  struct Expect {
    DatasetId id;
    std::size_t train, test;
  };
  for (const Expect& e : {Expect{DatasetId::Drive, 20, 20}, Expect{DatasetId::Stare, 11, 9},
                          Expect{DatasetId::ChaseDb1, 20, 8}, Expect{DatasetId::Hrf, 37, 8}}) {
    INFO(dataset_token(e.id));
    const DatasetManifest m = discover_dataset(root_of(e.id), e.id);
    CHECK(m.count(Split::Train) == e.train);
    CHECK(m.count(Split::Test) == e.test);
    CHECK(m.dataset_id == e.id);
  }
}

TEST_CASE("discovered splits agree with the shipped split file") {
  std::map<std::pair<DatasetId, std::string>, Split> shipped;
  for (const SplitRecord& r : read_split_file(default_split_file())) shipped[{r.dataset, r.id}] = r.split;
  CHECK(shipped.size() == 133);
  for (const DatasetManifest& m : all_manifests()) {
    for (const ManifestEntry& e : m.entries) {
      INFO(e.sample_id());
      REQUIRE(shipped.count({e.dataset, e.id}) == 1);
      CHECK(shipped[{e.dataset, e.id}] == e.split);
    }
  }
}

TEST_CASE("entries are sorted by image file name and record dimensions") {
  for (const DatasetManifest& m : all_manifests()) {
    for (std::size_t i = 1; i < m.entries.size(); ++i) {
      CHECK(m.entries[i - 1].image_path.filename().string() < m.entries[i].image_path.filename().string());
    }
    for (const ManifestEntry& e : m.entries) {
      CHECK(e.original_width == 24);
      CHECK(e.original_height == 20);
    }
  }
}

TEST_CASE("DRIVE and HRF entries carry field-of-view masks, STARE and CHASE do not") {
  for (const DatasetManifest& m : all_manifests()) {
    const bool expect_fov = m.dataset_id == DatasetId::Drive || m.dataset_id == DatasetId::Hrf;
    for (const ManifestEntry& e : m.entries) CHECK(e.fov_path.has_value() == expect_fov);
  }
}

TEST_CASE("every entry loads and satisfies the sample invariants") {
  for (const DatasetManifest& m : all_manifests()) {
    for (const ManifestEntry& e : m.entries) {
      const Sample s = load_sample(e);
      CHECK(s.image.channels == 3);
      CHECK(s.vessel_mask.width == s.image.width);
      CHECK(s.vessel_mask.height == s.image.height);
      CHECK(is_binary(s.vessel_mask));
      if (s.fov_mask) CHECK(is_binary(*s.fov_mask));
      CHECK(s.sample_id == e.sample_id());
    }
  }
}

TEST_CASE("discovery is deterministic") {
  for (DatasetId id : kAllDatasets) CHECK(discover_dataset(root_of(id), id) == discover_dataset(root_of(id), id));
}

TEST_CASE("combined split: counts, order, disjointness, conservation") {
  const auto manifests = all_manifests();
  const CombinedDataset c = build_combined_split(manifests, default_split_file());
  CHECK(c.train.size() == 88);
  CHECK(c.test.size() == 45);
  std::set<std::string> train_ids, test_ids;
  for (const auto& e : c.train) train_ids.insert(e.sample_id());
  for (const auto& e : c.test) test_ids.insert(e.sample_id());
  CHECK(train_ids.size() == 88);
  CHECK(test_ids.size() == 45);
  for (const auto& id : train_ids) CHECK(test_ids.count(id) == 0);
  std::size_t total = 0;
  for (const auto& m : manifests) total += m.entries.size();
  CHECK(c.train.size() + c.test.size() == total);
  const CombinedDataset again = build_combined_split(manifests, default_split_file());
  CHECK(again.train == c.train);
  CHECK(again.test == c.test);
}

TEST_CASE("DRIVE alone with the DRIVE-only split file gives 20/20") {
  const DatasetManifest m[] = {discover_dataset(root_of(DatasetId::Drive), DatasetId::Drive)};
  const CombinedDataset c = build_combined_split(m, drive_only_split_file());
  CHECK(c.train.size() == 20);
  CHECK(c.test.size() == 20);
}

TEST_CASE("a split file naming an absent dataset is rejected") {
  const DatasetManifest m[] = {discover_dataset(root_of(DatasetId::Drive), DatasetId::Drive)};
  CHECK_THROWS_AS(build_combined_split(m, default_split_file()), SplitReferenceError);
}

TEST_CASE("duplicate records and duplicate image paths are rejected") {
  const DatasetManifest m[] = {discover_dataset(root_of(DatasetId::Stare), DatasetId::Stare)};
  auto records = manifest_records(m[0]);
  records.push_back(records.front());
  CHECK_THROWS_AS(build_combined_split(m, records), SplitReferenceError);
  const DatasetManifest twice[] = {m[0], m[0]};
  CHECK_THROWS_AS(build_combined_split(twice, manifest_records(m[0])), SplitReferenceError);
}

TEST_CASE("the default split limited to the supplied roots") {
  ExperimentConfig cfg;
  cfg.data.roots[DatasetId::Drive] = root_of(DatasetId::Drive);
  cfg.data.roots[DatasetId::Hrf] = root_of(DatasetId::Hrf);
  const CombinedDataset c = load_combined_dataset(cfg);
  CHECK(c.train.size() == 57);
  CHECK(c.test.size() == 28);
  CHECK_THROWS_AS(load_combined_dataset(ExperimentConfig{}), DataEmptyError);
}

TEST_CASE("manifest records round-trip through a JSONL file") {
  testing::TempDir dir;
  const DatasetManifest m = discover_dataset(root_of(DatasetId::Drive), DatasetId::Drive);
  const auto records = manifest_records(m);
  write_records(dir / "drive.jsonl", records);
  const auto back = read_split_file(dir / "drive.jsonl");
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == records[i].id);
    CHECK(back[i].image == records[i].image);
    CHECK(back[i].mask == records[i].mask);
    CHECK(back[i].fov == records[i].fov);
    CHECK(back[i].split == records[i].split);
  }
  CHECK(records.front().image == "test/images/01_test.tif");
  std::ofstream(dir / "bad.jsonl") << "{\"dataset\": \"DRIVE\"}\n";
  CHECK_THROWS_AS(read_split_file(dir / "bad.jsonl"), IOError);
}

TEST_CASE("layout errors") {
  testing::TempDir dir;
  CHECK_THROWS_AS(discover_dataset(dir / "absent", DatasetId::Drive), MissingDirectory);
  fs::create_directories(dir / "empty");
  for (DatasetId id : kAllDatasets) CHECK_THROWS_AS(discover_dataset(dir / "empty", id), LayoutMismatch);
}

TEST_CASE("an image without a mask is an orphan") {
  testing::TempDir dir;
  testing::write_dataset_tree(dir.path(), DatasetId::Stare, 16, 16);
  fs::remove(dir / "labels-ah/im0044.ah.ppm");
  CHECK_THROWS_AS(discover_dataset(dir.path(), DatasetId::Stare), OrphanImage);
}

TEST_CASE("the second CHASE annotator is ignored") {
  testing::TempDir dir;
  testing::write_dataset_tree(dir.path(), DatasetId::ChaseDb1, 16, 16);
  fs::copy_file(dir / "Image_01L_1stHO.png", dir / "Image_01L_2ndHO.png");
  const DatasetManifest m = discover_dataset(dir.path(), DatasetId::ChaseDb1);
  CHECK(m.entries.size() == 28);
  CHECK(m.entries.front().mask_path.filename() == "Image_01L_1stHO.png");
}

TEST_CASE("mismatched image and mask sizes are reported") {
  testing::TempDir dir;
  testing::write_dataset_tree(dir.path(), DatasetId::ChaseDb1, 16, 16);
  cv::imwrite((dir / "Image_03R_1stHO.png").string(), cv::Mat(8, 8, CV_8U, cv::Scalar(255)));
  CHECK_THROWS_AS(discover_dataset(dir.path(), DatasetId::ChaseDb1), DimensionMismatch);
  const ManifestEntry e = discover_dataset(dir.path(), DatasetId::ChaseDb1, false).entries.at(5);
  CHECK(e.id == "Image_03R");
  CHECK_THROWS_AS(load_sample(e), DimensionMismatch);
}

TEST_CASE("a corrupt image file is a decode error") {
  testing::TempDir dir;
  testing::write_dataset_tree(dir.path(), DatasetId::ChaseDb1, 16, 16);
  std::ofstream(dir / "Image_02L.jpg", std::ios::trunc) << "garbage";
  CHECK_THROWS_AS(discover_dataset(dir.path(), DatasetId::ChaseDb1), DecodeError);
}

TEST_CASE("dataset and split tokens") {
  for (DatasetId id : kAllDatasets) CHECK(parse_dataset(dataset_token(id)) == id);
  CHECK_THROWS_AS(parse_dataset("ARIA"), ConfigError);
  CHECK(parse_split("test") == Split::Test);
}
