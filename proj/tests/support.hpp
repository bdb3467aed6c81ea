#pragma once

// Shared helpers for the test executables: temporary directories, a tiny
// GIF writer, synthetic fundus-like images and on-disk dataset trees laid
// out like the public releases.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vessel/dataset.hpp"
#include "vessel/image.hpp"
#include "vessel/rng.hpp"

namespace testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "vessel");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

// Greyscale or binary plane (0/1 is stretched to 0/255) as a GIF87a file
// with a 256-entry grey palette. Uses only literal codes, resetting the
// dictionary often enough that the code width never grows.
std::vector<std::uint8_t> encode_gif(const vessel::Image8& plane);
void write_gif(const fs::path& path, const vessel::Image8& plane);

struct SyntheticSample {
  vessel::Image8 image;  // RGB
  vessel::Image8 mask;   // {0, 1}
  vessel::Image8 fov;    // {0, 1}
};

// Reddish disc on black with darker branching curves in the green channel
// standing in for vessels; the mask marks the curves.
SyntheticSample synthetic_fundus(int width, int height, std::uint64_t seed);

// Writes a dataset tree under `root` using the file names of the public
// release (the ones listed in the shipped split file) and returns the
// number of images written. Images are `width`×`height`.
int write_dataset_tree(const fs::path& root, vessel::DatasetId id, int width, int height,
                       std::uint64_t seed = 1);

// All four datasets under root/{DRIVE,STARE,CHASE_DB1,HRF}.
void write_all_trees(const fs::path& root, int width, int height);

// Plane of uniform random bytes.
vessel::Image8 random_plane(int width, int height, int channels, std::uint64_t seed);
// Plane of uniform {0, 1} values with P(1) = p.
vessel::Image8 random_binary(int width, int height, double p, std::uint64_t seed);

// Path of the CLI binary built alongside the tests.
fs::path cli_path();

}  // namespace testing
