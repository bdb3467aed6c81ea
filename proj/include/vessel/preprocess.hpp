#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vessel/dataset.hpp"
#include "vessel/image.hpp"
#include "vessel/tensor.hpp"

namespace vessel {

struct PreprocessConfig {
  int target_size = 512;
  double clahe_clip_limit = 2.0;  // +inf disables clipping
  int clahe_tile_grid = 8;

  bool operator==(const PreprocessConfig&) const = default;
};

// Throws ConfigError.
void validate(const PreprocessConfig& config);

struct Provenance {
  std::string sample_id;
  int original_width = 0;
  int original_height = 0;
};

struct NetworkInput {
  Tensor pixels;  // 1×1×S×S, values in [0, 1]
  Image8 mask;    // S×S, {0, 1}
  std::optional<Image8> fov;
  Provenance provenance;

  int size() const { return pixels.shape().h; }
};

// The G plane, untouched. Throws ChannelError unless the input has 3 channels.
Image8 extract_green_channel(const Image8& rgb);

// Contrast-limited adaptive histogram equalization with the tiling,
// clipping, redistribution and interpolation rules of OpenCV's
// implementation, so the two agree on 8-bit input.
// Throws ChannelError unless the input is single-channel.
Image8 apply_clahe(const Image8& gray, double clip_limit, int tile_grid);
inline Image8 apply_clahe(const Image8& gray, const PreprocessConfig& config) {
  return apply_clahe(gray, config.clahe_clip_limit, config.clahe_tile_grid);
}

// Green channel → CLAHE → bilinear resize to S×S → scale to [0, 1]. Masks
// are resized nearest-neighbour and stay binary.
NetworkInput standardize(const Sample& sample, const PreprocessConfig& config);

// Replicates the single input plane to `channels` planes (1 or 3).
Tensor to_model_input(const NetworkInput& input, int channels);
// Batches inputs (all the same size) into N×channels×S×S.
Tensor to_model_batch(std::span<const NetworkInput> inputs, int channels);
Tensor mask_batch(std::span<const NetworkInput> inputs);  // N×1×S×S of 0/1

// Bilinear resize of a 1×1×S×S probability map back to width×height.
std::vector<float> resize_to_original(const Tensor& probability, int width, int height);

// 1 where p ≥ threshold.
Image8 threshold_map(std::span<const float> probability, int width, int height, double threshold);

}  // namespace vessel
