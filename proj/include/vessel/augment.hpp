#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "vessel/preprocess.hpp"

namespace vessel {

struct TransformSpec {
  bool hflip = false;
  bool vflip = false;
  double rotation_degrees = 0.0;  // counter-clockwise

  bool operator==(const TransformSpec&) const = default;
};

struct AugmentConfig {
  int copies_per_image = 2;
  double rotation_bound_degrees = 30.0;
  std::uint64_t seed = 0;

  bool operator==(const AugmentConfig&) const = default;
};

void validate(const AugmentConfig& config);  // throws ConfigError

// Flips first (horizontal, then vertical), then rotation about the centre.
// Image pixels are interpolated bilinearly, masks by nearest neighbour;
// everything rotated in from outside the frame is 0.
NetworkInput apply_transform(const NetworkInput& input, const TransformSpec& t);

// The transform for copy `copy_index` (1-based) of `sample_id`; depends on
// nothing else, so copies can be generated in any order.
TransformSpec draw_transform(const AugmentConfig& config, std::string_view sample_id, int copy_index);

// Each original followed by its copies, in input order.
std::vector<NetworkInput> expand_training_set(std::span<const NetworkInput> inputs,
                                              const AugmentConfig& config);

}  // namespace vessel
