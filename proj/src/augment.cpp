#include "vessel/augment.hpp"

#include <algorithm>

#include "vessel/errors.hpp"
#include "vessel/kernels.hpp"
#include "vessel/rng.hpp"

namespace vessel {

void validate(const AugmentConfig& config) {
  if (config.copies_per_image < 0) throw ConfigError("augment.copies must be nonnegative");
  if (!(config.rotation_bound_degrees >= 0 && config.rotation_bound_degrees <= 180)) {
    throw ConfigError("augment.rotation_bound must lie in [0, 180]");
  }
}

namespace {

template <class T>
void flip_plane(std::span<T> plane, int h, int w, bool horizontal, bool vertical) {
  if (horizontal) {
    for (int y = 0; y < h; ++y) {
      auto row = plane.subspan(static_cast<std::size_t>(y) * w, w);
      std::reverse(row.begin(), row.end());
    }
  }
  if (vertical) {
    for (int y = 0; y < h / 2; ++y) {
      std::swap_ranges(plane.begin() + static_cast<std::ptrdiff_t>(y) * w,
                       plane.begin() + static_cast<std::ptrdiff_t>(y + 1) * w,
                       plane.begin() + static_cast<std::ptrdiff_t>(h - 1 - y) * w);
    }
  }
}

void transform_mask(Image8& mask, const TransformSpec& t) {
  flip_plane(std::span<std::uint8_t>(mask.data), mask.height, mask.width, t.hflip, t.vflip);
  if (t.rotation_degrees != 0.0) {
    std::vector<std::uint8_t> rotated(mask.data.size());
    kernels::rotate_nearest(mask.data, mask.height, mask.width, t.rotation_degrees, rotated);
    mask.data = std::move(rotated);
  }
}

}  // namespace

NetworkInput apply_transform(const NetworkInput& input, const TransformSpec& t) {
  NetworkInput out = input;
  const int h = input.pixels.shape().h;
  const int w = input.pixels.shape().w;
  flip_plane(out.pixels.values(), h, w, t.hflip, t.vflip);
  if (t.rotation_degrees != 0.0) {
    Tensor rotated(out.pixels.shape());
    kernels::rotate_bilinear(out.pixels.values(), h, w, t.rotation_degrees, rotated.values());
    out.pixels = std::move(rotated);
  }
  transform_mask(out.mask, t);
  if (out.fov) transform_mask(*out.fov, t);
  return out;
}

TransformSpec draw_transform(const AugmentConfig& config, std::string_view sample_id, int copy_index) {
  Rng rng(mix_seed(mix_seed(config.seed, fnv1a(sample_id)), static_cast<std::uint64_t>(copy_index)));
  TransformSpec t;
  t.hflip = rng.bernoulli(0.5);
  t.vflip = rng.bernoulli(0.5);
  const double b = config.rotation_bound_degrees;
  t.rotation_degrees = std::clamp(rng.uniform(-b, b), -b, b);
  return t;
}

std::vector<NetworkInput> expand_training_set(std::span<const NetworkInput> inputs,
                                              const AugmentConfig& config) {
  validate(config);
  if (inputs.empty()) throw EmptyList("no training inputs to augment");
  const int per = 1 + config.copies_per_image;
  std::vector<NetworkInput> out(inputs.size() * per);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(inputs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[i * per] = inputs[i];
    for (int k = 1; k < per; ++k) {
      const TransformSpec t = draw_transform(config, inputs[i].provenance.sample_id, k);
      out[i * per + k] = apply_transform(inputs[i], t);
    }
  }
  return out;
}

}  // namespace vessel
