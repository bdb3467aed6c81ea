#include "vessel/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "vessel/errors.hpp"
#include "vessel/kernels.hpp"

namespace vessel {

void validate(const PreprocessConfig& config) {
  if (config.target_size < 16 || config.target_size % 16 != 0) {
    throw ConfigError("preprocess.target_size must be a positive multiple of 16, got " +
                      std::to_string(config.target_size));
  }
  if (!(config.clahe_clip_limit > 0)) throw ConfigError("preprocess.clahe_clip must be positive");
  if (config.clahe_tile_grid < 1) throw ConfigError("preprocess.clahe_tiles must be at least 1");
}

Image8 extract_green_channel(const Image8& rgb) {
  if (rgb.channels != 3) {
    throw ChannelError("green channel needs a 3-channel image, got " + std::to_string(rgb.channels));
  }
  Image8 out(rgb.width, rgb.height, 1);
  for (std::size_t i = 0; i < out.pixels(); ++i) out.data[i] = rgb.data[3 * i + 1];
  return out;
}

namespace {

std::uint8_t saturate(float v) {
  const long r = std::lrint(v);
  return static_cast<std::uint8_t>(std::clamp(r, 0L, 255L));
}

// Reflect-101 index into [0, n).
int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * n - 2 - i;
  return i;
}

}  // namespace

Image8 apply_clahe(const Image8& gray, double clip_limit, int tile_grid) {
  if (gray.channels != 1) {
    throw ChannelError("CLAHE needs a single-channel image, got " + std::to_string(gray.channels));
  }
  if (tile_grid < 1) throw ConfigError("CLAHE tile grid must be at least 1");
  constexpr int kBins = 256;
  const int w = gray.width;
  const int h = gray.height;
  const int tiles = tile_grid;

  // Histograms are taken over a reflect-padded extension when the image
  // does not split evenly. The padding always adds `tiles - rem` rows and
  // columns, even when only the other axis is uneven.
  int ext_w = w, ext_h = h;
  if (w % tiles != 0 || h % tiles != 0) {
    ext_w = w + tiles - w % tiles;
    ext_h = h + tiles - h % tiles;
  }
  const int tile_w = ext_w / tiles;
  const int tile_h = ext_h / tiles;
  const int tile_area = tile_w * tile_h;
  const float lut_scale = static_cast<float>(kBins - 1) / tile_area;

  int clip = 0;
  if (std::isfinite(clip_limit) && clip_limit > 0) {
    clip = std::max(static_cast<int>(clip_limit * tile_area / kBins), 1);
  }

  std::vector<std::uint8_t> lut(static_cast<std::size_t>(tiles) * tiles * kBins);
#pragma omp parallel for schedule(static)
  for (int t = 0; t < tiles * tiles; ++t) {
    const int ty = t / tiles;
    const int tx = t % tiles;
    std::array<int, kBins> hist{};
    for (int y = ty * tile_h; y < (ty + 1) * tile_h; ++y) {
      const int sy = reflect101(y, h);
      for (int x = tx * tile_w; x < (tx + 1) * tile_w; ++x) {
        ++hist[gray.data[static_cast<std::size_t>(sy) * w + reflect101(x, w)]];
      }
    }
    if (clip > 0) {
      int clipped = 0;
      for (int& v : hist) {
        if (v > clip) {
          clipped += v - clip;
          v = clip;
        }
      }
      const int batch = clipped / kBins;
      int residual = clipped - batch * kBins;
      for (int& v : hist) v += batch;
      if (residual != 0) {
        const int step = std::max(kBins / residual, 1);
        for (int i = 0; i < kBins && residual > 0; i += step, --residual) ++hist[i];
      }
    }
    int sum = 0;
    std::uint8_t* row = &lut[static_cast<std::size_t>(t) * kBins];
    for (int i = 0; i < kBins; ++i) {
      sum += hist[i];
      row[i] = saturate(sum * lut_scale);
    }
  }

  // Each output pixel blends the four nearest tile mappings.
  std::vector<int> xi1(w), xi2(w);
  std::vector<float> xa(w);
  const float inv_tw = 1.0f / tile_w;
  for (int x = 0; x < w; ++x) {
    const float txf = x * inv_tw - 0.5f;
    int tx1 = static_cast<int>(std::floor(txf));
    const int tx2 = std::min(tx1 + 1, tiles - 1);
    xa[x] = txf - tx1;
    tx1 = std::max(tx1, 0);
    xi1[x] = tx1 * kBins;
    xi2[x] = tx2 * kBins;
  }
  Image8 out(w, h, 1);
  const float inv_th = 1.0f / tile_h;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    const float tyf = y * inv_th - 0.5f;
    int ty1 = static_cast<int>(std::floor(tyf));
    const int ty2 = std::min(ty1 + 1, tiles - 1);
    const float ya = tyf - ty1;
    const float ya1 = 1.0f - ya;
    ty1 = std::max(ty1, 0);
    const std::uint8_t* plane1 = &lut[static_cast<std::size_t>(ty1) * tiles * kBins];
    const std::uint8_t* plane2 = &lut[static_cast<std::size_t>(ty2) * tiles * kBins];
    for (int x = 0; x < w; ++x) {
      const int v = gray.data[static_cast<std::size_t>(y) * w + x];
      const float xa0 = xa[x];
      const float xa1 = 1.0f - xa0;
      const float res = (plane1[xi1[x] + v] * xa1 + plane1[xi2[x] + v] * xa0) * ya1 +
                        (plane2[xi1[x] + v] * xa1 + plane2[xi2[x] + v] * xa0) * ya;
      out.data[static_cast<std::size_t>(y) * w + x] = saturate(res);
    }
  }
  return out;
}

namespace {

Image8 resize_mask(const Image8& mask, int size) {
  Image8 out(size, size, 1);
  kernels::resize_nearest(mask.data, mask.height, mask.width, out.data, size, size);
  return binarize(out);
}

}  // namespace

NetworkInput standardize(const Sample& sample, const PreprocessConfig& config) {
  validate(config);
  check_sample(sample);
  const int s = config.target_size;
  const Image8 enhanced = apply_clahe(extract_green_channel(sample.image), config);

  std::vector<float> plane(enhanced.data.size());
  for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = enhanced.data[i] / 255.0f;

  NetworkInput out;
  out.pixels = Tensor(Shape4{1, 1, s, s});
  kernels::resize_bilinear(plane, enhanced.height, enhanced.width, out.pixels.values(), s, s);
  for (float& v : out.pixels.values()) v = std::clamp(v, 0.0f, 1.0f);
  out.mask = resize_mask(sample.vessel_mask, s);
  if (sample.fov_mask) out.fov = resize_mask(*sample.fov_mask, s);
  out.provenance = {sample.sample_id, sample.image.width, sample.image.height};
  return out;
}

Tensor to_model_input(const NetworkInput& input, int channels) {
  const NetworkInput* one = &input;
  return to_model_batch(std::span<const NetworkInput>(one, 1), channels);
}

Tensor to_model_batch(std::span<const NetworkInput> inputs, int channels) {
  if (inputs.empty()) throw ShapeError("empty batch");
  if (channels != 1 && channels != 3) throw ShapeError("model input needs 1 or 3 channels");
  const int s = inputs.front().size();
  Tensor out(Shape4{static_cast<int>(inputs.size()), channels, s, s});
  const std::size_t plane = static_cast<std::size_t>(s) * s;
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    if (inputs[n].size() != s) throw ShapeError("batch mixes input sizes");
    const float* src = inputs[n].pixels.data();
    for (int c = 0; c < channels; ++c) {
      std::copy(src, src + plane, out.data() + (n * channels + c) * plane);
    }
  }
  return out;
}

Tensor mask_batch(std::span<const NetworkInput> inputs) {
  if (inputs.empty()) throw ShapeError("empty batch");
  const int s = inputs.front().size();
  Tensor out(Shape4{static_cast<int>(inputs.size()), 1, s, s});
  const std::size_t plane = static_cast<std::size_t>(s) * s;
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    if (inputs[n].mask.pixels() != plane) throw ShapeError("batch mixes mask sizes");
    std::transform(inputs[n].mask.data.begin(), inputs[n].mask.data.end(), out.data() + n * plane,
                   [](std::uint8_t v) { return static_cast<float>(v); });
  }
  return out;
}

std::vector<float> resize_to_original(const Tensor& probability, int width, int height) {
  const Shape4& sh = probability.shape();
  if (sh.n != 1 || sh.c != 1) throw ShapeError("expected a 1×1×H×W map, got " + sh.str());
  std::vector<float> out(static_cast<std::size_t>(width) * height);
  kernels::resize_bilinear(probability.values(), sh.h, sh.w, out, height, width);
  return out;
}

Image8 threshold_map(std::span<const float> probability, int width, int height, double threshold) {
  if (probability.size() != static_cast<std::size_t>(width) * height) throw ShapeError("threshold_map size");
  Image8 out(width, height, 1);
  for (std::size_t i = 0; i < probability.size(); ++i) out.data[i] = probability[i] >= threshold ? 1 : 0;
  return out;
}

}  // namespace vessel
