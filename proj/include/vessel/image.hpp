#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace vessel {

// Interleaved 8-bit raster; channels is 1 (grey / binary) or 3 (RGB).
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;

  Image8() = default;
  Image8(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
  std::uint8_t& at(int y, int x, int ch = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + ch];
  }
  std::uint8_t at(int y, int x, int ch = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + ch];
  }
  bool operator==(const Image8&) const = default;
};

// First frame of a GIF87a/GIF89a stream, expanded through its palette to
// RGB. Throws DecodeError.
Image8 decode_gif(std::span<const std::uint8_t> bytes);

// Decodes any supported raster (TIFF, JPEG, PNG, PPM, GIF) to 8-bit RGB.
// Throws DecodeError.
Image8 read_rgb(const std::filesystem::path& path);

// Decodes a mask file and binarizes it: a pixel is 1 when any channel
// exceeds 127. Throws DecodeError.
Image8 read_binary_mask(const std::filesystem::path& path);

// Single-channel plane to {0, 1}: values > 127 → 1, else 0. A plane whose
// values already lie in {0, 1} is returned unchanged, which makes the
// operation idempotent.
Image8 binarize(const Image8& gray);
bool is_binary(const Image8& plane);

// PNG output for 1- or 3-channel images. Throws IOError.
void write_png(const std::filesystem::path& path, const Image8& image);

}  // namespace vessel
