// GIF decoding for the ground-truth and FOV masks shipped as .gif. Only the
// first image block is decoded; animation, disposal and transparency are
// irrelevant for single-frame masks.

#include <array>
#include <cstring>
#include <string>

#include "vessel/errors.hpp"
#include "vessel/image.hpp"

namespace vessel {
namespace {

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  int u16() {
    need(2);
    const int v = bytes_[pos_] | (bytes_[pos_ + 1] << 8);
    pos_ += 2;
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  void skip_sub_blocks() {
    for (std::uint8_t n = u8(); n != 0; n = u8()) take(n);
  }
  std::vector<std::uint8_t> read_sub_blocks() {
    std::vector<std::uint8_t> out;
    for (std::uint8_t n = u8(); n != 0; n = u8()) {
      auto s = take(n);
      out.insert(out.end(), s.begin(), s.end());
    }
    return out;
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DecodeError("GIF stream truncated");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

using Palette = std::vector<std::array<std::uint8_t, 3>>;

Palette read_palette(Reader& r, int packed) {
  Palette p(std::size_t{1} << ((packed & 7) + 1));
  for (auto& c : p) {
    auto s = r.take(3);
    c = {s[0], s[1], s[2]};
  }
  return p;
}

// Variable-width LZW as used by GIF: codes are packed LSB first, the width
// grows when the next free slot reaches a power of two and is capped at 12.
std::vector<std::uint8_t> lzw_decode(std::span<const std::uint8_t> data, int min_code_size,
                                     std::size_t expected) {
  if (min_code_size < 2 || min_code_size > 8) throw DecodeError("bad LZW code size");
  const int clear = 1 << min_code_size;
  const int eoi = clear + 1;
  std::array<std::uint16_t, 4096> prefix{};
  std::array<std::uint8_t, 4096> suffix{};
  std::array<std::uint8_t, 4096> first{};
  for (int i = 0; i < clear; ++i) {
    suffix[i] = static_cast<std::uint8_t>(i);
    first[i] = static_cast<std::uint8_t>(i);
  }

  std::vector<std::uint8_t> out;
  out.reserve(expected);
  std::vector<std::uint8_t> stack;
  stack.reserve(4096);

  int code_size = min_code_size + 1;
  int next = eoi + 1;
  int prev = -1;
  std::uint32_t bit_buffer = 0;
  int bits = 0;
  std::size_t pos = 0;

  auto emit = [&](int code) {
    stack.clear();
    while (code > eoi) {
      stack.push_back(suffix[code]);
      code = prefix[code];
    }
    stack.push_back(static_cast<std::uint8_t>(code));
    out.insert(out.end(), stack.rbegin(), stack.rend());
  };

  while (out.size() < expected) {
    while (bits < code_size && pos < data.size()) {
      bit_buffer |= static_cast<std::uint32_t>(data[pos++]) << bits;
      bits += 8;
    }
    if (bits < code_size) break;
    const int code = static_cast<int>(bit_buffer & ((1u << code_size) - 1));
    bit_buffer >>= code_size;
    bits -= code_size;

    if (code == clear) {
      code_size = min_code_size + 1;
      next = eoi + 1;
      prev = -1;
      continue;
    }
    if (code == eoi) break;
    if (prev < 0) {
      if (code >= clear) throw DecodeError("LZW stream starts with an undefined code");
      out.push_back(static_cast<std::uint8_t>(code));
      prev = code;
      continue;
    }
    std::uint8_t k;
    if (code < next) {
      k = first[code];
    } else if (code == next) {
      k = first[prev];
    } else {
      throw DecodeError("LZW code " + std::to_string(code) + " out of sequence");
    }
    if (next < 4096) {
      prefix[next] = static_cast<std::uint16_t>(prev);
      suffix[next] = k;
      first[next] = first[prev];
      ++next;
      if (next == (1 << code_size) && code_size < 12) ++code_size;
    }
    emit(code);
    prev = code;
  }
  if (out.size() < expected) throw DecodeError("GIF image data ended early");
  out.resize(expected);
  return out;
}

}  // namespace

Image8 decode_gif(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(6);
  if (std::memcmp(magic.data(), "GIF87a", 6) != 0 && std::memcmp(magic.data(), "GIF89a", 6) != 0) {
    throw DecodeError("not a GIF stream");
  }
  const int screen_w = r.u16();
  const int screen_h = r.u16();
  const int packed = r.u8();
  const int background = r.u8();
  r.u8();  // aspect ratio
  Palette global;
  if (packed & 0x80) global = read_palette(r, packed);
  if (screen_w <= 0 || screen_h <= 0) throw DecodeError("GIF has an empty logical screen");

  for (;;) {
    const std::uint8_t block = r.u8();
    if (block == 0x21) {
      r.u8();  // label
      r.skip_sub_blocks();
    } else if (block == 0x2C) {
      const int left = r.u16();
      const int top = r.u16();
      const int w = r.u16();
      const int h = r.u16();
      const int flags = r.u8();
      Palette local;
      if (flags & 0x80) local = read_palette(r, flags);
      const Palette& palette = local.empty() ? global : local;
      if (palette.empty()) throw DecodeError("GIF has no colour table");
      const int min_code_size = r.u8();
      const auto data = r.read_sub_blocks();
      const auto indices = lzw_decode(data, min_code_size, static_cast<std::size_t>(w) * h);

      Image8 img(screen_w, screen_h, 3);
      const auto& bg = palette[static_cast<std::size_t>(background) < palette.size() ? background : 0];
      for (std::size_t i = 0; i < img.pixels(); ++i) {
        std::memcpy(&img.data[i * 3], bg.data(), 3);
      }

      std::vector<int> rows;
      rows.reserve(h);
      if (flags & 0x40) {
        constexpr int start[] = {0, 4, 2, 1};
        constexpr int step[] = {8, 8, 4, 2};
        for (int pass = 0; pass < 4; ++pass) {
          for (int y = start[pass]; y < h; y += step[pass]) rows.push_back(y);
        }
      } else {
        for (int y = 0; y < h; ++y) rows.push_back(y);
      }
      for (int i = 0; i < h; ++i) {
        const int y = top + rows[i];
        if (y >= screen_h) continue;
        for (int x = 0; x < w && left + x < screen_w; ++x) {
          const std::uint8_t idx = indices[static_cast<std::size_t>(i) * w + x];
          if (idx >= palette.size()) throw DecodeError("GIF palette index out of range");
          std::memcpy(&img.at(y, left + x), palette[idx].data(), 3);
        }
      }
      return img;
    } else if (block == 0x3B) {
      throw DecodeError("GIF contains no image");
    } else {
      throw DecodeError("unknown GIF block 0x" + std::to_string(block));
    }
  }
}

}  // namespace vessel
