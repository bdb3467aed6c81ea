#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <unistd.h>

namespace testing {

using vessel::Image8;
using vessel::Rng;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::vector<std::uint8_t> encode_gif(const Image8& plane) {
  if (plane.channels != 1) throw std::invalid_argument("encode_gif wants one channel");
  const bool binary = std::all_of(plane.data.begin(), plane.data.end(), [](std::uint8_t v) { return v <= 1; });
  std::vector<std::uint8_t> out = {'G', 'I', 'F', '8', '7', 'a'};
  auto u16 = [&](int v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  u16(plane.width);
  u16(plane.height);
  out.push_back(0xF7);  // global table of 2^(7+1) entries
  out.push_back(0);
  out.push_back(0);
  for (int i = 0; i < 256; ++i) out.insert(out.end(), 3, static_cast<std::uint8_t>(i));
  out.push_back(0x2C);
  u16(0);
  u16(0);
  u16(plane.width);
  u16(plane.height);
  out.push_back(0);
  out.push_back(8);  // minimum code size

  std::vector<std::uint8_t> packed;
  std::uint32_t acc = 0;
  int bits = 0;
  auto emit = [&](int code) {
    acc |= static_cast<std::uint32_t>(code) << bits;
    bits += 9;
    while (bits >= 8) {
      packed.push_back(static_cast<std::uint8_t>(acc & 0xff));
      acc >>= 8;
      bits -= 8;
    }
  };
  constexpr int kClear = 256, kEnd = 257;
  emit(kClear);
  int run = 0;
  for (std::uint8_t v : plane.data) {
    if (run == 200) {
      emit(kClear);
      run = 0;
    }
    emit(binary ? v * 255 : v);
    ++run;
  }
  emit(kEnd);
  if (bits > 0) packed.push_back(static_cast<std::uint8_t>(acc & 0xff));
  for (std::size_t pos = 0; pos < packed.size(); pos += 255) {
    const std::size_t n = std::min<std::size_t>(255, packed.size() - pos);
    out.push_back(static_cast<std::uint8_t>(n));
    out.insert(out.end(), packed.begin() + static_cast<std::ptrdiff_t>(pos),
               packed.begin() + static_cast<std::ptrdiff_t>(pos + n));
  }
  out.push_back(0);
  out.push_back(0x3B);
  return out;
}

void write_gif(const fs::path& path, const Image8& plane) {
  const auto bytes = encode_gif(plane);
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

SyntheticSample synthetic_fundus(int width, int height, std::uint64_t seed) {
  Rng rng(seed);
  cv::Mat bgr(height, width, CV_8UC3, cv::Scalar(0, 0, 0));
  cv::Mat mask(height, width, CV_8UC1, cv::Scalar(0));
  cv::Mat fov(height, width, CV_8UC1, cv::Scalar(0));
  const cv::Point centre(width / 2, height / 2);
  const int radius = static_cast<int>(0.46 * std::min(width, height));
  cv::circle(fov, centre, radius, cv::Scalar(1), cv::FILLED);

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!fov.at<std::uint8_t>(y, x)) continue;
      const double r = std::hypot(x - centre.x, y - centre.y) / std::max(radius, 1);
      const double shade = 1.0 - 0.35 * r * r;
      auto jitter = [&] { return rng.uniform(-6.0, 6.0); };
      bgr.at<cv::Vec3b>(y, x) = cv::Vec3b(cv::saturate_cast<std::uint8_t>(35 * shade + jitter()),
                                          cv::saturate_cast<std::uint8_t>(120 * shade + jitter()),
                                          cv::saturate_cast<std::uint8_t>(200 * shade + jitter()));
    }
  }

  const int scale = std::max(1, std::min(width, height) / 64);
  const int trees = 6;
  for (int t = 0; t < trees; ++t) {
    double angle = 2.0 * 3.14159265358979 * (t + rng.uniform()) / trees;
    cv::Point2d p(centre.x + rng.uniform(-0.1, 0.1) * radius, centre.y + rng.uniform(-0.1, 0.1) * radius);
    int thickness = scale + 1 + static_cast<int>(rng.below(2));
    const double step = std::max(2.0, radius / 12.0);
    for (int seg = 0; seg < 14; ++seg) {
      angle += rng.uniform(-0.35, 0.35);
      const cv::Point2d q(p.x + step * std::cos(angle), p.y + step * std::sin(angle));
      cv::line(mask, p, q, cv::Scalar(1), thickness, cv::LINE_8);
      p = q;
      if (seg % 5 == 4 && thickness > 1) --thickness;
    }
  }
  mask &= fov;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!mask.at<std::uint8_t>(y, x)) continue;
      cv::Vec3b& px = bgr.at<cv::Vec3b>(y, x);
      px[1] = static_cast<std::uint8_t>(px[1] * 0.45);
      px[2] = static_cast<std::uint8_t>(px[2] * 0.75);
    }
  }

  SyntheticSample s{Image8(width, height, 3), Image8(width, height, 1), Image8(width, height, 1)};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const cv::Vec3b px = bgr.at<cv::Vec3b>(y, x);
      for (int ch = 0; ch < 3; ++ch) s.image.at(y, x, ch) = px[2 - ch];
      s.mask.at(y, x) = mask.at<std::uint8_t>(y, x);
      s.fov.at(y, x) = fov.at<std::uint8_t>(y, x);
    }
  }
  return s;
}

namespace {

void write_raster(const fs::path& path, const Image8& img, bool binary) {
  fs::create_directories(path.parent_path());
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".gif") {
    write_gif(path, img);
    return;
  }
  cv::Mat m;
  if (img.channels == 3) {
    cv::Mat rgb(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.data.data()));
    cv::cvtColor(rgb, m, cv::COLOR_RGB2BGR);
  } else {
    m = cv::Mat(img.height, img.width, CV_8UC1, const_cast<std::uint8_t*>(img.data.data())).clone();
    if (binary) m *= 255;
    if (ext == ".ppm") cv::cvtColor(cv::Mat(m), m, cv::COLOR_GRAY2BGR);
  }
  // The encoder is chosen by extension; route upper-case ones through memory.
  std::vector<std::uint8_t> bytes;
  if (!cv::imencode(ext, m, bytes)) throw std::runtime_error("cannot encode " + path.string());
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

int write_dataset_tree(const fs::path& root, vessel::DatasetId id, int width, int height, std::uint64_t seed) {
  int written = 0;
  for (const vessel::SplitRecord& r : vessel::read_split_file(vessel::default_split_file())) {
    if (r.dataset != id) continue;
    const SyntheticSample s = synthetic_fundus(width, height, vessel::mix_seed(seed, vessel::fnv1a(r.id)));
    write_raster(root / r.image, s.image, false);
    write_raster(root / r.mask, s.mask, true);
    if (r.fov) write_raster(root / *r.fov, s.fov, true);
    ++written;
  }
  return written;
}

void write_all_trees(const fs::path& root, int width, int height) {
  for (vessel::DatasetId id : vessel::kAllDatasets) {
    write_dataset_tree(root / vessel::dataset_token(id), id, width, height);
  }
}

Image8 random_plane(int width, int height, int channels, std::uint64_t seed) {
  Rng rng(seed);
  Image8 img(width, height, channels);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

Image8 random_binary(int width, int height, double p, std::uint64_t seed) {
  Rng rng(seed);
  Image8 img(width, height, 1);
  for (auto& v : img.data) v = rng.bernoulli(p) ? 1 : 0;
  return img;
}

fs::path cli_path() { return fs::path(VESSEL_CLI_PATH); }

}  // namespace testing
