#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "vessel/errors.hpp"
#include "vessel/image.hpp"

namespace vessel {
namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Image8 read_rgb(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() >= 6 && std::memcmp(bytes.data(), "GIF8", 4) == 0) {
    try {
      return decode_gif(bytes);
    } catch (const DecodeError& e) {
      throw DecodeError(path.string() + ": " + e.what());
    }
  }
  // IMREAD_COLOR also folds 16-bit and greyscale sources down to 8-bit BGR.
  cv::Mat bgr;
  try {
    bgr = cv::imdecode(bytes, cv::IMREAD_COLOR);
  } catch (const cv::Exception&) {
    bgr.release();
  }
  if (bgr.empty()) throw DecodeError("cannot decode " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image8 out(rgb.cols, rgb.rows, 3);
  for (int y = 0; y < rgb.rows; ++y) {
    std::memcpy(&out.at(y, 0), rgb.ptr<std::uint8_t>(y), static_cast<std::size_t>(rgb.cols) * 3);
  }
  return out;
}

bool is_binary(const Image8& plane) {
  return std::all_of(plane.data.begin(), plane.data.end(), [](std::uint8_t v) { return v <= 1; });
}

Image8 binarize(const Image8& gray) {
  if (gray.channels != 1) throw ChannelError("binarize expects one channel, got " + std::to_string(gray.channels));
  if (is_binary(gray)) return gray;
  Image8 out(gray.width, gray.height, 1);
  std::transform(gray.data.begin(), gray.data.end(), out.data.begin(),
                 [](std::uint8_t v) -> std::uint8_t { return v > 127 ? 1 : 0; });
  return out;
}

Image8 read_binary_mask(const std::filesystem::path& path) {
  const Image8 rgb = read_rgb(path);
  Image8 peak(rgb.width, rgb.height, 1);
  for (std::size_t i = 0; i < peak.pixels(); ++i) {
    peak.data[i] = std::max({rgb.data[3 * i], rgb.data[3 * i + 1], rgb.data[3 * i + 2]});
  }
  return binarize(peak);
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) throw ChannelError("PNG output needs 1 or 3 channels");
  cv::Mat mat(image.height, image.width, image.channels == 1 ? CV_8UC1 : CV_8UC3,
              const_cast<std::uint8_t*>(image.data.data()));
  cv::Mat out;
  if (image.channels == 3) {
    cv::cvtColor(mat, out, cv::COLOR_RGB2BGR);
  } else {
    out = mat;
  }
  bool ok = false;
  try {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    ok = cv::imwrite(path.string(), out);
  } catch (const std::filesystem::filesystem_error& e) {
    throw IOError(path.string() + ": " + e.what());
  } catch (const cv::Exception& e) {
    throw IOError(path.string() + ": " + e.what());
  }
  if (!ok) throw IOError("cannot write " + path.string());
}

}  // namespace vessel
