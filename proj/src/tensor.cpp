#include "vessel/tensor.hpp"

#include <algorithm>
#include <cstring>

#include "vessel/errors.hpp"
#include "vessel/rng.hpp"

namespace vessel {

std::string Shape4::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " +
         std::to_string(h) + ", " + std::to_string(w) + ")";
}

Tensor::Tensor(Shape4 shape, float fill)
    : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape4 shape, std::vector<float> values)
    : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("tensor of shape " + shape_.str() + " given " +
                     std::to_string(data_.size()) + " values");
  }
}

std::span<float> Tensor::sample(int n) {
  const std::size_t stride = static_cast<std::size_t>(shape_.c) * shape_.plane();
  return std::span<float>(data_).subspan(n * stride, stride);
}

std::span<const float> Tensor::sample(int n) const {
  const std::size_t stride = static_cast<std::size_t>(shape_.c) * shape_.plane();
  return std::span<const float>(data_).subspan(n * stride, stride);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::reshape(Shape4 shape) {
  if (shape.numel() != data_.size()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  shape_ = shape;
}

Tensor stack(std::span<const Tensor> samples) {
  if (samples.empty()) throw ShapeError("cannot stack an empty list");
  Shape4 s = samples.front().shape();
  if (s.n != 1) throw ShapeError("stack expects 1×C×H×W inputs");
  Tensor out({static_cast<int>(samples.size()), s.c, s.h, s.w});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!(samples[i].shape() == s)) {
      throw ShapeError("stack: shape " + samples[i].shape().str() +
                       " differs from " + s.str());
    }
    std::copy(samples[i].values().begin(), samples[i].values().end(),
              out.sample(static_cast<int>(i)).begin());
  }
  return out;
}

Tensor slice_sample(const Tensor& batch, int n) {
  const Shape4& s = batch.shape();
  auto src = batch.sample(n);
  return Tensor({1, s.c, s.h, s.w}, std::vector<float>(src.begin(), src.end()));
}

std::uint64_t checksum(std::span<const float> values) {
  std::uint64_t h = kFnvOffset;
  for (float v : values) {
    unsigned char bytes[sizeof(float)];
    std::memcpy(bytes, &v, sizeof(float));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace vessel
