#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vessel {

// NCHW extent. Every tensor in the network is four-dimensional; vectors
// (biases, batch-norm statistics) are stored as 1×C×1×1.
struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape4 shape, float fill = 0.0f);
  Tensor(Shape4 shape, std::vector<float> values);

  const Shape4& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  float& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  float at(int n, int c, int h, int w) const {
    return data_[offset(n, c, h, w)];
  }

  // View of sample `n` as a contiguous C×H×W block.
  std::span<float> sample(int n);
  std::span<const float> sample(int n) const;

  void fill(float v);
  void reshape(Shape4 shape);

 private:
  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) *
               shape_.w +
           w;
  }

  Shape4 shape_;
  std::vector<float> data_;
};

// Stacks equally-shaped single-sample tensors along N.
Tensor stack(std::span<const Tensor> samples);
// Extracts sample `n` as a 1×C×H×W tensor.
Tensor slice_sample(const Tensor& batch, int n);

// 64-bit FNV-1a over the raw bytes of every element.
std::uint64_t checksum(std::span<const float> values);

}  // namespace vessel
