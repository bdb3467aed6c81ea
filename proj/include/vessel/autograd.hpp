#pragma once

// Minimal reverse-mode differentiation over NCHW tensors. A Var is a node
// in a dynamically recorded graph; `backward` walks the graph from a seed
// gradient in reverse topological order.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "vessel/kernels.hpp"
#include "vessel/tensor.hpp"

namespace vessel::ag {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& grad_buffer();
  const Shape4& shape() const { return value.shape(); }
};

Var constant(Tensor value);
Var parameter(Tensor value);

// Graph recording is on by default and switched off per thread.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

void backward(const Var& root, const Tensor& seed);

// --- operations -----------------------------------------------------------

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var up_conv2x2(const Var& x, const Var& weight, const Var& bias);
Var max_pool(const Var& x, int kernel, int stride, int pad);

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  float momentum = 0.1f;
  float eps = 1e-5f;
};
// In training mode normalizes with batch statistics and updates the running
// estimates; otherwise uses the running estimates.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta,
               BatchNormState& state, bool training);

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var add(const Var& a, const Var& b);
Var concat_channels(std::span<const Var> inputs);
Var global_avg_pool(const Var& x);
// x: N×C×H×W, gate: N×C×1×1.
Var scale_channels(const Var& x, const Var& gate);
Var upsample_nearest2x(const Var& x);

}  // namespace vessel::ag
