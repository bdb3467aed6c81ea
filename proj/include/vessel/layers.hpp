#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vessel/autograd.hpp"
#include "vessel/rng.hpp"

namespace vessel::nn {

using ag::Var;

// Owns parameters, buffers and child modules, and exposes them under
// dotted names ("enc1.conv.weight") for optimizers and checkpoints.
// Modules are pinned in memory: children hold pointers into parents.
class Module {
 public:
  struct NamedParameter {
    std::string name;
    Var var;
  };
  struct NamedBuffer {
    std::string name;
    Tensor* tensor;
  };

  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  std::vector<NamedParameter> named_parameters() const;
  std::vector<NamedBuffer> named_buffers() const;
  std::vector<Var> parameters() const;
  std::int64_t parameter_count() const;

  void train(bool on = true);
  bool is_training() const { return training_; }

 protected:
  Var register_parameter(std::string name, Tensor value);
  void register_buffer(std::string name, Tensor& tensor);

  template <class M, class... Args>
  M* add_module(std::string name, Args&&... args) {
    auto owned = std::make_unique<M>(std::forward<Args>(args)...);
    M* raw = owned.get();
    children_.emplace_back(std::move(name), raw);
    owned_.push_back(std::move(owned));
    return raw;
  }

 private:
  void collect_parameters(const std::string& prefix, std::vector<NamedParameter>& out) const;
  void collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out) const;

  bool training_ = true;
  std::vector<std::pair<std::string, Var>> params_;
  std::vector<std::pair<std::string, Tensor*>> buffers_;
  std::vector<std::pair<std::string, Module*>> children_;
  std::vector<std::unique_ptr<Module>> owned_;
};

class Conv2d : public Module {
 public:
  Conv2d(int in, int out, int kernel, int stride, int pad, bool bias, Rng& rng);
  Var forward(const Var& x) const;

  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

 private:
  int in_, out_, stride_, pad_;
  Var weight_;
  Var bias_;
};

class BatchNorm2d : public Module {
 public:
  explicit BatchNorm2d(int channels);
  Var forward(const Var& x);

 private:
  Var gamma_;
  Var beta_;
  ag::BatchNormState state_;
};

// conv → batch norm → ReLU; the convolution carries no bias.
class ConvBnRelu : public Module {
 public:
  ConvBnRelu(int in, int out, int kernel, int stride, int pad, Rng& rng);
  Var forward(const Var& x);
  const Conv2d& conv() const { return *conv_; }

 private:
  Conv2d* conv_;
  BatchNorm2d* bn_;
};

// Transposed 2×2 convolution, stride 2.
class UpConv2x2 : public Module {
 public:
  UpConv2x2(int in, int out, bool bias, Rng& rng);
  Var forward(const Var& x) const;

 private:
  Var weight_;
  Var bias_;
};

// Residual dense block: `layers` 3×3 conv-bn-relu units with dense
// connectivity (unit i sees the block input and every earlier unit's
// `growth` channels), a 1×1 projection back to the input width, and a
// residual add of the block input.
class RdnBlock : public Module {
 public:
  RdnBlock(int channels, int layers, int growth, Rng& rng);
  Var forward(const Var& x);

  std::vector<int> layer_input_widths() const;
  int projection_input_width() const { return projection_->in_channels(); }
  int channels() const { return channels_; }

 private:
  int channels_;
  std::vector<ConvBnRelu*> units_;
  Conv2d* projection_;
};

// Residual squeeze-and-excitation: global average pool → 1×1 bottleneck
// C → C/reduction → C → sigmoid gate; output = x·gate + x.
class RseBlock : public Module {
 public:
  RseBlock(int channels, int reduction, Rng& rng);
  Var forward(const Var& x);

  int hidden_width() const { return hidden_; }
  // Test hook: replaces the computed gate by a constant.
  void force_gate(std::optional<float> value) { forced_gate_ = value; }
  // Test hook: keep the gate of each forward pass (N×C×1×1) for inspection.
  void record_gates(bool on) { record_gates_ = on; }
  const Tensor& last_gate() const { return last_gate_; }

 private:
  int channels_;
  int hidden_;
  Conv2d* squeeze_;
  Conv2d* excite_;
  std::optional<float> forced_gate_;
  bool record_gates_ = false;
  Tensor last_gate_;
};

// Kaiming-normal initialization with fan-in scaling.
Tensor he_normal(Shape4 shape, int fan_in, Rng& rng);

}  // namespace vessel::nn
