#include "vessel/layers.hpp"

#include <cmath>

namespace vessel::nn {

std::vector<Module::NamedParameter> Module::named_parameters() const {
  std::vector<NamedParameter> out;
  collect_parameters("", out);
  return out;
}

std::vector<Module::NamedBuffer> Module::named_buffers() const {
  std::vector<NamedBuffer> out;
  collect_buffers("", out);
  return out;
}

std::vector<Var> Module::parameters() const {
  std::vector<Var> out;
  for (auto& p : named_parameters()) out.push_back(p.var);
  return out;
}

std::int64_t Module::parameter_count() const {
  std::int64_t total = 0;
  for (auto& p : named_parameters()) total += static_cast<std::int64_t>(p.var->value.numel());
  return total;
}

void Module::train(bool on) {
  training_ = on;
  for (auto& [name, child] : children_) child->train(on);
}

Var Module::register_parameter(std::string name, Tensor value) {
  Var v = ag::parameter(std::move(value));
  params_.emplace_back(std::move(name), v);
  return v;
}

void Module::register_buffer(std::string name, Tensor& tensor) {
  buffers_.emplace_back(std::move(name), &tensor);
}

void Module::collect_parameters(const std::string& prefix,
                                std::vector<NamedParameter>& out) const {
  for (auto& [name, v] : params_) out.push_back({prefix + name, v});
  for (auto& [name, child] : children_) child->collect_parameters(prefix + name + ".", out);
}

void Module::collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out) const {
  for (auto& [name, t] : buffers_) out.push_back({prefix + name, t});
  for (auto& [name, child] : children_) child->collect_buffers(prefix + name + ".", out);
}

Tensor he_normal(Shape4 shape, int fan_in, Rng& rng) {
  Tensor t(shape);
  const double stddev = std::sqrt(2.0 / fan_in);
  for (float& v : t.values()) v = static_cast<float>(rng.normal() * stddev);
  return t;
}

Conv2d::Conv2d(int in, int out, int kernel, int stride, int pad, bool bias, Rng& rng)
    : in_(in), out_(out), stride_(stride), pad_(pad) {
  weight_ = register_parameter("weight", he_normal({out, in, kernel, kernel}, in * kernel * kernel, rng));
  if (bias) bias_ = register_parameter("bias", Tensor({1, out, 1, 1}));
}

Var Conv2d::forward(const Var& x) const { return ag::conv2d(x, weight_, bias_, stride_, pad_); }

BatchNorm2d::BatchNorm2d(int channels) {
  gamma_ = register_parameter("weight", Tensor({1, channels, 1, 1}, 1.0f));
  beta_ = register_parameter("bias", Tensor({1, channels, 1, 1}, 0.0f));
  state_.running_mean = Tensor({1, channels, 1, 1}, 0.0f);
  state_.running_var = Tensor({1, channels, 1, 1}, 1.0f);
  register_buffer("running_mean", state_.running_mean);
  register_buffer("running_var", state_.running_var);
}

// Batch statistics only while training with graph recording on; inference
// under NoGradGuard never touches the running estimates.
Var BatchNorm2d::forward(const Var& x) {
  return ag::batch_norm(x, gamma_, beta_, state_, is_training() && ag::grad_enabled());
}

ConvBnRelu::ConvBnRelu(int in, int out, int kernel, int stride, int pad, Rng& rng) {
  conv_ = add_module<Conv2d>("conv", in, out, kernel, stride, pad, false, rng);
  bn_ = add_module<BatchNorm2d>("bn", out);
}

Var ConvBnRelu::forward(const Var& x) { return ag::relu(bn_->forward(conv_->forward(x))); }

UpConv2x2::UpConv2x2(int in, int out, bool bias, Rng& rng) {
  weight_ = register_parameter("weight", he_normal({in, out, 2, 2}, in, rng));
  if (bias) bias_ = register_parameter("bias", Tensor({1, out, 1, 1}));
}

Var UpConv2x2::forward(const Var& x) const { return ag::up_conv2x2(x, weight_, bias_); }

RdnBlock::RdnBlock(int channels, int layers, int growth, Rng& rng) : channels_(channels) {
  for (int i = 0; i < layers; ++i) {
    units_.push_back(add_module<ConvBnRelu>("dense" + std::to_string(i),
                                            channels + i * growth, growth, 3, 1, 1, rng));
  }
  projection_ = add_module<Conv2d>("project", channels + layers * growth, channels, 1, 1, 0, true, rng);
}

std::vector<int> RdnBlock::layer_input_widths() const {
  std::vector<int> widths;
  for (const ConvBnRelu* u : units_) widths.push_back(u->conv().in_channels());
  return widths;
}

Var RdnBlock::forward(const Var& x) {
  std::vector<Var> features{x};
  for (ConvBnRelu* unit : units_) {
    Var joined = features.size() == 1 ? x : ag::concat_channels(features);
    features.push_back(unit->forward(joined));
  }
  return ag::add(projection_->forward(ag::concat_channels(features)), x);
}

RseBlock::RseBlock(int channels, int reduction, Rng& rng) : channels_(channels) {
  hidden_ = std::max(1, channels / std::max(1, reduction));
  squeeze_ = add_module<Conv2d>("squeeze", channels, hidden_, 1, 1, 0, true, rng);
  excite_ = add_module<Conv2d>("excite", hidden_, channels, 1, 1, 0, true, rng);
}

Var RseBlock::forward(const Var& x) {
  Var gate;
  if (forced_gate_) {
    const Shape4 s = x->shape();
    gate = ag::constant(Tensor({s.n, s.c, 1, 1}, *forced_gate_));
  } else {
    Var pooled = ag::global_avg_pool(x);
    gate = ag::sigmoid(excite_->forward(ag::relu(squeeze_->forward(pooled))));
  }
  if (record_gates_) last_gate_ = gate->value;
  return ag::add(ag::scale_channels(x, gate), x);
}

}  // namespace vessel::nn
