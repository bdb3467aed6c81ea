#include "vessel/model_zoo.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "vessel/checkpoint.hpp"
#include "vessel/errors.hpp"

namespace vessel {

using ag::Var;
using nn::BatchNorm2d;
using nn::Conv2d;
using nn::ConvBnRelu;

std::string arch_token(Architecture arch) {
  switch (arch) {
    case Architecture::Unet: return "unet";
    case Architecture::DrvNet: return "drvnet";
    case Architecture::UnetResnet34: return "unet-resnet34";
    case Architecture::UnetVgg19: return "unet-vgg19";
  }
  return "?";
}

std::string arch_display_name(Architecture arch) {
  switch (arch) {
    case Architecture::Unet: return "UNet";
    case Architecture::DrvNet: return "DR-VNet";
    case Architecture::UnetResnet34: return "UNet-ResNet34";
    case Architecture::UnetVgg19: return "UNet-VGG19";
  }
  return "?";
}

Architecture parse_architecture(const std::string& text) {
  std::string lower;
  for (char ch : text) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  for (Architecture a : kAllArchitectures) {
    std::string display = arch_display_name(a);
    std::transform(display.begin(), display.end(), display.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (lower == arch_token(a) || lower == display) return a;
  }
  throw ConfigError("unknown architecture '" + text +
                    "'; valid: unet, drvnet, unet-resnet34, unet-vgg19");
}

ModelSpec default_spec(Architecture arch) {
  ModelSpec spec;
  spec.architecture = arch;
  spec.in_channels = (arch == Architecture::UnetResnet34 || arch == Architecture::UnetVgg19) ? 3 : 1;
  return spec;
}

void validate(const ModelSpec& spec) {
  if (spec.base_width < 1) throw SpecError("base_width must be >= 1");
  if (spec.rdn_layers < 1) throw SpecError("rdn_layers must be >= 1");
  if (spec.rdn_growth < 1) throw SpecError("rdn_growth must be >= 1");
  if (spec.rse_reduction < 1) throw SpecError("rse_reduction must be >= 1");
  if (spec.in_channels < 1) throw SpecError("in_channels must be >= 1");
  const bool backbone = spec.architecture == Architecture::UnetResnet34 ||
                        spec.architecture == Architecture::UnetVgg19;
  if (backbone && spec.in_channels != 3) {
    throw SpecError(arch_token(spec.architecture) + " requires in_channels = 3");
  }
}

// --- UNet -------------------------------------------------------------------

UNet::UNet(int in_channels, int base_width, Rng& rng) {
  int width = base_width;
  int prev = in_channels;
  for (int level = 0; level < 4; ++level) {
    const std::string name = "down" + std::to_string(level);
    down_.push_back({add_module<ConvBnRelu>(name + ".0", prev, width, 3, 1, 1, rng),
                     add_module<ConvBnRelu>(name + ".1", width, width, 3, 1, 1, rng)});
    prev = width;
    width *= 2;
  }
  bottleneck_ = {add_module<ConvBnRelu>("bottleneck.0", prev, width, 3, 1, 1, rng),
                 add_module<ConvBnRelu>("bottleneck.1", width, width, 3, 1, 1, rng)};
  for (int level = 3; level >= 0; --level) {
    const int out = base_width << level;
    const std::string name = "up" + std::to_string(level);
    up_.push_back(add_module<nn::UpConv2x2>(name + ".upconv", out * 2, out, false, rng));
    decode_.push_back({add_module<ConvBnRelu>(name + ".0", out * 2, out, 3, 1, 1, rng),
                       add_module<ConvBnRelu>(name + ".1", out, out, 3, 1, 1, rng)});
  }
  head_ = add_module<Conv2d>("head", base_width, 1, 1, 1, 0, true, rng);
}

std::vector<int> UNet::encoder_widths() const {
  std::vector<int> widths;
  for (const Level& l : down_) widths.push_back(l.second->conv().out_channels());
  widths.push_back(bottleneck_.second->conv().out_channels());
  return widths;
}

Var UNet::forward(const Var& x) {
  std::vector<Var> skips;
  Var h = x;
  for (Level& l : down_) {
    h = l.second->forward(l.first->forward(h));
    skips.push_back(h);
    h = ag::max_pool(h, 2, 2, 0);
  }
  h = bottleneck_.second->forward(bottleneck_.first->forward(h));
  for (std::size_t i = 0; i < up_.size(); ++i) {
    Var up = up_[i]->forward(h);
    const Var joined[] = {skips[skips.size() - 1 - i], up};
    h = ag::concat_channels(joined);
    h = decode_[i].second->forward(decode_[i].first->forward(h));
  }
  return ag::sigmoid(head_->forward(h));
}

// --- DR-VNet ----------------------------------------------------------------

DrvNet::DrvNet(const ModelSpec& spec, Rng& rng) {
  auto make_unit = [&](const std::string& name, int in, int width) {
    Unit u;
    u.entry = add_module<ConvBnRelu>(name + ".entry", in, width, 3, 1, 1, rng);
    u.rdn = add_module<nn::RdnBlock>(name + ".rdn", width, spec.rdn_layers, spec.rdn_growth, rng);
    u.rse = add_module<nn::RseBlock>(name + ".rse", width, spec.rse_reduction, rng);
    return u;
  };
  const int base = spec.base_width;
  int prev = spec.in_channels;
  for (int level = 0; level <= 4; ++level) {
    const int width = base << level;
    down_.push_back(make_unit("down" + std::to_string(level), prev, width));
    prev = width;
  }
  for (int level = 3; level >= 0; --level) {
    const int width = base << level;
    const std::string name = "up" + std::to_string(level);
    up_.push_back(add_module<nn::UpConv2x2>(name + ".upconv", width * 2, width, false, rng));
    decode_.push_back(make_unit(name, width * 2, width));
  }
  backbone_head_ = add_module<Conv2d>("backbone_head", base, 1, 1, 1, 0, true, rng);
  // Fine-tune tail: one unit over [input, initial estimate], then a
  // two-unit block, then the final 1×1 head.
  tail_.push_back(make_unit("tail0", spec.in_channels + 1, base));
  tail_.push_back(make_unit("tail1", base, base));
  tail_.push_back(make_unit("tail2", base, base));
  tail_head_ = add_module<Conv2d>("tail_head", base, 1, 1, 1, 0, true, rng);
}

Var DrvNet::run(Unit& unit, const Var& x) {
  Var h = unit.entry ? unit.entry->forward(x) : x;
  return unit.rse->forward(unit.rdn->forward(h));
}

DrvNet::Outputs DrvNet::forward_stages(const Var& x) {
  std::vector<Var> skips;
  Var h = x;
  for (std::size_t level = 0; level < down_.size(); ++level) {
    h = run(down_[level], h);
    if (level + 1 < down_.size()) {
      skips.push_back(h);
      h = ag::max_pool(h, 2, 2, 0);
    }
  }
  for (std::size_t i = 0; i < up_.size(); ++i) {
    Var up = up_[i]->forward(h);
    const Var joined[] = {skips[skips.size() - 1 - i], up};
    h = run(decode_[i], ag::concat_channels(joined));
  }
  Outputs out;
  out.initial = ag::sigmoid(backbone_head_->forward(h));
  const Var tail_in[] = {x, out.initial};
  Var t = ag::concat_channels(tail_in);
  for (Unit& u : tail_) t = run(u, t);
  out.final = ag::sigmoid(tail_head_->forward(t));
  return out;
}

Var DrvNet::forward(const Var& x) { return forward_stages(x).final; }

std::vector<nn::RdnBlock*> DrvNet::rdn_blocks() const {
  std::vector<nn::RdnBlock*> out;
  for (const auto* group : {&down_, &decode_, &tail_})
    for (const Unit& u : *group) out.push_back(u.rdn);
  return out;
}

std::vector<nn::RseBlock*> DrvNet::rse_blocks() const {
  std::vector<nn::RseBlock*> out;
  for (const auto* group : {&down_, &decode_, &tail_})
    for (const Unit& u : *group) out.push_back(u.rse);
  return out;
}

// --- Backbone encoders --------------------------------------------------------

class BackboneUNet::Encoder : public nn::Module {
 public:
  // Feature maps at strides 1, 2, 4, 8, 16 (null where the trunk has no tap)
  // followed by the stride-32 bottleneck.
  virtual std::vector<Var> features(const Var& x) = 0;
  // Channel widths matching features(); 0 marks an absent tap.
  virtual std::array<int, 6> widths() const = 0;
};

namespace {

class BasicBlock : public nn::Module {
 public:
  BasicBlock(int in, int out, int stride, Rng& rng) {
    conv1_ = add_module<Conv2d>("conv1", in, out, 3, stride, 1, false, rng);
    bn1_ = add_module<BatchNorm2d>("bn1", out);
    conv2_ = add_module<Conv2d>("conv2", out, out, 3, 1, 1, false, rng);
    bn2_ = add_module<BatchNorm2d>("bn2", out);
    if (stride != 1 || in != out) {
      down_ = add_module<Downsample>("downsample", in, out, stride, rng);
    }
  }

  Var forward(const Var& x) {
    Var h = ag::relu(bn1_->forward(conv1_->forward(x)));
    h = bn2_->forward(conv2_->forward(h));
    Var identity = down_ ? down_->forward(x) : x;
    return ag::relu(ag::add(h, identity));
  }

 private:
  // Named children "0" (1×1 conv) and "1" (batch norm), as in torchvision.
  class Downsample : public nn::Module {
   public:
    Downsample(int in, int out, int stride, Rng& rng) {
      conv_ = add_module<Conv2d>("0", in, out, 1, stride, 0, false, rng);
      bn_ = add_module<BatchNorm2d>("1", out);
    }
    Var forward(const Var& x) { return bn_->forward(conv_->forward(x)); }

   private:
    Conv2d* conv_;
    BatchNorm2d* bn_;
  };

  Conv2d* conv1_;
  BatchNorm2d* bn1_;
  Conv2d* conv2_;
  BatchNorm2d* bn2_;
  Downsample* down_ = nullptr;
};

class ResNetStage : public nn::Module {
 public:
  ResNetStage(int in, int out, int blocks, int stride, Rng& rng) {
    for (int i = 0; i < blocks; ++i) {
      blocks_.push_back(add_module<BasicBlock>(std::to_string(i), i == 0 ? in : out, out,
                                               i == 0 ? stride : 1, rng));
    }
  }
  Var forward(const Var& x) {
    Var h = x;
    for (BasicBlock* b : blocks_) h = b->forward(h);
    return h;
  }

 private:
  std::vector<BasicBlock*> blocks_;
};

class ResNet34Encoder : public BackboneUNet::Encoder {
 public:
  ResNet34Encoder(int in_channels, Rng& rng) {
    conv1_ = add_module<Conv2d>("conv1", in_channels, 64, 7, 2, 3, false, rng);
    bn1_ = add_module<BatchNorm2d>("bn1", 64);
    constexpr std::array<int, 4> blocks{3, 4, 6, 3};
    constexpr std::array<int, 4> widths{64, 128, 256, 512};
    int prev = 64;
    for (int s = 0; s < 4; ++s) {
      stages_.push_back(add_module<ResNetStage>("layer" + std::to_string(s + 1), prev, widths[s],
                                                blocks[s], s == 0 ? 1 : 2, rng));
      prev = widths[s];
    }
  }

  std::vector<Var> features(const Var& x) override {
    Var stem = ag::relu(bn1_->forward(conv1_->forward(x)));
    Var h = ag::max_pool(stem, 3, 2, 1);
    Var l1 = stages_[0]->forward(h);
    Var l2 = stages_[1]->forward(l1);
    Var l3 = stages_[2]->forward(l2);
    Var l4 = stages_[3]->forward(l3);
    return {nullptr, stem, l1, l2, l3, l4};
  }

  std::array<int, 6> widths() const override { return {0, 64, 64, 128, 256, 512}; }

 private:
  Conv2d* conv1_;
  BatchNorm2d* bn1_;
  std::vector<ResNetStage*> stages_;
};

// VGG19 with batch norm. Children are named by their index in the
// torchvision `features` sequence (conv, bn, relu per layer; pool).
class Vgg19Encoder : public BackboneUNet::Encoder {
 public:
  Vgg19Encoder(int in_channels, Rng& rng) {
    constexpr std::array<int, 5> widths{64, 128, 256, 512, 512};
    constexpr std::array<int, 5> convs{2, 2, 4, 4, 4};
    nn::Module* features = add_module<Features>("features");
    auto* seq = static_cast<Features*>(features);
    int index = 0;
    int prev = in_channels;
    for (int stage = 0; stage < 5; ++stage) {
      std::vector<Layer> layers;
      for (int i = 0; i < convs[stage]; ++i) {
        Layer l;
        l.conv = seq->add<Conv2d>(std::to_string(index), prev, widths[stage], 3, 1, 1, true, rng);
        l.bn = seq->add<BatchNorm2d>(std::to_string(index + 1), widths[stage]);
        layers.push_back(l);
        index += 3;
        prev = widths[stage];
      }
      ++index;  // pooling layer
      stages_.push_back(std::move(layers));
    }
  }

  std::vector<Var> features(const Var& x) override {
    std::vector<Var> taps;
    Var h = x;
    for (auto& stage : stages_) {
      for (Layer& l : stage) h = ag::relu(l.bn->forward(l.conv->forward(h)));
      taps.push_back(h);
      h = ag::max_pool(h, 2, 2, 0);
    }
    taps.push_back(h);
    return taps;
  }

  std::array<int, 6> widths() const override { return {64, 128, 256, 512, 512, 512}; }

 private:
  class Features : public nn::Module {
   public:
    template <class M, class... Args>
    M* add(std::string name, Args&&... args) {
      return add_module<M>(std::move(name), std::forward<Args>(args)...);
    }
  };
  struct Layer {
    Conv2d* conv;
    BatchNorm2d* bn;
  };
  std::vector<std::vector<Layer>> stages_;
};

}  // namespace

BackboneUNet::BackboneUNet(Architecture arch, int in_channels, Rng& rng) {
  if (arch == Architecture::UnetResnet34) {
    encoder_ = add_module<ResNet34Encoder>("encoder", in_channels, rng);
  } else {
    encoder_ = add_module<Vgg19Encoder>("encoder", in_channels, rng);
  }
  // Same per-resolution widths as UNet's decoder (64 at full resolution,
  // doubling per level), capped at 512 for the extra 1/16 level.
  const auto w = encoder_->widths();
  int prev = w[5];
  for (int i = 0; i < 5; ++i) {
    const int width = std::min(64 << (4 - i), 512);
    const int skip = w[4 - i];
    const std::string name = "decoder" + std::to_string(i);
    DecoderBlock block;
    block.up = add_module<nn::UpConv2x2>(name + ".upconv", prev, width, false, rng);
    block.first = add_module<ConvBnRelu>(name + ".0", width + skip, width, 3, 1, 1, rng);
    block.second = add_module<ConvBnRelu>(name + ".1", width, width, 3, 1, 1, rng);
    decoder_.push_back(block);
    prev = width;
  }
  head_ = add_module<Conv2d>("head", prev, 1, 1, 1, 0, true, rng);
}

Var BackboneUNet::forward(const Var& x) {
  std::vector<Var> f = encoder_->features(x);
  Var h = f[5];
  for (int i = 0; i < 5; ++i) {
    h = decoder_[i].up->forward(h);
    const Var& skip = f[4 - i];
    if (skip) {
      const Var joined[] = {h, skip};
      h = ag::concat_channels(joined);
    }
    h = decoder_[i].second->forward(decoder_[i].first->forward(h));
  }
  return ag::sigmoid(head_->forward(h));
}

std::vector<int> BackboneUNet::decoder_widths() const {
  std::vector<int> out;
  for (const DecoderBlock& b : decoder_) out.push_back(b.second->conv().out_channels());
  return out;
}

std::int64_t BackboneUNet::encoder_parameter_count() const { return encoder_->parameter_count(); }
nn::Module& BackboneUNet::encoder() { return *encoder_; }

// --- Handles and builders ---------------------------------------------------------

ModelHandle::ModelHandle(ModelSpec spec, std::unique_ptr<SegmentationNet> net)
    : spec_(std::move(spec)), net_(std::move(net)) {}

std::uint64_t ModelHandle::parameter_checksum() const {
  std::uint64_t h = 0;
  for (const auto& p : net_->named_parameters()) h = mix_seed(h, checksum(p.var->value.values()));
  for (const auto& b : net_->named_buffers()) h = mix_seed(h, checksum(b.tensor->values()));
  return h;
}

namespace {

void require_arch(const ModelSpec& spec, std::initializer_list<Architecture> allowed, const char* who) {
  validate(spec);
  if (std::find(allowed.begin(), allowed.end(), spec.architecture) == allowed.end()) {
    throw SpecError(std::string(who) + " cannot build " + arch_token(spec.architecture));
  }
}

void load_pretrained_encoder(BackboneUNet& net, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw WeightsFileError("missing weights file " + path.string());
  std::map<std::string, Tensor> archive;
  try {
    archive = read_tensor_archive(path);
  } catch (const IOError& e) {
    throw WeightsFileError(e.what());
  }
  auto lookup = [&](const std::string& name) -> const Tensor& {
    // Accept both bare torchvision names and names prefixed by "encoder.".
    for (const std::string& key : {name, "encoder." + name}) {
      auto it = archive.find(key);
      if (it != archive.end()) return it->second;
    }
    throw WeightsFileError(path.string() + " lacks encoder tensor " + name);
  };
  auto check = [&](const std::string& name, Tensor& dst) {
    const Tensor& src = lookup(name);
    if (!(src.shape() == dst.shape())) {
      throw WeightsFileError("encoder tensor " + name + " has shape " + src.shape().str() +
                             ", expected " + dst.shape().str());
    }
    dst = src;
  };
  for (const auto& p : net.encoder().named_parameters()) check(p.name, p.var->value);
  for (const auto& b : net.encoder().named_buffers()) check(b.name, *b.tensor);
}

}  // namespace

ModelHandle build_unet(const ModelSpec& spec, std::uint64_t seed) {
  require_arch(spec, {Architecture::Unet}, "build_unet");
  Rng rng(seed);
  return ModelHandle(spec, std::make_unique<UNet>(spec.in_channels, spec.base_width, rng));
}

ModelHandle build_drvnet(const ModelSpec& spec, std::uint64_t seed) {
  require_arch(spec, {Architecture::DrvNet}, "build_drvnet");
  Rng rng(seed);
  return ModelHandle(spec, std::make_unique<DrvNet>(spec, rng));
}

ModelHandle build_backbone_unet(const ModelSpec& spec, std::uint64_t seed, bool load_pretrained) {
  require_arch(spec, {Architecture::UnetResnet34, Architecture::UnetVgg19}, "build_backbone_unet");
  Rng rng(seed);
  auto net = std::make_unique<BackboneUNet>(spec.architecture, spec.in_channels, rng);
  if (load_pretrained && spec.pretrained_weights) load_pretrained_encoder(*net, *spec.pretrained_weights);
  return ModelHandle(spec, std::move(net));
}

ModelHandle build_model(const ModelSpec& spec, std::uint64_t seed, bool load_pretrained) {
  switch (spec.architecture) {
    case Architecture::Unet: return build_unet(spec, seed);
    case Architecture::DrvNet: return build_drvnet(spec, seed);
    case Architecture::UnetResnet34:
    case Architecture::UnetVgg19: return build_backbone_unet(spec, seed, load_pretrained);
  }
  throw SpecError("unknown architecture");
}

void check_input_shape(const ModelHandle& model, const Shape4& shape) {
  const int multiple = model.net().spatial_multiple();
  if (shape.c != model.spec().in_channels) {
    throw ShapeError(arch_token(model.spec().architecture) + " expects " +
                     std::to_string(model.spec().in_channels) + " input channels, got " + shape.str());
  }
  if (shape.n < 1 || shape.h <= 0 || shape.w <= 0 || shape.h % multiple != 0 || shape.w % multiple != 0) {
    throw ShapeError(arch_token(model.spec().architecture) + " needs H and W multiples of " +
                     std::to_string(multiple) + ", got " + shape.str());
  }
}

Tensor forward(const ModelHandle& model, const Tensor& batch) {
  check_input_shape(model, batch.shape());
  ag::NoGradGuard no_grad;
  SegmentationNet& net = model.net();
  // Inference always reads the running statistics; the caller's mode is
  // restored afterwards, also when the forward pass throws.
  struct ModeGuard {
    SegmentationNet& net;
    bool was_training;
    ~ModeGuard() { net.train(was_training); }
  } guard{net, net.is_training()};
  net.train(false);
  return net.forward(ag::constant(batch))->value;
}

}  // namespace vessel
