#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vessel/layers.hpp"

namespace vessel {

enum class Architecture { Unet, DrvNet, UnetResnet34, UnetVgg19 };

inline constexpr Architecture kAllArchitectures[] = {
    Architecture::Unet, Architecture::DrvNet, Architecture::UnetResnet34,
    Architecture::UnetVgg19};

// CLI / config token: unet, drvnet, unet-resnet34, unet-vgg19.
std::string arch_token(Architecture arch);
// Row label used in tables and montages: UNet, DR-VNet, UNet-ResNet34, UNet-VGG19.
std::string arch_display_name(Architecture arch);
// Accepts either form, case-insensitively; throws ConfigError naming the valid set.
Architecture parse_architecture(const std::string& text);

struct ModelSpec {
  Architecture architecture = Architecture::Unet;
  int in_channels = 1;
  int base_width = 64;
  int rdn_layers = 3;
  int rdn_growth = 12;
  int rse_reduction = 16;
  std::optional<std::filesystem::path> pretrained_weights;

  bool operator==(const ModelSpec&) const = default;
};

ModelSpec default_spec(Architecture arch);
// Throws SpecError on an invalid combination.
void validate(const ModelSpec& spec);

class SegmentationNet : public nn::Module {
 public:
  // N×C_in×H×W → N×1×H×W probabilities.
  virtual ag::Var forward(const ag::Var& x) = 0;
  // H and W must be multiples of this.
  virtual int spatial_multiple() const = 0;
};

class UNet : public SegmentationNet {
 public:
  UNet(int in_channels, int base_width, Rng& rng);
  ag::Var forward(const ag::Var& x) override;
  int spatial_multiple() const override { return 16; }

  // Output width of each encoder level, bottleneck last.
  std::vector<int> encoder_widths() const;

 private:
  struct Level {
    nn::ConvBnRelu* first;
    nn::ConvBnRelu* second;
  };
  std::vector<Level> down_;
  Level bottleneck_;
  std::vector<nn::UpConv2x2*> up_;
  std::vector<Level> decode_;
  nn::Conv2d* head_;
};

class DrvNet : public SegmentationNet {
 public:
  DrvNet(const ModelSpec& spec, Rng& rng);
  ag::Var forward(const ag::Var& x) override;
  int spatial_multiple() const override { return 16; }

  struct Outputs {
    ag::Var initial;  // backbone estimate
    ag::Var final;    // after the fine-tune tail
  };
  Outputs forward_stages(const ag::Var& x);

  std::vector<nn::RdnBlock*> rdn_blocks() const;
  std::vector<nn::RseBlock*> rse_blocks() const;
  int down_levels() const { return static_cast<int>(down_.size()); }
  int up_levels() const { return static_cast<int>(up_.size()); }
  int tail_units() const { return static_cast<int>(tail_.size()); }

 private:
  struct Unit {
    nn::ConvBnRelu* entry;  // channel adaptation (may be null)
    nn::RdnBlock* rdn;
    nn::RseBlock* rse;
  };
  ag::Var run(Unit& unit, const ag::Var& x);

  std::vector<Unit> down_;  // the last entry is the bottleneck (no pooling after it)
  std::vector<nn::UpConv2x2*> up_;
  std::vector<Unit> decode_;
  nn::Conv2d* backbone_head_;
  std::vector<Unit> tail_;
  nn::Conv2d* tail_head_;
};

// UNet-style decoder over a classification trunk (ResNet34 or VGG19-BN).
// Encoder parameters live under "encoder." with torchvision naming.
class BackboneUNet : public SegmentationNet {
 public:
  BackboneUNet(Architecture arch, int in_channels, Rng& rng);
  ag::Var forward(const ag::Var& x) override;
  int spatial_multiple() const override { return 32; }

  std::int64_t encoder_parameter_count() const;
  nn::Module& encoder();
  // Output width of each decoder level, coarsest first.
  std::vector<int> decoder_widths() const;

  class Encoder;

 private:
  struct DecoderBlock {
    nn::UpConv2x2* up;
    nn::ConvBnRelu* first;
    nn::ConvBnRelu* second;
  };
  Encoder* encoder_;
  std::vector<DecoderBlock> decoder_;
  nn::Conv2d* head_;
};

class ModelHandle {
 public:
  ModelHandle(ModelSpec spec, std::unique_ptr<SegmentationNet> net);

  const ModelSpec& spec() const { return spec_; }
  std::int64_t parameter_count() const { return net_->parameter_count(); }
  SegmentationNet& net() const { return *net_; }

  // Order-stable checksum over all parameters and buffers.
  std::uint64_t parameter_checksum() const;

 private:
  ModelSpec spec_;
  std::unique_ptr<SegmentationNet> net_;
};

ModelHandle build_unet(const ModelSpec& spec, std::uint64_t seed);
ModelHandle build_drvnet(const ModelSpec& spec, std::uint64_t seed);
// Loads spec.pretrained_weights into the encoder when set.
ModelHandle build_backbone_unet(const ModelSpec& spec, std::uint64_t seed,
                                bool load_pretrained = true);
ModelHandle build_model(const ModelSpec& spec, std::uint64_t seed,
                        bool load_pretrained = true);

// Inference: no graph, batch-norm running statistics, no state mutation.
// Throws ShapeError on a channel or spatial-size mismatch.
Tensor forward(const ModelHandle& model, const Tensor& batch);
void check_input_shape(const ModelHandle& model, const Shape4& shape);

}  // namespace vessel
