#include "vea/model/backbone.hpp"

#include <stdexcept>

namespace vea::model {

using nn::Layer;
using nn::LayerParams;
using nn::LayerSpec;
using nn::Sequential;

namespace {

constexpr std::array<std::size_t, 4> kStageWidths{64, 128, 256, 512};
constexpr std::array<std::size_t, 4> kStageStrides{1, 2, 2, 2};
constexpr std::array<std::size_t, 3> kTapWidths{64, 64, 128};
constexpr std::array<Tap, 3> kTaps{Tap::AfterStem, Tap::AfterStage1, Tap::AfterStage2};

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, std::mt19937_64& rng) {
  return std::make_unique<Layer>(spec, rng);
}

}  // namespace

std::string_view to_string(Tap tap) {
  switch (tap) {
    case Tap::AfterStem: return "after_stem";
    case Tap::AfterStage1: return "after_stage1";
    case Tap::AfterStage2: return "after_stage2";
  }
  return "?";
}

std::string_view to_string(Architecture arch) {
  return arch == Architecture::ResNet18 ? "resnet18" : "vea_resnet18";
}

void VeaBlockSpec::validate() const {
  if (hidden_channels < 1) throw std::invalid_argument("VEA block: hidden_channels must be >= 1");
  if (gate_channels != in_channels) {
    throw std::invalid_argument("VEA block: gate_channels " + std::to_string(gate_channels) +
                                " must equal in_channels " + std::to_string(in_channels) +
                                " for the element-wise product");
  }
}

VeaConfig VeaConfig::standard(std::size_t num_classes) {
  VeaConfig cfg;
  cfg.num_classes = num_classes;
  for (std::size_t width : kTapWidths) cfg.block_specs.push_back({width, width, width});
  return cfg;
}

void VeaConfig::validate() const {
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (input_channels != 3) throw std::invalid_argument("input_channels must be 3");
  if (block_specs.size() != kTaps.size()) {
    throw std::invalid_argument("expected exactly 3 VEA blocks, got " + std::to_string(block_specs.size()));
  }
  for (std::size_t i = 0; i < kTaps.size(); ++i) {
    const std::string tap(to_string(kTaps[i]));
    if (block_specs[i].in_channels != kTapWidths[i]) {
      throw std::invalid_argument("VEA block at tap " + tap + ": in_channels " +
                                  std::to_string(block_specs[i].in_channels) + " does not match backbone width " +
                                  std::to_string(kTapWidths[i]));
    }
    try {
      block_specs[i].validate();
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("VEA block at tap " + tap + ": " + e.what());
    }
  }
}

BasicBlockSpec BasicBlockSpec::make(std::size_t in, std::size_t out, std::size_t stride) {
  return {in, out, stride, stride != 1 || in != out};
}

void BasicBlockSpec::validate() const {
  if (has_downsample != (stride != 1 || in_channels != out_channels)) {
    throw std::invalid_argument("BasicBlock: downsample required iff stride != 1 or channels change");
  }
}

BasicBlock::BasicBlock(const BasicBlockSpec& spec, std::mt19937_64& rng)
    : spec_(spec), relu_(LayerSpec::relu(), rng) {
  spec_.validate();
  main_.add("conv1", make_layer(LayerSpec::conv2d(spec.in_channels, spec.out_channels, 3, spec.stride, 1, false), rng))
      .add("bn1", make_layer(LayerSpec::batchnorm2d(spec.out_channels), rng))
      .add("relu", make_layer(LayerSpec::relu(), rng))
      .add("conv2", make_layer(LayerSpec::conv2d(spec.out_channels, spec.out_channels, 3, 1, 1, false), rng))
      .add("bn2", make_layer(LayerSpec::batchnorm2d(spec.out_channels), rng));
  if (spec.has_downsample) {
    downsample_.emplace();
    downsample_->add("conv", make_layer(LayerSpec::conv2d(spec.in_channels, spec.out_channels, 1, spec.stride, 0, false), rng))
        .add("bn", make_layer(LayerSpec::batchnorm2d(spec.out_channels), rng));
  }
}

Tensor BasicBlock::forward(const Tensor& x, Mode mode) {
  Tensor sum = main_.forward(x, mode);
  const Tensor shortcut = downsample_ ? downsample_->forward(x, mode) : x;
  require_same_shape(sum, shortcut, "BasicBlock residual");
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += shortcut[i];
  return relu_.forward(sum, mode);
}

Tensor BasicBlock::backward(const Tensor& grad_out) {
  const Tensor g = relu_.backward(grad_out);
  Tensor grad_x = main_.backward(g);
  const Tensor grad_shortcut = downsample_ ? downsample_->backward(g) : g;
  for (std::size_t i = 0; i < grad_x.size(); ++i) grad_x[i] += grad_shortcut[i];
  return grad_x;
}

void BasicBlock::collect_parameters(const std::string& prefix, std::vector<nn::NamedParam>& out) {
  main_.collect_parameters(prefix, out);
  if (downsample_) downsample_->collect_parameters(nn::join_name(prefix, "downsample"), out);
}

VeaBlock::VeaBlock(const VeaBlockSpec& spec, std::mt19937_64& rng)
    : spec_((spec.validate(), spec)),
      conv3x3_(LayerSpec::conv2d(spec.in_channels, spec.hidden_channels, 3, 1, 1, true), rng),
      relu_(LayerSpec::relu(), rng),
      conv1x1_(LayerSpec::conv2d(spec.hidden_channels, spec.gate_channels, 1, 1, 0, true), rng),
      sigmoid_(LayerSpec::sigmoid(), rng) {}

Tensor VeaBlock::forward(const Tensor& x, Mode mode) {
  if (x.rank() != 4 || x.dim(1) != spec_.in_channels) {
    throw ShapeError("VEA block expects " + std::to_string(spec_.in_channels) + " input channels, got " +
                     shape_to_string(x.shape()));
  }
  return sigmoid_.forward(conv1x1_.forward(relu_.forward(conv3x3_.forward(x, mode), mode), mode), mode);
}

Tensor VeaBlock::backward(const Tensor& grad_out) {
  return conv3x3_.backward(relu_.backward(conv1x1_.backward(sigmoid_.backward(grad_out))));
}

void VeaBlock::collect_parameters(const std::string& prefix, std::vector<nn::NamedParam>& out) {
  conv3x3_.collect_parameters(nn::join_name(prefix, "conv3x3"), out);
  conv1x1_.collect_parameters(nn::join_name(prefix, "conv1x1"), out);
}

Tensor apply_attention(const Tensor& feat, const Tensor& gate) {
  require_same_shape(feat, gate, "apply_attention");
  Tensor out(feat.shape());
  for (std::size_t i = 0; i < feat.size(); ++i) out[i] = feat[i] * gate[i];
  return out;
}

Tensor vea_block_forward(VeaBlock& block, const Tensor& x, Mode mode) { return block.forward(x, mode); }

AttentionTap::AttentionTap(const VeaBlockSpec& spec, bool bypass, std::mt19937_64& rng)
    : block_(spec, rng), bypass_(bypass) {}

Tensor AttentionTap::forward(const Tensor& x, Mode mode) {
  if (bypass_) return x;
  input_ = x;
  gate_ = block_.forward(x, mode);
  return apply_attention(x, gate_);
}

Tensor AttentionTap::backward(const Tensor& grad_out) {
  if (bypass_) return grad_out;
  // d(x*g(x)) = grad*g + J_g^T (grad*x)
  Tensor grad_x = apply_attention(grad_out, gate_);
  const Tensor through_gate = block_.backward(apply_attention(grad_out, input_));
  for (std::size_t i = 0; i < grad_x.size(); ++i) grad_x[i] += through_gate[i];
  return grad_x;
}

void AttentionTap::collect_parameters(const std::string& prefix, std::vector<nn::NamedParam>& out) {
  block_.collect_parameters(prefix, out);
}

Model::Model(Architecture arch, std::size_t num_classes, const VeaConfig* vea, std::uint64_t seed)
    : arch_(arch),
      num_classes_(num_classes),
      avgpool_(LayerSpec::adaptive_avgpool2d(), LayerParams{}),
      fc_(LayerSpec::linear(kStageWidths.back(), num_classes), LayerParams{}) {
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  // Backbone and attention blocks draw from separate streams so both
  // architectures share identical backbone weights for a given seed.
  std::mt19937_64 rng(seed);
  stem_.add("conv", make_layer(LayerSpec::conv2d(3, 64, 7, 2, 3, false), rng))
      .add("bn", make_layer(LayerSpec::batchnorm2d(64), rng))
      .add("relu", make_layer(LayerSpec::relu(), rng))
      .add("maxpool", make_layer(LayerSpec::maxpool2d(3, 2, 1), rng));
  std::size_t in = 64;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const std::size_t out = kStageWidths[s];
    stages_[s].add("0", std::make_unique<BasicBlock>(BasicBlockSpec::make(in, out, kStageStrides[s]), rng));
    stages_[s].add("1", std::make_unique<BasicBlock>(BasicBlockSpec::make(out, out, 1), rng));
    in = out;
  }
  fc_ = Layer(LayerSpec::linear(kStageWidths.back(), num_classes), rng);

  if (arch == Architecture::VeaResNet18) {
    if (vea == nullptr) throw std::invalid_argument("VEA architecture requires a VeaConfig");
    vea->validate();
    if (vea->num_classes != num_classes) throw std::invalid_argument("VeaConfig num_classes mismatch");
    std::mt19937_64 attention_rng(seed ^ 0x9E3779B97F4A7C15ULL);
    for (std::size_t i = 0; i < taps_.size(); ++i) {
      taps_[i] = std::make_unique<AttentionTap>(vea->block_specs[i], vea->bypass_gates, attention_rng);
    }
  }
}

Tensor Model::forward(const Tensor& x, Mode mode) {
  if (x.rank() != 4 || x.dim(1) != 3) {
    throw ShapeError("model expects (N,3,H,W) input, got " + shape_to_string(x.shape()));
  }
  if (x.dim(2) < kMinInputExtent || x.dim(3) < kMinInputExtent) {
    throw ShapeError("input spatial size " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                     " is below the " + std::to_string(kMinInputExtent) + "x" + std::to_string(kMinInputExtent) +
                     " minimum");
  }
  Tensor h = stem_.forward(x, mode);
  ++stage_calls_[0];
  if (taps_[0]) h = taps_[0]->forward(h, mode);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    h = stages_[s].forward(h, mode);
    ++stage_calls_[s + 1];
    if (s + 1 < taps_.size() && taps_[s + 1]) h = taps_[s + 1]->forward(h, mode);
  }
  return fc_.forward(flatten_.forward(avgpool_.forward(h, mode), mode), mode);
}

Tensor Model::backward(const Tensor& grad_logits) {
  Tensor g = avgpool_.backward(flatten_.backward(fc_.backward(grad_logits)));
  for (std::size_t s = stages_.size(); s-- > 0;) {
    if (s + 1 < taps_.size() && taps_[s + 1]) g = taps_[s + 1]->backward(g);
    g = stages_[s].backward(g);
  }
  if (taps_[0]) g = taps_[0]->backward(g);
  return stem_.backward(g);
}

void Model::collect_parameters(const std::string& prefix, std::vector<nn::NamedParam>& out) {
  stem_.collect_parameters(nn::join_name(prefix, "stem"), out);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    stages_[s].collect_parameters(nn::join_name(prefix, "stage" + std::to_string(s + 1)), out);
  }
  for (std::size_t i = 0; i < taps_.size(); ++i) {
    if (taps_[i]) taps_[i]->collect_parameters(nn::join_name(prefix, "vea" + std::to_string(i + 1)), out);
  }
  fc_.collect_parameters(nn::join_name(prefix, "fc"), out);
}

AttentionTap* Model::tap(Tap t) noexcept { return taps_[static_cast<std::size_t>(t)].get(); }

Model build_resnet18(std::size_t num_classes, std::uint64_t seed) {
  return Model(Architecture::ResNet18, num_classes, nullptr, seed);
}

Model build_vea_resnet18(const VeaConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  return Model(Architecture::VeaResNet18, cfg.num_classes, &cfg, seed);
}

Tensor forward(Model& model, const Tensor& batch, Mode mode) { return model.forward(batch, mode); }

std::size_t copy_shared_parameters(Model& src, Model& dst) {
  auto dst_params = dst.named_parameters();
  std::size_t copied = 0;
  for (const auto& sp : src.named_parameters()) {
    for (auto& dp : dst_params) {
      if (dp.name == sp.name && dp.param->value.shape() == sp.param->value.shape()) {
        dp.param->value = sp.param->value;
        ++copied;
        break;
      }
    }
  }
  return copied;
}

}  // namespace vea::model
