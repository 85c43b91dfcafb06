#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "vea/nn/module.hpp"

namespace vea::model {

using nn::Mode;

/// Smallest accepted input height/width for the full network.
inline constexpr std::size_t kMinInputExtent = 28;

enum class Tap { AfterStem, AfterStage1, AfterStage2 };
std::string_view to_string(Tap tap);

struct VeaBlockSpec {
  std::size_t in_channels = 64;
  std::size_t hidden_channels = 64;  // 3x3 conv filters
  std::size_t gate_channels = 64;    // 1x1 conv filters; equals in_channels

  void validate() const;
};

struct VeaConfig {
  std::size_t num_classes = 10;
  std::size_t input_channels = 3;
  /// One block per tap, in tap order.
  std::vector<VeaBlockSpec> block_specs;
  /// Test-only: every gate is treated as 1, making the network a plain ResNet-18.
  bool bypass_gates = false;

  /// (64,64,64), (64,64,64), (128,128,128) at the three taps.
  static VeaConfig standard(std::size_t num_classes);
  void validate() const;
};

struct BasicBlockSpec {
  std::size_t in_channels = 64;
  std::size_t out_channels = 64;
  std::size_t stride = 1;
  bool has_downsample = false;

  static BasicBlockSpec make(std::size_t in, std::size_t out, std::size_t stride);
  void validate() const;
};

/// conv3x3-bn-relu-conv3x3-bn plus identity or 1x1-conv-bn projection, then ReLU.
class BasicBlock final : public nn::Module {
 public:
  BasicBlock(const BasicBlockSpec& spec, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(const std::string& prefix, std::vector<nn::NamedParam>& out) override;

  const BasicBlockSpec& spec() const noexcept { return spec_; }

 private:
  BasicBlockSpec spec_;
  nn::Sequential main_;
  std::optional<nn::Sequential> downsample_;
  nn::Layer relu_;
};

/// Produces the attention gate Sigmoid(Conv1x1(ReLU(Conv3x3(x)))), same shape as x.
class VeaBlock final : public nn::Module {
 public:
  VeaBlock(const VeaBlockSpec& spec, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(const std::string& prefix, std::vector<nn::NamedParam>& out) override;

  const VeaBlockSpec& spec() const noexcept { return spec_; }
  nn::Layer& conv3x3() noexcept { return conv3x3_; }
  nn::Layer& conv1x1() noexcept { return conv1x1_; }

 private:
  VeaBlockSpec spec_;
  nn::Layer conv3x3_;
  nn::Layer relu_;
  nn::Layer conv1x1_;
  nn::Layer sigmoid_;
};

/// Element-wise product feat * gate.
Tensor apply_attention(const Tensor& feat, const Tensor& gate);

/// Gate computed by `block` for x; checks x's channel count first.
Tensor vea_block_forward(VeaBlock& block, const Tensor& x, Mode mode = Mode::Eval);

/// x * VeaBlock(x), the self-gating insertion used at each tap.
class AttentionTap final : public nn::Module {
 public:
  AttentionTap(const VeaBlockSpec& spec, bool bypass, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(const std::string& prefix, std::vector<nn::NamedParam>& out) override;

  VeaBlock& block() noexcept { return block_; }
  bool bypass() const noexcept { return bypass_; }

 private:
  VeaBlock block_;
  bool bypass_;
  Tensor input_;
  Tensor gate_;
};

enum class Architecture { ResNet18, VeaResNet18 };
std::string_view to_string(Architecture arch);

/// ResNet-18, optionally with VEA gating at the three taps.
class Model final : public nn::Module {
 public:
  Model(Architecture arch, std::size_t num_classes, const VeaConfig* vea, std::uint64_t seed);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_logits) override;
  void collect_parameters(const std::string& prefix, std::vector<nn::NamedParam>& out) override;

  Architecture architecture() const noexcept { return arch_; }
  std::size_t num_classes() const noexcept { return num_classes_; }

  /// Invocation counts for stem and stages 1-4 since construction.
  const std::array<std::size_t, 5>& stage_calls() const noexcept { return stage_calls_; }
  AttentionTap* tap(Tap t) noexcept;

 private:
  Architecture arch_;
  std::size_t num_classes_;
  nn::Sequential stem_;
  std::array<nn::Sequential, 4> stages_;
  std::array<std::unique_ptr<AttentionTap>, 3> taps_;
  nn::Layer avgpool_;
  nn::Flatten flatten_;
  nn::Layer fc_;
  std::array<std::size_t, 5> stage_calls_{};
};

Model build_resnet18(std::size_t num_classes, std::uint64_t seed = 0);
Model build_vea_resnet18(const VeaConfig& cfg, std::uint64_t seed = 0);

/// Runs model.forward after checking the batch is (N,3,H,W) with H,W >= kMinInputExtent.
Tensor forward(Model& model, const Tensor& batch, Mode mode);

/// Copies every parameter of `src` whose name and shape exist in `dst`.
/// Returns the number of tensors copied.
std::size_t copy_shared_parameters(Model& src, Model& dst);

}  // namespace vea::model
