#include "vea/nn/layer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vea::nn {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2d: return "Conv2d";
    case LayerKind::BatchNorm2d: return "BatchNorm2d";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::Sigmoid: return "Sigmoid";
    case LayerKind::MaxPool2d: return "MaxPool2d";
    case LayerKind::AdaptiveAvgPool2d: return "AdaptiveAvgPool2d";
    case LayerKind::Linear: return "Linear";
  }
  return "?";
}

LayerSpec LayerSpec::conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                            std::size_t padding, bool bias) {
  LayerSpec s;
  s.kind = LayerKind::Conv2d;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  s.bias = bias;
  s.validate();
  return s;
}

LayerSpec LayerSpec::batchnorm2d(std::size_t features) {
  LayerSpec s;
  s.kind = LayerKind::BatchNorm2d;
  s.num_features = features;
  s.validate();
  return s;
}

LayerSpec LayerSpec::relu() {
  LayerSpec s;
  s.kind = LayerKind::ReLU;
  return s;
}

LayerSpec LayerSpec::sigmoid() {
  LayerSpec s;
  s.kind = LayerKind::Sigmoid;
  return s;
}

LayerSpec LayerSpec::maxpool2d(std::size_t kernel, std::size_t stride, std::size_t padding) {
  LayerSpec s;
  s.kind = LayerKind::MaxPool2d;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  s.validate();
  return s;
}

LayerSpec LayerSpec::adaptive_avgpool2d() {
  LayerSpec s;
  s.kind = LayerKind::AdaptiveAvgPool2d;
  s.output_size = 1;
  return s;
}

LayerSpec LayerSpec::linear(std::size_t in, std::size_t out) {
  LayerSpec s;
  s.kind = LayerKind::Linear;
  s.in_features = in;
  s.out_features = out;
  s.validate();
  return s;
}

void LayerSpec::validate() const {
  auto fail = [this](const std::string& why) {
    throw std::invalid_argument(std::string(to_string(kind)) + ": " + why);
  };
  switch (kind) {
    case LayerKind::Conv2d:
      if (in_channels < 1 || out_channels < 1) fail("channel counts must be >= 1");
      [[fallthrough]];
    case LayerKind::MaxPool2d:
      if (kernel < 1) fail("kernel size must be >= 1");
      if (stride < 1) fail("stride must be >= 1");
      // a window made only of padding has no defined maximum
      if (kind == LayerKind::MaxPool2d && 2 * padding > kernel) fail("padding must be <= kernel/2");
      break;
    case LayerKind::BatchNorm2d:
      if (num_features < 1) fail("feature count must be >= 1");
      break;
    case LayerKind::AdaptiveAvgPool2d:
      if (output_size != 1) fail("only 1x1 output is supported");
      break;
    case LayerKind::Linear:
      if (in_features < 1 || out_features < 1) fail("feature counts must be >= 1");
      break;
    case LayerKind::ReLU:
    case LayerKind::Sigmoid:
      break;
  }
}

Param& LayerParams::add(std::string name, Tensor value, bool trainable) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  Tensor grad = Tensor::zeros_like(value);
  entries_.emplace_back(std::move(name), Param{std::move(value), std::move(grad), trainable});
  return entries_.back().second;
}

bool LayerParams::contains(std::string_view name) const noexcept {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

Param& LayerParams::get(std::string_view name) {
  for (auto& [n, p] : entries_) {
    if (n == name) return p;
  }
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

const Param& LayerParams::get(std::string_view name) const {
  return const_cast<LayerParams*>(this)->get(name);
}

std::size_t LayerParams::trainable_scalars() const noexcept {
  std::size_t n = 0;
  for (const auto& [name, p] : entries_) {
    if (p.trainable) n += p.value.size();
  }
  return n;
}

void LayerParams::zero_grad() {
  for (auto& [name, p] : entries_) p.grad.fill(0.0f);
}

namespace {

Tensor kaiming_normal(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace

LayerParams init_params(const LayerSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  LayerParams p;
  switch (spec.kind) {
    case LayerKind::Conv2d: {
      const std::size_t fan_in = spec.in_channels * spec.kernel * spec.kernel;
      p.add("weight", kaiming_normal({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel}, fan_in, rng));
      if (spec.bias) p.add("bias", Tensor::zeros({spec.out_channels}));
      break;
    }
    case LayerKind::BatchNorm2d:
      p.add("weight", Tensor({spec.num_features}, 1.0f));
      p.add("bias", Tensor::zeros({spec.num_features}));
      p.add("running_mean", Tensor::zeros({spec.num_features}), false);
      p.add("running_var", Tensor({spec.num_features}, 1.0f), false);
      break;
    case LayerKind::Linear:
      p.add("weight", kaiming_normal({spec.out_features, spec.in_features}, spec.in_features, rng));
      p.add("bias", Tensor::zeros({spec.out_features}));
      break;
    default:
      break;
  }
  return p;
}

}  // namespace vea::nn
