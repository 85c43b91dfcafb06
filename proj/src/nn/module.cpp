#include "vea/nn/module.hpp"

#include <stdexcept>

namespace vea::nn {

std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

std::vector<NamedParam> Module::named_parameters(const std::string& prefix) {
  std::vector<NamedParam> out;
  collect_parameters(prefix, out);
  return out;
}

void Module::zero_grad() {
  for (auto& p : named_parameters()) p.param->grad.fill(0.0f);
}

std::size_t Module::trainable_parameter_count() {
  std::size_t n = 0;
  for (auto& p : named_parameters()) {
    if (p.param->trainable) n += p.param->value.size();
  }
  return n;
}

Layer::Layer(LayerSpec spec, std::mt19937_64& rng) : spec_(spec), params_(init_params(spec, rng)) {}

Layer::Layer(LayerSpec spec, LayerParams params) : spec_(spec), params_(std::move(params)) { spec_.validate(); }

Tensor Layer::forward(const Tensor& x, Mode mode) {
  input_ = x;
  mode_ = mode;
  switch (spec_.kind) {
    case LayerKind::Conv2d: return conv2d_forward(x, params_, spec_);
    case LayerKind::BatchNorm2d: return batchnorm2d(x, params_, spec_, mode);
    case LayerKind::ReLU: return activation(x, Activation::ReLU);
    case LayerKind::Sigmoid: return activation(x, Activation::Sigmoid);
    case LayerKind::MaxPool2d:
    case LayerKind::AdaptiveAvgPool2d: return pool(x, spec_);
    case LayerKind::Linear: return linear(x, params_, spec_);
  }
  throw std::logic_error("unhandled layer kind");
}

namespace {

void accumulate(LayerParams& params, const LayerParams& grads) {
  for (const auto& [name, g] : grads) {
    Tensor& dst = params.get(name).grad;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g.value[i];
  }
}

}  // namespace

Tensor Layer::backward(const Tensor& grad_out) {
  if (input_.empty()) throw std::logic_error("backward called before forward");
  LayerGrads grads;
  switch (spec_.kind) {
    case LayerKind::Conv2d: grads = conv2d_backward(input_, params_, spec_, grad_out); break;
    case LayerKind::BatchNorm2d: grads = batchnorm2d_backward(input_, params_, spec_, mode_, grad_out); break;
    case LayerKind::ReLU: return activation_backward(input_, Activation::ReLU, grad_out);
    case LayerKind::Sigmoid: return activation_backward(input_, Activation::Sigmoid, grad_out);
    case LayerKind::MaxPool2d:
    case LayerKind::AdaptiveAvgPool2d: return pool_backward(input_, spec_, grad_out);
    case LayerKind::Linear: grads = linear_backward(input_, params_, spec_, grad_out); break;
  }
  accumulate(params_, grads.params);
  return std::move(grads.input);
}

void Layer::collect_parameters(const std::string& prefix, std::vector<NamedParam>& out) {
  for (auto& [name, p] : params_) out.push_back({join_name(prefix, name), &p});
}

Tensor Flatten::forward(const Tensor& x, Mode) {
  input_shape_ = x.shape();
  return x.reshaped({x.dim(0), x.size() / x.dim(0)});
}

Tensor Flatten::backward(const Tensor& grad_out) { return grad_out.reshaped(input_shape_); }

Sequential& Sequential::add(std::string name, std::unique_ptr<Module> module) {
  children_.emplace_back(std::move(name), std::move(module));
  return *this;
}

Tensor Sequential::forward(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (auto& [name, m] : children_) h = m->forward(h, mode);
  return h;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = children_.rbegin(); it != children_.rend(); ++it) g = it->second->backward(g);
  return g;
}

void Sequential::collect_parameters(const std::string& prefix, std::vector<NamedParam>& out) {
  for (auto& [name, m] : children_) m->collect_parameters(join_name(prefix, name), out);
}

}  // namespace vea::nn
