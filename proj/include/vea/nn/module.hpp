#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "vea/nn/functional.hpp"
#include "vea/nn/layer.hpp"
#include "vea/tensor.hpp"

namespace vea::nn {

struct NamedParam {
  std::string name;
  Param* param;
};

/// A differentiable unit with a fixed backward chain: forward() caches what
/// backward() needs, backward() returns the input gradient and accumulates
/// parameter gradients. Calls must alternate forward, backward.
class Module {
 public:
  virtual ~Module() = default;

  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect_parameters(const std::string& prefix, std::vector<NamedParam>& out) = 0;

  std::vector<NamedParam> named_parameters(const std::string& prefix = "");
  void zero_grad();
  std::size_t trainable_parameter_count();
};

std::string join_name(const std::string& prefix, const std::string& name);

/// One of the seven primitive layer kinds.
class Layer final : public Module {
 public:
  Layer(LayerSpec spec, std::mt19937_64& rng);
  Layer(LayerSpec spec, LayerParams params);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(const std::string& prefix, std::vector<NamedParam>& out) override;

  const LayerSpec& spec() const noexcept { return spec_; }
  LayerParams& params() noexcept { return params_; }
  const LayerParams& params() const noexcept { return params_; }

 private:
  LayerSpec spec_;
  LayerParams params_;
  Tensor input_;
  Mode mode_ = Mode::Eval;
};

/// (N,C,H,W) -> (N, C*H*W)
class Flatten final : public Module {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(const std::string&, std::vector<NamedParam>&) override {}

 private:
  Shape input_shape_;
};

class Sequential final : public Module {
 public:
  Sequential& add(std::string name, std::unique_ptr<Module> module);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(const std::string& prefix, std::vector<NamedParam>& out) override;

  std::size_t size() const noexcept { return children_.size(); }
  Module& at(std::size_t i) { return *children_.at(i).second; }

 private:
  std::vector<std::pair<std::string, std::unique_ptr<Module>>> children_;
};

}  // namespace vea::nn
