#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vea/tensor.hpp"

namespace vea::nn {

enum class Mode { Train, Eval };

enum class LayerKind { Conv2d, BatchNorm2d, ReLU, Sigmoid, MaxPool2d, AdaptiveAvgPool2d, Linear };

std::string_view to_string(LayerKind kind);

/// Kind plus the hyperparameters that kind reads. Unused fields stay zero.
struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool bias = true;
  std::size_t num_features = 0;  // BatchNorm2d
  std::size_t output_size = 1;   // AdaptiveAvgPool2d
  std::size_t in_features = 0;   // Linear
  std::size_t out_features = 0;  // Linear

  static LayerSpec conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride = 1,
                          std::size_t padding = 0, bool bias = true);
  static LayerSpec batchnorm2d(std::size_t features);
  static LayerSpec relu();
  static LayerSpec sigmoid();
  static LayerSpec maxpool2d(std::size_t kernel, std::size_t stride, std::size_t padding = 0);
  static LayerSpec adaptive_avgpool2d();
  static LayerSpec linear(std::size_t in, std::size_t out);

  /// Throws std::invalid_argument if the kind's invariants are violated.
  void validate() const;
};

struct Param {
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

/// Ordered, uniquely named parameter set of one layer.
class LayerParams {
 public:
  Param& add(std::string name, Tensor value, bool trainable = true);

  bool contains(std::string_view name) const noexcept;
  Param& get(std::string_view name);
  const Param& get(std::string_view name) const;
  Tensor& value(std::string_view name) { return get(name).value; }
  const Tensor& value(std::string_view name) const { return get(name).value; }

  std::size_t size() const noexcept { return entries_.size(); }
  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  std::size_t trainable_scalars() const noexcept;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Param>> entries_;
};

/// Kaiming fan-in normal weights, zero biases, unit/zero batch-norm affine,
/// running mean 0 and variance 1 (non-trainable).
LayerParams init_params(const LayerSpec& spec, std::mt19937_64& rng);

}  // namespace vea::nn
