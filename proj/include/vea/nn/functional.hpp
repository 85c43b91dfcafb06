#pragma once

#include <cstddef>

#include "vea/nn/layer.hpp"
#include "vea/tensor.hpp"

namespace vea::nn {

inline constexpr float kBatchNormMomentum = 0.1f;
inline constexpr float kBatchNormEpsilon = 1e-5f;

/// floor((in + 2*pad - kernel) / stride) + 1; throws when the padded input
/// is smaller than the kernel.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

/// Gradient of a scalar loss with respect to a layer's input and its
/// parameters. `params` holds one entry per trainable parameter, keyed like
/// the layer's own LayerParams.
struct LayerGrads {
  Tensor input;
  LayerParams params;
};

Tensor conv2d_forward(const Tensor& x, const LayerParams& params, const LayerSpec& spec);
LayerGrads conv2d_backward(const Tensor& x, const LayerParams& params, const LayerSpec& spec,
                           const Tensor& grad_out);

/// Train mode normalizes with batch statistics and folds them into the
/// running estimates (unbiased variance, momentum kBatchNormMomentum).
Tensor batchnorm2d(const Tensor& x, LayerParams& params, const LayerSpec& spec, Mode mode);
LayerGrads batchnorm2d_backward(const Tensor& x, const LayerParams& params, const LayerSpec& spec, Mode mode,
                                const Tensor& grad_out);

enum class Activation { ReLU, Sigmoid };

Tensor activation(const Tensor& x, Activation kind);
Tensor activation_backward(const Tensor& x, Activation kind, const Tensor& grad_out);

/// MaxPool2d (padding acts as -inf) or AdaptiveAvgPool2d to 1x1.
Tensor pool(const Tensor& x, const LayerSpec& spec);
Tensor pool_backward(const Tensor& x, const LayerSpec& spec, const Tensor& grad_out);

/// x[N,F] * W[K,F]^T + b[K]
Tensor linear(const Tensor& x, const LayerParams& params, const LayerSpec& spec);
LayerGrads linear_backward(const Tensor& x, const LayerParams& params, const LayerSpec& spec,
                           const Tensor& grad_out);

/// Caps BLAS worker threads. Returns the value applied.
int set_kernel_threads(int threads);
/// Applies VEA_THREADS if set; returns the applied count or 0 when unset.
int apply_thread_env();

}  // namespace vea::nn
