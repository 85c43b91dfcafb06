#include "vea/nn/functional.hpp"

#include <cblas.h>

#include "vea/nn/stable_gemm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>
#include <vector>

namespace vea::nn {

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (in + 2 * pad < kernel) {
    throw ShapeError("spatial extent " + std::to_string(in) + " with padding " + std::to_string(pad) +
                     " is smaller than kernel " + std::to_string(kernel));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

namespace {

void require_rank4(const Tensor& x, const char* op) {
  if (x.rank() != 4) {
    throw ShapeError(std::string(op) + ": expected NCHW input, got " + shape_to_string(x.shape()));
  }
}

struct ConvGeometry {
  std::size_t n, c, h, w, k, stride, pad, oh, ow;
  std::size_t patch() const { return c * k * k; }
  std::size_t columns() const { return n * oh * ow; }
};

ConvGeometry conv_geometry(const Tensor& x, const LayerParams& params, const LayerSpec& spec) {
  require_rank4(x, "conv2d");
  const Shape expected_w{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel};
  const Tensor& weight = params.value("weight");
  if (x.dim(1) != spec.in_channels || weight.shape() != expected_w) {
    throw ShapeError("conv2d: input " + shape_to_string(x.shape()) + " incompatible with weight " +
                     shape_to_string(weight.shape()) + " (spec expects in_channels=" +
                     std::to_string(spec.in_channels) + ", weight " + shape_to_string(expected_w) + ")");
  }
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), spec.kernel, spec.stride, spec.padding, 0, 0};
  g.oh = conv_output_extent(g.h, g.k, g.stride, g.pad);
  g.ow = conv_output_extent(g.w, g.k, g.stride, g.pad);
  return g;
}

// Rows index (channel, ky, kx); columns index (image, oy, ox).
std::vector<float> im2col(const Tensor& x, const ConvGeometry& g) {
  const std::size_t cols = g.columns();
  const std::size_t plane = g.oh * g.ow;
  std::vector<float> col(g.patch() * cols, 0.0f);
  const float* src = x.raw();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        float* row = col.data() + ((c * g.k + ky) * g.k + kx) * cols;
        for (std::size_t n = 0; n < g.n; ++n) {
          const float* img = src + (n * g.c + c) * g.h * g.w;
          float* dst = row + n * plane;
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            const float* line = img + iy * g.w;
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
              if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[oy * g.ow + ox] = line[ix];
            }
          }
        }
      }
    }
  }
  return col;
}

void col2im(const std::vector<float>& col, const ConvGeometry& g, Tensor& out) {
  const std::size_t cols = g.columns();
  const std::size_t plane = g.oh * g.ow;
  float* dst_base = out.raw();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const float* row = col.data() + ((c * g.k + ky) * g.k + kx) * cols;
        for (std::size_t n = 0; n < g.n; ++n) {
          float* img = dst_base + (n * g.c + c) * g.h * g.w;
          const float* src = row + n * plane;
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            float* line = img + iy * g.w;
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
              if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) line[ix] += src[oy * g.ow + ox];
            }
          }
        }
      }
    }
  }
}

// C[m,n] = op(A) * op(B), row-major.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
          float* c, float beta = 0.0f) {
  const auto lda = static_cast<blasint>(trans_a ? m : k);
  const auto ldb = static_cast<blasint>(trans_b ? k : n);
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<blasint>(m), static_cast<blasint>(n), static_cast<blasint>(k), 1.0f, a, lda, b, ldb, beta, c,
              static_cast<blasint>(n));
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const LayerParams& params, const LayerSpec& spec) {
  const ConvGeometry g = conv_geometry(x, params, spec);
  const std::size_t cols = g.columns();
  const std::size_t plane = g.oh * g.ow;
  const std::vector<float> col = im2col(x, g);
  std::vector<float> y(spec.out_channels * cols);
  // BLAS rounding varies with a column's position and the call shape; an
  // image's output must not depend on its batch neighbours.
  detail::stable_gemm(spec.out_channels, cols, g.patch(), params.value("weight").raw(), col.data(), false,
                      y.data());

  Tensor out({g.n, spec.out_channels, g.oh, g.ow});
  const float* bias = spec.bias ? params.value("bias").raw() : nullptr;
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
      const float* src = y.data() + oc * cols + n * plane;
      float* dst = out.raw() + (n * spec.out_channels + oc) * plane;
      const float b = bias ? bias[oc] : 0.0f;
      for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] + b;
    }
  }
  return out;
}

LayerGrads conv2d_backward(const Tensor& x, const LayerParams& params, const LayerSpec& spec,
                           const Tensor& grad_out) {
  const ConvGeometry g = conv_geometry(x, params, spec);
  const Shape out_shape{g.n, spec.out_channels, g.oh, g.ow};
  if (grad_out.shape() != out_shape) {
    throw ShapeError("conv2d backward: grad_out " + shape_to_string(grad_out.shape()) + " vs output " +
                     shape_to_string(out_shape));
  }
  const std::size_t cols = g.columns();
  const std::size_t plane = g.oh * g.ow;

  std::vector<float> dy(spec.out_channels * cols);
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
      const float* src = grad_out.raw() + (n * spec.out_channels + oc) * plane;
      std::copy(src, src + plane, dy.data() + oc * cols + n * plane);
    }
  }

  LayerGrads grads{Tensor::zeros_like(x), {}};
  const Tensor& weight = params.value("weight");
  const std::vector<float> col = im2col(x, g);
  Tensor grad_w = Tensor::zeros_like(weight);
  gemm(false, true, spec.out_channels, g.patch(), cols, dy.data(), col.data(), grad_w.raw());
  grads.params.add("weight", std::move(grad_w));
  if (spec.bias) {
    Tensor grad_b({spec.out_channels});
    for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
      double acc = 0.0;
      for (std::size_t j = 0; j < cols; ++j) acc += dy[oc * cols + j];
      grad_b[oc] = static_cast<float>(acc);
    }
    grads.params.add("bias", std::move(grad_b));
  }

  std::vector<float> dcol(g.patch() * cols);
  gemm(true, false, g.patch(), cols, spec.out_channels, weight.raw(), dy.data(), dcol.data());
  col2im(dcol, g, grads.input);
  return grads;
}

namespace {

void check_batchnorm(const Tensor& x, const LayerParams& params, const LayerSpec& spec) {
  require_rank4(x, "batchnorm2d");
  if (x.dim(1) != spec.num_features || params.value("weight").size() != spec.num_features) {
    throw ShapeError("batchnorm2d: input " + shape_to_string(x.shape()) + " does not match " +
                     std::to_string(spec.num_features) + " features");
  }
}

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> var;  // biased
};

ChannelStats batch_stats(const Tensor& x) {
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  const double count = static_cast<double>(n * plane);
  ChannelStats s{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const float* p = x.raw() + (i * c + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j) sum += p[j];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const float* p = x.raw() + (i * c + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j) sq += (p[j] - mean) * (p[j] - mean);
    }
    s.mean[ch] = mean;
    s.var[ch] = sq / count;
  }
  return s;
}

}  // namespace

Tensor batchnorm2d(const Tensor& x, LayerParams& params, const LayerSpec& spec, Mode mode) {
  if (x.empty()) throw ShapeError("batchnorm2d: empty batch");
  check_batchnorm(x, params, spec);
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  const float* gamma = params.value("weight").raw();
  const float* beta = params.value("bias").raw();
  float* running_mean = params.value("running_mean").raw();
  float* running_var = params.value("running_var").raw();

  std::vector<double> mean(c), inv_std(c);
  if (mode == Mode::Train) {
    const ChannelStats s = batch_stats(x);
    const double count = static_cast<double>(n * plane);
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = s.mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(s.var[ch] + kBatchNormEpsilon);
      const double unbiased = count > 1 ? s.var[ch] * count / (count - 1) : s.var[ch];
      running_mean[ch] = static_cast<float>((1.0 - kBatchNormMomentum) * running_mean[ch] + kBatchNormMomentum * s.mean[ch]);
      running_var[ch] = static_cast<float>((1.0 - kBatchNormMomentum) * running_var[ch] + kBatchNormMomentum * unbiased);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(static_cast<double>(running_var[ch]) + kBatchNormEpsilon);
    }
  }

  Tensor out(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float scale = static_cast<float>(gamma[ch] * inv_std[ch]);
      const float shift = static_cast<float>(beta[ch] - gamma[ch] * inv_std[ch] * mean[ch]);
      const float* src = x.raw() + (i * c + ch) * plane;
      float* dst = out.raw() + (i * c + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j) dst[j] = src[j] * scale + shift;
    }
  }
  return out;
}

LayerGrads batchnorm2d_backward(const Tensor& x, const LayerParams& params, const LayerSpec& spec, Mode mode,
                                const Tensor& grad_out) {
  check_batchnorm(x, params, spec);
  require_same_shape(x, grad_out, "batchnorm2d backward");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  const double count = static_cast<double>(n * plane);
  const float* gamma = params.value("weight").raw();

  std::vector<double> mean(c), inv_std(c);
  if (mode == Mode::Train) {
    const ChannelStats s = batch_stats(x);
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = s.mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(s.var[ch] + kBatchNormEpsilon);
    }
  } else {
    const float* rm = params.value("running_mean").raw();
    const float* rv = params.value("running_var").raw();
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = rm[ch];
      inv_std[ch] = 1.0 / std::sqrt(static_cast<double>(rv[ch]) + kBatchNormEpsilon);
    }
  }

  LayerGrads grads{Tensor(x.shape()), {}};
  Tensor grad_gamma({c}), grad_beta({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const float* xs = x.raw() + (i * c + ch) * plane;
      const float* dys = grad_out.raw() + (i * c + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        sum_dy += dys[j];
        sum_dy_xhat += dys[j] * (xs[j] - mean[ch]) * inv_std[ch];
      }
    }
    grad_gamma[ch] = static_cast<float>(sum_dy_xhat);
    grad_beta[ch] = static_cast<float>(sum_dy);
    for (std::size_t i = 0; i < n; ++i) {
      const float* xs = x.raw() + (i * c + ch) * plane;
      const float* dys = grad_out.raw() + (i * c + ch) * plane;
      float* dxs = grads.input.raw() + (i * c + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        if (mode == Mode::Train) {
          const double xhat = (xs[j] - mean[ch]) * inv_std[ch];
          dxs[j] = static_cast<float>(gamma[ch] * inv_std[ch] / count * (count * dys[j] - sum_dy - xhat * sum_dy_xhat));
        } else {
          dxs[j] = static_cast<float>(dys[j] * gamma[ch] * inv_std[ch]);
        }
      }
    }
  }
  grads.params.add("weight", std::move(grad_gamma));
  grads.params.add("bias", std::move(grad_beta));
  return grads;
}

namespace {

float sigmoid(float v) {
  if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
  const float e = std::exp(v);
  return e / (1.0f + e);
}

}  // namespace

Tensor activation(const Tensor& x, Activation kind) {
  Tensor out(x.shape());
  const float* src = x.raw();
  float* dst = out.raw();
  if (kind == Activation::ReLU) {
    for (std::size_t i = 0; i < x.size(); ++i) dst[i] = src[i] > 0.0f ? src[i] : 0.0f;
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) dst[i] = sigmoid(src[i]);
  }
  return out;
}

Tensor activation_backward(const Tensor& x, Activation kind, const Tensor& grad_out) {
  require_same_shape(x, grad_out, "activation backward");
  Tensor grad(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (kind == Activation::ReLU) {
      grad[i] = x[i] > 0.0f ? grad_out[i] : 0.0f;
    } else {
      const float s = sigmoid(x[i]);
      grad[i] = grad_out[i] * s * (1.0f - s);
    }
  }
  return grad;
}

namespace {

struct PoolGeometry {
  std::size_t n, c, h, w, oh, ow;
};

PoolGeometry pool_geometry(const Tensor& x, const LayerSpec& spec) {
  require_rank4(x, "pool");
  PoolGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), 1, 1};
  if (spec.kind == LayerKind::MaxPool2d) {
    g.oh = conv_output_extent(g.h, spec.kernel, spec.stride, spec.padding);
    g.ow = conv_output_extent(g.w, spec.kernel, spec.stride, spec.padding);
  } else if (spec.kind != LayerKind::AdaptiveAvgPool2d) {
    throw std::invalid_argument("pool: spec kind is " + std::string(to_string(spec.kind)));
  }
  return g;
}

// Index within the input plane of the window maximum; first occurrence wins ties.
std::size_t window_argmax(const float* plane, const PoolGeometry& g, const LayerSpec& spec, std::size_t oy,
                          std::size_t ox) {
  std::size_t best = 0;
  float best_v = -std::numeric_limits<float>::infinity();
  bool found = false;
  for (std::size_t ky = 0; ky < spec.kernel; ++ky) {
    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * spec.stride + ky) - static_cast<std::ptrdiff_t>(spec.padding);
    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
    for (std::size_t kx = 0; kx < spec.kernel; ++kx) {
      const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * spec.stride + kx) - static_cast<std::ptrdiff_t>(spec.padding);
      if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
      const std::size_t idx = static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix);
      if (!found || plane[idx] > best_v) {
        best = idx;
        best_v = plane[idx];
        found = true;
      }
    }
  }
  return best;
}

}  // namespace

Tensor pool(const Tensor& x, const LayerSpec& spec) {
  const PoolGeometry g = pool_geometry(x, spec);
  Tensor out({g.n, g.c, g.oh, g.ow});
  const std::size_t in_plane = g.h * g.w;
  for (std::size_t nc = 0; nc < g.n * g.c; ++nc) {
    const float* src = x.raw() + nc * in_plane;
    if (spec.kind == LayerKind::AdaptiveAvgPool2d) {
      double sum = 0.0;
      for (std::size_t j = 0; j < in_plane; ++j) sum += src[j];
      out[nc] = static_cast<float>(sum / static_cast<double>(in_plane));
      continue;
    }
    float* dst = out.raw() + nc * g.oh * g.ow;
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) dst[oy * g.ow + ox] = src[window_argmax(src, g, spec, oy, ox)];
    }
  }
  return out;
}

Tensor pool_backward(const Tensor& x, const LayerSpec& spec, const Tensor& grad_out) {
  const PoolGeometry g = pool_geometry(x, spec);
  const Shape out_shape{g.n, g.c, g.oh, g.ow};
  if (grad_out.shape() != out_shape) {
    throw ShapeError("pool backward: grad_out " + shape_to_string(grad_out.shape()) + " vs output " +
                     shape_to_string(out_shape));
  }
  Tensor grad = Tensor::zeros_like(x);
  const std::size_t in_plane = g.h * g.w;
  for (std::size_t nc = 0; nc < g.n * g.c; ++nc) {
    float* dst = grad.raw() + nc * in_plane;
    if (spec.kind == LayerKind::AdaptiveAvgPool2d) {
      const float share = grad_out[nc] / static_cast<float>(in_plane);
      std::fill(dst, dst + in_plane, share);
      continue;
    }
    const float* src = x.raw() + nc * in_plane;
    const float* dy = grad_out.raw() + nc * g.oh * g.ow;
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) dst[window_argmax(src, g, spec, oy, ox)] += dy[oy * g.ow + ox];
    }
  }
  return grad;
}

namespace {

void check_linear(const Tensor& x, const LayerParams& params, const LayerSpec& spec) {
  const Shape expected_w{spec.out_features, spec.in_features};
  if (x.rank() != 2 || x.dim(1) != spec.in_features || params.value("weight").shape() != expected_w) {
    throw ShapeError("linear: input " + shape_to_string(x.shape()) + " incompatible with weight " +
                     shape_to_string(params.value("weight").shape()) + " (expects (N," +
                     std::to_string(spec.in_features) + "))");
  }
}

}  // namespace

Tensor linear(const Tensor& x, const LayerParams& params, const LayerSpec& spec) {
  check_linear(x, params, spec);
  const std::size_t n = x.dim(0);
  Tensor out({n, spec.out_features});
  detail::stable_gemm(n, spec.out_features, spec.in_features, x.raw(), params.value("weight").raw(), true,
                      out.raw());
  const float* b = params.value("bias").raw();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < spec.out_features; ++j) out[i * spec.out_features + j] += b[j];
  }
  return out;
}

LayerGrads linear_backward(const Tensor& x, const LayerParams& params, const LayerSpec& spec,
                           const Tensor& grad_out) {
  check_linear(x, params, spec);
  const std::size_t n = x.dim(0);
  if (grad_out.shape() != Shape{n, spec.out_features}) {
    throw ShapeError("linear backward: grad_out " + shape_to_string(grad_out.shape()));
  }
  LayerGrads grads{Tensor(x.shape()), {}};
  gemm(false, false, n, spec.in_features, spec.out_features, grad_out.raw(), params.value("weight").raw(),
       grads.input.raw());
  Tensor grad_w({spec.out_features, spec.in_features});
  gemm(true, false, spec.out_features, spec.in_features, n, grad_out.raw(), x.raw(), grad_w.raw());
  Tensor grad_b({spec.out_features});
  for (std::size_t k = 0; k < spec.out_features; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += grad_out[i * spec.out_features + k];
    grad_b[k] = static_cast<float>(acc);
  }
  grads.params.add("weight", std::move(grad_w));
  grads.params.add("bias", std::move(grad_b));
  return grads;
}

int set_kernel_threads(int threads) {
  threads = std::max(threads, 1);
  openblas_set_num_threads(threads);
  return threads;
}

int apply_thread_env() {
  const char* env = std::getenv("VEA_THREADS");
  if (env == nullptr || *env == '\0') return 0;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 1) {
    throw std::invalid_argument(std::string("VEA_THREADS must be a positive integer, got '") + env + "'");
  }
  return set_kernel_threads(static_cast<int>(v));
}

}  // namespace vea::nn
