#pragma once

// Independent reference implementations used only by tests. Nothing here
// calls into the library's kernels.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "vea/tensor.hpp"

namespace vea::oracle {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

/// Direct summation cross-correlation, NCHW, square kernel.
inline Tensor naive_conv2d(const Tensor& x, const Tensor& weight, const Tensor* bias, std::size_t stride,
                           std::size_t pad) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oc = weight.dim(0), k = weight.dim(2);
  const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (w + 2 * pad - k) / stride + 1;
  Tensor out({n, oc, oh, ow});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < oc; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xo = 0; xo < ow; ++xo) {
          double acc = bias ? (*bias)[o] : 0.0;
          for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(xo * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
                acc += static_cast<double>(weight.at(o, ci, ky, kx)) * x.at(b, ci, iy, ix);
              }
          out.at(b, o, y, xo) = static_cast<float>(acc);
        }
  return out;
}

/// x[N,F] W[K,F]^T + b
inline Tensor naive_linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const std::size_t n = x.dim(0), f = x.dim(1), k = weight.dim(0);
  Tensor out({n, k});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double acc = bias[j];
      for (std::size_t q = 0; q < f; ++q) acc += static_cast<double>(x[i * f + q]) * weight[j * f + q];
      out[i * k + j] = static_cast<float>(acc);
    }
  return out;
}

/// Half-pixel-center bilinear sample of one plane, written per output pixel.
inline double bilinear_sample(const std::vector<double>& plane, std::size_t h, std::size_t w, std::size_t oy,
                              std::size_t ox, std::size_t out_h, std::size_t out_w) {
  double sy = (oy + 0.5) * static_cast<double>(h) / out_h - 0.5;
  double sx = (ox + 0.5) * static_cast<double>(w) / out_w - 0.5;
  sy = std::fmin(std::fmax(sy, 0.0), static_cast<double>(h - 1));
  sx = std::fmin(std::fmax(sx, 0.0), static_cast<double>(w - 1));
  const std::size_t y0 = static_cast<std::size_t>(std::floor(sy));
  const std::size_t x0 = static_cast<std::size_t>(std::floor(sx));
  const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = sy - y0, fx = sx - x0;
  auto at = [&](std::size_t y, std::size_t x) { return plane[y * w + x]; };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
}

}  // namespace vea::oracle
