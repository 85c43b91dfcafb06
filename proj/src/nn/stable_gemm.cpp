#include "vea/nn/stable_gemm.hpp"

#include <algorithm>
#include <vector>

namespace vea::nn::detail {

namespace {

constexpr std::size_t kLanes = 16;
constexpr std::size_t kNr = 2 * kLanes;  // columns per micro-tile
constexpr std::size_t kMr = 6;           // rows per micro-tile
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 96;
constexpr std::size_t kNc = 2048;

typedef float vec __attribute__((vector_size(kLanes * sizeof(float)), aligned(4)));

// Panels of kNr columns, zero-padded, laid out k-major.
void pack_b(const float* b, bool trans_b, std::size_t ldb, std::size_t k0, std::size_t kc, std::size_t j0,
            std::size_t nc, float* out) {
  for (std::size_t jp = 0; jp < nc; jp += kNr) {
    const std::size_t width = std::min(kNr, nc - jp);
    for (std::size_t kk = 0; kk < kc; ++kk) {
      float* dst = out + (jp / kNr) * kc * kNr + kk * kNr;
      for (std::size_t j = 0; j < width; ++j) {
        const std::size_t row = k0 + kk, col = j0 + jp + j;
        dst[j] = trans_b ? b[col * ldb + row] : b[row * ldb + col];
      }
      std::fill(dst + width, dst + kNr, 0.0f);
    }
  }
}

// Slivers of kMr rows, zero-padded, laid out k-major.
void pack_a(const float* a, std::size_t lda, std::size_t i0, std::size_t mc, std::size_t k0, std::size_t kc,
            float* out) {
  for (std::size_t ip = 0; ip < mc; ip += kMr) {
    const std::size_t height = std::min(kMr, mc - ip);
    float* dst = out + (ip / kMr) * kc * kMr;
    for (std::size_t kk = 0; kk < kc; ++kk) {
      for (std::size_t r = 0; r < kMr; ++r) dst[kk * kMr + r] = r < height ? a[(i0 + ip + r) * lda + k0 + kk] : 0.0f;
    }
  }
}

void micro_kernel(std::size_t kc, const float* ap, const float* bp, float* c, std::size_t ldc, std::size_t rows,
                  std::size_t cols, bool accumulate) {
  vec acc[kMr][2] = {};
  for (std::size_t kk = 0; kk < kc; ++kk) {
    const vec b0 = *reinterpret_cast<const vec*>(bp + kk * kNr);
    const vec b1 = *reinterpret_cast<const vec*>(bp + kk * kNr + kLanes);
    for (std::size_t r = 0; r < kMr; ++r) {
      const float av = ap[kk * kMr + r];
      acc[r][0] += av * b0;
      acc[r][1] += av * b1;
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    float* dst = c + r * ldc;
    const float* lanes = reinterpret_cast<const float*>(acc[r]);
    for (std::size_t j = 0; j < cols; ++j) dst[j] = accumulate ? dst[j] + lanes[j] : lanes[j];
  }
}

}  // namespace

void stable_gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, bool trans_b,
                 float* c) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    std::fill(c, c + m * n, 0.0f);
    return;
  }
  const std::size_t ldb = trans_b ? k : n;
  const auto round_up = [](std::size_t v, std::size_t to) { return (v + to - 1) / to * to; };
  std::vector<float> bpack(round_up(std::min(n, kNc), kNr) * std::min(k, kKc));
  std::vector<float> apack(round_up(std::min(m, kMc), kMr) * std::min(k, kKc));

  for (std::size_t j0 = 0; j0 < n; j0 += kNc) {
    const std::size_t nc = std::min(kNc, n - j0);
    for (std::size_t k0 = 0; k0 < k; k0 += kKc) {
      const std::size_t kc = std::min(kKc, k - k0);
      pack_b(b, trans_b, ldb, k0, kc, j0, nc, bpack.data());
      for (std::size_t i0 = 0; i0 < m; i0 += kMc) {
        const std::size_t mc = std::min(kMc, m - i0);
        pack_a(a, k, i0, mc, k0, kc, apack.data());
        for (std::size_t jp = 0; jp < nc; jp += kNr) {
          for (std::size_t ip = 0; ip < mc; ip += kMr) {
            micro_kernel(kc, apack.data() + (ip / kMr) * kc * kMr, bpack.data() + (jp / kNr) * kc * kNr,
                         c + (i0 + ip) * n + j0 + jp, n, std::min(kMr, mc - ip), std::min(kNr, nc - jp), k0 > 0);
          }
        }
      }
    }
  }
}

}  // namespace vea::nn::detail
