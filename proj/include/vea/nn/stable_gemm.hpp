#pragma once

#include <cstddef>

namespace vea::nn::detail {

/// C[m,n] = A[m,k] * op(B), all row-major; op(B) is B[k,n] or, with
/// trans_b, the transpose of B[n,k]. Every output element is accumulated in
/// the same order whatever m, n or its position, so a row or column of the
/// result depends only on the matching input row or column.
void stable_gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, bool trans_b,
                 float* c);

}  // namespace vea::nn::detail
