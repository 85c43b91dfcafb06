#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "vea/nn/module.hpp"

namespace vea::nn {

struct GradCheckOptions {
  Mode mode = Mode::Train;
  /// Tensors larger than this are checked on a random subsample of this
  /// many elements (never fewer than 64).
  std::size_t max_elements_per_tensor = 256;
  std::uint64_t seed = 7;
  /// Added to every analytic gradient; used to prove the checker catches faults.
  float inject_fault = 0.0f;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  std::size_t checked = 0;
  /// Where the worst error (or the first non-finite value) was found.
  std::string worst_location;
};

/// Compares module.backward() with central differences of the scalar loss
/// sum(r * module.forward(x)) for a fixed random projection r. The error of
/// one element is |a - n| / max(|a|, |n|, 1).
GradCheckReport grad_check(Module& module, const Tensor& x, double eps, double tol,
                           const GradCheckOptions& options = {});

}  // namespace vea::nn
