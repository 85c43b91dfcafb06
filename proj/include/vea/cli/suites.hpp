#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vea/metrics/metrics.hpp"
#include "vea/nn/grad_check.hpp"

namespace vea::cli {

/// Reference 10-class OracleMNIST confusion matrix (rows are true classes).
metrics::ConfusionMatrix reference_confusion();

struct GradCase {
  std::string name;
  nn::GradCheckReport report;
};

/// Finite-difference checks of every layer kind, the VEA gate block and a
/// gated tap, on seeded inputs kept away from non-differentiable points.
/// `inject_fault` is added to every analytic gradient.
std::vector<GradCase> gradient_suite(double eps = 1e-3, double tol = 1e-3, float inject_fault = 0.0f);

/// Largest |logit difference| between plain ResNet-18 and VEA-ResNet-18
/// with bypassed gates and shared weights, on seeded random images.
double bypass_max_abs_diff(std::size_t num_classes, std::size_t image_size, std::size_t images, std::uint64_t seed);

}  // namespace vea::cli
