#include "vea/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace vea::nn {

namespace {

double projected_loss(Module& module, const Tensor& x, const Tensor& projection, Mode mode) {
  const Tensor y = module.forward(x, mode);
  double loss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) loss += static_cast<double>(y[i]) * projection[i];
  return loss;
}

std::vector<std::size_t> pick_indices(std::size_t n, std::size_t cap, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  cap = std::max<std::size_t>(cap, 64);
  if (n <= cap) return idx;
  for (std::size_t i = 0; i < cap; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckReport grad_check(Module& module, const Tensor& x, double eps, double tol,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  std::mt19937_64 rng(options.seed);

  module.zero_grad();
  const Tensor y = module.forward(x, options.mode);
  Tensor projection(y.shape());
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (auto& v : projection.data()) v = normal(rng);
  Tensor grad_x = module.backward(projection);

  auto params = module.named_parameters();
  if (!y.all_finite()) {
    report.worst_location = "forward output";
    return report;
  }

  // perturbations go to a private copy so the caller's input stays untouched
  Tensor probe = x;
  auto check = [&](const std::string& label, float& slot, float analytic) -> bool {
    analytic += options.inject_fault;
    const float saved = slot;
    slot = static_cast<float>(saved + eps);
    const double plus = projected_loss(module, probe, projection, options.mode);
    slot = static_cast<float>(saved - eps);
    const double minus = projected_loss(module, probe, projection, options.mode);
    slot = saved;
    const double numeric = (plus - minus) / (2.0 * eps);
    ++report.checked;
    if (!std::isfinite(numeric) || !std::isfinite(analytic)) {
      report.max_rel_err = std::numeric_limits<double>::infinity();
      report.worst_location = label + " (non-finite)";
      return false;
    }
    const double scale = std::max({std::abs(static_cast<double>(analytic)), std::abs(numeric), 1.0});
    const double err = std::abs(analytic - numeric) / scale;
    if (err >= report.max_rel_err) {
      report.max_rel_err = err;
      report.worst_location = label;
    }
    return true;
  };

  for (std::size_t i : pick_indices(x.size(), options.max_elements_per_tensor, rng)) {
    if (!check("input[" + std::to_string(i) + "]", probe[i], grad_x[i])) return report;
  }

  for (auto& [name, param] : params) {
    if (!param->trainable) continue;
    const Tensor analytic = param->grad;
    for (std::size_t i : pick_indices(param->value.size(), options.max_elements_per_tensor, rng)) {
      if (!check(name + "[" + std::to_string(i) + "]", param->value[i], analytic[i])) return report;
    }
  }

  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace vea::nn
