#include "vea/cli/suites.hpp"

#include <cmath>
#include <random>

#include "vea/model/backbone.hpp"

namespace vea::cli {

using nn::LayerSpec;

metrics::ConfusionMatrix reference_confusion() {
  return metrics::ConfusionMatrix::from_rows({{293, 0, 1, 0, 0, 0, 0, 4, 1, 1},
                                              {0, 296, 1, 0, 0, 3, 0, 0, 0, 0},
                                              {1, 1, 295, 0, 0, 0, 2, 1, 0, 0},
                                              {0, 0, 0, 285, 4, 0, 1, 0, 5, 5},
                                              {0, 0, 2, 2, 293, 2, 0, 0, 1, 0},
                                              {0, 3, 0, 0, 1, 296, 0, 0, 0, 0},
                                              {0, 0, 2, 0, 0, 0, 294, 1, 3, 0},
                                              {6, 0, 1, 0, 3, 0, 2, 286, 0, 2},
                                              {0, 2, 1, 1, 1, 0, 0, 1, 291, 3},
                                              {0, 0, 0, 8, 2, 0, 0, 1, 2, 287}},
                                             {"big", "sun", "moon", "cattle", "next", "field", "not", "arrow",
                                              "time", "wood"});
}

namespace {

Tensor uniform(const Shape& shape, std::uint64_t seed, float lo, float hi) {
  Tensor t(shape);
  std::mt19937_64 rng(seed);
  for (auto& v : t.data()) v = lo + (hi - lo) * static_cast<float>(rng() >> 40) / static_cast<float>(1 << 24);
  return t;
}

// Moves every value at least `gap` away from zero.
Tensor away_from_zero(Tensor t, float gap) {
  for (auto& v : t.data()) v = v < 0 ? v - gap : v + gap;
  return t;
}

// Distinct values 0.05 apart in a scrambled order, so no pooling window has a near-tie.
Tensor distinct(const Shape& shape) {
  Tensor t(shape);
  const std::size_t n = t.size();
  for (std::size_t i = 0; i < n; ++i) t[i] = 0.05f * static_cast<float>((i * 37) % n) - 1.0f;
  return t;
}

}  // namespace

std::vector<GradCase> gradient_suite(double eps, double tol, float inject_fault) {
  std::vector<GradCase> out;
  std::mt19937_64 rng(2024);
  nn::GradCheckOptions opts;
  opts.inject_fault = inject_fault;

  auto run = [&](const std::string& name, nn::Module& m, const Tensor& x, nn::Mode mode) {
    opts.mode = mode;
    out.push_back({name, nn::grad_check(m, x, eps, tol, opts)});
  };
  auto layer = [&](const std::string& name, LayerSpec spec, const Tensor& x, nn::Mode mode = nn::Mode::Train) {
    nn::Layer l(spec, rng);
    run(name, l, x, mode);
  };

  layer("conv2d 3x3", LayerSpec::conv2d(2, 3, 3, 1, 1), uniform({1, 2, 5, 5}, 1, -1, 1));
  layer("conv2d 3x3 stride 2", LayerSpec::conv2d(2, 3, 3, 2, 1, false), uniform({2, 2, 5, 5}, 2, -1, 1));
  layer("conv2d 1x1", LayerSpec::conv2d(3, 2, 1), uniform({2, 3, 4, 4}, 3, -1, 1));
  layer("batchnorm2d train", LayerSpec::batchnorm2d(3), uniform({4, 3, 3, 3}, 4, -2, 2));
  layer("batchnorm2d eval", LayerSpec::batchnorm2d(3), uniform({2, 3, 3, 3}, 5, -2, 2), nn::Mode::Eval);
  layer("relu", LayerSpec::relu(), away_from_zero(uniform({2, 3, 4, 4}, 6, -2, 2), 0.05f));
  layer("sigmoid", LayerSpec::sigmoid(), uniform({2, 3, 4, 4}, 7, -4, 4));
  layer("maxpool2d", LayerSpec::maxpool2d(3, 2, 1), distinct({2, 2, 6, 6}));
  layer("adaptive_avgpool2d", LayerSpec::adaptive_avgpool2d(), uniform({2, 3, 4, 5}, 8, -2, 2));
  layer("linear", LayerSpec::linear(6, 4), uniform({3, 6}, 9, -1, 1));

  model::VeaBlock gate({4, 3, 4}, rng);
  run("vea block", gate, uniform({2, 4, 5, 5}, 10, -2, 2), nn::Mode::Train);
  model::AttentionTap tap({4, 3, 4}, false, rng);
  run("vea gated tap", tap, uniform({2, 4, 5, 5}, 11, -2, 2), nn::Mode::Train);
  return out;
}

double bypass_max_abs_diff(std::size_t num_classes, std::size_t image_size, std::size_t images, std::uint64_t seed) {
  auto base = model::build_resnet18(num_classes, seed);
  auto cfg = model::VeaConfig::standard(num_classes);
  cfg.bypass_gates = true;
  auto vea = model::build_vea_resnet18(cfg, seed + 1);
  model::copy_shared_parameters(base, vea);
  const Tensor x = uniform({images, 3, image_size, image_size}, seed + 2, -1, 1);
  const Tensor a = model::forward(base, x, nn::Mode::Eval);
  const Tensor b = model::forward(vea, x, nn::Mode::Eval);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(static_cast<double>(a[i]) - b[i]));
  return worst;
}

}  // namespace vea::cli
