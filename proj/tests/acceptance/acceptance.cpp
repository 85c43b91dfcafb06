// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "vea/cli/suites.hpp"
#include "vea/data/idx.hpp"
#include "vea/metrics/metrics.hpp"
#include "vea/model/backbone.hpp"
#include "vea/nn/functional.hpp"
#include "vea/train/checkpoint.hpp"
#include "vea/train/train.hpp"

using namespace vea;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1
Outcome metrics_oracle() {
  // Reference OracleMNIST confusion matrix, rows are true classes.
  const metrics::ConfusionMatrix cm = metrics::ConfusionMatrix::from_rows(
      {{293, 0, 1, 0, 0, 0, 0, 4, 1, 1}, {0, 296, 1, 0, 0, 3, 0, 0, 0, 0}, {1, 1, 295, 0, 0, 0, 2, 1, 0, 0},
       {0, 0, 0, 285, 4, 0, 1, 0, 5, 5}, {0, 0, 2, 2, 293, 2, 0, 0, 1, 0}, {0, 3, 0, 0, 1, 296, 0, 0, 0, 0},
       {0, 0, 2, 0, 0, 0, 294, 1, 3, 0}, {6, 0, 1, 0, 3, 0, 2, 286, 0, 2}, {0, 2, 1, 1, 1, 0, 0, 1, 291, 3},
       {0, 0, 0, 8, 2, 0, 0, 1, 2, 287}},
      {});
  const auto r = metrics::aggregate(cm, metrics::Averaging::Macro);
  const bool pass = r.accuracy == 2916.0 / 3000.0 && near(r.precision, 0.9720, 5e-4) &&
                    near(r.sensitivity, 0.9720, 5e-4) && near(r.f1, 0.9720, 5e-4) &&
                    near(r.specificity, 0.9969, 5e-4) && near(r.mcc, 0.9689, 5e-4);
  return {pass, "acc=" + fmt("%.4f", r.accuracy) + " P=" + fmt("%.6f", r.precision) + " R=" +
                    fmt("%.6f", r.sensitivity) + " F1=" + fmt("%.6f", r.f1) + " spec=" + fmt("%.6f", r.specificity) +
                    " mcc=" + fmt("%.6f", r.mcc)};
}

// 2
Outcome mcc_consistency() {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double tn = static_cast<double>(rng() % 1000 + 1), fp = static_cast<double>(rng() % 1000 + 1);
    const double fn = static_cast<double>(rng() % 1000 + 1), tp = static_cast<double>(rng() % 1000 + 1);
    const auto cm = metrics::ConfusionMatrix::from_rows(
        {{static_cast<std::size_t>(tn), static_cast<std::size_t>(fp)},
         {static_cast<std::size_t>(fn), static_cast<std::size_t>(tp)}},
        {});
    const double formula = (tp * tn - fp * fn) / std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
    worst = std::max(worst, std::abs(metrics::multiclass_mcc(cm) - formula));
  }
  return {worst <= 1e-12, "max |diff|=" + fmt("%.3g", worst) + " over 1000 matrices"};
}

// 3
Outcome gradient_suite() {
  std::string failed;
  const auto cases = cli::gradient_suite(1e-3, 1e-3);
  double worst = 0.0;
  for (const auto& c : cases) {
    worst = std::max(worst, c.report.max_rel_err);
    if (!c.report.pass) failed += " " + c.name;
  }
  std::size_t caught = 0;
  const auto faulty = cli::gradient_suite(1e-3, 1e-3, 0.1f);
  for (const auto& c : faulty) caught += c.report.pass ? 0 : 1;
  const bool pass = failed.empty() && caught == faulty.size();
  std::string detail = std::to_string(cases.size()) + " cases, worst rel err " + fmt("%.2e", worst) +
                       ", injected fault caught in " + std::to_string(caught) + "/" + std::to_string(faulty.size());
  if (!failed.empty()) detail += ", failing:" + failed;
  return {pass, detail};
}

// 4
Outcome bypass_equivalence() {
  const double small = cli::bypass_max_abs_diff(10, 28, 16, 40);
  const double large = cli::bypass_max_abs_diff(6, 100, 16, 41);
  return {small <= 1e-6 && large <= 1e-6,
          "28x28/10: " + fmt("%.2e", small) + ", 100x100/6: " + fmt("%.2e", large)};
}

// Hand count from the ResNet-18 layer table.
std::size_t resnet18_params(std::size_t classes) {
  auto conv = [](std::size_t i, std::size_t o, std::size_t k) { return i * o * k * k; };
  auto bn = [](std::size_t c) { return 2 * c; };
  std::size_t total = conv(3, 64, 7) + bn(64);
  std::size_t in = 64;
  for (std::size_t out : {64, 128, 256, 512}) {
    total += conv(in, out, 3) + bn(out) + conv(out, out, 3) + bn(out);
    if (in != out) total += conv(in, out, 1) + bn(out);
    total += 2 * (conv(out, out, 3) + bn(out));
    in = out;
  }
  return total + 512 * classes + classes;
}

// 5
Outcome parameter_counts() {
  // Each gate block: 3x3 conv C->h with bias, 1x1 conv h->C with bias.
  const std::size_t surplus = 2 * (9 * 64 * 64 + 64 + 64 * 64 + 64) + (9 * 128 * 128 + 128 + 128 * 128 + 128);
  bool pass = resnet18_params(10) == 11181642 && surplus == 246272;
  std::string detail;
  for (std::size_t k : {10, 6}) {
    auto base = model::build_resnet18(k);
    auto vea = model::build_vea_resnet18(model::VeaConfig::standard(k));
    pass = pass && base.trainable_parameter_count() == resnet18_params(k) &&
           vea.trainable_parameter_count() - base.trainable_parameter_count() == surplus;
    detail += std::to_string(k) + " classes: " + std::to_string(base.trainable_parameter_count()) + " / " +
              std::to_string(vea.trainable_parameter_count()) + "; ";
  }
  return {pass, detail + "surplus " + std::to_string(surplus)};
}

// 6
Outcome idx_suite() {
  using data::IdxErrorKind;
  std::mt19937_64 rng(6);
  const data::IdxDtype dtypes[] = {data::IdxDtype::U8,  data::IdxDtype::I8,  data::IdxDtype::I16,
                                   data::IdxDtype::I32, data::IdxDtype::F32, data::IdxDtype::F64};
  const std::vector<int> valid_codes{0x08, 0x09, 0x0B, 0x0C, 0x0D, 0x0E};
  auto kind_of = [](const std::vector<std::uint8_t>& bytes) -> int {
    try {
      data::parse_idx(bytes);
    } catch (const data::IdxError& e) {
      return static_cast<int>(e.kind());
    } catch (...) {
      return -2;
    }
    return -1;
  };
  std::size_t round_trips = 0, corruptions = 0, wrong = 0;
  for (int trial = 0; trial < 100; ++trial) {
    data::IdxArray a;
    a.dtype = dtypes[rng() % 6];
    const std::size_t ndims = rng() % 4 + 1;
    for (std::size_t d = 0; d < ndims; ++d) a.dims.push_back(static_cast<std::uint32_t>(rng() % 6 + 1));
    a.payload.resize(a.count() * data::dtype_size(a.dtype));
    for (auto& b : a.payload) b = static_cast<std::uint8_t>(rng());
    const auto bytes = data::encode_idx(a);
    if (data::encode_idx(data::parse_idx(bytes)) == bytes) ++round_trips;

    auto expect = [&](std::vector<std::uint8_t> bad, IdxErrorKind kind) {
      ++corruptions;
      if (kind_of(bad) != static_cast<int>(kind)) ++wrong;
    };
    for (std::size_t pos = 0; pos < 2; ++pos) {
      auto bad = bytes;
      bad[pos] = static_cast<std::uint8_t>(rng() % 255 + 1);
      expect(bad, IdxErrorKind::BadMagic);
    }
    for (int code = 0; code < 256; ++code) {
      if (std::find(valid_codes.begin(), valid_codes.end(), code) != valid_codes.end()) continue;
      auto bad = bytes;
      bad[2] = static_cast<std::uint8_t>(code);
      expect(bad, IdxErrorKind::UnknownDtype);
    }
    for (std::size_t len = 0; len < bytes.size(); ++len) {
      expect(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<long>(len)), IdxErrorKind::Truncated);
    }
    auto longer = bytes;
    longer.push_back(0);
    expect(longer, IdxErrorKind::TrailingData);
  }
  return {round_trips == 100 && wrong == 0, std::to_string(round_trips) + "/100 round trips, " +
                                                std::to_string(corruptions - wrong) + "/" +
                                                std::to_string(corruptions) + " corruptions classified"};
}

// 7
Outcome schedule_oracle() {
  train::TrainConfig a;
  a.initial_lr = 0.01;
  train::TrainConfig b;
  b.initial_lr = 0.1;
  const bool pass = near(train::lr_schedule(0, a), 0.01, 1e-15) && near(train::lr_schedule(3, a), 0.01, 1e-15) &&
                    near(train::lr_schedule(4, a), 0.005, 1e-15) && near(train::lr_schedule(7, a), 0.005, 1e-15) &&
                    near(train::lr_schedule(8, a), 0.0025, 1e-15) && near(train::lr_schedule(0, b), 0.1, 1e-15) &&
                    near(train::lr_schedule(4, b), 0.05, 1e-15);
  return {pass, "0.01 -> " + fmt("%g", train::lr_schedule(4, a)) + " -> " + fmt("%g", train::lr_schedule(8, a)) +
                    ", 0.1 -> " + fmt("%g", train::lr_schedule(4, b))};
}

struct SmokeRun {
  std::vector<train::EpochStats> stats;
  std::vector<std::uint8_t> checkpoint;
};

const std::uint64_t kSmokeSeed = 1;

SmokeRun smoke_train(model::Architecture arch) {
  const std::string dir = std::string(VEA_TEST_DATA_DIR) + "/fashionmnist_subset/";
  std::vector<std::string> names;
  for (int i = 0; i < 10; ++i) names.push_back("class" + std::to_string(i));
  const auto train_ds =
      data::load_idx_dataset(dir + "train-images-idx3-ubyte.gz", dir + "train-labels-idx1-ubyte.gz", names);
  const auto test_ds = data::load_idx_dataset(dir + "t10k-images-idx3-ubyte.gz", dir + "t10k-labels-idx1-ubyte.gz", names);
  if (train_ds.size() != 2000 || test_ds.size() != 1000) throw std::runtime_error("unexpected subset size");

  auto net = arch == model::Architecture::ResNet18
                 ? model::build_resnet18(10, kSmokeSeed)
                 : model::build_vea_resnet18(model::VeaConfig::standard(10), kSmokeSeed);
  train::TrainConfig cfg;
  cfg.initial_lr = 0.01;
  cfg.batch_size = 64;
  cfg.epochs = 5;
  cfg.seed = kSmokeSeed;
  train::TrainState state{train::Sgd(cfg.momentum, cfg.weight_decay), 0, 0};
  SmokeRun run;
  run.stats = train::train(net, train_ds, &test_ds, cfg, state,
                           [&](const train::EpochStats& s, const train::TrainState&) {
                             std::printf("    %s epoch %d: loss %.4f, train %.4f, test %.4f (%.1f s)\n",
                                         std::string(model::to_string(arch)).c_str(), s.epoch + 1, s.mean_train_loss,
                                         s.train_accuracy, s.test_accuracy, s.epoch_seconds);
                             std::fflush(stdout);
                           })
                  .epochs;
  run.checkpoint =
      train::encode_checkpoint(train::make_checkpoint(net, &state.optimizer, "", cfg.epochs, cfg.seed, state.steps));
  return run;
}

SmokeRun first_vea_run;

// 8
Outcome training_smoke() {
  first_vea_run = smoke_train(model::Architecture::VeaResNet18);
  const auto& s = first_vea_run.stats;
  const SmokeRun base = smoke_train(model::Architecture::ResNet18);
  bool base_ok = base.stats.size() == 5;
  for (const auto& e : base.stats) base_ok = base_ok && std::isfinite(e.mean_train_loss);
  const bool pass = s.size() == 5 && s.back().test_accuracy >= 0.70 && s.back().mean_train_loss < s.front().mean_train_loss &&
                    base_ok;
  return {pass, "VEA test acc " + fmt("%.4f", s.back().test_accuracy) + ", loss " + fmt("%.4f", s.front().mean_train_loss) +
                    " -> " + fmt("%.4f", s.back().mean_train_loss) + "; baseline test acc " +
                    fmt("%.4f", base.stats.back().test_accuracy)};
}

// 9
Outcome determinism() {
  if (first_vea_run.stats.empty()) return {false, "criterion 8 did not produce a run"};
  const SmokeRun again = smoke_train(model::Architecture::VeaResNet18);
  bool same_stats = again.stats.size() == first_vea_run.stats.size();
  for (std::size_t i = 0; same_stats && i < again.stats.size(); ++i) {
    const auto &a = first_vea_run.stats[i], &b = again.stats[i];
    same_stats = a.epoch == b.epoch && a.lr == b.lr && a.mean_train_loss == b.mean_train_loss &&
                 a.train_accuracy == b.train_accuracy && a.test_accuracy == b.test_accuracy;
  }
  const bool same_ckpt = again.checkpoint == first_vea_run.checkpoint;
  return {same_stats && same_ckpt, std::string("epoch stats ") + (same_stats ? "identical" : "differ") +
                                       ", checkpoints " + (same_ckpt ? "identical" : "differ") + " (" +
                                       std::to_string(again.checkpoint.size()) + " bytes)"};
}

}  // namespace

int main() {
  setenv("VEA_THREADS", "1", 1);
  nn::apply_thread_env();

  struct Criterion {
    int id;
    const char* name;
    double budget_seconds;  // 0 = no limit
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "metrics oracle", 1, metrics_oracle},
      {2, "binary/multiclass MCC consistency", 1, mcc_consistency},
      {3, "gradient suite", 30, gradient_suite},
      {4, "bypass equivalence", 30, bypass_equivalence},
      {5, "parameter counts", 0, parameter_counts},
      {6, "IDX round trip and faults", 5, idx_suite},
      {7, "learning-rate schedule", 0, schedule_oracle},
      {8, "training smoke", 1800, training_smoke},
      {9, "determinism", 0, determinism},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_seconds > 0 && seconds > c.budget_seconds) {
      o.pass = false;
      o.detail += ", over the " + fmt("%g", c.budget_seconds) + " s budget";
    }
    failures += o.pass ? 0 : 1;
    std::printf("criterion %d (%s): %s - %s [%.2f s]\n", c.id, c.name, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                seconds);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
