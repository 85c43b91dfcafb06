#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vea/data/dataset.hpp"
#include "vea/metrics/metrics.hpp"
#include "vea/nn/module.hpp"

namespace vea::train {

/// Non-finite loss or gradient during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double initial_lr = 0.01;
  int lr_halving_period_epochs = 4;
  double lr_factor = 0.5;
  int epochs = 1;
  std::size_t batch_size = 64;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// initial_lr * lr_factor^floor(epoch / lr_halving_period_epochs); epochs are 0-based.
double lr_schedule(int epoch, const TrainConfig& cfg);

struct LossAndGrad {
  double loss = 0.0;
  Tensor grad;  // d(mean loss)/d(logits)
};

/// Mean softmax cross-entropy over the batch.
LossAndGrad cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Argmax per row; ties go to the lowest class index.
std::vector<int> predict(const Tensor& logits);

/// SGD with momentum: v <- m*v + g + wd*p; p <- p - lr*v. Velocities are
/// keyed by parameter name.
class Sgd {
 public:
  Sgd(double momentum, double weight_decay);

  /// Throws NumericalError, leaving every parameter untouched, if any
  /// gradient is non-finite.
  void step(const std::vector<nn::NamedParam>& params, double lr);

  std::map<std::string, Tensor>& velocities() noexcept { return velocity_; }
  const std::map<std::string, Tensor>& velocities() const noexcept { return velocity_; }

 private:
  double momentum_;
  double weight_decay_;
  std::map<std::string, Tensor> velocity_;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double mean_train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double epoch_seconds = 0.0;
};

/// `epoch,lr,mean_train_loss,train_acc,test_acc,epoch_seconds`
std::string epoch_stats_csv(const std::vector<EpochStats>& stats);

struct EvalResult {
  metrics::ConfusionMatrix confusion;
  metrics::MetricReport report;
  double inference_seconds = 0.0;  // forward passes only
};

EvalResult evaluate(nn::Module& model, const data::Dataset& ds, std::size_t batch_size = 64);

struct TrainState {
  Sgd optimizer;
  int next_epoch = 0;
  std::size_t steps = 0;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  std::size_t steps = 0;
  double train_seconds = 0.0;  // optimization only, per-epoch test evaluation excluded
};

using EpochCallback = std::function<void(const EpochStats&, const TrainState&)>;

/// Runs epochs state.next_epoch .. cfg.epochs-1. Each epoch shuffles with a
/// seed derived from (cfg.seed, epoch), so a resumed run repeats the batches
/// an uninterrupted one would see.
TrainResult train(nn::Module& model, const data::Dataset& train_ds, const data::Dataset* test_ds,
                  const TrainConfig& cfg, TrainState& state, const EpochCallback& on_epoch = {});

TrainResult train(nn::Module& model, const data::Dataset& train_ds, const data::Dataset* test_ds,
                  const TrainConfig& cfg);

}  // namespace vea::train
