#include "vea/train/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace vea::train {

using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(epoch)));
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(initial_lr > 0.0)) throw std::invalid_argument("initial_lr must be positive");
  if (!(lr_factor > 0.0 && lr_factor <= 1.0)) throw std::invalid_argument("lr_factor must be in (0, 1]");
  if (lr_halving_period_epochs < 1) throw std::invalid_argument("lr_halving_period_epochs must be at least 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (momentum < 0.0) throw std::invalid_argument("momentum must be non-negative");
  if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be non-negative");
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw std::invalid_argument("epoch must be non-negative");
  return cfg.initial_lr * std::pow(cfg.lr_factor, epoch / cfg.lr_halving_period_epochs);
}

LossAndGrad cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("cross_entropy: logits " + shape_to_string(logits.shape()) + " for " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  LossAndGrad out{0.0, Tensor(logits.shape())};
  std::vector<double> p(k);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw std::invalid_argument("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                                  " is outside [0," + std::to_string(k) + ")");
    }
    const float* row = logits.raw() + i * k;
    double mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += p[j] = std::exp(row[j] - mx);
    const double log_sum = std::log(sum);
    out.loss += log_sum - (row[labels[i]] - mx);
    for (std::size_t j = 0; j < k; ++j) {
      const double target = static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0;
      out.grad[i * k + j] = static_cast<float>((p[j] / sum - target) / static_cast<double>(n));
    }
  }
  out.loss /= static_cast<double>(n);
  return out;
}

std::vector<int> predict(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("predict: expected (N,K) logits, got " + shape_to_string(logits.shape()));
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (logits[i * k + j] > logits[i * k + best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

Sgd::Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

void Sgd::step(const std::vector<nn::NamedParam>& params, double lr) {
  for (const auto& p : params) {
    if (!p.param->trainable) continue;
    require_same_shape(p.param->value, p.param->grad, "gradient of " + p.name);
    if (!p.param->grad.all_finite()) throw NumericalError("non-finite gradient in " + p.name);
  }
  const auto m = static_cast<float>(momentum_), wd = static_cast<float>(weight_decay_), rate = static_cast<float>(lr);
  for (const auto& p : params) {
    if (!p.param->trainable) continue;
    Tensor& value = p.param->value;
    const Tensor& grad = p.param->grad;
    auto [it, fresh] = velocity_.try_emplace(p.name, Tensor::zeros_like(value));
    Tensor& v = it->second;
    require_same_shape(v, value, "velocity of " + p.name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      v[i] = m * v[i] + grad[i] + wd * value[i];
      value[i] -= rate * v[i];
    }
  }
}

std::string epoch_stats_csv(const std::vector<EpochStats>& stats) {
  std::ostringstream out;
  out << "epoch,lr,mean_train_loss,train_acc,test_acc,epoch_seconds\n";
  char line[256];
  for (const auto& s : stats) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%.9g,%.3f\n", s.epoch, s.lr, s.mean_train_loss,
                  s.train_accuracy, s.test_accuracy, s.epoch_seconds);
    out << line;
  }
  return out.str();
}

EvalResult evaluate(nn::Module& model, const data::Dataset& ds, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
  std::vector<int> predicted;
  double seconds = 0.0;
  const auto order = all_indices(ds.size());
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                       order.begin() + static_cast<std::ptrdiff_t>(std::min(start + batch_size, order.size())));
    const data::Batch batch = ds.gather(idx);
    const auto t0 = Clock::now();
    const Tensor logits = model.forward(batch.images, nn::Mode::Eval);
    seconds += seconds_since(t0);
    if (logits.rank() != 2 || logits.dim(1) != ds.num_classes()) {
      throw ShapeError("model emits " + shape_to_string(logits.shape()) + " logits for a " +
                       std::to_string(ds.num_classes()) + "-class dataset");
    }
    const auto p = predict(logits);
    predicted.insert(predicted.end(), p.begin(), p.end());
  }
  EvalResult r{metrics::confusion_from_predictions(ds.labels(), predicted, ds.num_classes(), ds.class_names()), {},
               seconds};
  r.report = metrics::aggregate(r.confusion, metrics::Averaging::Macro);
  return r;
}

TrainResult train(nn::Module& model, const data::Dataset& train_ds, const data::Dataset* test_ds,
                  const TrainConfig& cfg, TrainState& state, const EpochCallback& on_epoch) {
  cfg.validate();
  if (test_ds && test_ds->num_classes() != train_ds.num_classes()) {
    throw std::invalid_argument("train and test datasets disagree on the class count");
  }
  TrainResult result;
  const auto params = model.named_parameters();
  for (int epoch = state.next_epoch; epoch < cfg.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr_schedule(epoch, cfg);
    const data::Batches batches = data::make_batches(train_ds, cfg.batch_size, true, epoch_seed(cfg.seed, epoch));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const data::Batch batch = batches[b];
      model.zero_grad();
      const Tensor logits = model.forward(batch.images, nn::Mode::Train);
      if (logits.rank() != 2 || logits.dim(1) != train_ds.num_classes()) {
        throw ShapeError("model emits " + shape_to_string(logits.shape()) + " logits for a " +
                         std::to_string(train_ds.num_classes()) + "-class dataset");
      }
      const LossAndGrad lg = cross_entropy(logits, batch.labels);
      const std::string where = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(b);
      if (!std::isfinite(lg.loss)) throw NumericalError("non-finite loss at " + where);
      model.backward(lg.grad);
      try {
        state.optimizer.step(params, stats.lr);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at " + where);
      }
      ++state.steps;
      ++result.steps;
      loss_sum += lg.loss * static_cast<double>(batch.labels.size());
      const auto p = predict(logits);
      for (std::size_t i = 0; i < p.size(); ++i) correct += p[i] == batch.labels[i];
    }
    stats.mean_train_loss = loss_sum / static_cast<double>(train_ds.size());
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_ds.size());
    result.train_seconds += seconds_since(epoch_start);
    if (test_ds) stats.test_accuracy = evaluate(model, *test_ds, cfg.batch_size).report.accuracy;
    stats.epoch_seconds = seconds_since(epoch_start);
    state.next_epoch = epoch + 1;
    result.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats, state);
  }
  return result;
}

TrainResult train(nn::Module& model, const data::Dataset& train_ds, const data::Dataset* test_ds,
                  const TrainConfig& cfg) {
  TrainState state{Sgd(cfg.momentum, cfg.weight_decay)};
  return train(model, train_ds, test_ds, cfg, state);
}

}  // namespace vea::train
