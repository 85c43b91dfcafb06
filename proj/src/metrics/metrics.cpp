#include "vea/metrics/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace vea::metrics {

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes, std::vector<std::string> class_names)
    : k_(num_classes), names_(std::move(class_names)), counts_(num_classes * num_classes, 0) {
  if (k_ == 0) throw std::invalid_argument("confusion matrix needs at least one class");
  if (names_.empty()) {
    for (std::size_t c = 0; c < k_; ++c) names_.push_back(std::to_string(c));
  }
  if (names_.size() != k_) {
    throw std::invalid_argument(std::to_string(names_.size()) + " class names for " + std::to_string(k_) +
                                " classes");
  }
}

ConfusionMatrix ConfusionMatrix::from_rows(const std::vector<std::vector<std::uint64_t>>& rows,
                                           std::vector<std::string> class_names) {
  ConfusionMatrix cm(rows.size(), std::move(class_names));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t].size() != rows.size()) throw std::invalid_argument("confusion rows must form a square matrix");
    for (std::size_t p = 0; p < rows.size(); ++p) cm.at(t, p) = rows[t][p];
  }
  return cm;
}

std::uint64_t& ConfusionMatrix::at(std::size_t truth, std::size_t predicted) {
  if (truth >= k_ || predicted >= k_) throw std::out_of_range("confusion cell out of range");
  return counts_[truth * k_ + predicted];
}

std::uint64_t ConfusionMatrix::at(std::size_t truth, std::size_t predicted) const {
  if (truth >= k_ || predicted >= k_) throw std::out_of_range("confusion cell out of range");
  return counts_[truth * k_ + predicted];
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < k_; ++p) s += at(truth, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t predicted) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < k_; ++t) s += at(t, predicted);
  return s;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (std::size_t c = 0; c < k_; ++c) s += at(c, c);
  return s;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (auto v : counts_) s += v;
  return s;
}

ConfusionMatrix confusion_from_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                                           std::size_t num_classes, std::vector<std::string> class_names) {
  if (truth.size() != predicted.size()) {
    throw std::invalid_argument(std::to_string(truth.size()) + " true labels but " +
                                std::to_string(predicted.size()) + " predictions");
  }
  ConfusionMatrix cm(num_classes, std::move(class_names));
  const auto k = static_cast<long long>(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (int label : {truth[i], predicted[i]}) {
      if (label < 0 || label >= k) {
        throw std::invalid_argument("label " + std::to_string(label) + " at index " + std::to_string(i) +
                                    " is outside [0," + std::to_string(k) + ")");
      }
    }
    ++cm.at(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(predicted[i]));
  }
  return cm;
}

BinaryCounts binary_counts_for_class(const ConfusionMatrix& cm, std::size_t c) {
  if (c >= cm.num_classes()) throw std::out_of_range("class " + std::to_string(c) + " out of range");
  BinaryCounts b;
  b.tp = cm.at(c, c);
  b.fp = cm.col_sum(c) - b.tp;
  b.fn = cm.row_sum(c) - b.tp;
  b.tn = cm.total() - b.tp - b.fp - b.fn;
  return b;
}

BinaryMetrics binary_metrics(const BinaryCounts& b) {
  const double tp = static_cast<double>(b.tp), tn = static_cast<double>(b.tn);
  const double fp = static_cast<double>(b.fp), fn = static_cast<double>(b.fn);
  BinaryMetrics m;
  m.accuracy = ratio(tp + tn, tp + tn + fp + fn);
  m.precision = ratio(tp, tp + fp);
  m.sensitivity = ratio(tp, tp + fn);
  m.specificity = ratio(tn, fp + tn);
  m.f1 = ratio(2.0 * m.precision * m.sensitivity, m.precision + m.sensitivity);
  m.mcc = ratio(tp * tn - fp * fn, std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)));
  return m;
}

double multiclass_mcc(const ConfusionMatrix& cm) {
  const double n = static_cast<double>(cm.total());
  double rc = 0, rr = 0, cc = 0;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) {
    const double r = static_cast<double>(cm.row_sum(c)), p = static_cast<double>(cm.col_sum(c));
    rc += r * p;
    rr += r * r;
    cc += p * p;
  }
  return ratio(n * static_cast<double>(cm.trace()) - rc, std::sqrt((n * n - rr) * (n * n - cc)));
}

double macro_binary_mcc(const ConfusionMatrix& cm) {
  double sum = 0;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) sum += binary_metrics(binary_counts_for_class(cm, c)).mcc;
  return sum / static_cast<double>(cm.num_classes());
}

std::string to_string(Averaging averaging) { return averaging == Averaging::Macro ? "macro" : "micro"; }

MetricReport aggregate(const ConfusionMatrix& cm, Averaging averaging) {
  if (cm.total() == 0) throw std::invalid_argument("cannot aggregate an empty confusion matrix");
  MetricReport r;
  r.averaging = averaging;
  BinaryCounts pooled;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) {
    ClassMetrics cls{cm.class_names()[c], binary_counts_for_class(cm, c), {}};
    cls.metrics = binary_metrics(cls.counts);
    pooled.tp += cls.counts.tp;
    pooled.tn += cls.counts.tn;
    pooled.fp += cls.counts.fp;
    pooled.fn += cls.counts.fn;
    r.per_class.push_back(std::move(cls));
  }
  if (averaging == Averaging::Macro) {
    for (const auto& cls : r.per_class) {
      r.precision += cls.metrics.precision;
      r.sensitivity += cls.metrics.sensitivity;
      r.specificity += cls.metrics.specificity;
      r.f1 += cls.metrics.f1;
      r.binary_mcc += cls.metrics.mcc;
    }
    const double k = static_cast<double>(cm.num_classes());
    r.precision /= k;
    r.sensitivity /= k;
    r.specificity /= k;
    r.f1 /= k;
    r.binary_mcc /= k;
  } else {
    const BinaryMetrics m = binary_metrics(pooled);
    r.precision = m.precision;
    r.sensitivity = m.sensitivity;
    r.specificity = m.specificity;
    r.f1 = m.f1;
    r.binary_mcc = m.mcc;
  }
  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
  r.mcc = multiclass_mcc(cm);
  return r;
}

std::string report_csv(const ConfusionMatrix& cm) {
  const MetricReport macro = aggregate(cm, Averaging::Macro);
  const MetricReport micro = aggregate(cm, Averaging::Micro);
  std::ostringstream out;
  out << "metric,macro,micro\n";
  auto row = [&](const char* name, double a, double b) { out << name << ',' << fmt(a) << ',' << fmt(b) << '\n'; };
  row("accuracy", macro.accuracy, micro.accuracy);
  row("precision", macro.precision, micro.precision);
  row("sensitivity", macro.sensitivity, micro.sensitivity);
  row("specificity", macro.specificity, micro.specificity);
  row("f1", macro.f1, micro.f1);
  row("mcc", macro.mcc, micro.mcc);
  row("binary_mcc", macro.binary_mcc, micro.binary_mcc);
  out << "\nclass,precision,sensitivity,specificity,f1\n";
  for (const auto& cls : macro.per_class) {
    out << cls.name << ',' << fmt(cls.metrics.precision) << ',' << fmt(cls.metrics.sensitivity) << ','
        << fmt(cls.metrics.specificity) << ',' << fmt(cls.metrics.f1) << '\n';
  }
  return out.str();
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::ostringstream out;
  out << "true\\predicted";
  for (const auto& name : cm.class_names()) out << ',' << name;
  out << '\n';
  for (std::size_t t = 0; t < cm.num_classes(); ++t) {
    out << cm.class_names()[t];
    for (std::size_t p = 0; p < cm.num_classes(); ++p) out << ',' << cm.at(t, p);
    out << '\n';
  }
  return out.str();
}

}  // namespace vea::metrics
