#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace vea::metrics {

/// K x K counts; rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  ConfusionMatrix(std::size_t num_classes, std::vector<std::string> class_names = {});
  static ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows,
                                   std::vector<std::string> class_names = {});

  std::size_t num_classes() const noexcept { return k_; }
  const std::vector<std::string>& class_names() const noexcept { return names_; }

  std::uint64_t& at(std::size_t truth, std::size_t predicted);
  std::uint64_t at(std::size_t truth, std::size_t predicted) const;
  std::uint64_t row_sum(std::size_t truth) const;
  std::uint64_t col_sum(std::size_t predicted) const;
  std::uint64_t trace() const;
  std::uint64_t total() const;

 private:
  std::size_t k_;
  std::vector<std::string> names_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion_from_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                                           std::size_t num_classes, std::vector<std::string> class_names = {});

struct BinaryCounts {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::uint64_t total() const { return tp + tn + fp + fn; }
};

/// One-vs-rest reduction for class c.
BinaryCounts binary_counts_for_class(const ConfusionMatrix& cm, std::size_t c);

struct BinaryMetrics {
  double accuracy = 0, precision = 0, sensitivity = 0, specificity = 0, f1 = 0, mcc = 0;
};

/// Any 0/0 ratio evaluates to 0.
BinaryMetrics binary_metrics(const BinaryCounts& b);

/// (N*trace - sum row_k*col_k) / sqrt((N^2 - sum row_k^2)(N^2 - sum col_k^2)); 0 when degenerate.
double multiclass_mcc(const ConfusionMatrix& cm);

/// Unweighted mean of per-class binary MCC.
double macro_binary_mcc(const ConfusionMatrix& cm);

enum class Averaging { Macro, Micro };

std::string to_string(Averaging averaging);

struct ClassMetrics {
  std::string name;
  BinaryCounts counts;
  BinaryMetrics metrics;
};

struct MetricReport {
  Averaging averaging = Averaging::Macro;
  double accuracy = 0, precision = 0, sensitivity = 0, specificity = 0, f1 = 0;
  double mcc = 0;            // multiclass generalization
  double binary_mcc = 0;     // mean per-class (macro) or pooled-count (micro) binary MCC
  std::vector<ClassMetrics> per_class;
};

MetricReport aggregate(const ConfusionMatrix& cm, Averaging averaging);

/// `metric,macro,micro` rows, a blank line, then `class,precision,sensitivity,specificity,f1` rows.
std::string report_csv(const ConfusionMatrix& cm);

/// Class-name header row and column.
std::string confusion_csv(const ConfusionMatrix& cm);

}  // namespace vea::metrics
