#pragma once

#include <span>
#include <vector>

namespace memefusion {

/// K x K counts, rows = true class, columns = predicted class.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<long> counts;

  explicit ConfusionMatrix(int k = 0) : num_classes(k), counts(static_cast<std::size_t>(k) * k, 0) {}

  long& at(int truth, int pred) { return counts[static_cast<std::size_t>(truth) * num_classes + pred]; }
  long at(int truth, int pred) const { return counts[static_cast<std::size_t>(truth) * num_classes + pred]; }
  long total() const;
};

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, int num_classes);

struct MetricsReport {
  double accuracy = 0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  double macro_precision = 0;
  double macro_recall = 0;
  double macro_f1 = 0;

  int num_classes() const { return static_cast<int>(f1.size()); }
};

/// Undefined ratios (0/0) count as 0, so a never-predicted class scores F1 = 0.
MetricsReport metrics_from_confusion(const ConfusionMatrix& cm);

MetricsReport evaluate_predictions(std::span<const int> preds, std::span<const int> labels,
                                   int num_classes);

/// Fold mean of every metric plus the sample standard deviation (n - 1).
struct AggregateReport {
  MetricsReport mean;
  MetricsReport stddev;
  int folds = 0;
};

AggregateReport aggregate_folds(const std::vector<MetricsReport>& reports);

}  // namespace memefusion
