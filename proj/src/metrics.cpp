#include "memefusion/metrics.hpp"

#include <cmath>
#include <tuple>
#include <numeric>
#include <stdexcept>
#include <string>

namespace memefusion {

long ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), 0L); }

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels,
                          int num_classes) {
  if (preds.size() != labels.size()) {
    throw std::invalid_argument("confusion: predictions and labels differ in length");
  }
  if (preds.empty()) throw std::invalid_argument("confusion: empty input");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= num_classes || labels[i] < 0 || labels[i] >= num_classes) {
      throw std::invalid_argument("confusion: class index out of range at position " +
                                  std::to_string(i));
    }
    ++cm.at(labels[i], preds[i]);
  }
  return cm;
}

namespace {

double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

}  // namespace

MetricsReport metrics_from_confusion(const ConfusionMatrix& cm) {
  const int K = cm.num_classes;
  const long total = cm.total();
  if (total <= 0) throw std::invalid_argument("metrics_from_confusion: empty matrix");

  MetricsReport r;
  long trace = 0;
  for (int c = 0; c < K; ++c) {
    long tp = cm.at(c, c), predicted = 0, actual = 0;
    for (int o = 0; o < K; ++o) {
      predicted += cm.at(o, c);
      actual += cm.at(c, o);
    }
    trace += tp;
    const double p = ratio(tp, predicted);
    const double rc = ratio(tp, actual);
    r.precision.push_back(p);
    r.recall.push_back(rc);
    r.f1.push_back(ratio(2 * p * rc, p + rc));
  }
  r.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  r.macro_precision = std::accumulate(r.precision.begin(), r.precision.end(), 0.0) / K;
  r.macro_recall = std::accumulate(r.recall.begin(), r.recall.end(), 0.0) / K;
  r.macro_f1 = std::accumulate(r.f1.begin(), r.f1.end(), 0.0) / K;
  return r;
}

MetricsReport evaluate_predictions(std::span<const int> preds, std::span<const int> labels,
                                   int num_classes) {
  return metrics_from_confusion(confusion(preds, labels, num_classes));
}

AggregateReport aggregate_folds(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("aggregate_folds: no reports");
  const int K = reports.front().num_classes();
  for (const auto& r : reports) {
    if (r.num_classes() != K) throw std::invalid_argument("aggregate_folds: class count mismatch");
  }
  const double n = static_cast<double>(reports.size());

  auto stats = [&](auto getter) {
    double mean = 0;
    for (const auto& r : reports) mean += getter(r);
    mean /= n;
    double ss = 0;
    for (const auto& r : reports) ss += (getter(r) - mean) * (getter(r) - mean);
    return std::pair{mean, reports.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0};
  };

  AggregateReport agg;
  agg.folds = static_cast<int>(reports.size());
  std::tie(agg.mean.accuracy, agg.stddev.accuracy) = stats([](const MetricsReport& r) { return r.accuracy; });
  std::tie(agg.mean.macro_precision, agg.stddev.macro_precision) =
      stats([](const MetricsReport& r) { return r.macro_precision; });
  std::tie(agg.mean.macro_recall, agg.stddev.macro_recall) =
      stats([](const MetricsReport& r) { return r.macro_recall; });
  std::tie(agg.mean.macro_f1, agg.stddev.macro_f1) = stats([](const MetricsReport& r) { return r.macro_f1; });
  for (int c = 0; c < K; ++c) {
    auto [pm, ps] = stats([c](const MetricsReport& r) { return r.precision[c]; });
    auto [rm, rs] = stats([c](const MetricsReport& r) { return r.recall[c]; });
    auto [fm, fs] = stats([c](const MetricsReport& r) { return r.f1[c]; });
    agg.mean.precision.push_back(pm);
    agg.stddev.precision.push_back(ps);
    agg.mean.recall.push_back(rm);
    agg.stddev.recall.push_back(rs);
    agg.mean.f1.push_back(fm);
    agg.stddev.f1.push_back(fs);
  }
  return agg;
}

}  // namespace memefusion
