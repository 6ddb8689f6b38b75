#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "memefusion/corpus.hpp"
#include "memefusion/fusion.hpp"
#include "memefusion/metrics.hpp"

namespace memefusion {

struct TrainConfig {
  double learning_rate = 2e-5;
  double weight_decay = 1e-2;
  double dropout_rate = 0.5;
  double label_smoothing = 0.1;
  double suppression_exponent = 0.3;
  double lr_factor = 0.5;
  int lr_patience = 5;
  int stop_patience = 10;
  double min_delta = 1e-4;
  int batch_size = 16;
  int max_epochs = 100;
  std::uint64_t seed = 42;

  void validate() const;
};

struct ClassWeights {
  std::vector<double> weights;
};

/// W_c = (N_max / N_c)^beta: the most frequent class gets exactly 1.
ClassWeights compute_class_weights(std::span<const long> counts, double beta);

/// Label-smoothed target: 1 - eps + eps/K on the target, eps/K elsewhere.
Vector smoothed_target(int num_classes, int target, double eps);

/// W_target * cross-entropy between the smoothed target and softmax(logits).
/// When `grad` is given it receives dLoss/dlogits.
double smoothed_weighted_ce(const Vector& logits, int target, const ClassWeights& weights,
                            double eps, Vector* grad = nullptr);

/// Batch mean of smoothed_weighted_ce over rows of `logits`.
double smoothed_weighted_ce(const Matrix& logits, std::span<const int> targets,
                            const ClassWeights& weights, double eps, Matrix* grad = nullptr);

/// Plateau learning-rate state. The monitored metric is higher-is-better.
struct SchedulerState {
  double best_metric = -std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;
  double current_lr = 0;
  int reductions = 0;
};

SchedulerState scheduler_init(const TrainConfig& cfg);
/// Improvement means metric > best + min_delta. Once the counter exceeds
/// lr_patience the rate is multiplied by lr_factor and the counter resets.
SchedulerState scheduler_step(SchedulerState state, double val_metric, const TrainConfig& cfg);

struct StopState {
  double best_metric = -std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;
  bool stop_flag = false;
  int epoch = 0;
  int best_epoch = 0;
};

/// Sets stop_flag once the non-improving run exceeds stop_patience epochs.
StopState early_stop_step(StopState state, double val_metric, const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double loss = 0;
  double val_macro_f1 = 0;
  double lr = 0;
  bool operator==(const EpochRecord&) const = default;
};

struct TrainRecord {
  std::vector<EpochRecord> epochs;
  int stopped_epoch = 0;
  int best_epoch = 0;

  /// `epoch,loss,val_macro_f1,lr` with full precision.
  std::string to_csv() const;
  bool operator==(const TrainRecord&) const = default;
};

/// Embeddings and labels for a set of samples, rows in a fixed order.
struct EmbeddedDataset {
  std::vector<std::string> ids;
  Matrix image;  // N x image_dim (may be empty for text-only use)
  Matrix text;   // N x text_dim
  std::vector<int> labels;
  int num_classes = 2;

  std::size_t size() const { return ids.size(); }
  EmbeddedDataset subset(std::span<const std::size_t> rows) const;
  std::vector<long> class_counts() const;
};

struct TrainResult {
  TrainRecord record;
  /// Parameters restored to the best validation epoch.
  FusionModel model;
};

/// Optimizes every parameter of the head; see the overload for an explicit set.
TrainResult train_fold(const ModelConfigId& config, const EmbeddedDataset& train,
                       const EmbeddedDataset& val, const TrainConfig& cfg,
                       const HybridHeadConfig& head);

/// Throws DivergenceError (with the epoch) when the training loss is not finite.
TrainResult train_fold(FusionModel model, const EmbeddedDataset& train,
                       const EmbeddedDataset& val, const TrainConfig& cfg,
                       const std::vector<std::string>& frozen_param_names = {});

/// Eval-mode class probabilities, one row per sample.
Matrix predict_proba(const FusionModel& model, const EmbeddedDataset& data);
std::vector<int> argmax_rows(const Matrix& probs);

struct FoldResult {
  int fold = 0;
  TrainRecord record;
  MetricsReport metrics;
  std::vector<std::size_t> val_rows;
  std::vector<int> predictions;
};

/// Rows of `data` grouped by fold index, matched by id.
std::vector<std::vector<std::size_t>> fold_rows(const EmbeddedDataset& data,
                                                const FoldAssignment& folds);

/// Trains on folds != i and evaluates on fold i for every fold.
std::vector<FoldResult> run_cv(const ModelConfigId& config, const EmbeddedDataset& data,
                               const FoldAssignment& folds, const TrainConfig& cfg,
                               const HybridHeadConfig& head);

}  // namespace memefusion
