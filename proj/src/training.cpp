#include "memefusion/training.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "memefusion/errors.hpp"

namespace memefusion {

void TrainConfig::validate() const {
  if (!(learning_rate > 0) || weight_decay < 0 || !(lr_factor > 0 && lr_factor < 1)) {
    throw ConfigError("learning_rate and lr_factor must be positive (lr_factor < 1), "
                      "weight_decay non-negative");
  }
  if (!(dropout_rate >= 0 && dropout_rate < 1)) throw ConfigError("dropout_rate must lie in [0,1)");
  if (!(label_smoothing >= 0 && label_smoothing < 1)) {
    throw ConfigError("label_smoothing must lie in [0,1)");
  }
  if (suppression_exponent < 0) throw ConfigError("suppression_exponent must be >= 0");
  if (lr_patience < 1 || stop_patience < 1) throw ConfigError("patiences must be >= 1");
  if (min_delta < 0) throw ConfigError("min_delta must be >= 0");
  if (batch_size < 1 || max_epochs < 1) throw ConfigError("batch_size and max_epochs must be >= 1");
}

ClassWeights compute_class_weights(std::span<const long> counts, double beta) {
  if (counts.empty()) throw std::invalid_argument("compute_class_weights: no classes");
  long n_max = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] <= 0) {
      throw DataError("class " + std::to_string(c) + " has zero samples; weight undefined");
    }
    n_max = std::max(n_max, counts[c]);
  }
  ClassWeights w;
  for (long n : counts) {
    w.weights.push_back(n == n_max ? 1.0 : std::pow(static_cast<double>(n_max) / n, beta));
  }
  return w;
}

Vector smoothed_target(int num_classes, int target, double eps) {
  Vector q = Vector::Constant(num_classes, eps / num_classes);
  q(target) += 1.0 - eps;
  return q;
}

double smoothed_weighted_ce(const Vector& logits, int target, const ClassWeights& weights,
                            double eps, Vector* grad) {
  const int K = static_cast<int>(logits.size());
  if (target < 0 || target >= K) throw std::invalid_argument("target class out of range");
  if (static_cast<int>(weights.weights.size()) != K) {
    throw std::invalid_argument("class weight count does not match logits");
  }
  if (!logits.allFinite()) throw std::domain_error("non-finite logits");
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  const Vector log_p = logits.array() - lse;
  const Vector q = smoothed_target(K, target, eps);
  const double w = weights.weights[target];
  if (grad) *grad = w * (log_p.array().exp().matrix() - q);
  return -w * q.dot(log_p);
}

double smoothed_weighted_ce(const Matrix& logits, std::span<const int> targets,
                            const ClassWeights& weights, double eps, Matrix* grad) {
  const auto B = logits.rows();
  if (static_cast<std::size_t>(B) != targets.size()) {
    throw std::invalid_argument("batch size mismatch between logits and targets");
  }
  if (grad) grad->resize(B, logits.cols());
  double total = 0;
  Vector g;
  for (Eigen::Index b = 0; b < B; ++b) {
    total += smoothed_weighted_ce(logits.row(b).transpose(), targets[b], weights, eps,
                                  grad ? &g : nullptr);
    if (grad) grad->row(b) = g.transpose() / static_cast<double>(B);
  }
  return total / static_cast<double>(B);
}

SchedulerState scheduler_init(const TrainConfig& cfg) {
  SchedulerState s;
  s.current_lr = cfg.learning_rate;
  return s;
}

SchedulerState scheduler_step(SchedulerState s, double val_metric, const TrainConfig& cfg) {
  if (val_metric > s.best_metric + cfg.min_delta) {
    s.best_metric = val_metric;
    s.epochs_since_improvement = 0;
  } else {
    ++s.epochs_since_improvement;
  }
  if (s.epochs_since_improvement > cfg.lr_patience) {
    s.current_lr *= cfg.lr_factor;
    ++s.reductions;
    s.epochs_since_improvement = 0;
  }
  return s;
}

StopState early_stop_step(StopState s, double val_metric, const TrainConfig& cfg) {
  ++s.epoch;
  if (val_metric > s.best_metric + cfg.min_delta) {
    s.best_metric = val_metric;
    s.best_epoch = s.epoch;
    s.epochs_since_improvement = 0;
  } else {
    ++s.epochs_since_improvement;
  }
  if (s.epochs_since_improvement > cfg.stop_patience) s.stop_flag = true;
  return s;
}

std::string TrainRecord::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,loss,val_macro_f1,lr\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.loss << ',' << e.val_macro_f1 << ',' << e.lr << '\n';
  }
  return out.str();
}

EmbeddedDataset EmbeddedDataset::subset(std::span<const std::size_t> rows) const {
  EmbeddedDataset out;
  out.num_classes = num_classes;
  out.image.resize(static_cast<Eigen::Index>(rows.size()), image.cols());
  out.text.resize(static_cast<Eigen::Index>(rows.size()), text.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    out.ids.push_back(ids[rows[i]]);
    if (image.cols() > 0) out.image.row(static_cast<Eigen::Index>(i)) = image.row(r);
    if (text.cols() > 0) out.text.row(static_cast<Eigen::Index>(i)) = text.row(r);
    if (!labels.empty()) out.labels.push_back(labels[rows[i]]);
  }
  return out;
}

std::vector<long> EmbeddedDataset::class_counts() const {
  std::vector<long> counts(num_classes, 0);
  for (int y : labels) ++counts.at(y);
  return counts;
}

Matrix predict_proba(const FusionModel& model, const EmbeddedDataset& data) {
  constexpr Eigen::Index kChunk = 256;
  const auto N = static_cast<Eigen::Index>(data.size());
  Matrix probs(N, model.head_config().num_classes);
  for (Eigen::Index start = 0; start < N; start += kChunk) {
    const Eigen::Index n = std::min(kChunk, N - start);
    Matrix img = data.image.cols() > 0 ? Matrix(data.image.middleRows(start, n)) : Matrix();
    Matrix txt = data.text.cols() > 0 ? Matrix(data.text.middleRows(start, n)) : Matrix();
    auto pass = model.forward(img.size() ? &img : nullptr, txt.size() ? &txt : nullptr,
                              false, nullptr);
    probs.middleRows(start, n) = softmax_rows(pass.logits);
  }
  return probs;
}

std::vector<int> argmax_rows(const Matrix& probs) {
  std::vector<int> out(probs.rows());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    Eigen::Index idx;
    probs.row(r).maxCoeff(&idx);
    out[r] = static_cast<int>(idx);
  }
  return out;
}

TrainResult train_fold(const ModelConfigId& config, const EmbeddedDataset& train,
                       const EmbeddedDataset& val, const TrainConfig& cfg,
                       const HybridHeadConfig& head) {
  HybridHeadConfig h = head;
  h.num_classes = train.num_classes;
  h.dropout_rate = cfg.dropout_rate;
  if (train.image.cols() > 0) h.image_dim = static_cast<int>(train.image.cols());
  if (train.text.cols() > 0) h.text_dim = static_cast<int>(train.text.cols());
  return train_fold(FusionModel(config, h, mix_seed(cfg.seed, 0x5EED)), train, val, cfg);
}

TrainResult train_fold(FusionModel model, const EmbeddedDataset& train,
                       const EmbeddedDataset& val, const TrainConfig& cfg,
                       const std::vector<std::string>& frozen_param_names) {
  cfg.validate();
  if (train.size() == 0 || val.size() == 0) {
    throw std::invalid_argument("train_fold: empty train or validation set");
  }
  if (train.labels.size() != train.size() || val.labels.size() != val.size()) {
    throw DataError("train_fold: every sample needs a label");
  }

  const ClassWeights weights =
      compute_class_weights(train.class_counts(), cfg.suppression_exponent);

  const std::set<std::string> frozen(frozen_param_names.begin(), frozen_param_names.end());
  ParamList trainable;
  for (auto* p : model.parameters()) {
    if (!frozen.count(p->name)) trainable.push_back(p);
  }
  AdamW opt(trainable, {.weight_decay = cfg.weight_decay});

  Rng order_rng(mix_seed(cfg.seed, 0x0DE5));
  Rng dropout_rng(mix_seed(cfg.seed, 0xD509));
  SchedulerState sched = scheduler_init(cfg);
  StopState stop;
  TrainRecord record;
  std::vector<Matrix> best_state = model.state();

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const bool use_img = needs_image(model.config().id);
  const bool use_txt = needs_text(model.config().id);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    order_rng.shuffle(order);
    const double lr = sched.current_lr;
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      const std::span<const std::size_t> rows(order.data() + start, n);
      Matrix img, txt;
      std::vector<int> targets(n);
      if (use_img) img.resize(static_cast<Eigen::Index>(n), train.image.cols());
      if (use_txt) txt.resize(static_cast<Eigen::Index>(n), train.text.cols());
      for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(rows[i]);
        if (use_img) img.row(static_cast<Eigen::Index>(i)) = train.image.row(r);
        if (use_txt) txt.row(static_cast<Eigen::Index>(i)) = train.text.row(r);
        targets[i] = train.labels[rows[i]];
      }
      zero_grads(model.parameters());
      auto pass = model.forward(use_img ? &img : nullptr, use_txt ? &txt : nullptr, true,
                                &dropout_rng);
      Matrix dlogits;
      double loss;
      try {
        loss = smoothed_weighted_ce(pass.logits, targets, weights, cfg.label_smoothing, &dlogits);
      } catch (const std::domain_error&) {
        throw DivergenceError(epoch, "non-finite logits at epoch " + std::to_string(epoch));
      }
      if (!std::isfinite(loss)) {
        throw DivergenceError(epoch, "non-finite loss at epoch " + std::to_string(epoch));
      }
      model.backward(pass, dlogits);
      opt.step(lr);
      loss_sum += loss * static_cast<double>(n);
    }
    const double epoch_loss = loss_sum / static_cast<double>(train.size());
    if (!std::isfinite(epoch_loss)) {
      throw DivergenceError(epoch, "non-finite loss at epoch " + std::to_string(epoch));
    }

    const auto preds = argmax_rows(predict_proba(model, val));
    const double val_f1 = evaluate_predictions(preds, val.labels, val.num_classes).macro_f1;
    record.epochs.push_back({epoch, epoch_loss, val_f1, lr});

    stop = early_stop_step(stop, val_f1, cfg);
    if (stop.best_epoch == epoch) best_state = model.state();
    sched = scheduler_step(sched, val_f1, cfg);
    record.stopped_epoch = epoch;
    if (stop.stop_flag) break;
  }
  record.best_epoch = stop.best_epoch;
  model.load_state(best_state);
  return {std::move(record), std::move(model)};
}

std::vector<std::vector<std::size_t>> fold_rows(const EmbeddedDataset& data,
                                                const FoldAssignment& folds) {
  std::unordered_map<std::string, int> lookup;
  for (const auto& [id, f] : folds.assignment) lookup[id] = f;
  std::vector<std::vector<std::size_t>> rows(folds.k);
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto it = lookup.find(data.ids[i]);
    if (it == lookup.end()) throw DataError("sample '" + data.ids[i] + "' has no fold");
    if (it->second < 0 || it->second >= folds.k) throw DataError("fold index out of range");
    rows[it->second].push_back(i);
  }
  return rows;
}

std::vector<FoldResult> run_cv(const ModelConfigId& config, const EmbeddedDataset& data,
                               const FoldAssignment& folds, const TrainConfig& cfg,
                               const HybridHeadConfig& head) {
  const auto by_fold = fold_rows(data, folds);
  std::vector<FoldResult> results;
  for (int f = 0; f < folds.k; ++f) {
    std::vector<std::size_t> train_rows;
    for (int g = 0; g < folds.k; ++g) {
      if (g != f) train_rows.insert(train_rows.end(), by_fold[g].begin(), by_fold[g].end());
    }
    std::sort(train_rows.begin(), train_rows.end());
    const auto train = data.subset(train_rows);
    const auto val = data.subset(by_fold[f]);

    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(f));
    auto result = train_fold(config, train, val, fold_cfg, head);

    FoldResult fr;
    fr.fold = f;
    fr.record = std::move(result.record);
    fr.val_rows = by_fold[f];
    fr.predictions = argmax_rows(predict_proba(result.model, val));
    fr.metrics = evaluate_predictions(fr.predictions, val.labels, val.num_classes);
    results.push_back(std::move(fr));
  }
  return results;
}

}  // namespace memefusion
