#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "memefusion/corpus.hpp"
#include "memefusion/fusion.hpp"
#include "memefusion/metrics.hpp"
#include "memefusion/training.hpp"

namespace memefusion {

struct AblationRow {
  int rank = 0;
  ModelKind model = ModelKind::M1;
  std::string description;
  AggregateReport aggregate;
  std::vector<MetricsReport> folds;
};

/// Ranked by mean macro-F1 (descending), then accuracy, then config id.
struct AblationTable {
  Task task = Task::A;
  std::vector<AblationRow> rows;
  /// Free-text footnotes printed under the table.
  std::vector<std::string> notes;
};

/// Sorts rows and assigns ranks 1..n.
void rank_rows(AblationTable& table);

struct GateSummary {
  long samples = 0;
  /// Fraction with g_txt > 0.5 (strict; ties are not text-dominant).
  double fraction_text_dominant = 0;
  double mean_g_img = 0;
  double mean_g_txt = 0;
  /// 10 equal-width bins of g_txt over [0, 1].
  std::vector<long> histogram = std::vector<long>(10, 0);
  /// Mean 2x2 attention map per head (row = query token: 0 image, 1 text).
  std::vector<Eigen::Matrix2d> mean_attention;
};

GateSummary gating_stats(std::span<const GateWeights> gates);
/// Eval-mode gates and attention maps of a hybrid model over `data`.
GateSummary gating_stats(const FusionModel& model, const EmbeddedDataset& data);
/// Sample-weighted merge of several summaries.
GateSummary merge_gate_summaries(const std::vector<GateSummary>& parts);

struct PerClassRow {
  std::string model;
  std::string class_label;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

/// Label strings per class, e.g. "Non-Hate (0)".
std::vector<std::string> class_labels(Task task);

/// Rows (model, class, precision, recall, F1), models in map order.
std::vector<PerClassRow> per_class_table(const std::map<std::string, MetricsReport>& reports,
                                         Task task);
std::string per_class_csv(const std::vector<PerClassRow>& rows);
std::string per_class_markdown(const std::vector<PerClassRow>& rows);

/// `id,prediction` with one row per sample.
void emit_predictions(std::span<const std::string> ids, std::span<const int> predictions,
                      const std::filesystem::path& path);

enum class ReportFormat { csv, markdown, figure };
ReportFormat parse_report_format(const std::string& s);

/// Column layout: rank, model, F1 Macro, Accuracy, Precision, Recall.
std::string ablation_csv(const AblationTable& table);
std::string ablation_markdown(const AblationTable& table);
/// SVG bar chart of mean macro-F1 with fold standard-deviation error bars.
std::string ablation_svg(const AblationTable& table);
/// Per-fold detail, full precision.
std::string ablation_folds_csv(const AblationTable& table);

void emit_report(const AblationTable& table, ReportFormat format,
                 const std::filesystem::path& path);

/// Lossless JSON form used by the `report` subcommand.
std::string ablation_to_json(const AblationTable& table);
AblationTable ablation_from_json(const std::string& text);

}  // namespace memefusion
