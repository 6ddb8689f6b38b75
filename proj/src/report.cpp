#include "memefusion/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "memefusion/errors.hpp"

namespace memefusion {

namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

void rank_rows(AblationTable& table) {
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   [](const AblationRow& a, const AblationRow& b) {
                     if (a.aggregate.mean.macro_f1 != b.aggregate.mean.macro_f1) {
                       return a.aggregate.mean.macro_f1 > b.aggregate.mean.macro_f1;
                     }
                     if (a.aggregate.mean.accuracy != b.aggregate.mean.accuracy) {
                       return a.aggregate.mean.accuracy > b.aggregate.mean.accuracy;
                     }
                     return static_cast<int>(a.model) < static_cast<int>(b.model);
                   });
  for (std::size_t i = 0; i < table.rows.size(); ++i) table.rows[i].rank = static_cast<int>(i) + 1;
}

// ---------------------------------------------------------------------------
// Gating

GateSummary gating_stats(std::span<const GateWeights> gates) {
  GateSummary s;
  s.samples = static_cast<long>(gates.size());
  if (gates.empty()) return s;
  long dominant = 0;
  for (const auto& g : gates) {
    if (g.g_txt > 0.5) ++dominant;
    s.mean_g_img += g.g_img;
    s.mean_g_txt += g.g_txt;
    const int bin = std::clamp(static_cast<int>(g.g_txt * 10.0), 0, 9);
    ++s.histogram[bin];
  }
  const double n = static_cast<double>(gates.size());
  s.fraction_text_dominant = dominant / n;
  s.mean_g_img /= n;
  s.mean_g_txt /= n;
  return s;
}

GateSummary gating_stats(const FusionModel& model, const EmbeddedDataset& data) {
  if (!is_hybrid(model.config().id)) {
    throw std::invalid_argument("gating statistics need a hybrid (M7/M8) model");
  }
  auto pass = model.forward(&data.image, &data.text, false, nullptr);
  std::vector<GateWeights> gates;
  for (Eigen::Index r = 0; r < pass.gates.rows(); ++r) {
    gates.push_back({pass.gates(r, 0), pass.gates(r, 1)});
  }
  GateSummary s = gating_stats(gates);
  const int heads = model.head_config().num_heads;
  s.mean_attention.assign(heads, Eigen::Matrix2d::Zero());
  for (std::size_t i = 0; i < pass.attention.size(); ++i) {
    s.mean_attention[i % heads] += pass.attention[i];
  }
  for (auto& m : s.mean_attention) m /= static_cast<double>(std::max<long>(1, s.samples));
  return s;
}

GateSummary merge_gate_summaries(const std::vector<GateSummary>& parts) {
  GateSummary out;
  double dominant = 0;
  for (const auto& p : parts) {
    out.samples += p.samples;
    dominant += p.fraction_text_dominant * p.samples;
    out.mean_g_img += p.mean_g_img * p.samples;
    out.mean_g_txt += p.mean_g_txt * p.samples;
    for (std::size_t b = 0; b < out.histogram.size(); ++b) out.histogram[b] += p.histogram[b];
    if (out.mean_attention.size() < p.mean_attention.size()) {
      out.mean_attention.resize(p.mean_attention.size(), Eigen::Matrix2d::Zero());
    }
    for (std::size_t h = 0; h < p.mean_attention.size(); ++h) {
      out.mean_attention[h] += p.mean_attention[h] * static_cast<double>(p.samples);
    }
  }
  if (out.samples > 0) {
    const double n = static_cast<double>(out.samples);
    out.fraction_text_dominant = dominant / n;
    out.mean_g_img /= n;
    out.mean_g_txt /= n;
    for (auto& m : out.mean_attention) m /= n;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Per-class table

std::vector<std::string> class_labels(Task task) {
  if (task == Task::A) return {"Non-Hate (0)", "Hate (1)"};
  return {"Negative (0)", "Neutral (1)", "Positive (2)"};
}

std::vector<PerClassRow> per_class_table(const std::map<std::string, MetricsReport>& reports,
                                         Task task) {
  const auto labels = class_labels(task);
  std::vector<PerClassRow> rows;
  for (const auto& [model, r] : reports) {
    if (r.num_classes() != static_cast<int>(labels.size())) {
      throw std::invalid_argument("report for " + model + " has the wrong class count");
    }
    for (int c = 0; c < r.num_classes(); ++c) {
      rows.push_back({model, labels[c], r.precision[c], r.recall[c], r.f1[c]});
    }
  }
  return rows;
}

std::string per_class_csv(const std::vector<PerClassRow>& rows) {
  std::ostringstream out;
  out << "model,class,precision,recall,f1\n";
  for (const auto& r : rows) {
    out << csv_field(r.model) << ',' << csv_field(r.class_label) << ',' << fixed(r.precision, 2)
        << ',' << fixed(r.recall, 2) << ',' << fixed(r.f1, 2) << '\n';
  }
  return out.str();
}

std::string per_class_markdown(const std::vector<PerClassRow>& rows) {
  std::ostringstream out;
  out << "| Model | Class | Precision | Recall | F1 |\n|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    out << "| " << r.model << " | " << r.class_label << " | " << fixed(r.precision, 2) << " | "
        << fixed(r.recall, 2) << " | " << fixed(r.f1, 2) << " |\n";
  }
  return out.str();
}

void emit_predictions(std::span<const std::string> ids, std::span<const int> predictions,
                      const std::filesystem::path& path) {
  if (ids.size() != predictions.size()) {
    throw std::invalid_argument("emit_predictions: ids and predictions differ in length");
  }
  std::ostringstream out;
  out << "id,prediction\n";
  for (std::size_t i = 0; i < ids.size(); ++i) out << csv_field(ids[i]) << ',' << predictions[i] << '\n';
  write_text(path, out.str());
}

// ---------------------------------------------------------------------------
// Ablation table

ReportFormat parse_report_format(const std::string& s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  if (s == "figure" || s == "svg") return ReportFormat::figure;
  throw ConfigError("unknown report format '" + s + "' (csv, markdown, figure)");
}

std::string ablation_csv(const AblationTable& table) {
  std::ostringstream out;
  out << "rank,model,f1_macro,accuracy,precision,recall\n";
  for (const auto& r : table.rows) {
    const auto& m = r.aggregate.mean;
    out << r.rank << ',' << csv_field(r.description) << ',' << fixed(m.macro_f1, 4) << ','
        << fixed(m.accuracy, 4) << ',' << fixed(m.macro_precision, 4) << ','
        << fixed(m.macro_recall, 4) << '\n';
  }
  return out.str();
}

std::string ablation_markdown(const AblationTable& table) {
  std::ostringstream out;
  out << "| Rank | Model Configuration | F1 Macro | Accuracy | Precision | Recall |\n"
      << "|---|---|---|---|---|---|\n";
  for (const auto& r : table.rows) {
    const auto& m = r.aggregate.mean;
    out << "| " << r.rank << " | " << r.description << " | " << fixed(m.macro_f1, 4) << " | "
        << fixed(m.accuracy, 4) << " | " << fixed(m.macro_precision, 4) << " | "
        << fixed(m.macro_recall, 4) << " |\n";
  }
  out << "\nTask " << task_name(table.task)
      << ". Precision and Recall are macro-averaged. Values are means over cross-validation "
         "folds. Undefined precision/recall/F1 (0/0) count as 0.\n";
  for (const auto& note : table.notes) out << "\n- " << note;
  if (!table.notes.empty()) out << '\n';
  return out.str();
}

std::string ablation_folds_csv(const AblationTable& table) {
  std::ostringstream out;
  out.precision(17);
  out << "model,fold,f1_macro,accuracy,precision,recall\n";
  for (const auto& r : table.rows) {
    for (std::size_t f = 0; f < r.folds.size(); ++f) {
      const auto& m = r.folds[f];
      out << model_name(r.model) << ',' << f << ',' << m.macro_f1 << ',' << m.accuracy << ','
          << m.macro_precision << ',' << m.macro_recall << '\n';
    }
  }
  return out.str();
}

std::string ablation_svg(const AblationTable& table) {
  constexpr int kWidth = 720, kHeight = 400;
  constexpr int kLeft = 60, kRight = 20, kTop = 40, kBottom = 60;
  const int plot_w = kWidth - kLeft - kRight;
  const int plot_h = kHeight - kTop - kBottom;
  const std::size_t n = std::max<std::size_t>(1, table.rows.size());
  const double slot = static_cast<double>(plot_w) / static_cast<double>(n);
  const double bar = slot * 0.6;
  auto y_of = [&](double v) { return kTop + plot_h * (1.0 - std::clamp(v, 0.0, 1.0)); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << "Macro-F1 by configuration (task " << task_name(table.task) << ")</text>\n";
  for (int t = 0; t <= 10; t += 2) {
    const double v = t / 10.0;
    out << "<line x1=\"" << kLeft << "\" x2=\"" << kWidth - kRight << "\" y1=\"" << fixed(y_of(v), 2)
        << "\" y2=\"" << fixed(y_of(v), 2) << "\" stroke=\"#dddddd\"/>\n";
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << fixed(y_of(v) + 4, 2)
        << "\" text-anchor=\"end\">" << fixed(v, 1) << "</text>\n";
  }
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    const double mean = r.aggregate.mean.macro_f1;
    const double sd = r.aggregate.stddev.macro_f1;
    const double x = kLeft + slot * static_cast<double>(i) + (slot - bar) / 2;
    const double cx = x + bar / 2;
    out << "<rect x=\"" << fixed(x, 2) << "\" y=\"" << fixed(y_of(mean), 2) << "\" width=\""
        << fixed(bar, 2) << "\" height=\"" << fixed(y_of(0) - y_of(mean), 2)
        << "\" fill=\"#4a7ab5\"/>\n";
    out << "<line x1=\"" << fixed(cx, 2) << "\" x2=\"" << fixed(cx, 2) << "\" y1=\""
        << fixed(y_of(mean - sd), 2) << "\" y2=\"" << fixed(y_of(mean + sd), 2)
        << "\" stroke=\"black\"/>\n";
    for (double v : {mean - sd, mean + sd}) {
      out << "<line x1=\"" << fixed(cx - 6, 2) << "\" x2=\"" << fixed(cx + 6, 2) << "\" y1=\""
          << fixed(y_of(v), 2) << "\" y2=\"" << fixed(y_of(v), 2) << "\" stroke=\"black\"/>\n";
    }
    out << "<text x=\"" << fixed(cx, 2) << "\" y=\"" << fixed(y_of(mean + sd) - 4, 2)
        << "\" text-anchor=\"middle\">" << fixed(mean, 4) << "</text>\n";
    out << "<text x=\"" << fixed(cx, 2) << "\" y=\"" << kHeight - kBottom + 16
        << "\" text-anchor=\"middle\">" << model_name(r.model) << "</text>\n";
  }
  out << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft << "\" y1=\"" << kTop << "\" y2=\""
      << kTop + plot_h << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" x2=\"" << kWidth - kRight << "\" y1=\"" << kTop + plot_h
      << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
  out << "</svg>\n";
  return out.str();
}

void emit_report(const AblationTable& table, ReportFormat format,
                 const std::filesystem::path& path) {
  switch (format) {
    case ReportFormat::csv: write_text(path, ablation_csv(table)); break;
    case ReportFormat::markdown: write_text(path, ablation_markdown(table)); break;
    case ReportFormat::figure: write_text(path, ablation_svg(table)); break;
  }
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json report_json(const MetricsReport& m) {
  return {{"accuracy", m.accuracy},          {"precision", m.precision},
          {"recall", m.recall},              {"f1", m.f1},
          {"macro_precision", m.macro_precision}, {"macro_recall", m.macro_recall},
          {"macro_f1", m.macro_f1}};
}

MetricsReport report_from(const nlohmann::json& j) {
  MetricsReport m;
  m.accuracy = j.at("accuracy");
  m.precision = j.at("precision").get<std::vector<double>>();
  m.recall = j.at("recall").get<std::vector<double>>();
  m.f1 = j.at("f1").get<std::vector<double>>();
  m.macro_precision = j.at("macro_precision");
  m.macro_recall = j.at("macro_recall");
  m.macro_f1 = j.at("macro_f1");
  return m;
}

}  // namespace

std::string ablation_to_json(const AblationTable& table) {
  nlohmann::json j;
  j["task"] = task_name(table.task);
  j["notes"] = table.notes;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : table.rows) {
    nlohmann::json row = {{"rank", r.rank},
                          {"model", model_name(r.model)},
                          {"description", r.description},
                          {"mean", report_json(r.aggregate.mean)},
                          {"std", report_json(r.aggregate.stddev)},
                          {"folds", nlohmann::json::array()}};
    for (const auto& f : r.folds) row["folds"].push_back(report_json(f));
    j["rows"].push_back(std::move(row));
  }
  return j.dump(2) + "\n";
}

AblationTable ablation_from_json(const std::string& text) {
  AblationTable t;
  try {
    const auto j = nlohmann::json::parse(text);
    t.task = parse_task(j.at("task").get<std::string>());
    t.notes = j.value("notes", std::vector<std::string>{});
    for (const auto& row : j.at("rows")) {
      AblationRow r;
      r.rank = row.at("rank");
      r.model = parse_model_kind(row.at("model").get<std::string>());
      r.description = row.at("description");
      r.aggregate.mean = report_from(row.at("mean"));
      r.aggregate.stddev = report_from(row.at("std"));
      for (const auto& f : row.at("folds")) r.folds.push_back(report_from(f));
      r.aggregate.folds = static_cast<int>(r.folds.size());
      t.rows.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed ablation JSON: ") + e.what());
  }
  return t;
}

}  // namespace memefusion
