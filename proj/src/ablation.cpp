#include "memefusion/ablation.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "memefusion/errors.hpp"
#include "memefusion/image_io.hpp"

namespace memefusion {

std::size_t encode_manifest(const DatasetManifest& manifest, ImageVariant variant,
                            const PreprocessConfig& cfg, const Tokenizer& tokenizer,
                            const EncoderSpec& text_spec, const EncoderSpec& image_spec,
                            EmbeddingCache& cache) {
  const auto text_encoder = make_text_encoder(text_spec);
  const auto image_encoder = make_image_encoder(image_spec);
  const std::string text_digest = preprocessing_digest(cfg, ImageVariant::original);
  const std::string image_digest = preprocessing_digest(cfg, variant);

  std::size_t encoded = 0;
  for (const auto& s : manifest.samples) {
    bool touched = false;
    if (!cache.contains(text_spec.backend, s.id, text_digest)) {
      const auto tokens = tokenize_text(s.ocr_text, tokenizer, cfg.max_text_len);
      cache.put(text_spec.backend, s.id, text_digest, encode_text(tokens, *text_encoder).vector);
      touched = true;
    }
    if (!cache.contains(image_spec.backend, s.id, image_digest)) {
      const auto raster = load_image(manifest.resolve_image(s), s.id);
      const auto tensor = preprocess_image(raster, s.id, cfg.image_size);
      cache.put(image_spec.backend, s.id, image_digest,
                encode_image(tensor, *image_encoder).vector);
      touched = true;
    }
    if (touched) ++encoded;
  }
  return encoded;
}

EmbeddedDataset embed_manifest(const DatasetManifest& manifest, const EmbeddingCache& cache,
                               ImageVariant variant, const PreprocessConfig& cfg,
                               EncoderBackend text_backend, EncoderBackend image_backend,
                               bool require_labels) {
  const std::string text_digest = preprocessing_digest(cfg, ImageVariant::original);
  const std::string image_digest = preprocessing_digest(cfg, variant);
  const auto N = static_cast<Eigen::Index>(manifest.size());

  EmbeddedDataset data;
  data.num_classes = num_classes(manifest.task);
  data.image.resize(N, kImageEmbeddingDim);
  data.text.resize(N, kTextEmbeddingDim);
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto& s = manifest.samples[i];
    auto img = cache.get(image_backend, s.id, image_digest);
    auto txt = cache.get(text_backend, s.id, text_digest);
    if (!img || !txt) {
      throw DataError("sample '" + s.id + "' has no cached " + (img ? "text" : "image") +
                      " embedding for variant " + variant_name(variant) + "; run encode first");
    }
    if (img->size() != kImageEmbeddingDim || txt->size() != kTextEmbeddingDim) {
      throw DataError("sample '" + s.id + "': cached embedding has the wrong dimension");
    }
    data.image.row(i) = img->transpose();
    data.text.row(i) = txt->transpose();
    data.ids.push_back(s.id);
    if (require_labels) {
      auto y = s.label(manifest.task);
      if (!y) throw DataError("sample '" + s.id + "' is unlabeled");
      data.labels.push_back(*y);
    }
  }
  return data;
}

DatasetManifest make_text_removed_variant(
    const DatasetManifest& manifest, const std::map<std::string, std::vector<TextBox>>& boxes,
    const std::filesystem::path& out_dir, const TextRemovalOptions& opts) {
  std::filesystem::create_directories(out_dir);
  DatasetManifest out = manifest;
  out.base_dir = out_dir;
  for (auto& s : out.samples) {
    const auto raster = load_image(manifest.resolve_image(s), s.id);
    auto it = boxes.find(s.id);
    const Raster cleaned =
        it == boxes.end() ? raster : remove_text_regions(raster, it->second, opts);
    std::string file;
    for (char c : s.id) file += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    file += "_" + std::to_string(fnv1a(s.id) % 100000) + ".png";
    const auto target = std::filesystem::absolute(out_dir / file);
    save_image(cleaned, target);
    s.image_path = target.string();
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

std::vector<FoldSplit> make_splits(const EmbeddedDataset& data, const FoldAssignment& folds) {
  const auto by_fold = fold_rows(data, folds);
  std::vector<FoldSplit> splits(folds.k);
  for (int f = 0; f < folds.k; ++f) {
    for (int g = 0; g < folds.k; ++g) {
      if (g != f) splits[f].train.insert(splits[f].train.end(), by_fold[g].begin(), by_fold[g].end());
    }
    std::sort(splits[f].train.begin(), splits[f].train.end());
    splits[f].val = by_fold[f];
  }
  return splits;
}

}  // namespace

AblationResult ablation_run(const AblationInputs& inputs, const std::vector<ModelKind>& configs,
                            const TrainConfig& cfg, const HybridHeadConfig& head) {
  if (configs.empty()) throw std::invalid_argument("ablation_run: no configurations");
  for (auto kind : configs) {
    if ((kind == ModelKind::M3 || kind == ModelKind::M8) && !inputs.text_removed) {
      throw DataError(model_name(kind) + " needs the text-removed image variant");
    }
  }
  if (inputs.text_removed && inputs.text_removed->ids != inputs.original.ids) {
    throw DataError("text-removed embeddings do not match the original sample order");
  }

  const auto splits = make_splits(inputs.original, inputs.folds);
  AblationResult result;
  result.table.task = inputs.task;

  for (auto kind : configs) {
    const ModelConfigId id = ModelConfigId::of(kind);
    const EmbeddedDataset& data =
        id.image_variant == ImageVariant::text_removed ? *inputs.text_removed : inputs.original;

    AblationRow row;
    row.model = kind;
    row.description = model_description(kind);
    std::vector<GateSummary> gate_parts;
    std::vector<double> overlaps;
    std::vector<int> oof(data.size(), -1);

    for (std::size_t f = 0; f < splits.size(); ++f) {
      const auto train = data.subset(splits[f].train);
      const auto val = data.subset(splits[f].val);
      TrainConfig fold_cfg = cfg;
      fold_cfg.seed = mix_seed(cfg.seed, f);

      Matrix probs;
      if (kind == ModelKind::M5) {
        auto e = train_soft_vote({ModelConfigId::of(ModelKind::M1), ModelConfigId::of(ModelKind::M2)},
                                 train, val, fold_cfg, head);
        for (auto& m : e.members) result.records[kind].push_back(m.record);
        probs = e.predict_proba(val);
      } else if (kind == ModelKind::M6) {
        auto e = bagging_train(ModelConfigId::of(ModelKind::M4), 3, train, val,
                               mix_seed(fold_cfg.seed, 0xBA66), fold_cfg, head);
        for (auto& m : e.members) result.records[kind].push_back(m.record);
        overlaps.push_back(e.mean_bootstrap_overlap());
        probs = e.predict_proba(val);
      } else {
        auto trained = train_fold(id, train, val, fold_cfg, head);
        result.records[kind].push_back(trained.record);
        probs = predict_proba(trained.model, val);
        if (is_hybrid(kind)) gate_parts.push_back(gating_stats(trained.model, val));
      }
      const auto preds = argmax_rows(probs);
      for (std::size_t i = 0; i < preds.size(); ++i) oof[splits[f].val[i]] = preds[i];
      row.folds.push_back(evaluate_predictions(preds, val.labels, val.num_classes));
    }
    row.aggregate = aggregate_folds(row.folds);
    result.table.rows.push_back(std::move(row));
    result.predictions[kind] = std::move(oof);
    if (!gate_parts.empty()) result.gates[kind] = merge_gate_summaries(gate_parts);
    if (!overlaps.empty()) {
      double s = 0;
      for (double o : overlaps) s += o;
      result.bootstrap_overlap[kind] = s / static_cast<double>(overlaps.size());
    }
  }
  rank_rows(result.table);

  auto requested = [&](ModelKind k) {
    return std::find(configs.begin(), configs.end(), k) != configs.end();
  };
  if (requested(ModelKind::M5)) {
    result.table.notes.push_back(
        "M5 soft-votes the independently trained M1 (text) and M2 (image) heads; the member set is an interpretation.");
  }
  if (requested(ModelKind::M6)) {
    result.table.notes.push_back(
        "M6 bags k=3 early-fusion (M4) heads on bootstrap resamples; the base model is an interpretation.");
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "M6 bootstrap overlap (mean pairwise Jaccard of unique training indices): %.4f",
                  result.bootstrap_overlap[ModelKind::M6]);
    result.table.notes.emplace_back(buf);
  }
  for (const auto& [kind, g] : result.gates) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s gate: %.1f%% of held-out samples text-dominant (g_txt > 0.5), mean g_txt %.4f",
                  model_name(kind).c_str(), 100.0 * g.fraction_text_dominant, g.mean_g_txt);
    result.table.notes.emplace_back(buf);
  }
  return result;
}

void write_ablation_outputs(const AblationResult& result, const EmbeddedDataset& data,
                            const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  emit_report(result.table, ReportFormat::csv, out_dir / "ablation.csv");
  emit_report(result.table, ReportFormat::markdown, out_dir / "ablation.md");
  emit_report(result.table, ReportFormat::figure, out_dir / "ablation.svg");
  {
    std::ofstream out(out_dir / "ablation.json", std::ios::binary);
    out << ablation_to_json(result.table);
    std::ofstream folds(out_dir / "ablation_folds.csv", std::ios::binary);
    folds << ablation_folds_csv(result.table);
  }

  std::map<std::string, MetricsReport> per_model;
  for (const auto& row : result.table.rows) per_model[row.description] = row.aggregate.mean;
  const auto rows = per_class_table(per_model, result.table.task);
  {
    std::ofstream csv(out_dir / "per_class.csv", std::ios::binary);
    csv << per_class_csv(rows);
    std::ofstream md(out_dir / "per_class.md", std::ios::binary);
    md << per_class_markdown(rows);
  }

  nlohmann::ordered_json gating = nlohmann::ordered_json::object();
  for (const auto& [kind, g] : result.gates) {
    nlohmann::ordered_json heads = nlohmann::ordered_json::array();
    for (const auto& m : g.mean_attention) {
      heads.push_back({{m(0, 0), m(0, 1)}, {m(1, 0), m(1, 1)}});
    }
    gating[model_name(kind)] = {{"samples", g.samples},
                                {"fraction_text_dominant", g.fraction_text_dominant},
                                {"mean_g_img", g.mean_g_img},
                                {"mean_g_txt", g.mean_g_txt},
                                {"g_txt_histogram", g.histogram},
                                {"mean_attention_per_head", heads}};
  }
  for (const auto& [kind, overlap] : result.bootstrap_overlap) {
    gating["bootstrap_overlap_jaccard"][model_name(kind)] = overlap;
  }
  {
    std::ofstream out(out_dir / "gating.json", std::ios::binary);
    out << gating.dump(2) << '\n';
  }

  for (const auto& [kind, preds] : result.predictions) {
    emit_predictions(data.ids, preds, out_dir / ("oof_predictions_" + model_name(kind) + ".csv"));
  }
}

}  // namespace memefusion
