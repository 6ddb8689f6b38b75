// Command-line front end: split, preprocess, encode, train, ablate, predict, report.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "memefusion/ablation.hpp"
#include "memefusion/checkpoint.hpp"
#include "memefusion/config.hpp"
#include "memefusion/errors.hpp"
#include "memefusion/image_io.hpp"

namespace fs = std::filesystem;
using namespace memefusion;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kDiverged = 3 };

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string task = "A";
  bool toy_encoders = false;
};

RunConfig resolve_config(const Globals& g) {
  RunConfig cfg = g.config_path.empty() ? RunConfig{} : load_run_config(g.config_path);
  if (g.seed) cfg.train.seed = *g.seed;
  cfg.validate();
  return cfg;
}

// Without --toy-encoders the pretrained adapters are used when installed;
// otherwise the run degrades to the toy encoders with a warning.
bool use_toy(const Globals& g) {
  if (g.toy_encoders) return true;
  if (backend_available(EncoderBackend::pretrained_text) &&
      backend_available(EncoderBackend::pretrained_image)) {
    return false;
  }
  static bool warned = false;
  if (!warned) {
    std::cerr << "warning: pretrained encoders are not installed; using toy encoders\n";
    warned = true;
  }
  return true;
}

EncoderSpec text_spec(const Globals& g, const RunConfig& cfg) {
  return use_toy(g) ? EncoderSpec::toy_text(cfg.encoder_seed) : EncoderSpec::pretrained_text();
}
EncoderSpec image_spec(const Globals& g, const RunConfig& cfg) {
  return use_toy(g) ? EncoderSpec::toy_image(cfg.encoder_seed) : EncoderSpec::pretrained_image();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

EmbeddedDataset load_embedded(const Globals& g, const RunConfig& cfg, const std::string& manifest,
                              const std::string& cache_path, ImageVariant variant,
                              bool require_labels) {
  const Task task = parse_task(g.task);
  const auto m = load_manifest(manifest, task);
  const auto cache = EmbeddingCache::load(cache_path);
  return embed_manifest(m, cache, variant, cfg.preprocess, text_spec(g, cfg).backend,
                        image_spec(g, cfg).backend, require_labels);
}

std::string metrics_json(const MetricsReport& r) {
  nlohmann::ordered_json j = {{"accuracy", r.accuracy},
                              {"macro_precision", r.macro_precision},
                              {"macro_recall", r.macro_recall},
                              {"macro_f1", r.macro_f1},
                              {"precision", r.precision},
                              {"recall", r.recall},
                              {"f1", r.f1}};
  return j.dump(2) + "\n";
}

int run_split(const Globals& g, const std::string& manifest, const std::string& out,
              const std::string& csv, std::optional<int> k_flag) {
  const RunConfig cfg = resolve_config(g);
  const auto m = load_manifest(manifest, parse_task(g.task));
  const int k = k_flag.value_or(cfg.folds);
  const auto folds = stratified_kfold(m, k, cfg.train.seed);
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  save_folds(folds, out);
  if (!csv.empty()) write_text(csv, folds_to_csv(folds));

  const auto sizes = folds.fold_sizes();
  std::cout << "split " << m.size() << " samples into " << k << " folds:";
  for (auto s : sizes) std::cout << ' ' << s;
  std::cout << '\n';
  return kOk;
}

int run_preprocess(const Globals& g, const std::string& manifest, bool remove_text,
                   const std::string& boxes, const std::string& out_dir,
                   const std::string& out_manifest) {
  const RunConfig cfg = resolve_config(g);
  const auto m = load_manifest(manifest, parse_task(g.task));
  if (!remove_text) {
    // Dry run of the image pipeline: decode and normalize every image.
    for (const auto& s : m.samples) {
      preprocess_image(load_image(m.resolve_image(s), s.id), s.id, cfg.preprocess.image_size);
    }
    std::cout << "checked " << m.size() << " images\n";
    return kOk;
  }
  if (boxes.empty()) throw CLI::ValidationError("--remove-text requires --boxes");
  if (out_dir.empty()) throw CLI::ValidationError("--remove-text requires --out-dir");
  TextRemovalOptions opts;
  opts.box_confidence_min = cfg.preprocess.box_confidence_min;
  const auto cleaned = make_text_removed_variant(m, load_box_file(boxes), out_dir, opts);
  const fs::path target = out_manifest.empty() ? fs::path(out_dir) / "manifest.jsonl"
                                               : fs::path(out_manifest);
  save_manifest(cleaned, target);
  std::cout << "wrote " << cleaned.size() << " text-removed images, manifest " << target.string()
            << '\n';
  return kOk;
}

int run_encode(const Globals& g, const std::string& manifest, const std::string& cache_path,
               const std::string& variant) {
  const RunConfig cfg = resolve_config(g);
  const auto m = load_manifest(manifest, parse_task(g.task));
  auto cache = EmbeddingCache::load_or_empty(cache_path);
  HashingTokenizer tokenizer;
  const auto added = encode_manifest(m, parse_variant(variant), cfg.preprocess, tokenizer,
                                     text_spec(g, cfg), image_spec(g, cfg), cache);
  if (fs::path(cache_path).has_parent_path()) fs::create_directories(fs::path(cache_path).parent_path());
  cache.save(cache_path);
  std::cout << "encoded " << added << " samples (" << cache.size() << " cache entries)\n";
  return kOk;
}

int run_train(const Globals& g, const std::string& manifest, const std::string& cache_path,
              const std::string& folds_path, const std::string& model, int fold,
              const std::string& out_dir) {
  const RunConfig cfg = resolve_config(g);
  const auto id = ModelConfigId::of(parse_model_kind(model));
  const auto data = load_embedded(g, cfg, manifest, cache_path, id.image_variant, true);
  const auto folds = load_folds(folds_path);
  const auto rows = fold_rows(data, folds);
  if (fold >= folds.k) throw CLI::ValidationError("--fold must be below the fold count");

  std::vector<MetricsReport> reports;
  for (int f = 0; f < folds.k; ++f) {
    if (fold >= 0 && f != fold) continue;
    std::vector<std::size_t> train_rows;
    for (int h = 0; h < folds.k; ++h) {
      if (h != f) train_rows.insert(train_rows.end(), rows[h].begin(), rows[h].end());
    }
    std::sort(train_rows.begin(), train_rows.end());
    const auto train = data.subset(train_rows);
    const auto val = data.subset(rows[f]);
    TrainConfig tc = cfg.train;
    tc.seed = mix_seed(cfg.train.seed, static_cast<std::uint64_t>(f));

    const fs::path dir = fs::path(out_dir) / ("fold_" + std::to_string(f));
    fs::create_directories(dir);
    Matrix probs;
    if (is_ensemble(id.id)) {
      Ensemble e = id.id == ModelKind::M5
                       ? train_soft_vote({ModelConfigId::of(ModelKind::M1),
                                          ModelConfigId::of(ModelKind::M2)},
                                         train, val, tc, cfg.head)
                       : bagging_train(ModelConfigId::of(ModelKind::M4), 3, train, val,
                                       mix_seed(tc.seed, 0xBA66), tc, cfg.head);
      save_ensemble(e, dir / "ensemble");
      for (std::size_t i = 0; i < e.members.size(); ++i) {
        write_text(dir / ("train_log_member_" + std::to_string(i) + ".csv"),
                   e.members[i].record.to_csv());
      }
      probs = e.predict_proba(val);
    } else {
      auto result = train_fold(id, train, val, tc, cfg.head);
      save_checkpoint(result.model, dir / "model.ckpt");
      write_text(dir / "train_log.csv", result.record.to_csv());
      probs = predict_proba(result.model, val);
    }
    const auto report = evaluate_predictions(argmax_rows(probs), val.labels, val.num_classes);
    write_text(dir / "metrics.json", metrics_json(report));
    reports.push_back(report);
    std::printf("fold %d: macro-F1 %.4f accuracy %.4f\n", f, report.macro_f1, report.accuracy);
  }
  if (reports.size() > 1) {
    const auto agg = aggregate_folds(reports);
    std::printf("mean macro-F1 %.4f (std %.4f) over %zu folds\n", agg.mean.macro_f1,
                agg.stddev.macro_f1, reports.size());
  }
  return kOk;
}

std::vector<ModelKind> parse_model_list(const std::string& list) {
  std::vector<ModelKind> kinds;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) kinds.push_back(parse_model_kind(item));
  }
  if (kinds.empty()) throw CLI::ValidationError("--models is empty");
  return kinds;
}

int run_ablate(const Globals& g, const std::string& manifest, const std::string& cache_path,
               const std::string& folds_path, const std::string& models,
               const std::string& out_dir) {
  const RunConfig cfg = resolve_config(g);
  const auto kinds = parse_model_list(models);
  bool need_removed = false;
  for (auto k : kinds) need_removed |= (k == ModelKind::M3 || k == ModelKind::M8);

  AblationInputs inputs;
  inputs.task = parse_task(g.task);
  inputs.original = load_embedded(g, cfg, manifest, cache_path, ImageVariant::original, true);
  if (need_removed) {
    inputs.text_removed =
        load_embedded(g, cfg, manifest, cache_path, ImageVariant::text_removed, true);
  }
  inputs.folds = load_folds(folds_path);
  const auto result = ablation_run(inputs, kinds, cfg.train, cfg.head);
  write_ablation_outputs(result, inputs.original, out_dir);
  std::cout << ablation_markdown(result.table);
  return kOk;
}

int run_predict(const Globals& g, const std::string& manifest, const std::string& cache_path,
                const std::string& checkpoint, const std::string& out) {
  const RunConfig cfg = resolve_config(g);
  Matrix probs;
  std::vector<std::string> ids;
  if (fs::is_directory(checkpoint)) {
    const auto e = load_ensemble(checkpoint);
    const auto variant = e.members.front().model.config().image_variant;
    const auto data = load_embedded(g, cfg, manifest, cache_path, variant, false);
    probs = e.predict_proba(data);
    ids = data.ids;
  } else {
    const auto model = load_checkpoint(checkpoint);
    const auto data =
        load_embedded(g, cfg, manifest, cache_path, model.config().image_variant, false);
    probs = predict_proba(model, data);
    ids = data.ids;
  }
  const auto preds = argmax_rows(probs);
  emit_predictions(ids, preds, out);
  std::cout << "wrote " << preds.size() << " predictions to " << out << '\n';
  return kOk;
}

int run_report(const std::string& input, const std::string& format, const std::string& out) {
  std::ifstream in(input, std::ios::binary);
  if (!in) throw DataError("cannot read " + input);
  std::stringstream buf;
  buf << in.rdbuf();
  const auto table = ablation_from_json(buf.str());
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  emit_report(table, parse_report_format(format), out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal meme classification: splits, embeddings, fusion heads, ablations"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Override the run seed");
  app.add_option("--task", g.task, "Subtask")->check(CLI::IsMember({"A", "B"}));
  app.add_flag("--toy-encoders", g.toy_encoders, "Use the deterministic toy encoders");

  std::string manifest, cache, folds, out, csv, boxes, out_dir, out_manifest, model, models,
      checkpoint, input, format = "markdown", variant = "original";
  std::optional<int> k;
  int fold = -1;
  bool remove_text = false;

  auto* split = app.add_subcommand("split", "Stratified k-fold assignment for a manifest");
  split->add_option("--manifest", manifest)->required();
  split->add_option("--out", out, "Fold file (JSON)")->required();
  split->add_option("--csv", csv, "Also write id,fold CSV");
  split->add_option("--folds", k, "Number of folds (default from config)");

  auto* pre = app.add_subcommand("preprocess", "Check images or write text-removed variants");
  pre->add_option("--manifest", manifest)->required();
  pre->add_flag("--remove-text", remove_text);
  pre->add_option("--boxes", boxes, "Box file: id,x,y,w,h,confidence")->check(CLI::ExistingFile);
  pre->add_option("--out-dir", out_dir);
  pre->add_option("--out-manifest", out_manifest);

  auto* enc = app.add_subcommand("encode", "Fill the embedding cache");
  enc->add_option("--manifest", manifest)->required();
  enc->add_option("--cache", cache)->required();
  enc->add_option("--variant", variant)->check(CLI::IsMember({"original", "text_removed"}));

  auto* train = app.add_subcommand("train", "Train one configuration on one or all folds");
  train->add_option("--manifest", manifest)->required();
  train->add_option("--cache", cache)->required();
  train->add_option("--folds", folds, "Fold file")->required();
  train->add_option("--model", model, "M1..M8")->required();
  train->add_option("--fold", fold, "Fold index (default: all)");
  train->add_option("--out", out, "Output directory")->required();

  auto* ablate = app.add_subcommand("ablate", "Cross-validate and rank a list of configurations");
  ablate->add_option("--manifest", manifest)->required();
  ablate->add_option("--cache", cache)->required();
  ablate->add_option("--folds", folds, "Fold file")->required();
  ablate->add_option("--models", models, "Comma-separated, e.g. M1,M2,M4,M7")
      ->default_val("M1,M2,M3,M4,M5,M6,M7,M8");
  ablate->add_option("--out", out, "Output directory")->required();

  auto* predict = app.add_subcommand("predict", "Write id,prediction for a manifest");
  predict->add_option("--manifest", manifest)->required();
  predict->add_option("--cache", cache)->required();
  predict->add_option("--checkpoint", checkpoint, "Model file or ensemble directory")
      ->required()
      ->check(CLI::ExistingPath);
  predict->add_option("--out", out)->required();

  auto* report = app.add_subcommand("report", "Render a saved ablation table");
  report->add_option("--input", input, "ablation.json")->required();
  report->add_option("--format", format)->check(CLI::IsMember({"csv", "markdown", "figure"}));
  report->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*split) return run_split(g, manifest, out, csv, k);
    if (*pre) return run_preprocess(g, manifest, remove_text, boxes, out_dir, out_manifest);
    if (*enc) return run_encode(g, manifest, cache, variant);
    if (*train) return run_train(g, manifest, cache, folds, model, fold, out);
    if (*ablate) return run_ablate(g, manifest, cache, folds, models, out);
    if (*predict) return run_predict(g, manifest, cache, checkpoint, out);
    if (*report) return run_report(input, format, out);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const CapabilityError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged at epoch " << e.epoch() << ": " << e.what() << '\n';
    return kDiverged;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
