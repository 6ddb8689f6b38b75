#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "memefusion/corpus.hpp"
#include "memefusion/embedding_cache.hpp"
#include "memefusion/ensemble.hpp"
#include "memefusion/report.hpp"
#include "memefusion/training.hpp"

namespace memefusion {

// ---------------------------------------------------------------------------
// Manifest -> embeddings

/// Preprocesses and encodes every sample not yet in `cache`.
/// Returns the number of newly encoded samples.
std::size_t encode_manifest(const DatasetManifest& manifest, ImageVariant variant,
                            const PreprocessConfig& cfg, const Tokenizer& tokenizer,
                            const EncoderSpec& text_spec, const EncoderSpec& image_spec,
                            EmbeddingCache& cache);

/// Assembles cached embeddings for `manifest` in manifest order. Throws
/// DataError naming the first sample missing from the cache. Labels are
/// filled when `require_labels` is set (and must then be present).
EmbeddedDataset embed_manifest(const DatasetManifest& manifest, const EmbeddingCache& cache,
                               ImageVariant variant, const PreprocessConfig& cfg,
                               EncoderBackend text_backend, EncoderBackend image_backend,
                               bool require_labels);

/// Writes text-removed copies of every image into `out_dir` (PNG) and returns
/// the manifest pointing at them. Samples without boxes are copied unchanged.
DatasetManifest make_text_removed_variant(const DatasetManifest& manifest,
                                          const std::map<std::string, std::vector<TextBox>>& boxes,
                                          const std::filesystem::path& out_dir,
                                          const TextRemovalOptions& opts);

// ---------------------------------------------------------------------------
// Ablation

struct AblationInputs {
  EmbeddedDataset original;
  /// Same samples and order as `original`, images from the text-removed variant.
  std::optional<EmbeddedDataset> text_removed;
  FoldAssignment folds;
  Task task = Task::A;
};

struct AblationResult {
  AblationTable table;
  /// Pooled over held-out folds, hybrid configs only.
  std::map<ModelKind, GateSummary> gates;
  /// Mean pairwise Jaccard overlap of member bootstraps, bagging only.
  std::map<ModelKind, double> bootstrap_overlap;
  std::map<ModelKind, std::vector<TrainRecord>> records;
  /// Out-of-fold prediction per sample, in `original` row order.
  std::map<ModelKind, std::vector<int>> predictions;
};

/// Cross-validates every requested configuration (M5 as a soft vote of M1
/// and M2, M6 as bagged M4 with k = 3) and ranks them.
AblationResult ablation_run(const AblationInputs& inputs, const std::vector<ModelKind>& configs,
                            const TrainConfig& cfg, const HybridHeadConfig& head);

/// ablation.{csv,md,svg,json}, ablation_folds.csv, per_class.{csv,md},
/// gating.json and oof_predictions_<model>.csv.
void write_ablation_outputs(const AblationResult& result, const EmbeddedDataset& data,
                            const std::filesystem::path& out_dir);

}  // namespace memefusion
