#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace memefusion {

enum class Task { A, B };

/// Number of classes: 2 for hate detection (A), 3 for sentiment (B).
int num_classes(Task task);
Task parse_task(const std::string& s);
const char* task_name(Task task);

struct MemeSample {
  std::string id;
  std::string image_path;
  /// Raw OCR text, byte-for-byte as read from the manifest.
  std::string ocr_text;
  std::optional<int> label_a;  // 0 = Non-Hate, 1 = Hate
  std::optional<int> label_b;  // 0 = Negative, 1 = Neutral, 2 = Positive

  std::optional<int> label(Task task) const {
    return task == Task::A ? label_a : label_b;
  }
};

struct DatasetManifest {
  std::vector<MemeSample> samples;
  Task task = Task::A;
  /// Directory used to resolve relative image paths.
  std::filesystem::path base_dir;

  std::size_t size() const { return samples.size(); }
  std::filesystem::path resolve_image(const MemeSample& s) const;
};

struct ClassStats {
  std::vector<long> counts;
  std::vector<double> proportions;
  double imbalance_ratio = 1.0;
};

struct FoldAssignment {
  int k = 0;
  std::uint64_t seed = 0;
  /// Sample ids in manifest order, paired with their fold index.
  std::vector<std::pair<std::string, int>> assignment;

  int fold_of(const std::string& id) const;
  std::vector<std::size_t> fold_sizes() const;
};

/// Loads a JSON-lines manifest. Each line holds `id`, `image_path`, `text`
/// and optional `label_a` / `label_b`. Blank lines are skipped.
DatasetManifest load_manifest(const std::filesystem::path& path, Task task);

/// Validates label ranges and id uniqueness; throws DataError.
void validate_manifest(const DatasetManifest& manifest);

void save_manifest(const DatasetManifest& manifest,
                   const std::filesystem::path& path);

ClassStats compute_class_stats(const DatasetManifest& manifest);
ClassStats compute_class_stats(const std::vector<long>& counts);

/// Seeded per-class shuffle followed by a round-robin deal whose fold cursor
/// carries over between classes, so fold sizes differ by at most one.
FoldAssignment stratified_kfold(const DatasetManifest& manifest, int k,
                                std::uint64_t seed);

/// Fold file: header `id,fold`, one row per sample.
void save_folds(const FoldAssignment& folds, const std::filesystem::path& path);
std::string folds_to_csv(const FoldAssignment& folds);
FoldAssignment load_folds(const std::filesystem::path& path);

}  // namespace memefusion
