#include "memefusion/corpus.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "memefusion/errors.hpp"
#include "memefusion/rng.hpp"

namespace memefusion {

using nlohmann::json;

int num_classes(Task task) { return task == Task::A ? 2 : 3; }

Task parse_task(const std::string& s) {
  if (s == "A" || s == "a") return Task::A;
  if (s == "B" || s == "b") return Task::B;
  throw ConfigError("unknown task '" + s + "' (expected A or B)");
}

const char* task_name(Task task) { return task == Task::A ? "A" : "B"; }

std::filesystem::path DatasetManifest::resolve_image(const MemeSample& s) const {
  std::filesystem::path p(s.image_path);
  if (p.is_relative() && !base_dir.empty()) return base_dir / p;
  return p;
}

namespace {

std::optional<int> read_label(const json& rec, const char* key, int line_no) {
  auto it = rec.find(key);
  if (it == rec.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_integer()) {
    throw DataError("line " + std::to_string(line_no) + ": field '" + key +
                    "' must be an integer");
  }
  return it->get<int>();
}

std::string read_string(const json& rec, const char* key, int line_no) {
  auto it = rec.find(key);
  if (it == rec.end() || !it->is_string()) {
    throw DataError("line " + std::to_string(line_no) +
                    ": missing or non-string field '" + key + "'");
  }
  return it->get<std::string>();
}

}  // namespace

void validate_manifest(const DatasetManifest& manifest) {
  std::unordered_set<std::string> seen;
  for (const auto& s : manifest.samples) {
    if (!seen.insert(s.id).second) {
      throw DataError("duplicate sample id '" + s.id + "'");
    }
    if (s.label_a && (*s.label_a < 0 || *s.label_a > 1)) {
      throw DataError("sample '" + s.id + "': label_a=" +
                      std::to_string(*s.label_a) + " outside {0,1}");
    }
    if (s.label_b && (*s.label_b < 0 || *s.label_b > 2)) {
      throw DataError("sample '" + s.id + "': label_b=" +
                      std::to_string(*s.label_b) + " outside {0,1,2}");
    }
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path, Task task) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest '" + path.string() + "'");

  DatasetManifest manifest;
  manifest.task = task;
  manifest.base_dir = path.parent_path();

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("line " + std::to_string(line_no) +
                      ": malformed record: " + e.what());
    }
    if (!rec.is_object()) {
      throw DataError("line " + std::to_string(line_no) +
                      ": record is not an object");
    }
    MemeSample s;
    s.id = read_string(rec, "id", line_no);
    s.image_path = read_string(rec, "image_path", line_no);
    s.ocr_text = read_string(rec, "text", line_no);
    s.label_a = read_label(rec, "label_a", line_no);
    s.label_b = read_label(rec, "label_b", line_no);
    manifest.samples.push_back(std::move(s));
  }
  validate_manifest(manifest);
  return manifest;
}

void save_manifest(const DatasetManifest& manifest,
                   const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest '" + path.string() + "'");
  for (const auto& s : manifest.samples) {
    json rec = {{"id", s.id}, {"image_path", s.image_path}, {"text", s.ocr_text}};
    if (s.label_a) rec["label_a"] = *s.label_a;
    if (s.label_b) rec["label_b"] = *s.label_b;
    out << rec.dump() << '\n';
  }
}

ClassStats compute_class_stats(const std::vector<long>& counts) {
  if (counts.empty()) throw DataError("no classes");
  ClassStats stats;
  stats.counts = counts;
  long total = 0;
  long lo = counts.front(), hi = counts.front();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] <= 0) {
      throw DataError("class " + std::to_string(c) +
                      " has zero samples; imbalance ratio undefined");
    }
    total += counts[c];
    lo = std::min(lo, counts[c]);
    hi = std::max(hi, counts[c]);
  }
  for (long n : counts) {
    stats.proportions.push_back(static_cast<double>(n) / static_cast<double>(total));
  }
  stats.imbalance_ratio = static_cast<double>(hi) / static_cast<double>(lo);
  return stats;
}

ClassStats compute_class_stats(const DatasetManifest& manifest) {
  std::vector<long> counts(num_classes(manifest.task), 0);
  for (const auto& s : manifest.samples) {
    auto y = s.label(manifest.task);
    if (!y) {
      throw DataError("sample '" + s.id + "' has no label for task " +
                      task_name(manifest.task));
    }
    ++counts[*y];
  }
  return compute_class_stats(counts);
}

FoldAssignment stratified_kfold(const DatasetManifest& manifest, int k,
                                std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("stratified_kfold: k must be >= 2");
  const int K = num_classes(manifest.task);
  std::vector<std::vector<std::size_t>> by_class(K);
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    auto y = manifest.samples[i].label(manifest.task);
    if (!y) {
      throw DataError("sample '" + manifest.samples[i].id +
                      "' is unlabeled; cannot stratify");
    }
    by_class[*y].push_back(i);
  }
  for (int c = 0; c < K; ++c) {
    if (!by_class[c].empty() && by_class[c].size() < static_cast<std::size_t>(k)) {
      throw DataError("class " + std::to_string(c) + " has " +
                      std::to_string(by_class[c].size()) +
                      " members, fewer than k=" + std::to_string(k));
    }
  }

  std::vector<int> fold(manifest.samples.size(), -1);
  int cursor = 0;
  for (int c = 0; c < K; ++c) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(c)));
    auto members = by_class[c];
    rng.shuffle(members);
    for (std::size_t idx : members) {
      fold[idx] = cursor;
      cursor = (cursor + 1) % k;
    }
  }

  FoldAssignment out;
  out.k = k;
  out.seed = seed;
  out.assignment.reserve(manifest.samples.size());
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    out.assignment.emplace_back(manifest.samples[i].id, fold[i]);
  }
  return out;
}

int FoldAssignment::fold_of(const std::string& id) const {
  for (const auto& [sid, f] : assignment) {
    if (sid == id) return f;
  }
  throw DataError("sample '" + id + "' missing from fold assignment");
}

std::vector<std::size_t> FoldAssignment::fold_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (const auto& entry : assignment) ++sizes[entry.second];
  return sizes;
}

std::string folds_to_csv(const FoldAssignment& folds) {
  std::ostringstream out;
  out << "id,fold\n";
  for (const auto& [id, f] : folds.assignment) out << id << ',' << f << '\n';
  return out.str();
}

void save_folds(const FoldAssignment& folds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write fold file '" + path.string() + "'");
  out << folds_to_csv(folds);
}

FoldAssignment load_folds(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open fold file '" + path.string() + "'");
  FoldAssignment folds;
  std::string line;
  int line_no = 0;
  int max_fold = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line == "id,fold") continue;
    auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw DataError("fold file line " + std::to_string(line_no) + ": expected id,fold");
    }
    int f;
    try {
      f = std::stoi(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw DataError("fold file line " + std::to_string(line_no) + ": bad fold index");
    }
    if (f < 0) throw DataError("fold file line " + std::to_string(line_no) + ": negative fold");
    max_fold = std::max(max_fold, f);
    folds.assignment.emplace_back(line.substr(0, comma), f);
  }
  folds.k = max_fold + 1;
  return folds;
}

}  // namespace memefusion
