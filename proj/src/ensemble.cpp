#include "memefusion/ensemble.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "memefusion/checkpoint.hpp"
#include "memefusion/errors.hpp"

namespace memefusion {

bool ProbVector::valid(double tol) const {
  if (probs.size() == 0 || !probs.allFinite()) return false;
  if ((probs.array() < -tol).any() || (probs.array() > 1 + tol).any()) return false;
  return std::abs(probs.sum() - 1.0) <= tol;
}

Matrix soft_vote(const std::vector<Matrix>& member_probs) {
  if (member_probs.empty()) throw std::invalid_argument("soft_vote: no members");
  const Matrix& first = member_probs.front();
  for (const auto& m : member_probs) {
    if (m.rows() != first.rows() || m.cols() != first.cols()) {
      throw std::invalid_argument("soft_vote: members disagree on shape");
    }
  }
  // first + mean of deviations: identical members reproduce `first` bit-exactly.
  const double k = static_cast<double>(member_probs.size());
  Matrix acc = Matrix::Zero(first.rows(), first.cols());
  for (std::size_t i = 1; i < member_probs.size(); ++i) acc += member_probs[i] - first;
  return first + acc / k;
}

ProbVector soft_vote(const std::vector<ProbVector>& members) {
  std::vector<Matrix> rows;
  for (const auto& m : members) rows.emplace_back(m.probs.transpose());
  return {soft_vote(rows).row(0).transpose()};
}

std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("bootstrap of an empty set");
  Rng rng(seed);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
  return idx;
}

double unique_fraction(const std::vector<std::size_t>& indices, std::size_t n) {
  std::vector<bool> seen(n, false);
  std::size_t unique = 0;
  for (auto i : indices) {
    if (!seen.at(i)) {
      seen[i] = true;
      ++unique;
    }
  }
  return static_cast<double>(unique) / static_cast<double>(n);
}

double bootstrap_overlap(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::vector<std::size_t> ua(a), ub(b);
  std::sort(ua.begin(), ua.end());
  ua.erase(std::unique(ua.begin(), ua.end()), ua.end());
  std::sort(ub.begin(), ub.end());
  ub.erase(std::unique(ub.begin(), ub.end()), ub.end());
  std::vector<std::size_t> inter;
  std::set_intersection(ua.begin(), ua.end(), ub.begin(), ub.end(), std::back_inserter(inter));
  const std::size_t uni = ua.size() + ub.size() - inter.size();
  return uni == 0 ? 1.0 : static_cast<double>(inter.size()) / static_cast<double>(uni);
}

void Ensemble::validate() const {
  if (kind == EnsembleKind::soft_vote && members.size() < 2) {
    throw std::invalid_argument("soft-vote ensemble needs at least 2 members");
  }
  if (kind == EnsembleKind::bagging && (k < 1 || members.size() != static_cast<std::size_t>(k))) {
    throw std::invalid_argument("bagging ensemble needs k >= 1 members");
  }
}

Matrix Ensemble::predict_proba(const EmbeddedDataset& data) const {
  std::vector<Matrix> probs;
  for (const auto& m : members) probs.push_back(memefusion::predict_proba(m.model, data));
  return soft_vote(probs);
}

double Ensemble::mean_bootstrap_overlap() const {
  double sum = 0;
  int pairs = 0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (std::size_t j = i + 1; j < members.size(); ++j) {
      sum += bootstrap_overlap(members[i].bootstrap, members[j].bootstrap);
      ++pairs;
    }
  }
  return pairs ? sum / pairs : 1.0;
}

Ensemble train_soft_vote(const std::vector<ModelConfigId>& members,
                         const EmbeddedDataset& train, const EmbeddedDataset& val,
                         const TrainConfig& cfg, const HybridHeadConfig& head) {
  if (members.size() < 2) throw std::invalid_argument("soft vote needs at least 2 members");
  Ensemble e;
  e.kind = EnsembleKind::soft_vote;
  e.k = static_cast<int>(members.size());
  e.seed = cfg.seed;
  for (const auto& id : members) {
    auto result = train_fold(id, train, val, cfg, head);
    e.members.push_back({std::move(result.model), std::move(result.record), {}});
  }
  return e;
}

Ensemble bagging_train(const ModelConfigId& base, int k, const EmbeddedDataset& train,
                       const EmbeddedDataset& val, std::uint64_t seed,
                       const TrainConfig& cfg, const HybridHeadConfig& head) {
  if (k < 1) throw std::invalid_argument("bagging_train: k must be >= 1");
  if (train.size() == 0) throw std::invalid_argument("bagging_train: empty training data");
  Ensemble e;
  e.kind = EnsembleKind::bagging;
  e.k = k;
  e.seed = seed;
  for (int i = 0; i < k; ++i) {
    auto rows = bootstrap_indices(train.size(), mix_seed(seed, static_cast<std::uint64_t>(i)));
    TrainConfig member_cfg = cfg;
    member_cfg.seed = mix_seed(cfg.seed, 0xBA6 + static_cast<std::uint64_t>(i));
    auto result = train_fold(base, train.subset(rows), val, member_cfg, head);
    e.members.push_back({std::move(result.model), std::move(result.record), std::move(rows)});
  }
  return e;
}

void save_ensemble(const Ensemble& ensemble, const std::filesystem::path& dir) {
  ensemble.validate();
  std::filesystem::create_directories(dir);
  nlohmann::json spec;
  spec["kind"] = ensemble.kind == EnsembleKind::soft_vote ? "soft_vote" : "bagging";
  spec["k"] = ensemble.k;
  spec["seed"] = ensemble.seed;
  spec["members"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ensemble.members.size(); ++i) {
    const std::string file = "member_" + std::to_string(i) + ".ckpt";
    save_checkpoint(ensemble.members[i].model, dir / file);
    spec["members"].push_back({{"checkpoint", file},
                               {"model", ensemble.members[i].model.config().name()}});
  }
  std::ofstream out(dir / "ensemble.json");
  if (!out) throw DataError("cannot write ensemble manifest in '" + dir.string() + "'");
  out << spec.dump(2) << '\n';
}

Ensemble load_ensemble(const std::filesystem::path& dir) {
  std::ifstream in(dir / "ensemble.json");
  if (!in) throw DataError("no ensemble.json in '" + dir.string() + "'");
  Ensemble e;
  try {
    const auto spec = nlohmann::json::parse(in);
    const std::string kind = spec.at("kind");
    if (kind == "soft_vote") {
      e.kind = EnsembleKind::soft_vote;
    } else if (kind == "bagging") {
      e.kind = EnsembleKind::bagging;
    } else {
      throw DataError("unknown ensemble kind '" + kind + "'");
    }
    e.k = spec.at("k");
    e.seed = spec.at("seed");
    for (const auto& m : spec.at("members")) {
      e.members.push_back({load_checkpoint(dir / m.at("checkpoint").get<std::string>()), {}, {}});
    }
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("malformed ensemble.json: ") + ex.what());
  }
  e.validate();
  return e;
}

}  // namespace memefusion
