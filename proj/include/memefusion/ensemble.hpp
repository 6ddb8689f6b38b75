#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "memefusion/training.hpp"

namespace memefusion {

struct ProbVector {
  Vector probs;
  /// Entries in [0,1] summing to 1 within `tol`.
  bool valid(double tol = 1e-6) const;
};

/// Unweighted arithmetic mean of the member distributions.
ProbVector soft_vote(const std::vector<ProbVector>& members);
/// Row-wise soft vote over per-member probability matrices.
Matrix soft_vote(const std::vector<Matrix>& member_probs);

/// N indices drawn uniformly with replacement from [0, n).
std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed);
/// |unique(indices)| / n.
double unique_fraction(const std::vector<std::size_t>& indices, std::size_t n);
/// Jaccard similarity of the unique index sets.
double bootstrap_overlap(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);

enum class EnsembleKind { soft_vote, bagging };

struct EnsembleMember {
  FusionModel model;
  TrainRecord record;
  /// Training-set rows this member saw (bagging only).
  std::vector<std::size_t> bootstrap;
};

struct Ensemble {
  EnsembleKind kind = EnsembleKind::soft_vote;
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<EnsembleMember> members;

  void validate() const;
  Matrix predict_proba(const EmbeddedDataset& data) const;
  /// Mean pairwise Jaccard overlap of member bootstraps (bagging with k >= 2).
  double mean_bootstrap_overlap() const;
};

/// Late fusion by soft voting over independently trained member heads.
Ensemble train_soft_vote(const std::vector<ModelConfigId>& members,
                         const EmbeddedDataset& train, const EmbeddedDataset& val,
                         const TrainConfig& cfg, const HybridHeadConfig& head);

/// k members of `base`, each trained on its own seeded bootstrap of `train`.
Ensemble bagging_train(const ModelConfigId& base, int k, const EmbeddedDataset& train,
                       const EmbeddedDataset& val, std::uint64_t seed,
                       const TrainConfig& cfg, const HybridHeadConfig& head);

/// Directory holding `ensemble.json` plus one checkpoint per member.
void save_ensemble(const Ensemble& ensemble, const std::filesystem::path& dir);
Ensemble load_ensemble(const std::filesystem::path& dir);

}  // namespace memefusion
