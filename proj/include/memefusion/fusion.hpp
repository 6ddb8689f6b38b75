#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "memefusion/encoders.hpp"
#include "memefusion/nn.hpp"
#include "memefusion/preprocess.hpp"

namespace memefusion {

// ---------------------------------------------------------------------------
// Configuration identities

enum class ModelKind { M1 = 1, M2, M3, M4, M5, M6, M7, M8 };

ModelKind parse_model_kind(const std::string& s);
std::string model_name(ModelKind kind);  // "M1".."M8"
/// Table-style row label, e.g. "M7: Hybrid Fusion (Cross-Attn + Gating)".
std::string model_description(ModelKind kind);

bool needs_text(ModelKind kind);
bool needs_image(ModelKind kind);
bool is_hybrid(ModelKind kind);
/// M5 and M6 are late-fusion ensembles built by the ensemble module.
bool is_ensemble(ModelKind kind);

struct ModelConfigId {
  ModelKind id = ModelKind::M1;
  ImageVariant image_variant = ImageVariant::original;

  /// M3 and M8 read text-removed images, everything else the originals.
  static ModelConfigId of(ModelKind kind);
  void validate() const;
  std::string name() const { return model_name(id); }
  bool operator==(const ModelConfigId&) const = default;
};

struct HybridHeadConfig {
  int latent_dim = 256;
  int num_heads = 4;
  double dropout_rate = 0.5;
  int num_classes = 2;
  int image_dim = kImageEmbeddingDim;
  int text_dim = kTextEmbeddingDim;

  int head_dim() const { return latent_dim / num_heads; }
  void validate() const;
};

// ---------------------------------------------------------------------------
// Per-sample value types

struct LatentPair {
  Vector z_img;
  Vector z_txt;
};

struct GateWeights {
  double g_img = 0.5;
  double g_txt = 0.5;
};

struct FusionOutput {
  Vector logits;
  std::optional<GateWeights> gate;
  /// Per-head 2x2 row-stochastic maps; row/col 0 = image token, 1 = text token.
  std::vector<Eigen::Matrix2d> attention;
};

// ---------------------------------------------------------------------------
// Layers. Batched over rows; forward() is const and thread-safe, backward()
// accumulates into the parameter gradients.

/// Independent affine maps of each modality into the shared latent space.
struct LatentProjection {
  Linear image;
  Linear text;

  LatentProjection() = default;
  LatentProjection(int image_dim, int text_dim, int latent_dim);

  std::pair<Matrix, Matrix> forward(const Matrix& img, const Matrix& txt) const;
  void backward(const Matrix& img, const Matrix& txt, const Matrix& dz_img,
                const Matrix& dz_txt);
  void collect(ParamList& out);
};

/// Multi-head self-attention over the two-token sequence [image, text] with
/// learned modality-type embeddings, followed by residual + layer norm.
struct CrossModalAttention {
  int num_heads = 1;
  Param type_image;  // 1 x d
  Param type_text;   // 1 x d
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  LayerNorm norm;

  struct Cache {
    Matrix tokens;  // 2B x d, rows [0, B) image, [B, 2B) text
    Matrix q, k, v;
    Matrix mixed;   // attention-weighted values before the output map
    std::vector<Eigen::Matrix2d> probs;  // B * heads, sample-major
    LayerNorm::Cache ln;
  };

  struct Out {
    Matrix y_img;
    Matrix y_txt;
    std::vector<Eigen::Matrix2d> attention;  // B * heads, sample-major
  };

  CrossModalAttention() = default;
  CrossModalAttention(int latent_dim, int heads);

  void init(Rng& rng);
  Out forward(const Matrix& z_img, const Matrix& z_txt, Cache* cache) const;
  std::pair<Matrix, Matrix> backward(const Cache& cache, const Matrix& dy_img,
                                     const Matrix& dy_txt);
  void collect(ParamList& out);
};

/// Instance-level gate: softmax over an affine map of [z_img; z_txt].
struct GateFusion {
  Linear gate;  // 2d -> 2

  struct Cache {
    Matrix y_img, y_txt, concat, probs;
  };

  GateFusion() = default;
  explicit GateFusion(int latent_dim);

  /// Returns (fused, gates) where gates has columns (g_img, g_txt).
  std::pair<Matrix, Matrix> forward(const Matrix& y_img, const Matrix& y_txt,
                                    Cache* cache) const;
  std::pair<Matrix, Matrix> backward(const Cache& cache, const Matrix& dfused);
  void collect(ParamList& out) { gate.collect(out); }
};

/// input -> hidden (input/2, GELU, dropout) -> classes. Shared by every config.
struct MlpClassifier {
  Linear hidden;
  Linear output;
  double dropout_rate = 0.5;

  struct Cache {
    Matrix x, pre, dropped, mask;
  };

  MlpClassifier() = default;
  MlpClassifier(int input_dim, int num_classes, double dropout_rate);

  int input_dim() const { return hidden.in_dim(); }
  int hidden_dim() const { return hidden.out_dim(); }
  int num_classes() const { return output.out_dim(); }

  /// Dropout is active only when `training` is set; `rng` is then required.
  Matrix forward(const Matrix& x, bool training, Rng* rng, Cache* cache) const;
  Matrix backward(const Cache& cache, const Matrix& dlogits);
  void collect(ParamList& out);
};

// ---------------------------------------------------------------------------
// Complete head for one configuration (M1-M4, M7, M8).

class FusionModel {
 public:
  FusionModel(ModelConfigId config, HybridHeadConfig head, std::uint64_t seed);

  struct Pass {
    Matrix logits;
    Matrix gates;  // B x 2 (hybrid only)
    std::vector<Eigen::Matrix2d> attention;
    // caches
    Matrix img, txt, features;
    Matrix z_img, z_txt;
    CrossModalAttention::Cache attn;
    GateFusion::Cache gate;
    MlpClassifier::Cache cls;
  };

  /// Batched forward; absent modalities may be null when the config ignores them.
  Pass forward(const Matrix* img, const Matrix* txt, bool training, Rng* rng) const;
  void backward(const Pass& pass, const Matrix& dlogits);

  ParamList parameters();
  std::vector<Matrix> state() const;
  void load_state(const std::vector<Matrix>& state);

  const ModelConfigId& config() const { return config_; }
  const HybridHeadConfig& head_config() const { return head_; }
  std::uint64_t seed() const { return seed_; }
  int classifier_input_dim() const { return classifier_.input_dim(); }

  LatentProjection& projection() { return projection_; }
  const LatentProjection& projection() const { return projection_; }
  CrossModalAttention& attention() { return attention_; }
  const CrossModalAttention& attention() const { return attention_; }
  GateFusion& gate() { return gate_; }
  const GateFusion& gate() const { return gate_; }
  MlpClassifier& classifier() { return classifier_; }
  const MlpClassifier& classifier() const { return classifier_; }

 private:
  ModelConfigId config_;
  HybridHeadConfig head_;
  std::uint64_t seed_;
  LatentProjection projection_;
  CrossModalAttention attention_;
  GateFusion gate_;
  MlpClassifier classifier_;
};

// ---------------------------------------------------------------------------
// Single-sample operations

LatentPair project_to_latent(const ImageEmbedding& img, const TextEmbedding& txt,
                             const LatentProjection& params);

/// `training` is accepted for interface symmetry; the block has no dropout.
LatentPair cross_modal_attention(const LatentPair& pair, const CrossModalAttention& params,
                                 bool training,
                                 std::vector<Eigen::Matrix2d>* attention = nullptr);

GateWeights gate_from_logits(double logit_img, double logit_txt);

std::pair<Vector, GateWeights> gate_fuse(const LatentPair& pair, const GateFusion& params);

/// Throws std::invalid_argument on feature/head dimension mismatch.
Vector classify(const Vector& features, const MlpClassifier& head, int num_classes,
                bool training = false, Rng* rng = nullptr);

/// Throws std::invalid_argument when a required modality is missing, the model
/// does not match `config`, or an ensemble config (M5/M6) is requested.
FusionOutput forward_config(const ModelConfigId& config, const ImageEmbedding* img,
                            const TextEmbedding* txt, const FusionModel& model,
                            bool training, Rng* rng = nullptr);

}  // namespace memefusion
