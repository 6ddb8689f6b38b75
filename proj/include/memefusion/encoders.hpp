#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <set>
#include <string>

#include "memefusion/nn.hpp"
#include "memefusion/preprocess.hpp"

namespace memefusion {

inline constexpr int kImageEmbeddingDim = 512;
inline constexpr int kTextEmbeddingDim = 1024;

struct TextEmbedding {
  Vector vector;
};

struct ImageEmbedding {
  Vector vector;
};

enum class EncoderBackend { pretrained_image, pretrained_text, toy_image, toy_text };

const char* backend_name(EncoderBackend b);
bool is_text_backend(EncoderBackend b);

/// Which encoder layers (1-based) receive gradient updates.
struct FreezePolicy {
  int total_layers = 0;
  std::set<int> trainable_layers;
  /// Whether the output projection above the last layer is also trainable.
  bool projection_trainable = false;

  /// The top `n` layers of `total` trainable, everything else frozen.
  static FreezePolicy top_layers(int total, int n);
  void validate() const;
};

/// 12-layer vision tower with layers 11-12 trainable.
FreezePolicy default_image_freeze_policy();
/// 24-layer text tower with layers 21-24 trainable.
FreezePolicy default_text_freeze_policy();

struct EncoderSpec {
  EncoderBackend backend = EncoderBackend::toy_text;
  int output_dim = kTextEmbeddingDim;
  FreezePolicy freeze;
  std::uint64_t seed = 0;

  static EncoderSpec toy_text(std::uint64_t seed);
  static EncoderSpec toy_image(std::uint64_t seed);
  static EncoderSpec pretrained_text();
  static EncoderSpec pretrained_image();

  bool is_text() const { return is_text_backend(backend); }
  void validate() const;
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual TextEmbedding encode(const TokenizedText& tokens) const = 0;
};

class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  virtual ImageEmbedding encode(const ImageTensor& image) const = 0;
};

/// Seeded random projection of the bag of attended token ids, L2-normalized.
/// The projection column for token t is generated from (seed, t) on demand.
class ToyTextEncoder final : public TextEncoder {
 public:
  explicit ToyTextEncoder(std::uint64_t seed, int dim = kTextEmbeddingDim)
      : seed_(seed), dim_(dim) {}
  TextEmbedding encode(const TokenizedText& tokens) const override;

 private:
  std::uint64_t seed_;
  int dim_;
};

/// Per-channel 8x8 patch mean/variance features, affinely projected.
class ToyImageEncoder final : public ImageEncoder {
 public:
  static constexpr int kPatch = 8;

  ToyImageEncoder(std::uint64_t seed, int image_size = 224,
                  int dim = kImageEmbeddingDim);
  ImageEmbedding encode(const ImageTensor& image) const override;

  /// Patch statistics in (channel, patch row, patch col, {mean, var}) order.
  static Vector patch_features(const ImageTensor& image);
  const Vector& bias() const { return bias_; }

 private:
  int image_size_;
  Matrix weight_;  // dim x features
  Vector bias_;
};

using TextEncoderFactory = std::function<std::unique_ptr<TextEncoder>(const EncoderSpec&)>;
using ImageEncoderFactory = std::function<std::unique_ptr<ImageEncoder>(const EncoderSpec&)>;

/// Pretrained backends are plugged in at runtime; none ship with the library.
void register_pretrained_text_encoder(TextEncoderFactory factory);
void register_pretrained_image_encoder(ImageEncoderFactory factory);
bool backend_available(EncoderBackend backend);

/// Throws CapabilityError when the requested backend is not installed.
std::unique_ptr<TextEncoder> make_text_encoder(const EncoderSpec& spec);
std::unique_ptr<ImageEncoder> make_image_encoder(const EncoderSpec& spec);

/// Encodes and enforces the text contract (dim 1024, unit L2 norm, finite).
TextEmbedding encode_text(const TokenizedText& tokens, const EncoderSpec& spec);
TextEmbedding encode_text(const TokenizedText& tokens, const TextEncoder& encoder);
/// Encodes and enforces the image contract (dim 512, finite).
ImageEmbedding encode_image(const ImageTensor& image, const EncoderSpec& spec);
ImageEmbedding encode_image(const ImageTensor& image, const ImageEncoder& encoder);

/// A trainable encoder exposing its parameters grouped by layer.
class LayeredEncoder {
 public:
  virtual ~LayeredEncoder() = default;
  virtual int layer_count() const = 0;
  /// Parameters of layer `layer` (1-based).
  virtual ParamList layer_parameters(int layer) = 0;
  virtual ParamList projection_parameters() = 0;
};

/// Exactly the parameters of the policy's trainable layers (plus the
/// projection when the policy allows it).
ParamList apply_freeze_policy(LayeredEncoder& encoder, const FreezePolicy& policy);

/// Small residual tanh stack used to exercise freeze policies end to end:
/// h_{l} = h_{l-1} + tanh(h_{l-1} W_l^T + b_l), output = h_L P^T + p.
class ToyLayeredEncoder final : public LayeredEncoder {
 public:
  ToyLayeredEncoder(int layers, int width, int output_dim, std::uint64_t seed);

  int layer_count() const override { return static_cast<int>(layers_.size()); }
  ParamList layer_parameters(int layer) override;
  ParamList projection_parameters() override;
  ParamList all_parameters();

  Matrix forward(const Matrix& x);
  /// Backpropagates through the most recent forward() call.
  void backward(const Matrix& dy);

 private:
  std::vector<Linear> layers_;
  Linear projection_;
  std::vector<Matrix> inputs_;
  std::vector<Matrix> activations_;
};

}  // namespace memefusion
