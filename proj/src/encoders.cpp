#include "memefusion/encoders.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "memefusion/errors.hpp"

namespace memefusion {

const char* backend_name(EncoderBackend b) {
  switch (b) {
    case EncoderBackend::pretrained_image: return "pretrained_image";
    case EncoderBackend::pretrained_text: return "pretrained_text";
    case EncoderBackend::toy_image: return "toy_image";
    case EncoderBackend::toy_text: return "toy_text";
  }
  return "?";
}

bool is_text_backend(EncoderBackend b) {
  return b == EncoderBackend::pretrained_text || b == EncoderBackend::toy_text;
}

FreezePolicy FreezePolicy::top_layers(int total, int n) {
  FreezePolicy p;
  p.total_layers = total;
  for (int l = total - n + 1; l <= total; ++l) p.trainable_layers.insert(l);
  p.validate();
  return p;
}

void FreezePolicy::validate() const {
  if (total_layers < 0) throw std::invalid_argument("FreezePolicy: negative layer count");
  for (int l : trainable_layers) {
    if (l < 1 || l > total_layers) {
      throw std::out_of_range("FreezePolicy: layer " + std::to_string(l) +
                              " outside [1, " + std::to_string(total_layers) + "]");
    }
  }
}

FreezePolicy default_image_freeze_policy() { return FreezePolicy::top_layers(12, 2); }
FreezePolicy default_text_freeze_policy() { return FreezePolicy::top_layers(24, 4); }

EncoderSpec EncoderSpec::toy_text(std::uint64_t seed) {
  return {EncoderBackend::toy_text, kTextEmbeddingDim, FreezePolicy{}, seed};
}
EncoderSpec EncoderSpec::toy_image(std::uint64_t seed) {
  return {EncoderBackend::toy_image, kImageEmbeddingDim, FreezePolicy{}, seed};
}
EncoderSpec EncoderSpec::pretrained_text() {
  return {EncoderBackend::pretrained_text, kTextEmbeddingDim, default_text_freeze_policy(), 0};
}
EncoderSpec EncoderSpec::pretrained_image() {
  return {EncoderBackend::pretrained_image, kImageEmbeddingDim, default_image_freeze_policy(), 0};
}

void EncoderSpec::validate() const {
  const int want = is_text() ? kTextEmbeddingDim : kImageEmbeddingDim;
  if (output_dim != want) {
    throw std::invalid_argument(std::string("EncoderSpec: ") + backend_name(backend) +
                                " output_dim must be " + std::to_string(want));
  }
  freeze.validate();
}

// ---------------------------------------------------------------------------
// Toy encoders

TextEmbedding ToyTextEncoder::encode(const TokenizedText& tokens) const {
  Vector acc = Vector::Zero(dim_);
  for (std::size_t i = 0; i < tokens.token_ids.size(); ++i) {
    if (!tokens.attention_mask[i]) continue;
    Rng rng(mix_seed(seed_, static_cast<std::uint64_t>(tokens.token_ids[i])));
    for (int j = 0; j < dim_; ++j) acc(j) += rng.uniform(-1.0, 1.0);
  }
  const double norm = acc.norm();
  if (norm > 0) acc /= norm;
  return {acc};
}

ToyImageEncoder::ToyImageEncoder(std::uint64_t seed, int image_size, int dim)
    : image_size_(image_size) {
  const int grid = image_size / kPatch;
  const int features = 3 * grid * grid * 2;
  weight_.resize(dim, features);
  bias_.resize(dim);
  Rng rng(mix_seed(seed, 0x1A4E));
  const double bound = std::sqrt(3.0 / features);
  for (Eigen::Index i = 0; i < weight_.size(); ++i) {
    weight_.data()[i] = rng.uniform(-bound, bound);
  }
  for (int i = 0; i < dim; ++i) bias_(i) = rng.uniform(-0.1, 0.1);
}

Vector ToyImageEncoder::patch_features(const ImageTensor& image) {
  const int grid = image.size / kPatch;
  Vector f(3 * grid * grid * 2);
  Eigen::Index k = 0;
  for (int c = 0; c < 3; ++c) {
    for (int py = 0; py < grid; ++py) {
      for (int px = 0; px < grid; ++px) {
        double sum = 0, sum_sq = 0;
        for (int y = 0; y < kPatch; ++y) {
          for (int x = 0; x < kPatch; ++x) {
            const double v = image.at(c, py * kPatch + y, px * kPatch + x);
            sum += v;
            sum_sq += v * v;
          }
        }
        constexpr double n = kPatch * kPatch;
        const double mean = sum / n;
        f(k++) = mean;
        f(k++) = std::max(0.0, sum_sq / n - mean * mean);
      }
    }
  }
  return f;
}

ImageEmbedding ToyImageEncoder::encode(const ImageTensor& image) const {
  if (image.size != image_size_) {
    throw std::invalid_argument("ToyImageEncoder: expected " + std::to_string(image_size_) +
                                "px input, got " + std::to_string(image.size));
  }
  return {weight_ * patch_features(image) + bias_};
}

// ---------------------------------------------------------------------------
// Backend registry

namespace {

struct Registry {
  std::mutex mu;
  TextEncoderFactory text;
  ImageEncoderFactory image;
  std::map<std::uint64_t, std::shared_ptr<const ToyImageEncoder>> toy_images;
};

Registry& registry() {
  static Registry r;
  return r;
}

std::shared_ptr<const ToyImageEncoder> shared_toy_image(std::uint64_t seed) {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  auto& slot = r.toy_images[seed];
  if (!slot) slot = std::make_shared<ToyImageEncoder>(seed);
  return slot;
}

}  // namespace

void register_pretrained_text_encoder(TextEncoderFactory factory) {
  std::lock_guard lock(registry().mu);
  registry().text = std::move(factory);
}

void register_pretrained_image_encoder(ImageEncoderFactory factory) {
  std::lock_guard lock(registry().mu);
  registry().image = std::move(factory);
}

bool backend_available(EncoderBackend backend) {
  std::lock_guard lock(registry().mu);
  switch (backend) {
    case EncoderBackend::pretrained_text: return static_cast<bool>(registry().text);
    case EncoderBackend::pretrained_image: return static_cast<bool>(registry().image);
    default: return true;
  }
}

std::unique_ptr<TextEncoder> make_text_encoder(const EncoderSpec& spec) {
  if (!spec.is_text()) throw std::invalid_argument("make_text_encoder: not a text backend");
  spec.validate();
  if (spec.backend == EncoderBackend::toy_text) {
    return std::make_unique<ToyTextEncoder>(spec.seed, spec.output_dim);
  }
  TextEncoderFactory factory;
  {
    std::lock_guard lock(registry().mu);
    factory = registry().text;
  }
  if (!factory) {
    throw CapabilityError("pretrained text encoder is not installed; use the toy backend");
  }
  return factory(spec);
}

namespace {

class SharedToyImage final : public ImageEncoder {
 public:
  explicit SharedToyImage(std::shared_ptr<const ToyImageEncoder> impl) : impl_(std::move(impl)) {}
  ImageEmbedding encode(const ImageTensor& image) const override { return impl_->encode(image); }

 private:
  std::shared_ptr<const ToyImageEncoder> impl_;
};

}  // namespace

std::unique_ptr<ImageEncoder> make_image_encoder(const EncoderSpec& spec) {
  if (spec.is_text()) throw std::invalid_argument("make_image_encoder: not an image backend");
  spec.validate();
  if (spec.backend == EncoderBackend::toy_image) {
    return std::make_unique<SharedToyImage>(shared_toy_image(spec.seed));
  }
  ImageEncoderFactory factory;
  {
    std::lock_guard lock(registry().mu);
    factory = registry().image;
  }
  if (!factory) {
    throw CapabilityError("pretrained image encoder is not installed; use the toy backend");
  }
  return factory(spec);
}

TextEmbedding encode_text(const TokenizedText& tokens, const TextEncoder& encoder) {
  TextEmbedding e = encoder.encode(tokens);
  if (e.vector.size() != kTextEmbeddingDim) {
    throw std::runtime_error("text encoder returned dim " + std::to_string(e.vector.size()));
  }
  if (!e.vector.allFinite()) throw std::runtime_error("text encoder returned non-finite values");
  const double norm = e.vector.norm();
  if (norm == 0) throw std::runtime_error("text encoder returned a zero vector");
  e.vector /= norm;
  return e;
}

TextEmbedding encode_text(const TokenizedText& tokens, const EncoderSpec& spec) {
  return encode_text(tokens, *make_text_encoder(spec));
}

ImageEmbedding encode_image(const ImageTensor& image, const ImageEncoder& encoder) {
  ImageEmbedding e = encoder.encode(image);
  if (e.vector.size() != kImageEmbeddingDim) {
    throw std::runtime_error("image encoder returned dim " + std::to_string(e.vector.size()));
  }
  if (!e.vector.allFinite()) throw std::runtime_error("image encoder returned non-finite values");
  return e;
}

ImageEmbedding encode_image(const ImageTensor& image, const EncoderSpec& spec) {
  return encode_image(image, *make_image_encoder(spec));
}

// ---------------------------------------------------------------------------
// Freeze policies

ParamList apply_freeze_policy(LayeredEncoder& encoder, const FreezePolicy& policy) {
  policy.validate();
  if (policy.total_layers != encoder.layer_count()) {
    throw std::out_of_range("FreezePolicy covers " + std::to_string(policy.total_layers) +
                            " layers but encoder has " + std::to_string(encoder.layer_count()));
  }
  ParamList out;
  for (int l : policy.trainable_layers) {
    for (auto* p : encoder.layer_parameters(l)) out.push_back(p);
  }
  if (policy.projection_trainable) {
    for (auto* p : encoder.projection_parameters()) out.push_back(p);
  }
  return out;
}

ToyLayeredEncoder::ToyLayeredEncoder(int layers, int width, int output_dim,
                                     std::uint64_t seed)
    : projection_("projection", width, output_dim) {
  Rng rng(seed);
  for (int l = 1; l <= layers; ++l) {
    layers_.emplace_back("layer" + std::to_string(l), width, width);
    layers_.back().init(rng);
  }
  projection_.init(rng);
}

ParamList ToyLayeredEncoder::layer_parameters(int layer) {
  if (layer < 1 || layer > layer_count()) {
    throw std::out_of_range("layer index " + std::to_string(layer) + " out of range");
  }
  ParamList out;
  layers_[layer - 1].collect(out);
  return out;
}

ParamList ToyLayeredEncoder::projection_parameters() {
  ParamList out;
  projection_.collect(out);
  return out;
}

ParamList ToyLayeredEncoder::all_parameters() {
  ParamList out;
  for (auto& l : layers_) l.collect(out);
  projection_.collect(out);
  return out;
}

Matrix ToyLayeredEncoder::forward(const Matrix& x) {
  inputs_.clear();
  activations_.clear();
  Matrix h = x;
  for (auto& layer : layers_) {
    inputs_.push_back(h);
    Matrix a = layer.forward(h).array().tanh();
    activations_.push_back(a);
    h += a;
  }
  inputs_.push_back(h);
  return projection_.forward(h);
}

void ToyLayeredEncoder::backward(const Matrix& dy) {
  Matrix dh = projection_.backward(inputs_.back(), dy);
  for (int l = layer_count() - 1; l >= 0; --l) {
    const Matrix dpre = dh.array() * (1.0 - activations_[l].array().square());
    dh += layers_[l].backward(inputs_[l], dpre);
  }
}

}  // namespace memefusion
