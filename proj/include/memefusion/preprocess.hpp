#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace memefusion {

enum class ImageVariant { original, text_removed };

const char* variant_name(ImageVariant v);
ImageVariant parse_variant(const std::string& s);

struct PreprocessConfig {
  int max_text_len = 77;
  int image_size = 224;
  double box_confidence_min = 0.5;
};

/// Hex digest of every setting that changes a preprocessed input.
std::string preprocessing_digest(const PreprocessConfig& cfg, ImageVariant variant);

// ---------------------------------------------------------------------------
// Text

struct TokenizedText {
  std::vector<int> token_ids;
  std::vector<std::uint8_t> attention_mask;

  int active_length() const;
};

/// Subword segmenter contract consumed by tokenize_text.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  /// Subword ids for raw text, without special tokens.
  virtual std::vector<int> encode(std::string_view text) const = 0;
  virtual int pad_id() const = 0;
  virtual int bos_id() const = 0;
  virtual int eos_id() const = 0;
  virtual int vocab_size() const = 0;
};

/// Weight-free tokenizer: splits on ASCII whitespace, cuts each word into
/// pieces of at most `piece_len` code points and hashes each piece into the
/// vocabulary. Input bytes are never altered, so hashtags, emoji and URL
/// fragments reach the segmenter intact.
class HashingTokenizer final : public Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kFirstRegular = 3;

  explicit HashingTokenizer(int vocab_size = 250002, int piece_len = 4);

  /// The subword pieces encode() hashes, in order.
  std::vector<std::string> segment(std::string_view text) const;

  std::vector<int> encode(std::string_view text) const override;
  int pad_id() const override { return kPad; }
  int bos_id() const override { return kBos; }
  int eos_id() const override { return kEos; }
  int vocab_size() const override { return vocab_size_; }

 private:
  int vocab_size_;
  int piece_len_;
};

/// [bos] + leading subwords + [eos], padded or truncated to exactly max_len.
TokenizedText tokenize_text(std::string_view text, const Tokenizer& tokenizer,
                            int max_len = 77);

// ---------------------------------------------------------------------------
// Images

/// Decoded 8-bit raster, interleaved HWC, 1/3/4 channels (gray/RGB/RGBA).
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> data;

  Raster() = default;
  Raster(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::uint8_t& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const Raster&) const = default;
};

inline constexpr std::array<double, 3> kImageMean{0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kImageStd{0.229, 0.224, 0.225};

/// Channel-normalized CHW tensor.
struct ImageTensor {
  int size = 224;
  std::vector<float> values;  // 3 * size * size
  std::string source_id;

  float at(int c, int y, int x) const {
    return values[(static_cast<std::size_t>(c) * size + y) * size + x];
  }
};

/// Gray is replicated, alpha is composited onto white.
Raster to_rgb(const Raster& image);

/// Bilinear resize so the shorter edge equals `target`, then center crop to
/// target x target. Same-size inputs pass through untouched.
Raster resize_and_center_crop(const Raster& rgb, int target);

ImageTensor preprocess_image(const Raster& image, const std::string& source_id,
                             int image_size = 224);

// ---------------------------------------------------------------------------
// Text removal

struct TextBox {
  int x = 0;
  int y = 0;
  int w = 1;
  int h = 1;
  double confidence = 1.0;
};

struct TextRemovalOptions {
  double box_confidence_min = 0.5;
  int dilation = 2;
};

/// Blur standard deviation for a box: max(3, min(w, h) / 4).
double blur_sigma(const TextBox& box);
/// Smallest odd integer >= 6 sigma + 1.
int blur_kernel_size(double sigma);
/// Normalized 1-D Gaussian taps of the given odd size.
std::vector<double> gaussian_kernel(double sigma, int size);

/// Clamps a box into a width x height image; returns false if nothing remains.
bool clamp_box(TextBox& box, int width, int height);

/// Replaces each confident box (dilated, clamped) with a separable Gaussian
/// blur of the source image. Pixels outside every dilated box are untouched.
Raster remove_text_regions(const Raster& image, const std::vector<TextBox>& boxes,
                           const TextRemovalOptions& opts = {});

/// Box file rows: `id, x, y, w, h, confidence`. '#' starts a comment line.
std::map<std::string, std::vector<TextBox>> load_box_file(
    const std::filesystem::path& path);

}  // namespace memefusion
