#include "memefusion/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "memefusion/errors.hpp"
#include "memefusion/rng.hpp"

namespace memefusion {

const char* variant_name(ImageVariant v) {
  return v == ImageVariant::original ? "original" : "text_removed";
}

ImageVariant parse_variant(const std::string& s) {
  if (s == "original") return ImageVariant::original;
  if (s == "text_removed") return ImageVariant::text_removed;
  throw ConfigError("unknown image variant '" + s + "'");
}

std::string preprocessing_digest(const PreprocessConfig& cfg, ImageVariant variant) {
  std::ostringstream desc;
  desc << "max_text_len=" << cfg.max_text_len << ";image_size=" << cfg.image_size
       << ";variant=" << variant_name(variant);
  if (variant == ImageVariant::text_removed) {
    desc << ";box_confidence_min=" << cfg.box_confidence_min;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(desc.str())));
  return buf;
}

// ---------------------------------------------------------------------------
// Text

int TokenizedText::active_length() const {
  int n = 0;
  for (auto m : attention_mask) n += m;
  return n;
}

HashingTokenizer::HashingTokenizer(int vocab_size, int piece_len)
    : vocab_size_(vocab_size), piece_len_(piece_len) {
  if (vocab_size <= kFirstRegular) {
    throw std::invalid_argument("HashingTokenizer: vocab too small");
  }
  if (piece_len < 1) throw std::invalid_argument("HashingTokenizer: piece_len < 1");
}

namespace {

bool is_ascii_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;  // stray continuation or invalid byte: keep it as its own unit
}

}  // namespace

std::vector<std::string> HashingTokenizer::segment(std::string_view text) const {
  std::vector<std::string> pieces;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_ascii_space(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_ascii_space(static_cast<unsigned char>(text[i]))) ++i;
    std::string_view word = text.substr(start, i - start);

    std::size_t pos = 0;
    while (pos < word.size()) {
      std::size_t end = pos;
      for (int cp = 0; cp < piece_len_ && end < word.size(); ++cp) {
        end += utf8_length(static_cast<unsigned char>(word[end]));
      }
      end = std::min(end, word.size());
      pieces.emplace_back(word.substr(pos, end - pos));
      pos = end;
    }
  }
  return pieces;
}

std::vector<int> HashingTokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  const auto span = static_cast<std::uint64_t>(vocab_size_ - kFirstRegular);
  for (const auto& piece : segment(text)) {
    ids.push_back(kFirstRegular + static_cast<int>(fnv1a(piece) % span));
  }
  return ids;
}

TokenizedText tokenize_text(std::string_view text, const Tokenizer& tokenizer,
                            int max_len) {
  if (max_len < 2) throw std::invalid_argument("tokenize_text: max_len < 2");
  auto body = tokenizer.encode(text);
  const std::size_t room = static_cast<std::size_t>(max_len) - 2;
  if (body.size() > room) body.resize(room);

  TokenizedText out;
  out.token_ids.assign(max_len, tokenizer.pad_id());
  out.attention_mask.assign(max_len, 0);
  std::size_t pos = 0;
  out.token_ids[pos] = tokenizer.bos_id();
  out.attention_mask[pos++] = 1;
  for (int id : body) {
    out.token_ids[pos] = id;
    out.attention_mask[pos++] = 1;
  }
  out.token_ids[pos] = tokenizer.eos_id();
  out.attention_mask[pos] = 1;
  return out;
}

// ---------------------------------------------------------------------------
// Images

Raster to_rgb(const Raster& image) {
  if (image.width < 1 || image.height < 1) {
    throw DataError("image has no pixels");
  }
  if (image.channels == 3) return image;
  Raster out(image.width, image.height, 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      switch (image.channels) {
        case 1:
          for (int c = 0; c < 3; ++c) out.at(x, y, c) = image.at(x, y, 0);
          break;
        case 2: {  // gray + alpha
          const double a = image.at(x, y, 1) / 255.0;
          const double v = a * image.at(x, y, 0) + (1.0 - a) * 255.0;
          for (int c = 0; c < 3; ++c) out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(v));
          break;
        }
        case 4: {
          const double a = image.at(x, y, 3) / 255.0;
          for (int c = 0; c < 3; ++c) {
            const double v = a * image.at(x, y, c) + (1.0 - a) * 255.0;
            out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(v));
          }
          break;
        }
        default:
          throw DataError("unsupported channel count " + std::to_string(image.channels));
      }
    }
  }
  return out;
}

namespace {

Raster resize_bilinear(const Raster& src, int out_w, int out_h) {
  if (out_w == src.width && out_h == src.height) return src;
  Raster out(out_w, out_h, src.channels);
  const double sx = static_cast<double>(src.width) / out_w;
  const double sy = static_cast<double>(src.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, src.height - 1);
    double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, src.width - 1);
      double wx = fx - x0;
      for (int c = 0; c < src.channels; ++c) {
        double top = (1 - wx) * src.at(x0, y0, c) + wx * src.at(x1, y0, c);
        double bot = (1 - wx) * src.at(x0, y1, c) + wx * src.at(x1, y1, c);
        out.at(x, y, c) = static_cast<std::uint8_t>(
            std::clamp(std::lround((1 - wy) * top + wy * bot), 0L, 255L));
      }
    }
  }
  return out;
}

}  // namespace

Raster resize_and_center_crop(const Raster& rgb, int target) {
  const int shorter = std::min(rgb.width, rgb.height);
  int new_w, new_h;
  if (rgb.width <= rgb.height) {
    new_w = target;
    new_h = static_cast<int>(std::lround(static_cast<double>(rgb.height) * target / shorter));
  } else {
    new_h = target;
    new_w = static_cast<int>(std::lround(static_cast<double>(rgb.width) * target / shorter));
  }
  new_w = std::max(new_w, target);
  new_h = std::max(new_h, target);
  Raster resized = resize_bilinear(rgb, new_w, new_h);
  if (new_w == target && new_h == target) return resized;

  const int left = (new_w - target) / 2;
  const int top = (new_h - target) / 2;
  Raster out(target, target, resized.channels);
  for (int y = 0; y < target; ++y) {
    for (int x = 0; x < target; ++x) {
      for (int c = 0; c < resized.channels; ++c) {
        out.at(x, y, c) = resized.at(left + x, top + y, c);
      }
    }
  }
  return out;
}

ImageTensor preprocess_image(const Raster& image, const std::string& source_id,
                             int image_size) {
  if (image.width < 1 || image.height < 1 || image.data.empty()) {
    throw DataError("sample '" + source_id + "': undecodable or empty image");
  }
  Raster rgb;
  try {
    rgb = to_rgb(image);
  } catch (const DataError& e) {
    throw DataError("sample '" + source_id + "': " + e.what());
  }
  const Raster cropped = resize_and_center_crop(rgb, image_size);

  ImageTensor t;
  t.size = image_size;
  t.source_id = source_id;
  t.values.resize(static_cast<std::size_t>(3) * image_size * image_size);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < image_size; ++y) {
      for (int x = 0; x < image_size; ++x) {
        const double v = cropped.at(x, y, c) / 255.0;
        t.values[(static_cast<std::size_t>(c) * image_size + y) * image_size + x] =
            static_cast<float>((v - kImageMean[c]) / kImageStd[c]);
      }
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Text removal

double blur_sigma(const TextBox& box) {
  return std::max(3.0, std::min(box.w, box.h) / 4.0);
}

int blur_kernel_size(double sigma) {
  int k = static_cast<int>(std::ceil(6.0 * sigma + 1.0));
  if (k % 2 == 0) ++k;
  return k;
}

std::vector<double> gaussian_kernel(double sigma, int size) {
  const int r = size / 2;
  std::vector<double> g(size);
  double sum = 0;
  for (int i = 0; i < size; ++i) {
    const double d = i - r;
    g[i] = std::exp(-d * d / (2 * sigma * sigma));
    sum += g[i];
  }
  for (auto& v : g) v /= sum;
  return g;
}

bool clamp_box(TextBox& box, int width, int height) {
  int x0 = std::clamp(box.x, 0, width);
  int y0 = std::clamp(box.y, 0, height);
  int x1 = std::clamp(box.x + box.w, 0, width);
  int y1 = std::clamp(box.y + box.h, 0, height);
  if (x1 - x0 < 1 || y1 - y0 < 1) return false;
  box = {x0, y0, x1 - x0, y1 - y0, box.confidence};
  return true;
}

namespace {

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

void blur_region(const Raster& src, Raster& dst, const TextBox& region, double sigma) {
  const int size = blur_kernel_size(sigma);
  const int r = size / 2;
  const auto g = gaussian_kernel(sigma, size);
  const int C = src.channels;

  // Horizontal pass over every source row, restricted to the region columns.
  std::vector<double> tmp(static_cast<std::size_t>(src.height) * region.w * C);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < region.w; ++x) {
      for (int c = 0; c < C; ++c) {
        double acc = 0;
        for (int k = 0; k < size; ++k) {
          acc += g[k] * src.at(reflect101(region.x + x + k - r, src.width), y, c);
        }
        tmp[(static_cast<std::size_t>(y) * region.w + x) * C + c] = acc;
      }
    }
  }
  for (int y = 0; y < region.h; ++y) {
    for (int x = 0; x < region.w; ++x) {
      for (int c = 0; c < C; ++c) {
        double acc = 0;
        for (int k = 0; k < size; ++k) {
          const int sy = reflect101(region.y + y + k - r, src.height);
          acc += g[k] * tmp[(static_cast<std::size_t>(sy) * region.w + x) * C + c];
        }
        dst.at(region.x + x, region.y + y, c) =
            static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
      }
    }
  }
}

}  // namespace

Raster remove_text_regions(const Raster& image, const std::vector<TextBox>& boxes,
                           const TextRemovalOptions& opts) {
  Raster out = image;
  for (TextBox box : boxes) {
    if (box.confidence < opts.box_confidence_min) continue;
    if (!clamp_box(box, image.width, image.height)) continue;
    const double sigma = blur_sigma(box);
    TextBox region{box.x - opts.dilation, box.y - opts.dilation,
                   box.w + 2 * opts.dilation, box.h + 2 * opts.dilation, box.confidence};
    clamp_box(region, image.width, image.height);
    blur_region(image, out, region, sigma);
  }
  return out;
}

std::map<std::string, std::vector<TextBox>> load_box_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open box file '" + path.string() + "'");
  std::map<std::string, std::vector<TextBox>> boxes;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) {
      auto b = f.find_first_not_of(" \t\r");
      auto e = f.find_last_not_of(" \t\r");
      fields.push_back(b == std::string::npos ? "" : f.substr(b, e - b + 1));
    }
    if (fields.size() != 6) {
      throw DataError("box file line " + std::to_string(line_no) +
                      ": expected 6 fields (id,x,y,w,h,confidence)");
    }
    TextBox box;
    try {
      box.x = std::stoi(fields[1]);
      box.y = std::stoi(fields[2]);
      box.w = std::stoi(fields[3]);
      box.h = std::stoi(fields[4]);
      box.confidence = std::stod(fields[5]);
    } catch (const std::exception&) {
      throw DataError("box file line " + std::to_string(line_no) + ": bad number");
    }
    if (box.w < 1 || box.h < 1) {
      throw DataError("box file line " + std::to_string(line_no) + ": w and h must be >= 1");
    }
    if (box.confidence < 0 || box.confidence > 1) {
      throw DataError("box file line " + std::to_string(line_no) +
                      ": confidence outside [0,1]");
    }
    boxes[fields[0]].push_back(box);
  }
  return boxes;
}

}  // namespace memefusion
