#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "memefusion/errors.hpp"
#include "memefusion/image_io.hpp"
#include "memefusion/preprocess.hpp"
#include "memefusion/rng.hpp"

using namespace memefusion;
namespace fs = std::filesystem;

namespace {

Raster random_raster(int w, int h, int c, std::uint64_t seed) {
  Raster r(w, h, c);
  Rng rng(seed);
  for (auto& v : r.data) v = static_cast<std::uint8_t>(rng.below(256));
  return r;
}

int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * n - 2 - i;
  return i;
}

// Direct (non-separable) 2-D Gaussian over the whole image.
Raster reference_blur(const Raster& src, double sigma) {
  int size = static_cast<int>(std::ceil(6 * sigma + 1));
  if (size % 2 == 0) ++size;
  const int r = size / 2;
  std::vector<double> g(size);
  double sum = 0;
  for (int i = 0; i < size; ++i) sum += g[i] = std::exp(-double((i - r) * (i - r)) / (2 * sigma * sigma));
  for (auto& v : g) v /= sum;
  Raster out = src;
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < src.channels; ++c) {
        double acc = 0;
        for (int dy = 0; dy < size; ++dy)
          for (int dx = 0; dx < size; ++dx)
            acc += g[dy] * g[dx] *
                   src.at(reflect(x + dx - r, src.width), reflect(y + dy - r, src.height), c);
        out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(acc));
      }
  return out;
}

}  // namespace

TEST_CASE("tokenize_text") {
  HashingTokenizer tok;
  SUBCASE("empty input is specials then padding") {
    const auto t = tokenize_text("", tok);
    REQUIRE(t.token_ids.size() == 77);
    REQUIRE(t.attention_mask.size() == 77);
    CHECK(t.active_length() <= 2);
    CHECK(t.token_ids[0] == tok.bos_id());
    for (int i = 0; i < 77; ++i) {
      if (!t.attention_mask[i]) CHECK(t.token_ids[i] == tok.pad_id());
    }
  }
  SUBCASE("long text truncates to the leading tokens") {
    std::string text;
    for (int i = 0; i < 300; ++i) text += "w" + std::to_string(i) + " ";
    const auto ids = tok.encode(text);
    REQUIRE(ids.size() >= 300);
    const auto t = tokenize_text(text, tok);
    CHECK(t.token_ids.size() == 77);
    CHECK(t.active_length() == 77);
    for (int i = 1; i < 76; ++i) CHECK(t.token_ids[i] == ids[i - 1]);
  }
  SUBCASE("raw text is not normalized") {
    const std::string raw = "#नेपाल 😀 http://x";
    const auto words = tok.segment(raw);
    std::string joined;
    for (const auto& w : words) joined += w;
    CHECK(joined == "#नेपाल😀http://x");
    CHECK(tokenize_text("Hate", tok).token_ids != tokenize_text("hate", tok).token_ids);
  }
  SUBCASE("length is always exactly max_len") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      std::string s;
      const auto n = rng.below(600);
      for (std::uint64_t i = 0; i < n; ++i) s += static_cast<char>(rng.below(256));
      const auto t = tokenize_text(s, tok);
      CHECK(t.token_ids.size() == 77);
      CHECK(t.attention_mask.size() == 77);
    }
  }
}

TEST_CASE("preprocess_image") {
  SUBCASE("uniform gray closed form") {
    Raster gray(300, 260, 3, 128);
    const auto t = preprocess_image(gray, "g");
    CHECK(t.values.size() == 3u * 224 * 224);
    CHECK(t.at(0, 100, 100) == doctest::Approx(0.0741).epsilon(1e-3));
    CHECK(t.at(1, 0, 0) == doctest::Approx(0.2052).epsilon(1e-3));
    CHECK(t.at(2, 223, 223) == doctest::Approx(0.4265).epsilon(1e-3));
    // de-normalizing recovers the source intensity
    for (int c = 0; c < 3; ++c) {
      const double v = t.at(c, 5, 7) * kImageStd[c] + kImageMean[c];
      CHECK(std::abs(v - 128.0 / 255) < 1.0 / 255);
    }
  }
  SUBCASE("448x224 crops the horizontally centered window") {
    Raster ramp(448, 224, 3);
    for (int y = 0; y < 224; ++y)
      for (int x = 0; x < 448; ++x) {
        ramp.at(x, y, 0) = static_cast<std::uint8_t>(x & 255);
        ramp.at(x, y, 1) = static_cast<std::uint8_t>(x >> 8);
        ramp.at(x, y, 2) = static_cast<std::uint8_t>(y);
      }
    const auto t = preprocess_image(ramp, "ramp");
    auto raw = [&](int c, int y, int x) {
      return std::lround((t.at(c, y, x) * kImageStd[c] + kImageMean[c]) * 255);
    };
    for (int x : {0, 1, 100, 223}) {
      const long col = raw(0, 10, x) + 256 * raw(1, 10, x);
      CHECK(col == 112 + x);
    }
    CHECK(raw(2, 37, 0) == 37);
  }
  SUBCASE("224x224 input passes through geometrically") {
    const auto src = random_raster(224, 224, 3, 5);
    CHECK(resize_and_center_crop(src, 224) == src);
  }
  SUBCASE("single channel is replicated") {
    Raster g(50, 80, 1, 200);
    const auto rgb = to_rgb(g);
    CHECK(rgb.channels == 3);
    CHECK(rgb.at(3, 4, 0) == 200);
    CHECK(rgb.at(3, 4, 2) == 200);
    const auto t = preprocess_image(g, "g1");
    for (int c = 0; c < 3; ++c) {
      CHECK(t.at(c, 50, 50) == doctest::Approx((200 / 255.0 - kImageMean[c]) / kImageStd[c]).epsilon(1e-4));
    }
  }
  SUBCASE("alpha composites onto white") {
    Raster rgba(4, 4, 4, 0);  // fully transparent black
    CHECK(to_rgb(rgba).at(1, 1, 0) == 255);
  }
  SUBCASE("undecodable file carries the sample id") {
    const auto p = fs::temp_directory_path() / "memefusion_broken.png";
    std::ofstream(p, std::ios::binary) << "not an image";
    try {
      load_image(p, "meme-042");
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("meme-042") != std::string::npos);
    }
  }
}

TEST_CASE("image file round trip") {
  const auto src = random_raster(31, 17, 3, 9);
  const auto p = fs::temp_directory_path() / "memefusion_rt.png";
  save_image(src, p);
  CHECK(load_image(p, "rt") == src);
}

TEST_CASE("remove_text_regions") {
  const auto img = random_raster(64, 48, 3, 11);
  SUBCASE("no boxes is a no-op") {
    CHECK(remove_text_regions(img, {}) == img);
  }
  SUBCASE("full-image box equals a reference 2-D Gaussian") {
    const TextBox box{0, 0, 64, 48, 1.0};
    const auto out = remove_text_regions(img, {box});
    const auto ref = reference_blur(img, blur_sigma(box));
    REQUIRE(out.width == 64);
    REQUIRE(out.height == 48);
    int worst = 0;
    for (std::size_t i = 0; i < out.data.size(); ++i)
      worst = std::max(worst, std::abs(int(out.data[i]) - int(ref.data[i])));
    CHECK(worst <= 1);
  }
  SUBCASE("corner box leaves everything outside the dilated box untouched") {
    const TextBox box{0, 0, 50, 20, 0.9};
    const auto out = remove_text_regions(img, {box});
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        if (x >= 52 || y >= 22)
          for (int c = 0; c < 3; ++c) CHECK(out.at(x, y, c) == img.at(x, y, c));
    // second pass only moves in-box pixels
    const auto twice = remove_text_regions(out, {box});
    for (int y = 22; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) CHECK(twice.at(x, y, 1) == img.at(x, y, 1));
  }
  SUBCASE("low-confidence boxes are ignored") {
    CHECK(remove_text_regions(img, {TextBox{5, 5, 20, 10, 0.3}}) == img);
  }
  SUBCASE("boxes past the border are clamped") {
    const auto out = remove_text_regions(img, {TextBox{60, 40, 30, 30, 1.0}});
    CHECK(out.width == img.width);
    CHECK(out.at(0, 0, 0) == img.at(0, 0, 0));
  }
}

TEST_CASE("blur parameters") {
  CHECK(blur_sigma(TextBox{0, 0, 8, 40, 1}) == 3.0);
  CHECK(blur_sigma(TextBox{0, 0, 80, 40, 1}) == 10.0);
  CHECK(blur_kernel_size(3.0) == 19);
  CHECK(blur_kernel_size(2.5) == 17);
  const auto g = gaussian_kernel(3.0, 19);
  double s = 0;
  for (double v : g) s += v;
  CHECK(s == doctest::Approx(1.0));
  CHECK(g[9] > g[8]);
  CHECK(g[0] == doctest::Approx(g[18]));
}

TEST_CASE("box file parsing") {
  const auto p = fs::temp_directory_path() / "memefusion_boxes.csv";
  std::ofstream(p) << "# id,x,y,w,h,conf\nm1, 1, 2, 3, 4, 0.9\nm1,5,6,7,8,0.2\nm2,0,0,1,1,1\n";
  const auto boxes = load_box_file(p);
  REQUIRE(boxes.at("m1").size() == 2);
  CHECK(boxes.at("m1")[0].x == 1);
  CHECK(boxes.at("m1")[1].confidence == doctest::Approx(0.2));
  CHECK(boxes.at("m2").size() == 1);
  std::ofstream(p) << "m1,1,2,3\n";
  CHECK_THROWS_AS(load_box_file(p), DataError);
}

TEST_CASE("preprocessing digest depends on settings and variant") {
  PreprocessConfig a, b;
  b.image_size = 192;
  CHECK(preprocessing_digest(a, ImageVariant::original).size() == 16);
  CHECK(preprocessing_digest(a, ImageVariant::original) == preprocessing_digest(a, ImageVariant::original));
  CHECK(preprocessing_digest(a, ImageVariant::original) != preprocessing_digest(b, ImageVariant::original));
  CHECK(preprocessing_digest(a, ImageVariant::original) != preprocessing_digest(a, ImageVariant::text_removed));
}
