#include "memefusion/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "memefusion/errors.hpp"

namespace memefusion {

Raster load_image(const std::filesystem::path& path, const std::string& sample_id) {
  cv::Mat m;
  try {
    m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception&) {
    m.release();
  }
  if (m.empty()) {
    throw DataError("sample '" + sample_id + "': cannot decode image '" +
                    path.string() + "'");
  }
  if (m.depth() != CV_8U) {
    cv::Mat tmp;
    const double scale = m.depth() == CV_16U ? 1.0 / 257.0 : 1.0;
    m.convertTo(tmp, CV_8U, scale);
    m = tmp;
  }
  const int ch = m.channels();
  Raster r(m.cols, m.rows, ch);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) {
      for (int c = 0; c < ch; ++c) {
        // OpenCV stores BGR(A); swap to RGB(A).
        int src_c = (ch >= 3 && c < 3) ? 2 - c : c;
        r.at(x, y, c) = row[x * ch + src_c];
      }
    }
  }
  return r;
}

void save_image(const Raster& image, const std::filesystem::path& path) {
  const int ch = image.channels;
  cv::Mat m(image.height, image.width, CV_8UC(ch));
  for (int y = 0; y < image.height; ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < ch; ++c) {
        int dst_c = (ch >= 3 && c < 3) ? 2 - c : c;
        row[x * ch + dst_c] = image.at(x, y, c);
      }
    }
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), m);
  } catch (const cv::Exception&) {
    ok = false;
  }
  if (!ok) throw DataError("cannot write image '" + path.string() + "'");
}

}  // namespace memefusion
