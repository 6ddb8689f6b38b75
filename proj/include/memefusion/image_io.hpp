#pragma once

#include <filesystem>
#include <string>

#include "memefusion/preprocess.hpp"

namespace memefusion {

/// Decodes any format OpenCV understands into an RGB(A)/gray raster.
/// Throws DataError naming `sample_id` when the file cannot be decoded.
Raster load_image(const std::filesystem::path& path, const std::string& sample_id);

/// Encoding is chosen from the file extension (.png recommended: lossless).
void save_image(const Raster& image, const std::filesystem::path& path);

}  // namespace memefusion
