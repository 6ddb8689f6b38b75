#pragma once

#include <filesystem>
#include <string>

#include "memefusion/fusion.hpp"

namespace memefusion {

/// Model checkpoint layout (little-endian):
///   "MFCK" u32 format_version
///   u32 header_len, header JSON {model, image_variant, seed, head{...}}
///   u32 param_count
///   param_count x { u32 name_len, name, u32 rows, u32 cols, rows*cols float32 (row-major) }
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const FusionModel& model, const std::filesystem::path& path);
FusionModel load_checkpoint(const std::filesystem::path& path);

}  // namespace memefusion
