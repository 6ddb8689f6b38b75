#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "memefusion/fusion.hpp"
#include "memefusion/preprocess.hpp"
#include "memefusion/training.hpp"

namespace memefusion {

/// Every tunable of a run. The config file is a flat JSON object whose keys
/// are the field names below; unknown keys are rejected.
///
///   TrainConfig:      learning_rate weight_decay dropout_rate label_smoothing
///                     suppression_exponent lr_factor lr_patience stop_patience
///                     min_delta batch_size max_epochs seed
///   head:             latent_dim num_heads
///   preprocessing:    max_text_len image_size box_confidence_min
///   encoders:         encoder_seed
///   cross-validation: folds
struct RunConfig {
  TrainConfig train;
  HybridHeadConfig head;
  PreprocessConfig preprocess;
  std::uint64_t encoder_seed = 7;
  int folds = 5;

  void validate() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& cfg);

}  // namespace memefusion
