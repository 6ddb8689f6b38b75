#include "memefusion/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "memefusion/errors.hpp"

namespace memefusion {

void RunConfig::validate() const {
  train.validate();
  HybridHeadConfig h = head;
  h.dropout_rate = train.dropout_rate;
  try {
    h.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (preprocess.max_text_len < 2) throw ConfigError("max_text_len must be >= 2");
  if (preprocess.image_size < 8) throw ConfigError("image_size must be >= 8");
  if (preprocess.box_confidence_min < 0 || preprocess.box_confidence_min > 1) {
    throw ConfigError("box_confidence_min must lie in [0,1]");
  }
  if (folds < 2) throw ConfigError("folds must be >= 2");
}

RunConfig parse_run_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  RunConfig cfg;
  for (const auto& [key, value] : j.items()) {
    auto number = [&]() -> double {
      if (!value.is_number()) throw ConfigError("config key '" + key + "' must be a number");
      return value.get<double>();
    };
    auto integer = [&]() -> long long {
      if (!value.is_number_integer()) throw ConfigError("config key '" + key + "' must be an integer");
      return value.get<long long>();
    };
    if (key == "learning_rate") cfg.train.learning_rate = number();
    else if (key == "weight_decay") cfg.train.weight_decay = number();
    else if (key == "dropout_rate") cfg.train.dropout_rate = number();
    else if (key == "label_smoothing") cfg.train.label_smoothing = number();
    else if (key == "suppression_exponent") cfg.train.suppression_exponent = number();
    else if (key == "lr_factor") cfg.train.lr_factor = number();
    else if (key == "lr_patience") cfg.train.lr_patience = static_cast<int>(integer());
    else if (key == "stop_patience") cfg.train.stop_patience = static_cast<int>(integer());
    else if (key == "min_delta") cfg.train.min_delta = number();
    else if (key == "batch_size") cfg.train.batch_size = static_cast<int>(integer());
    else if (key == "max_epochs") cfg.train.max_epochs = static_cast<int>(integer());
    else if (key == "seed") cfg.train.seed = static_cast<std::uint64_t>(integer());
    else if (key == "latent_dim") cfg.head.latent_dim = static_cast<int>(integer());
    else if (key == "num_heads") cfg.head.num_heads = static_cast<int>(integer());
    else if (key == "max_text_len") cfg.preprocess.max_text_len = static_cast<int>(integer());
    else if (key == "image_size") cfg.preprocess.image_size = static_cast<int>(integer());
    else if (key == "box_confidence_min") cfg.preprocess.box_confidence_min = number();
    else if (key == "encoder_seed") cfg.encoder_seed = static_cast<std::uint64_t>(integer());
    else if (key == "folds") cfg.folds = static_cast<int>(integer());
    else throw ConfigError("unknown config key '" + key + "'");
  }
  cfg.head.dropout_rate = cfg.train.dropout_rate;
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["learning_rate"] = c.train.learning_rate;
  j["weight_decay"] = c.train.weight_decay;
  j["dropout_rate"] = c.train.dropout_rate;
  j["label_smoothing"] = c.train.label_smoothing;
  j["suppression_exponent"] = c.train.suppression_exponent;
  j["lr_factor"] = c.train.lr_factor;
  j["lr_patience"] = c.train.lr_patience;
  j["stop_patience"] = c.train.stop_patience;
  j["min_delta"] = c.train.min_delta;
  j["batch_size"] = c.train.batch_size;
  j["max_epochs"] = c.train.max_epochs;
  j["seed"] = c.train.seed;
  j["latent_dim"] = c.head.latent_dim;
  j["num_heads"] = c.head.num_heads;
  j["max_text_len"] = c.preprocess.max_text_len;
  j["image_size"] = c.preprocess.image_size;
  j["box_confidence_min"] = c.preprocess.box_confidence_min;
  j["encoder_seed"] = c.encoder_seed;
  j["folds"] = c.folds;
  return j.dump(2) + "\n";
}

}  // namespace memefusion
