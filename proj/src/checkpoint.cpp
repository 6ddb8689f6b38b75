#include "memefusion/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "memefusion/errors.hpp"

namespace memefusion {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError("checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string get_string(std::istream& in) {
  const auto n = get_u32(in);
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw DataError("checkpoint truncated");
  return s;
}

}  // namespace

void save_checkpoint(const FusionModel& model, const std::filesystem::path& path) {
  const auto& h = model.head_config();
  nlohmann::json header = {
      {"model", model.config().name()},
      {"image_variant", variant_name(model.config().image_variant)},
      {"seed", model.seed()},
      {"head",
       {{"latent_dim", h.latent_dim},
        {"num_heads", h.num_heads},
        {"dropout_rate", h.dropout_rate},
        {"num_classes", h.num_classes},
        {"image_dim", h.image_dim},
        {"text_dim", h.text_dim}}}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  out.write("MFCK", 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));

  auto params = const_cast<FusionModel&>(model).parameters();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_u32(out, static_cast<std::uint32_t>(p->value.rows()));
    put_u32(out, static_cast<std::uint32_t>(p->value.cols()));
    for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(p->value(r, c))));
      }
    }
  }
  if (!out) throw DataError("error writing checkpoint '" + path.string() + "'");
}

FusionModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "MFCK", 4) != 0) {
    throw DataError("'" + path.string() + "' is not a model checkpoint");
  }
  const auto version = get_u32(in);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(get_string(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  }

  HybridHeadConfig h;
  ModelConfigId id;
  std::uint64_t seed;
  try {
    const auto& jh = header.at("head");
    h.latent_dim = jh.at("latent_dim");
    h.num_heads = jh.at("num_heads");
    h.dropout_rate = jh.at("dropout_rate");
    h.num_classes = jh.at("num_classes");
    h.image_dim = jh.at("image_dim");
    h.text_dim = jh.at("text_dim");
    id.id = parse_model_kind(header.at("model").get<std::string>());
    id.image_variant = parse_variant(header.at("image_variant").get<std::string>());
    seed = header.at("seed");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("incomplete checkpoint header: ") + e.what());
  }

  FusionModel model(id, h, seed);
  auto params = model.parameters();
  const auto count = get_u32(in);
  if (count != params.size()) {
    throw DataError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                    std::to_string(params.size()));
  }
  for (auto* p : params) {
    const std::string name = get_string(in);
    if (name != p->name) throw DataError("checkpoint tensor '" + name + "' != '" + p->name + "'");
    const auto rows = get_u32(in);
    const auto cols = get_u32(in);
    if (rows != p->value.rows() || cols != p->value.cols()) {
      throw DataError("checkpoint tensor '" + name + "' has wrong shape");
    }
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) {
        p->value(r, c) = std::bit_cast<float>(get_u32(in));
      }
    }
  }
  return model;
}

}  // namespace memefusion
