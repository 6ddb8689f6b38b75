#include "memefusion/embedding_cache.hpp"

#include <bit>
#include <cstring>
#include <fstream>

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
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError("embedding cache truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

std::string EmbeddingCache::make_key(EncoderBackend backend, const std::string& sample_id,
                                     const std::string& digest) {
  return std::string(backend_name(backend)) + '\t' + sample_id + '\t' + digest;
}

void EmbeddingCache::put(EncoderBackend backend, const std::string& sample_id,
                         const std::string& digest, const Vector& v) {
  std::vector<float> data(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) data[i] = static_cast<float>(v(i));
  entries_[make_key(backend, sample_id, digest)] = std::move(data);
}

std::optional<Vector> EmbeddingCache::get(EncoderBackend backend, const std::string& sample_id,
                                          const std::string& digest) const {
  auto it = entries_.find(make_key(backend, sample_id, digest));
  if (it == entries_.end()) return std::nullopt;
  Vector v(static_cast<Eigen::Index>(it->second.size()));
  for (std::size_t i = 0; i < it->second.size(); ++i) v(i) = it->second[i];
  return v;
}

bool EmbeddingCache::contains(EncoderBackend backend, const std::string& sample_id,
                              const std::string& digest) const {
  return entries_.count(make_key(backend, sample_id, digest)) > 0;
}

void EmbeddingCache::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write embedding cache '" + path.string() + "'");
  out.write("MFEC", 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [key, data] : entries_) {
    put_u32(out, static_cast<std::uint32_t>(key.size()));
    out.write(key.data(), static_cast<std::streamsize>(key.size()));
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    for (float f : data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  if (!out) throw DataError("error writing embedding cache '" + path.string() + "'");
}

EmbeddingCache EmbeddingCache::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding cache '" + path.string() + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "MFEC", 4) != 0) {
    throw DataError("'" + path.string() + "' is not an embedding cache");
  }
  const auto version = get_u32(in);
  if (version != kVersion) {
    throw DataError("unsupported embedding cache version " + std::to_string(version));
  }
  const auto count = get_u32(in);
  EmbeddingCache cache;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto key_len = get_u32(in);
    std::string key(key_len, '\0');
    if (!in.read(key.data(), key_len)) throw DataError("embedding cache truncated");
    const auto dim = get_u32(in);
    std::vector<float> data(dim);
    for (auto& f : data) f = std::bit_cast<float>(get_u32(in));
    cache.entries_[std::move(key)] = std::move(data);
  }
  return cache;
}

EmbeddingCache EmbeddingCache::load_or_empty(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return {};
  return load(path);
}

}  // namespace memefusion
