#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "memefusion/encoders.hpp"

namespace memefusion {

/// On-disk store of raw embedding vectors keyed by
/// (backend, sample id, preprocessing digest).
///
/// Layout (all integers little-endian uint32):
///   "MFEC" version count
///   count x { key_len key_bytes dim dim x float32 }
/// Records are written in key order so identical contents give identical bytes.
class EmbeddingCache {
 public:
  static constexpr std::uint32_t kVersion = 1;

  static std::string make_key(EncoderBackend backend, const std::string& sample_id,
                              const std::string& digest);

  void put(EncoderBackend backend, const std::string& sample_id,
           const std::string& digest, const Vector& v);
  std::optional<Vector> get(EncoderBackend backend, const std::string& sample_id,
                            const std::string& digest) const;
  bool contains(EncoderBackend backend, const std::string& sample_id,
                const std::string& digest) const;
  std::size_t size() const { return entries_.size(); }

  void save(const std::filesystem::path& path) const;
  static EmbeddingCache load(const std::filesystem::path& path);
  /// Loads `path` if it exists, otherwise returns an empty cache.
  static EmbeddingCache load_or_empty(const std::filesystem::path& path);

 private:
  std::map<std::string, std::vector<float>> entries_;
};

}  // namespace memefusion
