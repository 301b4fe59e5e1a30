#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace salad {

/// Incremental SHA-256 used for artifact fingerprints in run manifests.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::span<const unsigned char> bytes);
  Sha256& update(std::string_view text);
  Sha256& update_file(const std::filesystem::path& path);
  /// Hex digest; the object cannot be updated afterwards.
  std::string hex();

 private:
  void* ctx_;
};

std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace salad
