#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "salad/core/types.hpp"

namespace salad {

// Composition maps are written as 8-bit palette PNGs (one palette entry per
// class). The class count travels in a tEXt chunk; cache directories also
// carry a meta.json that load falls back to when the chunk is missing.

void save_composition_map(const CompositionMap& map, const std::filesystem::path& path);
CompositionMap load_composition_map(const std::filesystem::path& path);

struct CompMapCacheMeta {
  int num_classes = 0;
  std::uint64_t seed = 0;
  std::string pipeline_version;
  std::string backend_id;
};

void write_cache_meta(const CompMapCacheMeta& meta, const std::filesystem::path& dir);
CompMapCacheMeta read_cache_meta(const std::filesystem::path& dir);

}  // namespace salad
