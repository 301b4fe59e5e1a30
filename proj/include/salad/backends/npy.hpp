#pragma once

#include <filesystem>
#include <vector>

namespace salad::backends {

/// Minimal reader/writer for little-endian float32 C-order .npy arrays, the
/// exchange format for features exported by external backbones.
struct NpyArray {
  std::vector<std::size_t> shape;
  std::vector<float> data;
};

NpyArray read_npy(const std::filesystem::path& path);
void write_npy(const std::filesystem::path& path, const NpyArray& array);

}  // namespace salad::backends
