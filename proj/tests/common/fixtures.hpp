#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "salad/core/random.hpp"
#include "salad/core/types.hpp"

namespace salad::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("salad_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

/// Procedural composition map: `parts` classes, each painted as one or two
/// axis-aligned blobs (rectangles or ellipses) on background.
inline CompositionMap random_composition_map(int size, int parts, std::uint64_t seed) {
  Rng rng(seed);
  CompositionMap c(size, size, parts + 1);
  for (int cls = 1; cls <= parts; ++cls) {
    const int copies = 1 + static_cast<int>(rng.below(2));
    for (int i = 0; i < copies; ++i) {
      const int rw = rng.range(size / 12 + 2, size / 5 + 2);
      const int rh = rng.range(size / 12 + 2, size / 5 + 2);
      const int cx = rng.range(rw, size - 1 - rw);
      const int cy = rng.range(rh, size - 1 - rh);
      const bool ellipse = rng.bernoulli(0.5);
      for (int y = cy - rh; y <= cy + rh; ++y) {
        for (int x = cx - rw; x <= cx + rw; ++x) {
          const double dx = static_cast<double>(x - cx) / rw;
          const double dy = static_cast<double>(y - cy) / rh;
          if (!ellipse || dx * dx + dy * dy <= 1.0) c(x, y) = static_cast<std::uint16_t>(cls);
        }
      }
    }
  }
  return c;
}

/// Uniform image with a few coloured rectangles; values stay inside [0,1].
inline ImageSample random_image(int size, std::uint64_t seed) {
  Rng rng(seed);
  ImageSample s;
  s.pixels = RgbImage(size, size);
  for (auto& v : s.pixels.rgb) v = 0.8f;
  for (int r = 0; r < 3; ++r) {
    const int x0 = rng.range(0, size / 2);
    const int y0 = rng.range(0, size / 2);
    const int w = rng.range(size / 8, size / 3);
    const float col[3] = {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                          static_cast<float>(rng.uniform())};
    for (int y = y0; y < std::min(size, y0 + w); ++y) {
      for (int x = x0; x < std::min(size, x0 + w); ++x) {
        for (int ch = 0; ch < 3; ++ch) s.pixels.at(x, y, ch) = col[ch];
      }
    }
  }
  return s;
}

}  // namespace salad::testing
