#pragma once

#include <span>
#include <vector>

#include "salad/core/types.hpp"

namespace salad {

// Bilinear resampling uses pixel-centre alignment (sample (x + 0.5) * src / dst - 0.5,
// clamped at the border). Class-index data only ever goes through nearest neighbour.

RgbImage resize_bilinear(const RgbImage& src, int width, int height);

/// Channel-interleaved float data (HWC).
std::vector<float> resize_bilinear(std::span<const float> src, int src_w, int src_h, int channels,
                                   int width, int height);

Plane<float> resize_bilinear(const Plane<float>& src, int width, int height);

template <class T>
Plane<T> resize_nearest(const Plane<T>& src, int width, int height) {
  Plane<T> out(width, height);
  for (int y = 0; y < height; ++y) {
    const int sy = static_cast<int>((static_cast<long long>(y) * src.height()) / height);
    for (int x = 0; x < width; ++x) {
      const int sx = static_cast<int>((static_cast<long long>(x) * src.width()) / width);
      out(x, y) = src(sx, sy);
    }
  }
  return out;
}

CompositionMap resize_nearest(const CompositionMap& src, int width, int height);

}  // namespace salad
