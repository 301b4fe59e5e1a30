#include "salad/core/resize.hpp"

#include <algorithm>
#include <cmath>

namespace salad {

namespace {

struct Tap {
  int i0;
  int i1;
  float w1;
};

std::vector<Tap> taps(int src, int dst) {
  std::vector<Tap> out(static_cast<std::size_t>(dst));
  const double scale = static_cast<double>(src) / dst;
  for (int d = 0; d < dst; ++d) {
    double s = (d + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, src - 1);
    out[d] = {i0, i1, static_cast<float>(s - i0)};
  }
  return out;
}

}  // namespace

std::vector<float> resize_bilinear(std::span<const float> src, int src_w, int src_h, int channels,
                                   int width, int height) {
  if (src.size() != static_cast<std::size_t>(src_w) * src_h * channels) {
    throw ShapeError("resize_bilinear: buffer size does not match shape");
  }
  std::vector<float> out(static_cast<std::size_t>(width) * height * channels);
  if (src_w == width && src_h == height) {
    std::copy(src.begin(), src.end(), out.begin());
    return out;
  }
  const auto tx = taps(src_w, width);
  const auto ty = taps(src_h, height);
  for (int y = 0; y < height; ++y) {
    const Tap& v = ty[y];
    const float* r0 = src.data() + static_cast<std::size_t>(v.i0) * src_w * channels;
    const float* r1 = src.data() + static_cast<std::size_t>(v.i1) * src_w * channels;
    float* o = out.data() + static_cast<std::size_t>(y) * width * channels;
    for (int x = 0; x < width; ++x) {
      const Tap& h = tx[x];
      for (int c = 0; c < channels; ++c) {
        const float a = r0[h.i0 * channels + c] * (1.0f - h.w1) + r0[h.i1 * channels + c] * h.w1;
        const float b = r1[h.i0 * channels + c] * (1.0f - h.w1) + r1[h.i1 * channels + c] * h.w1;
        o[x * channels + c] = a * (1.0f - v.w1) + b * v.w1;
      }
    }
  }
  return out;
}

RgbImage resize_bilinear(const RgbImage& src, int width, int height) {
  RgbImage out;
  out.width = width;
  out.height = height;
  out.rgb = resize_bilinear(src.rgb, src.width, src.height, 3, width, height);
  for (float& v : out.rgb) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

Plane<float> resize_bilinear(const Plane<float>& src, int width, int height) {
  Plane<float> out(width, height);
  const auto v = resize_bilinear(src.values(), src.width(), src.height(), 1, width, height);
  std::copy(v.begin(), v.end(), out.data());
  return out;
}

CompositionMap resize_nearest(const CompositionMap& src, int width, int height) {
  CompositionMap out;
  out.num_classes = src.num_classes;
  out.classes = resize_nearest(src.classes, width, height);
  return out;
}

}  // namespace salad
