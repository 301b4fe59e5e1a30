#include "salad/nn/convert.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace salad::nn {

Tensor image_batch(std::span<const RgbImage* const> images) {
  if (images.empty()) throw ArgumentError("empty image batch");
  const int h = images[0]->height;
  const int w = images[0]->width;
  Tensor t(static_cast<int>(images.size()), 3, h, w);
  for (int i = 0; i < t.n; ++i) {
    const RgbImage& im = *images[i];
    if (im.width != w || im.height != h) throw ShapeError("image batch with mixed sizes");
    for (int c = 0; c < 3; ++c) {
      float* dst = t.channel(i, c);
      for (std::size_t p = 0; p < t.plane(); ++p) dst[p] = im.rgb[p * 3 + c];
    }
  }
  return t;
}

Tensor image_tensor(const RgbImage& image) {
  const RgbImage* p = &image;
  return image_batch(std::span<const RgbImage* const>(&p, 1));
}

Tensor one_hot_batch(std::span<const CompositionMap* const> maps) {
  if (maps.empty()) throw ArgumentError("empty map batch");
  const CompositionMap& first = *maps[0];
  Tensor t(static_cast<int>(maps.size()), first.num_classes, first.height(), first.width());
  for (int i = 0; i < t.n; ++i) {
    const CompositionMap& m = *maps[i];
    if (m.num_classes != first.num_classes || !m.classes.same_shape(first.classes)) {
      throw ShapeError("map batch with mixed shapes or class counts");
    }
    float* dst = t.sample(i);
    for (std::size_t p = 0; p < t.plane(); ++p) {
      const int c = m.classes[p];
      if (c >= m.num_classes) throw ArgumentError("class value outside {0..K}");
      dst[static_cast<std::size_t>(c) * t.plane() + p] = 1.0f;
    }
  }
  return t;
}

Tensor one_hot(const CompositionMap& map) {
  const CompositionMap* p = &map;
  return one_hot_batch(std::span<const CompositionMap* const>(&p, 1));
}

Tensor softmax_channels(const Tensor& logits) {
  Tensor out(logits.n, logits.c, logits.h, logits.w);
  const std::size_t hw = logits.plane();
  std::vector<double> e(static_cast<std::size_t>(logits.c));
  for (int i = 0; i < logits.n; ++i) {
    const float* src = logits.sample(i);
    float* dst = out.sample(i);
    for (std::size_t p = 0; p < hw; ++p) {
      double mx = src[p];
      for (int c = 1; c < logits.c; ++c) mx = std::max(mx, static_cast<double>(src[c * hw + p]));
      double sum = 0.0;
      for (int c = 0; c < logits.c; ++c) {
        e[c] = std::exp(static_cast<double>(src[c * hw + p]) - mx);
        sum += e[c];
      }
      for (int c = 0; c < logits.c; ++c) dst[c * hw + p] = static_cast<float>(e[c] / sum);
    }
  }
  return out;
}

CompositionMap argmax_map(const Tensor& scores, int i) {
  CompositionMap m(scores.w, scores.h, scores.c);
  const std::size_t hw = scores.plane();
  const float* src = scores.sample(i);
  for (std::size_t p = 0; p < hw; ++p) {
    int best = 0;
    for (int c = 1; c < scores.c; ++c) {
      if (src[c * hw + p] > src[best * hw + p]) best = c;
    }
    m.classes[p] = static_cast<std::uint16_t>(best);
  }
  return m;
}

Plane<float> plane_of(const Tensor& t, int i, int channel) {
  Plane<float> out(t.w, t.h);
  std::copy_n(t.channel(i, channel), t.plane(), out.data());
  return out;
}

}  // namespace salad::nn
