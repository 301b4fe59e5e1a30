#include "salad/nn/tensor.hpp"

#include <algorithm>

namespace salad::nn {

std::string Tensor::shape_string() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

Tensor pixel_unshuffle(const Tensor& x, int r) {
  if (r == 1) return x;
  if (x.h % r != 0 || x.w % r != 0) {
    throw ShapeError("pixel_unshuffle: " + x.shape_string() + " not divisible by " + std::to_string(r));
  }
  Tensor out(x.n, x.c * r * r, x.h / r, x.w / r);
  for (int i = 0; i < x.n; ++i) {
    for (int c = 0; c < x.c; ++c) {
      const float* src = x.channel(i, c);
      for (int dy = 0; dy < r; ++dy) {
        for (int dx = 0; dx < r; ++dx) {
          float* dst = out.channel(i, c * r * r + dy * r + dx);
          for (int y = 0; y < out.h; ++y) {
            const float* row = src + static_cast<std::size_t>(y * r + dy) * x.w + dx;
            float* orow = dst + static_cast<std::size_t>(y) * out.w;
            for (int xx = 0; xx < out.w; ++xx) orow[xx] = row[xx * r];
          }
        }
      }
    }
  }
  return out;
}

Tensor pixel_shuffle(const Tensor& x, int r) {
  if (r == 1) return x;
  if (x.c % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: channels " + std::to_string(x.c) + " not divisible by r^2");
  }
  Tensor out(x.n, x.c / (r * r), x.h * r, x.w * r);
  for (int i = 0; i < x.n; ++i) {
    for (int c = 0; c < out.c; ++c) {
      float* dst = out.channel(i, c);
      for (int dy = 0; dy < r; ++dy) {
        for (int dx = 0; dx < r; ++dx) {
          const float* src = x.channel(i, c * r * r + dy * r + dx);
          for (int y = 0; y < x.h; ++y) {
            float* row = dst + static_cast<std::size_t>(y * r + dy) * out.w + dx;
            const float* srow = src + static_cast<std::size_t>(y) * x.w;
            for (int xx = 0; xx < x.w; ++xx) row[xx * r] = srow[xx];
          }
        }
      }
    }
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) {
    throw ShapeError("concat_channels: " + a.shape_string() + " vs " + b.shape_string());
  }
  Tensor out(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    std::copy_n(a.sample(i), a.sample_size(), out.sample(i));
    std::copy_n(b.sample(i), b.sample_size(), out.sample(i) + a.sample_size());
  }
  return out;
}

void split_channels(const Tensor& g, int ca, Tensor& ga, Tensor& gb) {
  ga = Tensor(g.n, ca, g.h, g.w);
  gb = Tensor(g.n, g.c - ca, g.h, g.w);
  for (int i = 0; i < g.n; ++i) {
    std::copy_n(g.sample(i), ga.sample_size(), ga.sample(i));
    std::copy_n(g.sample(i) + ga.sample_size(), gb.sample_size(), gb.sample(i));
  }
}

}  // namespace salad::nn
