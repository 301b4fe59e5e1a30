#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "salad/core/error.hpp"

namespace salad::nn {

/// NCHW float tensor.
struct Tensor {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, float fill = 0.0f)
      : n(n_), c(c_), h(h_), w(w_),
        data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }

  float* sample(int i) { return data.data() + static_cast<std::size_t>(i) * sample_size(); }
  const float* sample(int i) const {
    return data.data() + static_cast<std::size_t>(i) * sample_size();
  }
  float* channel(int i, int ch) { return sample(i) + static_cast<std::size_t>(ch) * plane(); }
  const float* channel(int i, int ch) const {
    return sample(i) + static_cast<std::size_t>(ch) * plane();
  }
  float& at(int i, int ch, int y, int x) { return channel(i, ch)[static_cast<std::size_t>(y) * w + x]; }
  float at(int i, int ch, int y, int x) const {
    return channel(i, ch)[static_cast<std::size_t>(y) * w + x];
  }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
  std::string shape_string() const;
};

/// (C, H, W) -> (C*r*r, H/r, W/r); output channel = c*r*r + dy*r + dx.
Tensor pixel_unshuffle(const Tensor& x, int r);
/// Inverse of pixel_unshuffle.
Tensor pixel_shuffle(const Tensor& x, int r);

/// Channel concatenation of two tensors with equal N, H, W.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Splits a channel-concatenated gradient back into its parts.
void split_channels(const Tensor& g, int ca, Tensor& ga, Tensor& gb);

}  // namespace salad::nn
