#include "salad/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "salad/simd/kernels.hpp"

namespace salad::nn {

namespace {

// Unfolds one sample (C, H, W) into a (C*k*k, H*W) matrix with zero padding.
void im2col(const float* x, int c, int h, int w, int k, float* col) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ch = 0; ch < c; ++ch) {
    const float* src = x + ch * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* dst = col + (static_cast<std::size_t>(ch) * k * k + ky * k + kx) * hw;
        const int dy = ky - pad;
        const int dx = kx - pad;
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          float* drow = dst + static_cast<std::size_t>(y) * w;
          if (sy < 0 || sy >= h) {
            std::fill_n(drow, w, 0.0f);
            continue;
          }
          const float* srow = src + static_cast<std::size_t>(sy) * w;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(w, w - dx);
          std::fill_n(drow, x0, 0.0f);
          std::copy(srow + x0 + dx, srow + x1 + dx, drow + x0);
          std::fill(drow + x1, drow + w, 0.0f);
        }
      }
    }
  }
}

void col2im(const float* col, int c, int h, int w, int k, float* x) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ch = 0; ch < c; ++ch) {
    float* dst = x + ch * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* src = col + (static_cast<std::size_t>(ch) * k * k + ky * k + kx) * hw;
        const int dy = ky - pad;
        const int dx = kx - pad;
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          const float* srow = src + static_cast<std::size_t>(y) * w;
          float* drow = dst + static_cast<std::size_t>(sy) * w;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(w, w - dx);
          for (int xx = x0; xx < x1; ++xx) drow[xx + dx] += srow[xx];
        }
      }
    }
  }
}

}  // namespace

void Param::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, Rng& rng)
    : in_(in_channels), out_(out_channels), k_(kernel) {
  if (kernel != 1 && kernel != 3) throw ArgumentError("Conv2d supports kernel 1 or 3");
  const std::size_t fan_in = static_cast<std::size_t>(in_channels) * kernel * kernel;
  weight_.name = name + ".weight";
  weight_.shape = {out_channels, in_channels, kernel, kernel};
  weight_.value.resize(fan_in * out_channels);
  weight_.grad.assign(weight_.value.size(), 0.0f);
  // He-normal initialisation.
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (float& v : weight_.value) v = static_cast<float>(rng.normal() * stddev);
  bias_.name = name + ".bias";
  bias_.shape = {out_channels};
  bias_.value.assign(static_cast<std::size_t>(out_channels), 0.0f);
  bias_.grad.assign(bias_.value.size(), 0.0f);
}

Tensor Conv2d::forward(const Tensor& x) {
  if (x.c != in_) {
    throw ShapeError(weight_.name + ": expected " + std::to_string(in_) + " input channels, got " +
                     x.shape_string());
  }
  Tensor y(x.n, out_, x.h, x.w);
  const int hw = x.h * x.w;
  const int kdim = in_ * k_ * k_;
  thread_local std::vector<float> col;
  for (int i = 0; i < x.n; ++i) {
    const float* src = x.sample(i);
    if (k_ != 1) {
      col.resize(static_cast<std::size_t>(kdim) * hw);
      im2col(src, in_, x.h, x.w, k_, col.data());
      src = col.data();
    }
    float* dst = y.sample(i);
    for (int o = 0; o < out_; ++o) std::fill_n(dst + static_cast<std::size_t>(o) * hw, hw, bias_.value[o]);
    simd::gemm(false, false, out_, hw, kdim, 1.0f, weight_.value.data(), kdim, src, hw, 1.0f, dst, hw);
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& grad_out) {
  const int hw = x.h * x.w;
  const int kdim = in_ * k_ * k_;
  Tensor gx(x.n, in_, x.h, x.w);
  thread_local std::vector<float> col;
  thread_local std::vector<float> gcol;
  for (int i = 0; i < x.n; ++i) {
    const float* g = grad_out.sample(i);
    for (int o = 0; o < out_; ++o) {
      const float* go = g + static_cast<std::size_t>(o) * hw;
      float s = 0.0f;
      for (int p = 0; p < hw; ++p) s += go[p];
      bias_.grad[o] += s;
    }
    const float* src = x.sample(i);
    if (k_ != 1) {
      col.resize(static_cast<std::size_t>(kdim) * hw);
      im2col(src, in_, x.h, x.w, k_, col.data());
      src = col.data();
    }
    // dW += dY * col^T
    simd::gemm(false, true, out_, kdim, hw, 1.0f, g, hw, src, hw, 1.0f, weight_.grad.data(), kdim);
    if (k_ == 1) {
      simd::gemm(true, false, kdim, hw, out_, 1.0f, weight_.value.data(), kdim, g, hw, 0.0f,
                 gx.sample(i), hw);
    } else {
      gcol.resize(static_cast<std::size_t>(kdim) * hw);
      simd::gemm(true, false, kdim, hw, out_, 1.0f, weight_.value.data(), kdim, g, hw, 0.0f,
                 gcol.data(), hw);
      col2im(gcol.data(), in_, x.h, x.w, k_, gx.sample(i));
    }
  }
  return gx;
}

void Conv2d::collect(std::vector<Param*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

Tensor leaky_relu(const Tensor& x, float slope) {
  Tensor y = x;
  for (float& v : y.data) v = v > 0.0f ? v : v * slope;
  return y;
}

Tensor leaky_relu_backward(const Tensor& x, const Tensor& grad_out, float slope) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (x.data[i] <= 0.0f) g.data[i] *= slope;
  }
  return g;
}

Tensor max_pool2(const Tensor& x, std::vector<std::uint8_t>& argmax) {
  if (x.h % 2 != 0 || x.w % 2 != 0) throw ShapeError("max_pool2 needs even sizes: " + x.shape_string());
  Tensor y(x.n, x.c, x.h / 2, x.w / 2);
  argmax.assign(y.size(), 0);
  std::size_t idx = 0;
  for (int i = 0; i < x.n; ++i) {
    for (int c = 0; c < x.c; ++c) {
      const float* src = x.channel(i, c);
      float* dst = y.channel(i, c);
      for (int yy = 0; yy < y.h; ++yy) {
        const float* r0 = src + static_cast<std::size_t>(2 * yy) * x.w;
        const float* r1 = r0 + x.w;
        for (int xx = 0; xx < y.w; ++xx, ++idx) {
          const float v[4] = {r0[2 * xx], r0[2 * xx + 1], r1[2 * xx], r1[2 * xx + 1]};
          std::uint8_t best = 0;
          for (std::uint8_t q = 1; q < 4; ++q) {
            if (v[q] > v[best]) best = q;
          }
          dst[static_cast<std::size_t>(yy) * y.w + xx] = v[best];
          argmax[idx] = best;
        }
      }
    }
  }
  return y;
}

Tensor max_pool2_backward(const Tensor& grad_out, const std::vector<std::uint8_t>& argmax, int h,
                          int w) {
  Tensor gx(grad_out.n, grad_out.c, h, w);
  std::size_t idx = 0;
  for (int i = 0; i < grad_out.n; ++i) {
    for (int c = 0; c < grad_out.c; ++c) {
      const float* g = grad_out.channel(i, c);
      float* dst = gx.channel(i, c);
      for (int yy = 0; yy < grad_out.h; ++yy) {
        for (int xx = 0; xx < grad_out.w; ++xx, ++idx) {
          const int q = argmax[idx];
          const int sy = 2 * yy + (q >> 1);
          const int sx = 2 * xx + (q & 1);
          dst[static_cast<std::size_t>(sy) * w + sx] += g[static_cast<std::size_t>(yy) * grad_out.w + xx];
        }
      }
    }
  }
  return gx;
}

Tensor upsample2(const Tensor& x) {
  Tensor y(x.n, x.c, x.h * 2, x.w * 2);
  for (int i = 0; i < x.n; ++i) {
    for (int c = 0; c < x.c; ++c) {
      const float* src = x.channel(i, c);
      float* dst = y.channel(i, c);
      for (int yy = 0; yy < y.h; ++yy) {
        const float* srow = src + static_cast<std::size_t>(yy / 2) * x.w;
        float* drow = dst + static_cast<std::size_t>(yy) * y.w;
        for (int xx = 0; xx < y.w; ++xx) drow[xx] = srow[xx / 2];
      }
    }
  }
  return y;
}

Tensor upsample2_backward(const Tensor& grad_out) {
  Tensor gx(grad_out.n, grad_out.c, grad_out.h / 2, grad_out.w / 2);
  for (int i = 0; i < grad_out.n; ++i) {
    for (int c = 0; c < grad_out.c; ++c) {
      const float* g = grad_out.channel(i, c);
      float* dst = gx.channel(i, c);
      for (int yy = 0; yy < grad_out.h; ++yy) {
        const float* grow = g + static_cast<std::size_t>(yy) * grad_out.w;
        float* drow = dst + static_cast<std::size_t>(yy / 2) * gx.w;
        for (int xx = 0; xx < grad_out.w; ++xx) drow[xx / 2] += grow[xx];
      }
    }
  }
  return gx;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (float& v : y.data) v = 1.0f / (1.0f + std::exp(-v));
  return y;
}

}  // namespace salad::nn
