#include "salad/nn/unet.hpp"

#include <string>

namespace salad::nn {

Tensor UNet::Block::forward(const Tensor& x, float slope) {
  in = x;
  pre = conv.forward(x);
  return leaky_relu(pre, slope);
}

Tensor UNet::Block::backward(const Tensor& g, float slope) {
  return conv.backward(in, leaky_relu_backward(pre, g, slope));
}

UNet::UNet(const UNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.levels < 1 || cfg.base_width < 1 || cfg.in_channels < 1 || cfg.out_channels < 1) {
    throw ArgumentError("invalid UNet configuration");
  }
  Rng rng(seed);
  levels_.resize(static_cast<std::size_t>(cfg.levels));
  int in = cfg.in_channels;
  for (int l = 0; l < cfg.levels; ++l) {
    const int width = cfg.base_width << l;
    const std::string p = "enc" + std::to_string(l);
    levels_[l].enc_a.conv = Conv2d(p + ".a", in, width, 3, rng);
    levels_[l].enc_b.conv = Conv2d(p + ".b", width, width, 3, rng);
    in = width;
  }
  for (int l = cfg.levels - 2; l >= 0; --l) {
    const int width = cfg.base_width << l;
    const std::string p = "dec" + std::to_string(l);
    levels_[l].up.conv = Conv2d(p + ".up", width * 2, width, 3, rng);
    levels_[l].dec_a.conv = Conv2d(p + ".a", cfg.skips ? width * 2 : width, width, 3, rng);
    levels_[l].dec_b.conv = Conv2d(p + ".b", width, width, 3, rng);
  }
  head_ = Conv2d("head", cfg.base_width, cfg.out_channels, 1, rng);
}

Tensor UNet::forward(const Tensor& x) {
  const int factor = 1 << (cfg_.levels - 1);
  if (x.h % factor != 0 || x.w % factor != 0) {
    throw ShapeError("UNet input " + x.shape_string() + " not divisible by " + std::to_string(factor));
  }
  const float s = cfg_.slope;
  Tensor h = x;
  for (int l = 0; l < cfg_.levels; ++l) {
    Level& L = levels_[l];
    h = L.enc_a.forward(h, s);
    h = L.enc_b.forward(h, s);
    if (l + 1 < cfg_.levels) {
      L.h = h.h;
      L.w = h.w;
      if (cfg_.skips) L.skip = h;
      h = max_pool2(h, L.pool_argmax);
    }
  }
  for (int l = cfg_.levels - 2; l >= 0; --l) {
    Level& L = levels_[l];
    h = L.up.forward(upsample2(h), s);
    if (cfg_.skips) h = concat_channels(L.skip, h);
    h = L.dec_a.forward(h, s);
    h = L.dec_b.forward(h, s);
  }
  head_in_ = h;
  return head_.forward(h);
}

Tensor UNet::backward(const Tensor& grad_out) {
  const float s = cfg_.slope;
  Tensor g = head_.backward(head_in_, grad_out);
  std::vector<Tensor> skip_grads(levels_.size());
  for (int l = 0; l <= cfg_.levels - 2; ++l) {
    Level& L = levels_[l];
    g = L.dec_b.backward(g, s);
    g = L.dec_a.backward(g, s);
    if (cfg_.skips) {
      Tensor g_up;
      split_channels(g, L.skip.c, skip_grads[l], g_up);
      g = std::move(g_up);
    }
    g = upsample2_backward(L.up.backward(g, s));
  }
  for (int l = cfg_.levels - 1; l >= 0; --l) {
    Level& L = levels_[l];
    if (l + 1 < cfg_.levels) {
      g = max_pool2_backward(g, L.pool_argmax, L.h, L.w);
      if (cfg_.skips) {
        for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += skip_grads[l].data[i];
      }
    }
    g = L.enc_b.backward(g, s);
    g = L.enc_a.backward(g, s);
  }
  return g;
}

std::vector<Param*> UNet::params() {
  std::vector<Param*> out;
  for (int l = 0; l < cfg_.levels; ++l) {
    levels_[l].enc_a.conv.collect(out);
    levels_[l].enc_b.conv.collect(out);
  }
  for (int l = cfg_.levels - 2; l >= 0; --l) {
    levels_[l].up.conv.collect(out);
    levels_[l].dec_a.conv.collect(out);
    levels_[l].dec_b.conv.collect(out);
  }
  head_.collect(out);
  return out;
}

std::size_t UNet::parameter_count() {
  std::size_t n = 0;
  for (auto* p : params()) n += p->size();
  return n;
}

ShuffledUNet::ShuffledUNet(const UNetConfig& cfg, int factor, std::uint64_t seed)
    : factor_(factor), in_channels_(cfg.in_channels), out_channels_(cfg.out_channels) {
  if (factor < 1) throw ArgumentError("space-to-depth factor must be >= 1");
  UNetConfig inner = cfg;
  inner.in_channels = cfg.in_channels * factor * factor;
  inner.out_channels = cfg.out_channels * factor * factor;
  net_ = UNet(inner, seed);
}

Tensor ShuffledUNet::forward(const Tensor& x) {
  if (x.c != in_channels_) {
    throw ShapeError("expected " + std::to_string(in_channels_) + " input channels, got " +
                     x.shape_string());
  }
  if (factor_ == 1) return net_.forward(x);
  return pixel_shuffle(net_.forward(pixel_unshuffle(x, factor_)), factor_);
}

Tensor ShuffledUNet::backward(const Tensor& grad_out) {
  if (factor_ == 1) return net_.backward(grad_out);
  return pixel_shuffle(net_.backward(pixel_unshuffle(grad_out, factor_)), factor_);
}

}  // namespace salad::nn
