#pragma once

#include <cstdint>
#include <vector>

#include "salad/nn/layers.hpp"

namespace salad::nn {

struct UNetConfig {
  int in_channels = 3;
  int out_channels = 1;
  int base_width = 32;
  int levels = 4;      // resolutions; level l has base_width * 2^l channels
  bool skips = true;   // false turns the U into a plain encoder-decoder (autoencoder)
  float slope = 0.05f; // leaky ReLU slope
};

/// U-shaped encoder-decoder: two 3x3 conv blocks per level, max-pool down,
/// nearest upsample + 3x3 conv up, optional skip concatenation, 1x1 head.
/// Input height/width must be divisible by 2^(levels-1).
class UNet {
 public:
  UNet() = default;
  UNet(const UNetConfig& cfg, std::uint64_t seed);

  /// Returns raw head outputs (no output nonlinearity). Caches activations
  /// for the next backward() call.
  Tensor forward(const Tensor& x);
  /// Accumulates parameter gradients and returns d(loss)/d(input).
  Tensor backward(const Tensor& grad_out);

  std::vector<Param*> params();
  const UNetConfig& config() const { return cfg_; }
  std::size_t parameter_count();

 private:
  struct Block {
    Conv2d conv;
    Tensor in;
    Tensor pre;
    Tensor forward(const Tensor& x, float slope);
    Tensor backward(const Tensor& g, float slope);
  };
  struct Level {
    Block enc_a, enc_b;
    Block up;  // unused on the deepest level
    Block dec_a, dec_b;
    Tensor skip;
    std::vector<std::uint8_t> pool_argmax;
    int h = 0, w = 0;
  };

  UNetConfig cfg_;
  std::vector<Level> levels_;
  Conv2d head_;
  Tensor head_in_;
};

/// UNet applied to a space-to-depth view of its input: (N, C, H, W) is
/// pixel-unshuffled by `factor`, processed at (H/f, W/f) and the head output is
/// pixel-shuffled back, so callers see full-resolution inputs and outputs.
class ShuffledUNet {
 public:
  ShuffledUNet() = default;
  /// `cfg.in_channels` / `cfg.out_channels` are the full-resolution channel counts.
  ShuffledUNet(const UNetConfig& cfg, int factor, std::uint64_t seed);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);
  std::vector<Param*> params() { return net_.params(); }
  int factor() const { return factor_; }
  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }
  std::size_t parameter_count() { return net_.parameter_count(); }

 private:
  UNet net_;
  int factor_ = 1;
  int in_channels_ = 0;
  int out_channels_ = 0;
};

}  // namespace salad::nn
