#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "salad/core/random.hpp"
#include "salad/nn/tensor.hpp"

namespace salad::nn {

/// Trainable parameter block with its gradient accumulator.
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;

  std::size_t size() const { return value.size(); }
  void zero_grad();
};

/// Square-kernel convolution, stride 1, "same" zero padding (kernel 1 or 3).
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, Rng& rng);

  Tensor forward(const Tensor& x);
  /// Needs the input of the matching forward call; accumulates weight gradients.
  Tensor backward(const Tensor& x, const Tensor& grad_out);

  void collect(std::vector<Param*>& out);
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

 private:
  int in_ = 0;
  int out_ = 0;
  int k_ = 1;
  Param weight_;
  Param bias_;
};

/// Leaky ReLU; slope 0 gives plain ReLU.
Tensor leaky_relu(const Tensor& x, float slope);
Tensor leaky_relu_backward(const Tensor& x, const Tensor& grad_out, float slope);

/// 2x2 max pooling; `argmax` records the winning offset per output cell.
Tensor max_pool2(const Tensor& x, std::vector<std::uint8_t>& argmax);
Tensor max_pool2_backward(const Tensor& grad_out, const std::vector<std::uint8_t>& argmax, int h,
                          int w);

/// Nearest-neighbour 2x upsampling.
Tensor upsample2(const Tensor& x);
Tensor upsample2_backward(const Tensor& grad_out);

Tensor sigmoid(const Tensor& x);

}  // namespace salad::nn
