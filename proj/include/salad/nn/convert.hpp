#pragma once

#include <span>

#include "salad/core/types.hpp"
#include "salad/nn/tensor.hpp"

namespace salad::nn {

/// RGB images -> (N, 3, H, W).
Tensor image_batch(std::span<const RgbImage* const> images);
Tensor image_tensor(const RgbImage& image);

/// One-hot encoding, (N, num_classes, H, W).
Tensor one_hot_batch(std::span<const CompositionMap* const> maps);
Tensor one_hot(const CompositionMap& map);

/// Channelwise softmax at every pixel, computed in double and stored as float.
Tensor softmax_channels(const Tensor& logits);

/// Per-pixel argmax of sample `i`; ties resolve to the lowest channel.
CompositionMap argmax_map(const Tensor& scores, int i = 0);

/// Single-channel plane of sample `i`.
Plane<float> plane_of(const Tensor& t, int i = 0, int channel = 0);

}  // namespace salad::nn
