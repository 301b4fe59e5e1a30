#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "salad/core/types.hpp"

namespace salad::sim {

enum class SyntheticKind { none, perlin_paste, component_inpaint, component_removal };

std::string to_string(SyntheticKind k);
SyntheticKind kind_from_string(const std::string& s);

struct SyntheticSample {
  CompositionMap augmented;  // C_a
  Mask gt_mask;              // A_c_gt
  SyntheticKind kind = SyntheticKind::none;
};

/// 8-connected region of one part class.
struct Component {
  Mask mask;
  int class_id = 0;
  std::size_t area = 0;
};

inline constexpr std::size_t kDefaultMinArea = 50;
inline constexpr int kMaxAttempts = 10;

/// Fractal gradient noise, per-axis period 2^p with p drawn from {1..5},
/// min-max normalised and thresholded at 0.5.
Mask perlin_mask(int height, int width, std::uint64_t seed);

std::vector<Component> connected_components(const CompositionMap& c,
                                            std::size_t min_area = kDefaultMinArea);

/// Pastes a uniformly drawn class (background included) under a Perlin mask.
SyntheticSample simulate_structural(const CompositionMap& c, std::uint64_t seed);

/// Erases one component, filling it with a class drawn from its 5-px ring.
SyntheticSample simulate_removal(const CompositionMap& c, std::uint64_t seed,
                                 std::size_t min_area = kDefaultMinArea);

/// Copies one component of `source` into `c` at the same coordinates.
SyntheticSample simulate_inpaint(const CompositionMap& c, const CompositionMap& source,
                                 std::uint64_t seed, std::size_t min_area = kDefaultMinArea);

/// Clean with probability 0.5, otherwise one of the three strategies with equal
/// probability. Inpainting sources come from `corpus` entries other than `c`.
SyntheticSample sample_training_example(const CompositionMap& c,
                                        std::span<const CompositionMap> corpus,
                                        std::uint64_t seed);

/// Checks the kind-specific ground-truth invariant; returns an empty string when
/// it holds, otherwise a description of the violation.
std::string check_invariants(const CompositionMap& source, const SyntheticSample& s);

}  // namespace salad::sim
