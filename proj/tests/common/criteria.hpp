#pragma once

// Randomised cross-checks shared by the unit tests and the acceptance runner.

#include <cstdint>
#include <string>

#include "salad/core/types.hpp"
#include "salad/sim/simulator.hpp"

namespace salad::testing {

struct CheckResult {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    pass = false;
    if (!detail.empty()) detail += "; ";
    detail += why;
  }
  void note(const std::string& s) {
    if (!detail.empty()) detail += "; ";
    detail += s;
  }
};

inline constexpr double kOracleTol = 1e-8;
inline constexpr double kInversionTol = 1e-6;
inline constexpr double kGradTol = 1e-3;

/// Library math against the direct implementations, `instances` random cases per quantity.
CheckResult check_math_oracles(int instances, std::uint64_t seed);

/// Kind-specific gt_mask invariants over `per_strategy` samples per strategy and
/// the mixing fractions over `mixed` draws.
CheckResult check_simulator(int per_strategy, int mixed, std::uint64_t seed, int map_size = 64);

/// Analytic recon/disc loss gradients against central differences on 8x8 maps.
CheckResult check_loss_gradients(int instances, std::uint64_t seed);

/// z-score identities on calibrated random validation sets and fusion equivariance.
CheckResult check_calibration(int instances, std::uint64_t seed);

/// Independent statement of the ground-truth rules; empty when `s` obeys them.
/// `donor` is the inpainting source (ignored for other kinds).
std::string invariant_violation(const CompositionMap& source, const CompositionMap* donor,
                                const sim::SyntheticSample& s);

}  // namespace salad::testing
