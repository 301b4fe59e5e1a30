#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "salad/core/types.hpp"

namespace salad::metrics {

struct BranchScores {
  double a = 0.0;  // max of A_a
  double c = 0.0;  // max of A_c
  double g = 0.0;  // S_g
};

BranchScores branch_scores(const AnomalyMap& a_a, const AnomalyMap& a_c, double s_g);

inline constexpr double kSigmaFloor = 1e-8;

struct MeanStd {
  double mu = 0.0;
  double sigma = 1.0;
  bool floored = false;
};

struct ScoreStats {
  MeanStd a, c, g;
  std::size_t samples = 0;
  std::string source;  // hash of the validation inputs

  nlohmann::json to_json() const;
  static ScoreStats from_json(const nlohmann::json& j);
};

/// Per-branch mean and population standard deviation over validation scores.
ScoreStats calibrate(std::span<const BranchScores> validation);

struct FusionResult {
  double as_a = 0.0, as_c = 0.0, as_g = 0.0;
  double z_a = 0.0, z_c = 0.0, z_g = 0.0;
  double total = 0.0;
};

/// Ablation switches: a disabled branch contributes z = 0.
struct FusionOptions {
  bool use_a = true;
  bool use_c = true;
  bool use_g = true;
};

FusionResult fuse(const BranchScores& s, const ScoreStats& stats, const FusionOptions& options = {});

/// Value ranges observed on the validation maps.
struct MapExtrema {
  double a_min = 0.0, a_max = 1.0;
  double c_min = 0.0, c_max = 1.0;

  void include(const AnomalyMap& a_a, const AnomalyMap& a_c, bool first);
  nlohmann::json to_json() const;
  static MapExtrema from_json(const nlohmann::json& j);
};

/// Each map min-max normalised with the validation extrema (values below the
/// validation minimum clip to 0), then summed.
AnomalyMap combined_localization_map(const AnomalyMap& a_a, const AnomalyMap& a_c, const MapExtrema& extrema);

/// Mann-Whitney AUROC with midranks for ties.
double auroc(std::span<const double> scores, std::span<const int> labels);

struct GtRegion {
  Mask mask;
  double saturation_area = 0.0;  // pixels
};

struct LocalizationSample {
  const Plane<float>* map = nullptr;
  std::vector<GtRegion> regions;  // empty for anomaly-free images
};

struct AusproOptions {
  double fpr_limit = 0.05;
  std::size_t max_thresholds = 5000;  // 0 = every distinct score
};

/// Area under the mean-sPRO vs FPR curve up to fpr_limit, divided by fpr_limit.
/// FPR is measured on the pixels of the anomaly-free samples.
double auspro(std::span<const LocalizationSample> samples, const AusproOptions& options = {});

}  // namespace salad::metrics
