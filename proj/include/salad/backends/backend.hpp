#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "salad/core/types.hpp"

namespace salad::backends {

/// Dense features, channel-interleaved (H_f x W_f x D).
struct FeatureMap {
  int height = 0;
  int width = 0;
  int dim = 0;
  std::vector<float> values;
  int source_width = kWorkingSize;
  int source_height = kWorkingSize;
  std::string backend_id;

  const float* at(int x, int y) const {
    return values.data() + (static_cast<std::size_t>(y) * width + x) * dim;
  }
  float* at(int x, int y) { return values.data() + (static_cast<std::size_t>(y) * width + x) * dim; }

  /// Throws ArgumentError on empty dimensions or non-finite values.
  void validate() const;
  /// Bilinear resize of every channel.
  FeatureMap resized(int width, int height) const;

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

enum class ProposalOrigin { grid_point, corner_query };

struct MaskProposal {
  Mask mask;
  double quality = 0.0;
  ProposalOrigin origin = ProposalOrigin::grid_point;
};

struct Point {
  int x = 0;
  int y = 0;
};

/// Backend selection plus free-form parameters ("cell", "weights", ...).
struct BackendConfig {
  std::string feature_backend = "stub-color";
  std::map<std::string, std::string> feature_params;
  std::string mask_backend = "stub-region";
  std::map<std::string, std::string> mask_params;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const BackendConfig& cfg);
BackendConfig backend_config_from_json(const nlohmann::json& j);

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string id() const = 0;
  virtual int dim() const = 0;
  /// Deterministic for a fixed (image, configuration).
  virtual FeatureMap extract(const ImageSample& image) const = 0;
};

class MaskProposer {
 public:
  virtual ~MaskProposer() = default;
  virtual std::string id() const = 0;
  /// Raw proposals for a grid_n x grid_n lattice of query points (not deduplicated).
  virtual std::vector<MaskProposal> propose_raw(const ImageSample& image, int grid_n) const = 0;
  /// Region mask for a single query point.
  virtual Mask region_at(const ImageSample& image, Point p) const = 0;
};

std::unique_ptr<FeatureExtractor> make_feature_extractor(const BackendConfig& cfg);
std::unique_ptr<MaskProposer> make_mask_proposer(const BackendConfig& cfg);

std::vector<std::string> registered_feature_backends();
std::vector<std::string> registered_mask_backends();

/// Deduplicating wrapper used by the pipeline: drops any proposal whose IoU with an
/// already kept, higher-quality proposal exceeds `max_iou`.
std::vector<MaskProposal> deduplicate(std::vector<MaskProposal> proposals, double max_iou = 0.9);

// Operation-level entry points.

FeatureMap extract_features(const ImageSample& image, const BackendConfig& cfg);

std::vector<MaskProposal> propose_masks_grid(const ImageSample& image, int grid_n,
                                             const BackendConfig& cfg);

/// Union of the per-point regions. Throws ArgumentError on an empty point list or
/// a point outside the frame.
MaskProposal query_mask_at_points(const ImageSample& image, std::span<const Point> points,
                                  const BackendConfig& cfg);

/// Same as above with an already constructed proposer.
MaskProposal query_mask_at_points(const MaskProposer& proposer, const ImageSample& image,
                                  std::span<const Point> points);

}  // namespace salad::backends
