#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "salad/backends/backend.hpp"
#include "salad/core/types.hpp"
#include "salad/nn/unet.hpp"

namespace salad::compmap {

using backends::FeatureMap;
using backends::MaskProposal;

struct ForegroundMask {
  Mask mask;
  bool empty_warning = false;  // corner queries swallowed the whole frame
};

/// Background = union of the regions found at the four image corners.
ForegroundMask compute_foreground_mask(const ImageSample& image,
                                       const backends::MaskProposer& proposer);
ForegroundMask compute_foreground_mask(const ImageSample& image,
                                       const backends::BackendConfig& cfg);

struct ClusterModel {
  int k = 0;
  int dim = 0;
  std::vector<float> centroids;  // k x dim, row-major
  std::string feature_backend_id;
  std::uint64_t seed = 0;
  int iterations = 0;

  const float* centroid(int i) const { return centroids.data() + static_cast<std::size_t>(i) * dim; }
  nlohmann::json to_json() const;
  static ClusterModel from_json(const nlohmann::json& j);
};

struct ClusterOptions {
  int k = 6;
  std::uint64_t seed = 0;
  std::size_t max_samples = 100000;
  int max_iterations = 100;
};

/// k-means (k-means++ seeding) over foreground feature vectors, after resizing
/// every feature map to the foreground mask resolution.
ClusterModel fit_cluster_model(std::span<const FeatureMap> features,
                               std::span<const ForegroundMask> fg_masks,
                               const ClusterOptions& options);

/// Index of the nearest centroid; ties go to the lowest index.
int nearest_centroid(const ClusterModel& model, const float* v);

/// C_feat: background -> 0, foreground -> 1 + nearest centroid.
CompositionMap assign_feature_clusters(const FeatureMap& features, const ForegroundMask& fg,
                                       const ClusterModel& model);

/// C_pseudo: proposals painted largest first with the majority part class of
/// c_feat under each mask (background when more than half of it is background).
CompositionMap classify_mask_proposals(const CompositionMap& c_feat,
                                       std::span<const MaskProposal> proposals);

struct PseudoLabel {
  ForegroundMask fg;
  CompositionMap c_feat;
  CompositionMap c_pseudo;
};

// ---------------------------------------------------------------------------
// Component segmenter

struct SegmenterConfig {
  int num_classes = 7;  // K + 1
  int epochs = 15;
  float lr = 5e-4f;
  int batch_size = 8;
  float weight_decay = 1e-2f;  // AdamW default
  int base_width = 32;
  int levels = 4;
  int space_to_depth = 1;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static SegmenterConfig from_json(const nlohmann::json& j);
};

class SegmenterModel {
 public:
  explicit SegmenterModel(const SegmenterConfig& cfg);

  const SegmenterConfig& config() const { return cfg_; }
  int num_classes() const { return cfg_.num_classes; }
  nn::ShuffledUNet& net() { return net_; }

  /// Per-pixel argmax over the K+1 logits.
  CompositionMap infer(const ImageSample& image);

  void save(const std::filesystem::path& path, const nlohmann::json& extra = {});
  static SegmenterModel load(const std::filesystem::path& path);

  std::vector<double> epoch_losses;

 private:
  SegmenterConfig cfg_;
  nn::ShuffledUNet net_;
};

/// Mean softmax cross-entropy over all pixels of the batch; writes dL/dlogits.
double cross_entropy(const nn::Tensor& logits, std::span<const CompositionMap* const> targets,
                     nn::Tensor* grad);

SegmenterModel train_component_segmenter(std::span<const ImageSample> images,
                                         std::span<const CompositionMap> pseudo_labels,
                                         const SegmenterConfig& cfg);

CompositionMap infer_composition_map(SegmenterModel& model, const ImageSample& image);

/// Intersection over union per part class (1..K), skipping classes absent
/// from both maps; returns the mean.
double mean_part_iou(const CompositionMap& pred, const CompositionMap& truth);

}  // namespace salad::compmap
