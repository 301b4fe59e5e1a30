#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "salad/core/types.hpp"
#include "salad/nn/unet.hpp"
#include "salad/sim/simulator.hpp"

namespace salad::comp {

struct CompBranchConfig {
  int num_classes = 7;  // K + 1
  std::int64_t iterations = 70000;
  float lr = 1e-5f;
  double decay_fraction = 0.9;
  float decay_factor = 0.1f;
  int batch_size = 8;
  double gamma = 2.0;
  double alpha = 5.0;
  int recon_width = 64;
  int disc_width = 64;
  int levels = 4;
  int space_to_depth = 1;
  int working_size = 0;  // > 0: maps are nearest-resampled to this square size before the networks
  bool soft_disc_input = false;  // feed reconstruction probabilities instead of argmax one-hot
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static CompBranchConfig from_json(const nlohmann::json& j);
};

struct Reconstruction {
  CompositionMap map;  // C_rec
  nn::Tensor probs;    // softmax over K+1 channels, (1, K+1, H, W)
};

struct TrainingCurve {
  std::vector<double> recon_loss;
  std::vector<double> disc_loss;
};

class CompositionBranch {
 public:
  explicit CompositionBranch(const CompBranchConfig& cfg);

  const CompBranchConfig& config() const { return cfg_; }

  Reconstruction reconstruct(const CompositionMap& c_in);
  /// A_c in [0,1].
  AnomalyMap discriminate(const CompositionMap& c_in, const Reconstruction& rec);
  /// Inference path: the input map plays the role C_a had during training.
  /// The result has the input's resolution.
  AnomalyMap anomaly_map(const CompositionMap& c);

  std::vector<nn::Param*> recon_params() { return recon_.params(); }
  std::vector<nn::Param*> disc_params() { return disc_.params(); }

  void save(const std::filesystem::path& recon_path, const std::filesystem::path& disc_path,
            const nlohmann::json& extra = {});
  static CompositionBranch load(const std::filesystem::path& recon_path,
                                const std::filesystem::path& disc_path);

  /// Forward and backward pass over a batch, accumulating parameter gradients
  /// of the summed objective; returns mean (recon, disc) losses. Inputs are
  /// resampled to the working size first.
  std::pair<double, double> forward_backward(std::span<const CompositionMap* const> clean,
                                       std::span<const sim::SyntheticSample* const> augmented);

  nn::ShuffledUNet& recon_net() { return recon_; }
  nn::ShuffledUNet& disc_net() { return disc_; }
  TrainingCurve curve;

 private:
  nn::Tensor disc_input(const nn::Tensor& c_in_onehot, const nn::Tensor& rec_probs) const;

  CompBranchConfig cfg_;
  nn::ShuffledUNet recon_;
  nn::ShuffledUNet disc_;
};

/// Called every iteration with (iteration, recon loss, disc loss).
using ProgressFn = std::function<void(std::int64_t, double, double)>;

CompositionBranch train_composition_branch(std::span<const CompositionMap> compmaps,
                                           const CompBranchConfig& cfg,
                                           const ProgressFn& progress = {});

}  // namespace salad::comp
