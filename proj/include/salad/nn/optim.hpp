#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "salad/nn/layers.hpp"

namespace salad::nn {

struct AdamConfig {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.0f;  // decoupled; nonzero makes this AdamW
};

class Adam {
 public:
  Adam(std::vector<Param*> params, AdamConfig cfg);

  void zero_grad();
  void step();
  void set_lr(float lr) { cfg_.lr = lr; }
  float lr() const { return cfg_.lr; }
  std::int64_t steps() const { return t_; }

 private:
  std::vector<Param*> params_;
  AdamConfig cfg_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  std::int64_t t_ = 0;
};

/// Iteration at which the learning rate is multiplied by the decay factor:
/// floor(decay_fraction * iterations).
std::int64_t decay_step(std::int64_t iterations, double decay_fraction);

/// Step schedule: base_lr before decay_step, base_lr * factor from it on.
float step_decay_lr(float base_lr, std::int64_t iteration, std::int64_t iterations,
                    double decay_fraction, float factor);

/// Binary checkpoint: magic, JSON header (manifest + tensor table), raw float32 payload.
void save_checkpoint(const std::filesystem::path& path, const std::vector<Param*>& params,
                     const nlohmann::json& manifest);
/// Fills `params` (names and shapes must match) and returns the stored manifest.
nlohmann::json load_checkpoint(const std::filesystem::path& path, const std::vector<Param*>& params);
/// Reads only the manifest.
nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path);

/// Sum of squares of all gradients (diagnostics, divergence checks).
double grad_norm_sq(const std::vector<Param*>& params);

}  // namespace salad::nn
