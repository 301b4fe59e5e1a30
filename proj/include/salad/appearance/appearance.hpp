#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "salad/backends/backend.hpp"
#include "salad/core/types.hpp"
#include "salad/nn/unet.hpp"

namespace salad::appearance {

struct AppearanceOutput {
  AnomalyMap a_a;                  // nonnegative, working resolution
  backends::FeatureMap features;  // F_T, reused by the global branch
};

/// Contract every appearance branch satisfies: a finite nonnegative anomaly map
/// plus a dense feature map per image.
class AppearanceModel {
 public:
  virtual ~AppearanceModel() = default;
  virtual std::string id() const = 0;
  virtual AppearanceOutput infer(const ImageSample& image) = 0;
  virtual void save(const std::filesystem::path& path) = 0;
};

struct StudentTeacherConfig {
  backends::BackendConfig teacher;  // feature backend used as the frozen teacher
  std::int64_t iterations = 70000;
  float lr = 1e-4f;
  float weight_decay = 1e-5f;
  double decay_fraction = 0.9;
  float decay_factor = 0.1f;
  int batch_size = 1;
  int student_width = 64;
  int student_levels = 2;
  int ae_width = 32;
  int ae_levels = 4;
  double st_weight = 0.5;  // A_a = st_weight * student/teacher map + (1 - st_weight) * autoencoder map
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static StudentTeacherConfig from_json(const nlohmann::json& j);
};

/// Student-teacher-autoencoder model. The student regresses both the teacher
/// features and the autoencoder output; the autoencoder regresses the teacher
/// through a bottleneck.
class StudentTeacherModel final : public AppearanceModel {
 public:
  /// `teacher_dim` and `feature_size` describe the teacher output (D, H_f = W_f).
  StudentTeacherModel(const StudentTeacherConfig& cfg, int teacher_dim, int feature_size);

  std::string id() const override { return "student-teacher"; }
  AppearanceOutput infer(const ImageSample& image) override;
  void save(const std::filesystem::path& path) override;
  static std::unique_ptr<StudentTeacherModel> load(const std::filesystem::path& path);

  const StudentTeacherConfig& config() const { return cfg_; }
  int teacher_dim() const { return dim_; }

  /// Per-channel teacher normalisation fitted on the training corpus.
  std::vector<float> teacher_mean;
  std::vector<float> teacher_std;
  std::vector<double> loss_curve;
  bool trained = false;

  /// Raw teacher features, normalised with teacher_mean / teacher_std.
  backends::FeatureMap teacher_features(const ImageSample& image) const;

  /// Maps from already normalised teacher features (exposed for tests).
  AppearanceOutput infer_with_teacher(const ImageSample& image, const backends::FeatureMap& f_t);

  nn::UNet& student() { return student_; }
  nn::UNet& autoencoder() { return ae_; }
  /// Image tensor at feature resolution (space-to-depth).
  nn::Tensor network_input(std::span<const RgbImage* const> images) const;

 private:
  StudentTeacherConfig cfg_;
  int dim_;
  int feature_size_;
  std::unique_ptr<backends::FeatureExtractor> teacher_;
  nn::UNet student_;
  nn::UNet ae_;
};

using ProgressFn = std::function<void(std::int64_t, double)>;

std::unique_ptr<StudentTeacherModel> train_appearance(std::span<const ImageSample> images,
                                                      const StudentTeacherConfig& cfg,
                                                      const ProgressFn& progress = {});

/// Registry keyed by `appearance_backend`.
std::vector<std::string> registered_appearance_backends();
std::unique_ptr<AppearanceModel> load_appearance_model(const std::string& backend,
                                                       const std::filesystem::path& path);

}  // namespace salad::appearance
