#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "salad/core/dataset.hpp"
#include "salad/pipeline/config.hpp"

namespace salad::pipeline {

enum class Stage { gen_maps, train_appearance, train_composition, train_global, calibrate, eval };

std::string to_string(Stage s);
/// Accepts the stage names printed by to_string ("gen-maps", "train-appearance", ...).
Stage stage_from_string(const std::string& s);
const std::vector<Stage>& all_stages();

struct StageReport {
  Stage stage = Stage::gen_maps;
  std::string category;
  bool skipped = false;  // inputs unchanged since the recorded run
  std::string status;    // "ran" or "up-to-date"
  double wall_seconds = 0.0;
  nlohmann::json details;
};

/// Where a category's artifacts live inside the workdir.
class WorkdirLayout {
 public:
  WorkdirLayout() = default;
  WorkdirLayout(std::filesystem::path root, std::string category);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path compmap_dir() const;
  std::filesystem::path compmap_path(const SampleRecord& r) const;
  std::filesystem::path pseudo_label_path(const SampleRecord& r) const;
  std::filesystem::path segmenter_checkpoint() const;
  std::filesystem::path cluster_model() const;
  std::filesystem::path composition_recon() const;
  std::filesystem::path composition_disc() const;
  std::filesystem::path appearance_checkpoint() const;
  std::filesystem::path gaussians() const;
  std::filesystem::path calibration() const;
  std::filesystem::path default_report() const;
  std::filesystem::path manifest(Stage s) const;
  std::filesystem::path lock_file() const;

 private:
  std::filesystem::path root_;
  std::string category_;
};

/// Exclusive claim on a workdir; a lock left by a dead process is taken over.
class WorkdirLock {
 public:
  explicit WorkdirLock(const std::filesystem::path& lock_file);
  ~WorkdirLock();
  WorkdirLock(const WorkdirLock&) = delete;
  WorkdirLock& operator=(const WorkdirLock&) = delete;

 private:
  std::filesystem::path path_;
};

struct InferResult {
  CompositionMap composition;
  AnomalyMap a_a;
  AnomalyMap a_c;
  AnomalyMap combined;
  double s_g = 0.0;
  double total = 0.0;
  nlohmann::json scores;
};

class Pipeline {
 public:
  /// Finalises the config, resolves the workdir and indexes the dataset.
  explicit Pipeline(RunConfig cfg);
  ~Pipeline();

  const RunConfig& config() const { return cfg_; }
  const WorkdirLayout& layout() const { return layout_; }
  const CategoryIndex& category() const { return category_; }
  const std::vector<SampleRecord>& train_records() const { return train_; }
  const std::vector<SampleRecord>& validation_records() const { return validation_; }
  const std::vector<SampleRecord>& test_records() const { return category_.test; }

  /// Eval report location; defaults to <workdir>/reports/<category>.json.
  void set_report_path(std::filesystem::path p) { report_path_ = std::move(p); }
  std::filesystem::path report_path() const;
  std::filesystem::path csv_path() const;

  /// Runs one stage unless its manifest shows identical inputs and intact outputs
  /// (or `force`). Throws MissingArtifact naming the stage to run first.
  StageReport run(Stage s, bool force = false);
  std::vector<StageReport> run_all(bool force = false);

  /// Scores one image with the trained, calibrated models; writes maps and a
  /// score file to `out_dir` when it is non-empty.
  InferResult infer(const std::filesystem::path& image, const std::filesystem::path& out_dir);

 private:
  struct Models;

  using Outputs = std::vector<std::filesystem::path>;
  nlohmann::json execute(Stage s, Outputs& outputs);
  nlohmann::json gen_maps(Outputs& outputs);
  nlohmann::json train_appearance_stage(Outputs& outputs);
  nlohmann::json train_composition_stage(Outputs& outputs);
  nlohmann::json train_global_stage(Outputs& outputs);
  nlohmann::json calibrate_stage(Outputs& outputs);
  nlohmann::json eval_stage(Outputs& outputs);

  /// Output digest recorded by an upstream stage, after checking its files.
  std::string require_upstream(Stage s) const;
  std::string fingerprint(Stage s) const;
  bool up_to_date(Stage s, const std::string& fp) const;
  const std::string& dataset_digest() const;
  Models& models();

  RunConfig cfg_;
  WorkdirLayout layout_;
  DatasetIndex index_;
  CategoryIndex category_;
  std::vector<SampleRecord> train_;
  std::vector<SampleRecord> validation_;
  bool validation_carved_ = false;
  std::optional<std::filesystem::path> report_path_;
  mutable std::string dataset_digest_;
  std::unique_ptr<Models> models_;
};

/// Region masks of a test sample at working resolution with their saturation
/// areas (pixels), looked up by the defect pixel value in defects_config.json.
std::vector<metrics::GtRegion> load_gt_regions(const SampleRecord& r, const CategoryIndex& cat);

}  // namespace salad::pipeline
