#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "salad/appearance/appearance.hpp"
#include "salad/backends/backend.hpp"
#include "salad/comp/branch.hpp"
#include "salad/compmap/compmap.hpp"
#include "salad/core/dataset.hpp"
#include "salad/metrics/metrics.hpp"

namespace salad::pipeline {

inline constexpr const char* kPipelineVersion = "salad-pipeline/1";

/// Everything a run needs. Defaults are the published training settings; the
/// toy preset in tools/toy.conf shrinks them to desk scale.
struct RunConfig {
  std::filesystem::path dataset_root;
  DatasetLayout layout = DatasetLayout::loco;
  std::string category;
  std::filesystem::path workdir;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;  // only used when the dataset ships no validation split

  backends::BackendConfig backends{"dino-vitb8", {}, "sam-hq", {}, 0};
  std::string appearance_backend = "student-teacher";
  std::string teacher_backend = "efficientad-teacher";
  std::map<std::string, std::string> teacher_params;

  int k = 6;
  int grid_points = 32;
  double dedup_iou = 0.9;
  std::size_t cluster_samples = 100000;
  int kmeans_iterations = 100;
  compmap::SegmenterConfig segmenter;
  comp::CompBranchConfig composition;
  appearance::StudentTeacherConfig appearance;
  metrics::AusproOptions auspro;
  metrics::FusionOptions fusion;

  /// Seeds not set explicitly are derived from `seed`.
  std::optional<std::uint64_t> split_seed, cluster_seed, segmenter_seed, composition_seed, appearance_seed;

  std::uint64_t resolved_split_seed() const;
  std::uint64_t resolved_cluster_seed() const;
  std::uint64_t resolved_segmenter_seed() const;
  std::uint64_t resolved_composition_seed() const;
  std::uint64_t resolved_appearance_seed() const;

  /// Sets one documented key; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Current value of a documented key in the file syntax.
  std::string get(const std::string& key) const;

  /// Every key with its current value, in documentation order.
  std::vector<std::pair<std::string, std::string>> entries() const;
  nlohmann::json to_json() const;
  /// Subset of entries selected by `prefixes`: a pattern ending in '.' matches
  /// every key below it, any other pattern matches one key exactly.
  nlohmann::json subset_json(const std::vector<std::string>& prefixes) const;

  /// Fills the derived module configs (class count, seeds, backends) from the
  /// top-level keys. Called by the stage runner before any stage.
  void finalize();
  /// Throws ConfigError when a required setting is missing.
  void require_dataset() const;
};

struct ConfigKeyDoc {
  std::string key;
  std::string description;
};

/// Documentation for every recognised key (used by `salad config --list`).
const std::vector<ConfigKeyDoc>& config_key_docs();

/// Parses `key = value` lines; `#` starts a comment. Later lines win.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin = "<text>");
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);
std::string format_config(const RunConfig& cfg);

/// Falls back to $SALAD_WORKDIR when `cfg.workdir` is empty; throws ConfigError
/// when neither is set.
std::filesystem::path resolve_workdir(const RunConfig& cfg);

}  // namespace salad::pipeline
