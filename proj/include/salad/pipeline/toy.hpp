#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "salad/core/dataset.hpp"
#include "salad/core/types.hpp"

namespace salad::pipeline {

enum class ToyShape { disc, rect };

struct ToyPart {
  std::string name;
  ToyShape shape = ToyShape::disc;
  std::array<float, 3> color{0.8f, 0.2f, 0.2f};
  int width = 30;   // full extent in pixels
  int height = 30;
  std::vector<std::array<int, 2>> positions;  // nominal centres, one per instance
};

struct ToySpec {
  std::string category = "toy";
  int canvas = kWorkingSize;
  std::uint64_t seed = 0;
  std::array<float, 3> background{0.85f, 0.85f, 0.85f};
  double noise_sigma = 0.01;
  int jitter = 6;
  std::vector<ToyPart> parts;
  int train = 200;
  int validation = 20;
  int test_good = 50;
  int logical = 50;
  int structural = 50;
  int patch_min = 16;
  int patch_max = 40;
  double patch_sigma = 0.25;

  static ToySpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  /// Three parts (one of them with two instances) on a light background.
  static ToySpec default_spec();
};

enum class ToyDefect { none, missing_part, extra_part, misplaced_part, noise_patch };

std::string to_string(ToyDefect d);

struct ToyImage {
  RgbImage pixels;
  CompositionMap truth;       // constructed part classes
  std::vector<Mask> regions;  // ground-truth anomaly regions
  ToyDefect defect = ToyDefect::none;
};

/// One image; `index` selects the per-image random stream.
ToyImage render_toy_image(const ToySpec& spec, ToyDefect defect, std::uint64_t index);

/// Writes <out>/<category>/ in the loco layout plus defects_config.json and the
/// constructed composition maps under toy_truth/<split>/<defect>/<stem>.png.
DatasetIndex generate_toy_dataset(const ToySpec& spec, const std::filesystem::path& out_root);

/// Path of the constructed composition map for a dataset image.
std::filesystem::path toy_truth_path(const std::filesystem::path& category_root, const SampleRecord& rec);

}  // namespace salad::pipeline
