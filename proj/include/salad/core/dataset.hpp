#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "salad/core/types.hpp"

namespace salad {

enum class DatasetLayout {
  loco,  // <cat>/{train,validation,test}/..., ground_truth/<defect>/<image>/*.png
  flat,  // <cat>/{train/good,test/<defect>}, ground_truth/<defect>/<stem>_mask.png; no validation
};

DatasetLayout layout_from_string(const std::string& s);

/// One entry of a category's defects_config.json.
struct DefectType {
  std::string name;
  int pixel_value = 255;
  double saturation_threshold = 1.0;
  bool relative_saturation = true;
};

struct SampleRecord {
  std::filesystem::path path;
  Split split = Split::train;
  Label label = Label::unknown;
  std::string defect;  // test subfolder name ("good" for anomaly-free samples)
  std::vector<std::filesystem::path> gt_regions;

  std::string stem() const { return path.stem().string(); }
};

struct CategoryIndex {
  std::string name;
  std::filesystem::path root;
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> validation;
  std::vector<SampleRecord> test;
  std::vector<DefectType> defects;
  bool has_ground_truth = false;

  const std::vector<SampleRecord>& split(Split s) const;
  std::vector<SampleRecord>& split(Split s);
  /// Localization scoring needs both region masks and saturation settings.
  bool localization_enabled() const { return has_ground_truth && !defects.empty(); }
};

struct DatasetIndex {
  std::filesystem::path root;
  std::vector<CategoryIndex> categories;

  const CategoryIndex& category(const std::string& name) const;
};

/// Scans `root`. A root that itself holds train/ is indexed as a single
/// category; otherwise every subdirectory holding train/ is a category.
DatasetIndex load_dataset_index(const std::filesystem::path& root, DatasetLayout layout);

std::vector<DefectType> read_defects_config(const std::filesystem::path& path);
void write_defects_config(const std::vector<DefectType>& defects,
                          const std::filesystem::path& path);

struct ValidationCarve {
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> validation;
  std::uint64_t seed = 0;
  bool train_emptied = false;  // warning: fraction * N rounded up to the whole split
};

/// Moves ceil(fraction * N) randomly chosen training samples into validation.
ValidationCarve carve_validation_split(const std::vector<SampleRecord>& train, double fraction,
                                       std::uint64_t seed);

/// Index-level form: first = remaining training part, second = carved validation
/// part; every category is carved with the same seed.
std::pair<DatasetIndex, DatasetIndex> carve_validation_split(const DatasetIndex& index,
                                                             double fraction,
                                                             std::uint64_t seed);

}  // namespace salad
