#include "salad/core/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "salad/core/random.hpp"

namespace fs = std::filesystem;

namespace salad {

namespace {

bool is_png(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_png(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> list_subdirs(const fs::path& dir) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) out.push_back(e.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Label label_for_defect(const std::string& defect, DatasetLayout layout) {
  if (defect == "good") return Label::good;
  if (layout == DatasetLayout::loco) {
    if (defect == "logical_anomalies") return Label::logical_anomaly;
    if (defect == "structural_anomalies") return Label::structural_anomaly;
    return Label::unknown;
  }
  return Label::structural_anomaly;
}

void attach_ground_truth(CategoryIndex& cat, DatasetLayout layout) {
  const fs::path gt = cat.root / "ground_truth";
  if (!fs::is_directory(gt)) {
    spdlog::warn("{}: no ground_truth directory, localization evaluation disabled", cat.name);
    return;
  }
  cat.has_ground_truth = true;
  for (auto& s : cat.test) {
    if (s.label == Label::good) continue;
    if (layout == DatasetLayout::loco) {
      s.gt_regions = list_pngs(gt / s.defect / s.stem());
    } else {
      const fs::path p = gt / s.defect / (s.stem() + "_mask.png");
      if (fs::exists(p)) s.gt_regions.push_back(p);
    }
  }
  const fs::path cfg = cat.root / "defects_config.json";
  if (fs::exists(cfg)) {
    cat.defects = read_defects_config(cfg);
  } else {
    spdlog::warn("{}: no defects_config.json, saturation areas unknown", cat.name);
  }
}

CategoryIndex index_category(const fs::path& dir, DatasetLayout layout) {
  CategoryIndex cat;
  cat.name = dir.filename().string();
  cat.root = dir;

  auto good_split = [&](const char* name, Split split, bool required) {
    const fs::path sd = dir / name;
    if (!fs::is_directory(sd)) {
      if (required) throw ConfigError("missing split '" + std::string(name) + "' in " + dir.string());
      return std::vector<SampleRecord>{};
    }
    std::vector<SampleRecord> out;
    for (const auto& p : list_pngs(sd / "good")) {
      out.push_back({p, split, Label::good, "good", {}});
    }
    return out;
  };

  cat.train = good_split("train", Split::train, true);
  cat.validation = good_split("validation", Split::validation, layout == DatasetLayout::loco);
  if (!fs::is_directory(dir / "test")) {
    throw ConfigError("missing split 'test' in " + dir.string());
  }
  for (const auto& defect : list_subdirs(dir / "test")) {
    for (const auto& p : list_pngs(dir / "test" / defect)) {
      cat.test.push_back({p, Split::test, label_for_defect(defect, layout), defect, {}});
    }
  }
  std::sort(cat.test.begin(), cat.test.end(),
            [](const SampleRecord& a, const SampleRecord& b) { return a.path < b.path; });
  if (cat.train.empty()) throw ConfigError("empty train split in " + dir.string());
  attach_ground_truth(cat, layout);
  return cat;
}

}  // namespace

DatasetLayout layout_from_string(const std::string& s) {
  if (s == "loco") return DatasetLayout::loco;
  if (s == "flat") return DatasetLayout::flat;
  throw ConfigError("unknown dataset layout: " + s);
}

const std::vector<SampleRecord>& CategoryIndex::split(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::validation: return validation;
    case Split::test: return test;
  }
  return test;
}

std::vector<SampleRecord>& CategoryIndex::split(Split s) {
  return const_cast<std::vector<SampleRecord>&>(std::as_const(*this).split(s));
}

const CategoryIndex& DatasetIndex::category(const std::string& name) const {
  for (const auto& c : categories) {
    if (c.name == name) return c;
  }
  throw ConfigError("category not found in dataset: " + name);
}

DatasetIndex load_dataset_index(const fs::path& root, DatasetLayout layout) {
  if (!fs::is_directory(root)) throw ConfigError("dataset root does not exist: " + root.string());
  DatasetIndex index;
  index.root = root;
  if (fs::is_directory(root / "train")) {
    index.categories.push_back(index_category(root, layout));
    return index;
  }
  for (const auto& name : list_subdirs(root)) {
    if (fs::is_directory(root / name / "train")) {
      index.categories.push_back(index_category(root / name, layout));
    }
  }
  if (index.categories.empty()) throw ConfigError("no categories found under " + root.string());
  return index;
}

std::vector<DefectType> read_defects_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    std::vector<DefectType> out;
    for (const auto& e : j) {
      DefectType d;
      d.name = e.at("defect_name").get<std::string>();
      d.pixel_value = e.at("pixel_value").get<int>();
      d.saturation_threshold = e.at("saturation_threshold").get<double>();
      d.relative_saturation = e.at("relative_saturation").get<bool>();
      out.push_back(d);
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed defects config " + path.string() + ": " + e.what());
  }
}

void write_defects_config(const std::vector<DefectType>& defects, const fs::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& d : defects) {
    j.push_back({{"defect_name", d.name},
                 {"pixel_value", d.pixel_value},
                 {"saturation_threshold", d.saturation_threshold},
                 {"relative_saturation", d.relative_saturation}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

ValidationCarve carve_validation_split(const std::vector<SampleRecord>& train, double fraction,
                                       std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ArgumentError("validation fraction must lie in (0, 1)");
  }
  if (train.empty()) throw ArgumentError("cannot carve validation from an empty train split");
  const std::size_t n = train.size();
  // The epsilon keeps products such as 0.1 * 30 = 3.0000000000000004 from rounding up.
  auto n_val = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  n_val = std::clamp<std::size_t>(n_val, 1, n);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<bool> to_val(n, false);
  for (std::size_t i = 0; i < n_val; ++i) to_val[order[i]] = true;

  ValidationCarve out;
  out.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    SampleRecord r = train[i];
    if (to_val[i]) {
      r.split = Split::validation;
      out.validation.push_back(std::move(r));
    } else {
      out.train.push_back(std::move(r));
    }
  }
  if (out.train.empty()) {
    out.train_emptied = true;
    spdlog::warn("validation carve took all {} training sample(s)", n);
  }
  return out;
}

std::pair<DatasetIndex, DatasetIndex> carve_validation_split(const DatasetIndex& index,
                                                             double fraction,
                                                             std::uint64_t seed) {
  DatasetIndex train_part = index;
  DatasetIndex val_part = index;
  for (std::size_t c = 0; c < index.categories.size(); ++c) {
    auto carve = carve_validation_split(index.categories[c].train, fraction, seed);
    train_part.categories[c].train = carve.train;
    train_part.categories[c].validation.clear();
    val_part.categories[c].train.clear();
    val_part.categories[c].validation = carve.validation;
    val_part.categories[c].test.clear();
  }
  return {std::move(train_part), std::move(val_part)};
}

}  // namespace salad
