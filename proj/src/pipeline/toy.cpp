#include "salad/pipeline/toy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "salad/core/compmap_io.hpp"
#include "salad/core/image_io.hpp"
#include "salad/core/random.hpp"

namespace fs = std::filesystem;

namespace salad::pipeline {

namespace {

struct Instance {
  int part = 0;  // index into spec.parts
  int cx = 0;
  int cy = 0;
};

bool inside(const ToyPart& p, int cx, int cy, int x, int y) {
  const double rx = p.width / 2.0;
  const double ry = p.height / 2.0;
  const double dx = x + 0.5 - cx;
  const double dy = y + 0.5 - cy;
  if (p.shape == ToyShape::rect) return std::fabs(dx) <= rx && std::fabs(dy) <= ry;
  return (dx * dx) / (rx * rx) + (dy * dy) / (ry * ry) <= 1.0;
}

Mask instance_mask(const ToySpec& spec, const Instance& in) {
  const ToyPart& p = spec.parts[in.part];
  Mask m(spec.canvas, spec.canvas);
  const int x0 = std::max(0, in.cx - p.width / 2 - 1);
  const int x1 = std::min(spec.canvas - 1, in.cx + p.width / 2 + 1);
  const int y0 = std::max(0, in.cy - p.height / 2 - 1);
  const int y1 = std::min(spec.canvas - 1, in.cy + p.height / 2 + 1);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) m(x, y) = inside(p, in.cx, in.cy, x, y);
  }
  return m;
}

// Bounding boxes (with margin) do not overlap.
bool overlaps(const ToySpec& spec, const Instance& a, const Instance& b, int margin) {
  const ToyPart& pa = spec.parts[a.part];
  const ToyPart& pb = spec.parts[b.part];
  return std::abs(a.cx - b.cx) * 2 < pa.width + pb.width + 2 * margin &&
         std::abs(a.cy - b.cy) * 2 < pa.height + pb.height + 2 * margin;
}

// Uniform position for `in` that keeps clear of every instance in `others`.
bool place_free(const ToySpec& spec, Instance& in, const std::vector<Instance>& others, Rng& rng) {
  const ToyPart& p = spec.parts[in.part];
  const int margin = 6;
  for (int attempt = 0; attempt < 500; ++attempt) {
    in.cx = rng.range(p.width / 2 + margin, spec.canvas - p.width / 2 - margin);
    in.cy = rng.range(p.height / 2 + margin, spec.canvas - p.height / 2 - margin);
    bool ok = true;
    for (const auto& o : others) ok = ok && !overlaps(spec, in, o, margin);
    if (ok) return true;
  }
  return false;
}

std::array<float, 3> parse_color(const nlohmann::json& j) {
  const auto v = j.get<std::vector<float>>();
  if (v.size() != 3) throw ConfigError("colors need three components");
  return {v[0], v[1], v[2]};
}

}  // namespace

std::string to_string(ToyDefect d) {
  switch (d) {
    case ToyDefect::none: return "good";
    case ToyDefect::missing_part: return "missing_part";
    case ToyDefect::extra_part: return "extra_part";
    case ToyDefect::misplaced_part: return "misplaced_part";
    case ToyDefect::noise_patch: return "noise_patch";
  }
  return "good";
}

ToySpec ToySpec::default_spec() {
  ToySpec s;
  s.parts = {
      {"disc", ToyShape::disc, {0.80f, 0.15f, 0.15f}, 48, 48, {{68, 72}}},
      {"bar", ToyShape::rect, {0.15f, 0.55f, 0.20f}, 72, 26, {{180, 64}}},
      {"dot", ToyShape::disc, {0.20f, 0.30f, 0.85f}, 26, 26, {{72, 192}, {184, 192}}},
  };
  return s;
}

ToySpec ToySpec::from_json(const nlohmann::json& j) {
  ToySpec s;
  try {
    s.category = j.value("category", s.category);
    s.canvas = j.value("canvas", s.canvas);
    s.seed = j.value("seed", s.seed);
    if (j.contains("background")) s.background = parse_color(j.at("background"));
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.jitter = j.value("jitter", s.jitter);
    if (j.contains("parts")) {
      for (const auto& e : j.at("parts")) {
        ToyPart p;
        p.name = e.at("name").get<std::string>();
        const auto shape = e.value("shape", std::string("disc"));
        if (shape == "disc") {
          p.shape = ToyShape::disc;
        } else if (shape == "rect") {
          p.shape = ToyShape::rect;
        } else {
          throw ConfigError("unknown toy shape: " + shape);
        }
        p.color = parse_color(e.at("color"));
        const auto size = e.at("size").get<std::vector<int>>();
        if (size.size() != 2) throw ConfigError("part size needs [width, height]");
        p.width = size[0];
        p.height = size[1];
        for (const auto& pos : e.at("positions")) {
          const auto v = pos.get<std::vector<int>>();
          if (v.size() != 2) throw ConfigError("part positions need [x, y]");
          p.positions.push_back({v[0], v[1]});
        }
        s.parts.push_back(std::move(p));
      }
    } else {
      s.parts = default_spec().parts;
    }
    const auto& counts = j.contains("counts") ? j.at("counts") : nlohmann::json::object();
    s.train = counts.value("train", s.train);
    s.validation = counts.value("validation", s.validation);
    s.test_good = counts.value("test_good", s.test_good);
    s.logical = counts.value("logical", s.logical);
    s.structural = counts.value("structural", s.structural);
    if (j.contains("structural")) {
      const auto& st = j.at("structural");
      s.patch_min = st.value("patch_min", s.patch_min);
      s.patch_max = st.value("patch_max", s.patch_max);
      s.patch_sigma = st.value("sigma", s.patch_sigma);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed toy spec: ") + e.what());
  }
  if (s.parts.empty()) throw ConfigError("toy spec needs at least one part");
  for (const auto& p : s.parts) {
    if (p.positions.empty()) throw ConfigError("toy part '" + p.name + "' has no positions");
    if (p.width < 2 || p.height < 2) throw ConfigError("toy part '" + p.name + "' is too small");
  }
  if (s.parts.size() > 254) throw ConfigError("too many toy parts");
  if (s.train < 1) throw ConfigError("toy spec needs at least one training image");
  if (s.patch_min < 1 || s.patch_max < s.patch_min) throw ConfigError("bad noise patch size range");
  return s;
}

nlohmann::json ToySpec::to_json() const {
  nlohmann::json parts_json = nlohmann::json::array();
  for (const auto& p : parts) {
    nlohmann::json pos = nlohmann::json::array();
    for (const auto& q : p.positions) pos.push_back({q[0], q[1]});
    parts_json.push_back({{"name", p.name},
                          {"shape", p.shape == ToyShape::disc ? "disc" : "rect"},
                          {"color", p.color},
                          {"size", {p.width, p.height}},
                          {"positions", pos}});
  }
  return {{"category", category},
          {"canvas", canvas},
          {"seed", seed},
          {"background", background},
          {"noise_sigma", noise_sigma},
          {"jitter", jitter},
          {"parts", parts_json},
          {"counts",
           {{"train", train},
            {"validation", validation},
            {"test_good", test_good},
            {"logical", logical},
            {"structural", structural}}},
          {"structural", {{"patch_min", patch_min}, {"patch_max", patch_max}, {"sigma", patch_sigma}}}};
}

ToyImage render_toy_image(const ToySpec& spec, ToyDefect defect, std::uint64_t index) {
  Rng rng(mix_seed(spec.seed, index));
  std::vector<Instance> inst;
  for (int p = 0; p < static_cast<int>(spec.parts.size()); ++p) {
    for (const auto& pos : spec.parts[p].positions) {
      inst.push_back({p, pos[0] + rng.range(-spec.jitter, spec.jitter), pos[1] + rng.range(-spec.jitter, spec.jitter)});
    }
  }

  ToyImage out;
  out.defect = defect;
  switch (defect) {
    case ToyDefect::none:
    case ToyDefect::noise_patch: break;
    case ToyDefect::missing_part: {
      const std::size_t i = rng.below(inst.size());
      out.regions.push_back(instance_mask(spec, inst[i]));
      inst.erase(inst.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
    case ToyDefect::extra_part: {
      Instance extra{static_cast<int>(rng.below(spec.parts.size())), 0, 0};
      if (!place_free(spec, extra, inst, rng)) throw ConfigError("toy canvas too crowded for an extra part");
      out.regions.push_back(instance_mask(spec, extra));
      inst.push_back(extra);
      break;
    }
    case ToyDefect::misplaced_part: {
      const std::size_t i = rng.below(inst.size());
      out.regions.push_back(instance_mask(spec, inst[i]));
      Instance moved = inst[i];
      std::vector<Instance> others = inst;
      others.erase(others.begin() + static_cast<std::ptrdiff_t>(i));
      // The new spot also keeps clear of the old one.
      others.push_back(inst[i]);
      if (!place_free(spec, moved, others, rng)) throw ConfigError("toy canvas too crowded to misplace a part");
      out.regions.push_back(instance_mask(spec, moved));
      inst[i] = moved;
      break;
    }
  }

  const int n = spec.canvas;
  out.pixels = RgbImage(n, n);
  out.truth = CompositionMap(n, n, static_cast<int>(spec.parts.size()) + 1);
  for (const auto& in : inst) {
    const Mask m = instance_mask(spec, in);
    for (std::size_t p = 0; p < m.size(); ++p) {
      if (m[p]) out.truth.classes[p] = static_cast<std::uint16_t>(in.part + 1);
    }
  }
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const int cls = out.truth(x, y);
      const auto& col = cls == 0 ? spec.background : spec.parts[cls - 1].color;
      for (int c = 0; c < 3; ++c) {
        out.pixels.at(x, y, c) = std::clamp(static_cast<float>(col[c] + spec.noise_sigma * rng.normal()), 0.0f, 1.0f);
      }
    }
  }

  if (defect == ToyDefect::noise_patch) {
    const Instance& host = inst[rng.below(inst.size())];
    const int w = rng.range(spec.patch_min, spec.patch_max);
    const int h = rng.range(spec.patch_min, spec.patch_max);
    const int x0 = std::clamp(host.cx - w / 2 + rng.range(-w / 4, w / 4), 0, n - w);
    const int y0 = std::clamp(host.cy - h / 2 + rng.range(-h / 4, h / 4), 0, n - h);
    Mask region(n, n);
    for (int y = y0; y < y0 + h; ++y) {
      for (int x = x0; x < x0 + w; ++x) {
        region(x, y) = 1;
        for (int c = 0; c < 3; ++c) {
          float& v = out.pixels.at(x, y, c);
          v = std::clamp(static_cast<float>(v + spec.patch_sigma * rng.normal()), 0.0f, 1.0f);
        }
      }
    }
    out.regions.push_back(std::move(region));
  }
  return out;
}

fs::path toy_truth_path(const fs::path& category_root, const SampleRecord& rec) {
  return category_root / "toy_truth" / to_string(rec.split) / rec.defect / (rec.stem() + ".png");
}

DatasetIndex generate_toy_dataset(const ToySpec& spec, const fs::path& out_root) {
  if (spec.parts.empty()) throw ConfigError("toy spec needs at least one part");
  const fs::path root = out_root / spec.category;
  if (fs::exists(root)) fs::remove_all(root);

  // Pixel values identify the defect type in the region masks.
  const std::vector<std::pair<ToyDefect, int>> kinds = {{ToyDefect::missing_part, 251},
                                                       {ToyDefect::extra_part, 252},
                                                       {ToyDefect::misplaced_part, 253},
                                                       {ToyDefect::noise_patch, 254}};
  std::vector<DefectType> defects;
  for (const auto& [k, v] : kinds) defects.push_back({to_string(k), v, 1.0, true});

  std::uint64_t index = 0;
  auto emit = [&](const std::string& split, const std::string& folder, int count, auto defect_of) {
    for (int i = 0; i < count; ++i) {
      const ToyDefect d = defect_of(i);
      const ToyImage im = render_toy_image(spec, d, index++);
      char stem[16];
      std::snprintf(stem, sizeof stem, "%03d", i);
      write_png_rgb(im.pixels, root / split / folder / (std::string(stem) + ".png"));
      save_composition_map(im.truth, root / "toy_truth" / split / folder / (std::string(stem) + ".png"));
      int value = 255;
      for (const auto& [k, v] : kinds) {
        if (k == d) value = v;
      }
      for (std::size_t r = 0; r < im.regions.size(); ++r) {
        Mask m = im.regions[r];
        for (std::size_t p = 0; p < m.size(); ++p) m[p] = m[p] ? static_cast<std::uint8_t>(value) : 0;
        char name[16];
        std::snprintf(name, sizeof name, "%03zu.png", r);
        write_png_gray(m, root / "ground_truth" / folder / stem / name);
      }
    }
  };
  auto good = [](int) { return ToyDefect::none; };
  emit("train", "good", spec.train, good);
  emit("validation", "good", spec.validation, good);
  emit("test", "good", spec.test_good, good);
  emit("test", "logical_anomalies", spec.logical, [](int i) {
    static constexpr ToyDefect cycle[3] = {ToyDefect::missing_part, ToyDefect::extra_part, ToyDefect::misplaced_part};
    return cycle[i % 3];
  });
  emit("test", "structural_anomalies", spec.structural, [](int) { return ToyDefect::noise_patch; });
  write_defects_config(defects, root / "defects_config.json");
  std::ofstream(root / "toy_spec.json") << spec.to_json().dump(2) << '\n';
  return load_dataset_index(root, DatasetLayout::loco);
}

}  // namespace salad::pipeline
