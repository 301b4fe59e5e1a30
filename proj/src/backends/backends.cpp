#include "salad/backends/backend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "salad/backends/npy.hpp"
#include "salad/core/image_io.hpp"
#include "salad/core/resize.hpp"

namespace fs = std::filesystem;

namespace salad::backends {

namespace {

double param(const std::map<std::string, std::string>& p, const std::string& key, double fallback) {
  const auto it = p.find(key);
  return it == p.end() ? fallback : std::stod(it->second);
}

std::string param(const std::map<std::string, std::string>& p, const std::string& key) {
  const auto it = p.find(key);
  return it == p.end() ? std::string{} : it->second;
}

// ---------------------------------------------------------------------------
// Stub feature extractor: per-cell colour statistics.
//   [0..2] mean RGB, [3..5] RGB standard deviation, [6] mean gradient
//   magnitude, [7..8] normalised cell centre.
class StubColorExtractor final : public FeatureExtractor {
 public:
  explicit StubColorExtractor(const std::map<std::string, std::string>& p)
      : cell_(static_cast<int>(param(p, "cell", 4))),
        std_weight_(static_cast<float>(param(p, "std_weight", 1.0))),
        grad_weight_(static_cast<float>(param(p, "grad_weight", 0.5))),
        pos_weight_(static_cast<float>(param(p, "pos_weight", 0.05))) {
    if (cell_ < 1) throw ConfigError("stub-color: cell must be >= 1");
  }

  std::string id() const override { return "stub-color"; }
  int dim() const override { return 9; }

  FeatureMap extract(const ImageSample& image) const override {
    const RgbImage& im = image.pixels;
    if (im.width % cell_ != 0 || im.height % cell_ != 0) {
      throw ArgumentError("stub-color: image size not divisible by cell size");
    }
    FeatureMap f;
    f.width = im.width / cell_;
    f.height = im.height / cell_;
    f.dim = dim();
    f.source_width = im.width;
    f.source_height = im.height;
    f.backend_id = id();
    f.values.assign(static_cast<std::size_t>(f.width) * f.height * f.dim, 0.0f);

    std::vector<float> grad(static_cast<std::size_t>(im.width) * im.height);
    auto gray = [&](int x, int y) {
      const float* p = im.pixel(x, y);
      return (p[0] + p[1] + p[2]) / 3.0f;
    };
    for (int y = 0; y < im.height; ++y) {
      for (int x = 0; x < im.width; ++x) {
        const float gx = gray(std::min(x + 1, im.width - 1), y) - gray(std::max(x - 1, 0), y);
        const float gy = gray(x, std::min(y + 1, im.height - 1)) - gray(x, std::max(y - 1, 0));
        grad[static_cast<std::size_t>(y) * im.width + x] = 0.5f * std::sqrt(gx * gx + gy * gy);
      }
    }
    const float inv = 1.0f / static_cast<float>(cell_ * cell_);
    for (int cy = 0; cy < f.height; ++cy) {
      for (int cx = 0; cx < f.width; ++cx) {
        double sum[3] = {0, 0, 0};
        double sq[3] = {0, 0, 0};
        double g = 0;
        for (int y = cy * cell_; y < (cy + 1) * cell_; ++y) {
          for (int x = cx * cell_; x < (cx + 1) * cell_; ++x) {
            const float* p = im.pixel(x, y);
            for (int c = 0; c < 3; ++c) {
              sum[c] += p[c];
              sq[c] += static_cast<double>(p[c]) * p[c];
            }
            g += grad[static_cast<std::size_t>(y) * im.width + x];
          }
        }
        float* out = f.at(cx, cy);
        for (int c = 0; c < 3; ++c) {
          const double mean = sum[c] * inv;
          const double var = std::max(0.0, sq[c] * inv - mean * mean);
          out[c] = static_cast<float>(mean);
          out[3 + c] = std_weight_ * static_cast<float>(std::sqrt(var));
        }
        out[6] = grad_weight_ * static_cast<float>(g * inv);
        out[7] = pos_weight_ * (static_cast<float>(cx) + 0.5f) / static_cast<float>(f.width);
        out[8] = pos_weight_ * (static_cast<float>(cy) + 0.5f) / static_cast<float>(f.height);
      }
    }
    return f;
  }

 private:
  int cell_;
  float std_weight_;
  float grad_weight_;
  float pos_weight_;
};

// ---------------------------------------------------------------------------
// Stub mask proposer: 4-connected regions whose neighbouring pixels differ by
// at most `tolerance` in every channel.
class StubRegionProposer final : public MaskProposer {
 public:
  explicit StubRegionProposer(const std::map<std::string, std::string>& p)
      : tolerance_(static_cast<float>(param(p, "tolerance", 0.08))) {}

  std::string id() const override { return "stub-region"; }

  std::vector<MaskProposal> propose_raw(const ImageSample& image, int grid_n) const override {
    if (grid_n < 1) throw ArgumentError("grid_n must be >= 1");
    const RgbImage& im = image.pixels;
    const auto labels = label_regions(im);
    std::vector<int> seen;
    std::vector<MaskProposal> out;
    for (int gy = 0; gy < grid_n; ++gy) {
      for (int gx = 0; gx < grid_n; ++gx) {
        const int x = std::min(im.width - 1, static_cast<int>((gx + 0.5) * im.width / grid_n));
        const int y = std::min(im.height - 1, static_cast<int>((gy + 0.5) * im.height / grid_n));
        const int lab = labels[static_cast<std::size_t>(y) * im.width + x];
        if (std::find(seen.begin(), seen.end(), lab) != seen.end()) continue;
        seen.push_back(lab);
        out.push_back(region_proposal(im, labels, lab, ProposalOrigin::grid_point));
      }
    }
    return out;
  }

  Mask region_at(const ImageSample& image, Point p) const override {
    const RgbImage& im = image.pixels;
    const auto labels = label_regions(im);
    const int lab = labels[static_cast<std::size_t>(p.y) * im.width + p.x];
    Mask m(im.width, im.height);
    for (std::size_t i = 0; i < labels.size(); ++i) m[i] = labels[i] == lab;
    return m;
  }

 private:
  std::vector<int> label_regions(const RgbImage& im) const {
    const std::size_t n = static_cast<std::size_t>(im.width) * im.height;
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int a) {
      while (parent[a] != a) {
        parent[a] = parent[parent[a]];
        a = parent[a];
      }
      return a;
    };
    auto unite = [&](int a, int b) {
      a = find(a);
      b = find(b);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    };
    auto close = [&](const float* a, const float* b) {
      return std::fabs(a[0] - b[0]) <= tolerance_ && std::fabs(a[1] - b[1]) <= tolerance_ &&
             std::fabs(a[2] - b[2]) <= tolerance_;
    };
    for (int y = 0; y < im.height; ++y) {
      for (int x = 0; x < im.width; ++x) {
        const int i = y * im.width + x;
        if (x + 1 < im.width && close(im.pixel(x, y), im.pixel(x + 1, y))) unite(i, i + 1);
        if (y + 1 < im.height && close(im.pixel(x, y), im.pixel(x, y + 1))) unite(i, i + im.width);
      }
    }
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = find(static_cast<int>(i));
    return labels;
  }

  static MaskProposal region_proposal(const RgbImage& im, const std::vector<int>& labels, int lab,
                                      ProposalOrigin origin) {
    MaskProposal p;
    p.origin = origin;
    p.mask = Mask(im.width, im.height);
    double sum[3] = {0, 0, 0};
    std::size_t area = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != lab) continue;
      p.mask[i] = 1;
      ++area;
      for (int c = 0; c < 3; ++c) sum[c] += im.rgb[i * 3 + c];
    }
    double dev = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != lab) continue;
      for (int c = 0; c < 3; ++c) dev += std::fabs(im.rgb[i * 3 + c] - sum[c] / area);
    }
    // Homogeneous regions score close to 1.
    p.quality = 1.0 - std::min(1.0, dev / (3.0 * area));
    return p;
  }

  float tolerance_;
};

// ---------------------------------------------------------------------------
// Adapters for real backbones. Inference runs outside this binary
// (tools/export_backbones.py); these read the exported per-image artifacts
// laid out as <weights>/<category>/<split>/<defect>/<stem>...

fs::path export_key(const std::string& source_path) {
  const fs::path src(source_path);
  std::vector<fs::path> parts(src.begin(), src.end());
  fs::path key;
  const std::size_t take = std::min<std::size_t>(4, parts.size());
  for (std::size_t i = parts.size() - take; i < parts.size(); ++i) key /= parts[i];
  key.replace_extension();
  return key;
}

fs::path require_asset_dir(const std::map<std::string, std::string>& p, const std::string& id) {
  const std::string w = param(p, "weights");
  if (w.empty()) throw AssetUnavailable(id + ": asset unavailable (no weights path configured)");
  if (!fs::is_directory(w)) throw AssetUnavailable(id + ": asset unavailable: " + w);
  return w;
}

class ExportedFeatureExtractor final : public FeatureExtractor {
 public:
  ExportedFeatureExtractor(std::string id, const std::map<std::string, std::string>& p)
      : id_(std::move(id)), dir_(require_asset_dir(p, id_)),
        dim_(static_cast<int>(param(p, "dim", 0))) {}

  std::string id() const override { return id_; }
  int dim() const override { return dim_; }

  FeatureMap extract(const ImageSample& image) const override {
    const fs::path file = dir_ / (export_key(image.source_path).string() + ".npy");
    if (!fs::exists(file)) throw AssetUnavailable(id_ + ": asset unavailable: " + file.string());
    const NpyArray a = read_npy(file);
    if (a.shape.size() != 3) throw IoError("expected (H, W, D) features in " + file.string());
    FeatureMap f;
    f.height = static_cast<int>(a.shape[0]);
    f.width = static_cast<int>(a.shape[1]);
    f.dim = static_cast<int>(a.shape[2]);
    f.values = a.data;
    f.source_width = image.pixels.width;
    f.source_height = image.pixels.height;
    f.backend_id = id_;
    if (dim_ != 0 && f.dim != dim_) throw ShapeError(id_ + ": unexpected feature width in " + file.string());
    return f;
  }

 private:
  std::string id_;
  fs::path dir_;
  int dim_;
};

class ExportedMaskProposer final : public MaskProposer {
 public:
  ExportedMaskProposer(std::string id, const std::map<std::string, std::string>& p)
      : id_(std::move(id)), dir_(require_asset_dir(p, id_)) {}

  std::string id() const override { return id_; }

  std::vector<MaskProposal> propose_raw(const ImageSample& image, int /*grid_n*/) const override {
    std::vector<MaskProposal> out;
    for (auto& p : load_all(image)) {
      if (p.origin == ProposalOrigin::grid_point) out.push_back(std::move(p));
    }
    return out;
  }

  Mask region_at(const ImageSample& image, Point pt) const override {
    const MaskProposal* best = nullptr;
    const auto all = load_all(image);
    for (const auto& p : all) {
      if (p.mask(pt.x, pt.y) && (!best || p.quality > best->quality)) best = &p;
    }
    if (!best) return Mask(image.pixels.width, image.pixels.height);
    return best->mask;
  }

 private:
  std::vector<MaskProposal> load_all(const ImageSample& image) const {
    const fs::path dir = dir_ / export_key(image.source_path);
    const fs::path index = dir / "masks.json";
    if (!fs::exists(index)) throw AssetUnavailable(id_ + ": asset unavailable: " + index.string());
    std::ifstream in(index);
    const auto j = nlohmann::json::parse(in);
    std::vector<MaskProposal> out;
    for (const auto& e : j) {
      MaskProposal p;
      p.mask = read_png_mask(dir / e.at("file").get<std::string>());
      if (p.mask.width() != image.pixels.width || p.mask.height() != image.pixels.height) {
        p.mask = resize_nearest(p.mask, image.pixels.width, image.pixels.height);
      }
      p.quality = e.value("quality", 1.0);
      p.origin = e.value("origin", std::string("grid")) == "corner" ? ProposalOrigin::corner_query
                                                                       : ProposalOrigin::grid_point;
      if (count(p.mask) > 0) out.push_back(std::move(p));
    }
    return out;
  }

  std::string id_;
  fs::path dir_;
};

}  // namespace

void FeatureMap::validate() const {
  if (height <= 0 || width <= 0 || dim <= 0) throw ArgumentError("feature map has an empty dimension");
  if (values.size() != static_cast<std::size_t>(height) * width * dim) {
    throw ArgumentError("feature map buffer does not match its shape");
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw ArgumentError("feature map holds a non-finite value");
  }
}

FeatureMap FeatureMap::resized(int w, int h) const {
  FeatureMap out = *this;
  out.width = w;
  out.height = h;
  out.values = resize_bilinear(values, width, height, dim, w, h);
  return out;
}

nlohmann::json to_json(const BackendConfig& cfg) {
  return {{"feature_backend", cfg.feature_backend},
          {"feature_params", cfg.feature_params},
          {"mask_backend", cfg.mask_backend},
          {"mask_params", cfg.mask_params},
          {"seed", cfg.seed}};
}

BackendConfig backend_config_from_json(const nlohmann::json& j) {
  BackendConfig cfg;
  cfg.feature_backend = j.at("feature_backend").get<std::string>();
  cfg.feature_params = j.at("feature_params").get<std::map<std::string, std::string>>();
  cfg.mask_backend = j.at("mask_backend").get<std::string>();
  cfg.mask_params = j.at("mask_params").get<std::map<std::string, std::string>>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

std::unique_ptr<FeatureExtractor> make_feature_extractor(const BackendConfig& cfg) {
  if (cfg.feature_backend == "stub-color") {
    return std::make_unique<StubColorExtractor>(cfg.feature_params);
  }
  if (cfg.feature_backend == "dino-vitb8" || cfg.feature_backend == "efficientad-teacher" ||
      cfg.feature_backend == "exported") {
    return std::make_unique<ExportedFeatureExtractor>(cfg.feature_backend, cfg.feature_params);
  }
  throw ConfigError("unknown feature backend: " + cfg.feature_backend);
}

std::unique_ptr<MaskProposer> make_mask_proposer(const BackendConfig& cfg) {
  if (cfg.mask_backend == "stub-region") return std::make_unique<StubRegionProposer>(cfg.mask_params);
  if (cfg.mask_backend == "sam-hq" || cfg.mask_backend == "exported") {
    return std::make_unique<ExportedMaskProposer>(cfg.mask_backend, cfg.mask_params);
  }
  throw ConfigError("unknown mask backend: " + cfg.mask_backend);
}

std::vector<std::string> registered_feature_backends() {
  return {"stub-color", "dino-vitb8", "efficientad-teacher", "exported"};
}

std::vector<std::string> registered_mask_backends() { return {"stub-region", "sam-hq", "exported"}; }

std::vector<MaskProposal> deduplicate(std::vector<MaskProposal> proposals, double max_iou) {
  std::vector<std::size_t> order(proposals.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return proposals[a].quality > proposals[b].quality;
  });
  std::vector<MaskProposal> kept;
  for (std::size_t idx : order) {
    MaskProposal& p = proposals[idx];
    if (count(p.mask) == 0) continue;
    bool duplicate = false;
    for (const auto& k : kept) {
      if (iou(k.mask, p.mask) > max_iou) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) kept.push_back(std::move(p));
  }
  return kept;
}

FeatureMap extract_features(const ImageSample& image, const BackendConfig& cfg) {
  return make_feature_extractor(cfg)->extract(image);
}

std::vector<MaskProposal> propose_masks_grid(const ImageSample& image, int grid_n,
                                             const BackendConfig& cfg) {
  if (grid_n < 1) throw ArgumentError("grid_n must be >= 1");
  return deduplicate(make_mask_proposer(cfg)->propose_raw(image, grid_n));
}

MaskProposal query_mask_at_points(const MaskProposer& proposer, const ImageSample& image,
                                  std::span<const Point> points) {
  if (points.empty()) throw ArgumentError("query_mask_at_points: empty point list");
  for (const auto& p : points) {
    if (p.x < 0 || p.y < 0 || p.x >= image.pixels.width || p.y >= image.pixels.height) {
      throw ArgumentError("query point (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                          ") outside the image");
    }
  }
  MaskProposal out;
  out.origin = ProposalOrigin::corner_query;
  out.quality = 1.0;
  out.mask = Mask(image.pixels.width, image.pixels.height);
  for (const auto& p : points) {
    const Mask m = proposer.region_at(image, p);
    for (std::size_t i = 0; i < m.size(); ++i) out.mask[i] |= m[i];
  }
  return out;
}

MaskProposal query_mask_at_points(const ImageSample& image, std::span<const Point> points,
                                  const BackendConfig& cfg) {
  return query_mask_at_points(*make_mask_proposer(cfg), image, points);
}

}  // namespace salad::backends
