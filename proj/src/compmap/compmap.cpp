#include "salad/compmap/compmap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "salad/core/random.hpp"
#include "salad/core/resize.hpp"
#include "salad/nn/convert.hpp"
#include "salad/nn/optim.hpp"
#include "salad/simd/kernels.hpp"

namespace salad::compmap {

ForegroundMask compute_foreground_mask(const ImageSample& image,
                                       const backends::MaskProposer& proposer) {
  const int w = image.pixels.width;
  const int h = image.pixels.height;
  const backends::Point corners[4] = {{0, 0}, {w - 1, 0}, {0, h - 1}, {w - 1, h - 1}};
  const auto bg = backends::query_mask_at_points(proposer, image, corners);
  ForegroundMask fg;
  fg.mask = Mask(w, h);
  for (std::size_t i = 0; i < fg.mask.size(); ++i) fg.mask[i] = bg.mask[i] ? 0 : 1;
  if (count(fg.mask) == 0) {
    fg.empty_warning = true;
    spdlog::warn("{}: corner queries cover the whole frame, foreground is empty",
                 image.source_path.empty() ? "<image>" : image.source_path);
  }
  return fg;
}

ForegroundMask compute_foreground_mask(const ImageSample& image, const backends::BackendConfig& cfg) {
  return compute_foreground_mask(image, *backends::make_mask_proposer(cfg));
}

// ---------------------------------------------------------------------------
// Clustering

nlohmann::json ClusterModel::to_json() const {
  return {{"k", k},
          {"dim", dim},
          {"centroids", centroids},
          {"feature_backend_id", feature_backend_id},
          {"seed", seed},
          {"iterations", iterations}};
}

ClusterModel ClusterModel::from_json(const nlohmann::json& j) {
  ClusterModel m;
  m.k = j.at("k").get<int>();
  m.dim = j.at("dim").get<int>();
  m.centroids = j.at("centroids").get<std::vector<float>>();
  m.feature_backend_id = j.at("feature_backend_id").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.iterations = j.value("iterations", 0);
  if (m.k < 2 || m.dim < 1 || m.centroids.size() != static_cast<std::size_t>(m.k) * m.dim) {
    throw IoError("malformed cluster model");
  }
  return m;
}

int nearest_centroid(const ClusterModel& model, const float* v) {
  int best = 0;
  float best_d = std::numeric_limits<float>::infinity();
  for (int c = 0; c < model.k; ++c) {
    const float d = simd::squared_distance(v, model.centroid(c), model.dim);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

namespace {

FeatureMap at_mask_resolution(const FeatureMap& f, const Mask& mask) {
  if (f.width == mask.width() && f.height == mask.height()) return f;
  return f.resized(mask.width(), mask.height());
}

bool has_k_distinct(const std::vector<float>& samples, int dim, int k) {
  std::set<std::vector<float>> seen;
  const std::size_t n = samples.size() / dim;
  for (std::size_t i = 0; i < n && static_cast<int>(seen.size()) < k; ++i) {
    seen.emplace(samples.begin() + i * dim, samples.begin() + (i + 1) * dim);
  }
  return static_cast<int>(seen.size()) >= k;
}

}  // namespace

ClusterModel fit_cluster_model(std::span<const FeatureMap> features,
                               std::span<const ForegroundMask> fg_masks,
                               const ClusterOptions& options) {
  const int k = options.k;
  if (k < 2) throw ArgumentError("cluster count K must be >= 2");
  if (features.empty()) throw ArgumentError("no feature maps to cluster");
  if (features.size() != fg_masks.size()) throw ArgumentError("features and masks differ in count");
  const int dim = features[0].dim;
  const std::string backend = features[0].backend_id;

  Rng rng(mix_seed(options.seed, 0xc1u));
  const std::size_t quota =
      std::max<std::size_t>(1, options.max_samples / std::max<std::size_t>(1, features.size()));
  std::vector<float> samples;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].dim != dim || features[i].backend_id != backend) {
      throw ArgumentError("feature maps from mixed backends or widths");
    }
    const Mask& mask = fg_masks[i].mask;
    const FeatureMap f = at_mask_resolution(features[i], mask);
    std::vector<std::size_t> fg;
    for (std::size_t p = 0; p < mask.size(); ++p) {
      if (mask[p]) fg.push_back(p);
    }
    if (fg.size() > quota) {
      // Partial Fisher-Yates: the first `quota` entries become a uniform subset.
      for (std::size_t j = 0; j < quota; ++j) {
        const std::size_t r = j + static_cast<std::size_t>(rng.below(fg.size() - j));
        std::swap(fg[j], fg[r]);
      }
      fg.resize(quota);
      std::sort(fg.begin(), fg.end());
    }
    for (std::size_t p : fg) {
      const float* v = f.values.data() + p * dim;
      samples.insert(samples.end(), v, v + dim);
    }
  }
  const std::size_t n = samples.size() / dim;
  if (n < static_cast<std::size_t>(k) || !has_k_distinct(samples, dim, k)) {
    throw ArgumentError("fewer than K=" + std::to_string(k) +
                        " distinct foreground feature vectors; choose a smaller K");
  }
  auto row = [&](std::size_t i) { return samples.data() + i * dim; };

  ClusterModel model;
  model.k = k;
  model.dim = dim;
  model.feature_backend_id = backend;
  model.seed = options.seed;
  model.centroids.resize(static_cast<std::size_t>(k) * dim);

  // k-means++ seeding.
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t pick = static_cast<std::size_t>(rng.below(n));
  for (int c = 0; c < k; ++c) {
    std::copy_n(row(pick), dim, model.centroids.begin() + static_cast<std::ptrdiff_t>(c) * dim);
    if (c + 1 == k) break;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], static_cast<double>(simd::squared_distance(row(i), model.centroid(c), dim)));
      total += d2[i];
    }
    double target = rng.uniform() * total;
    pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      target -= d2[i];
      if (target < 0.0) {
        pick = i;
        break;
      }
    }
    if (pick == n) {
      // Rounding left the draw past the end; take the last candidate.
      for (std::size_t i = n; i-- > 0;) {
        if (d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
  }

  // Lloyd iterations.
  std::vector<int> assign(n, -1);
  std::vector<double> sums(static_cast<std::size_t>(k) * dim);
  std::vector<std::size_t> counts(k);
  for (int it = 0; it < options.max_iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const int a = nearest_centroid(model, row(i));
      if (a != assign[i]) {
        assign[i] = a;
        changed = true;
      }
    }
    model.iterations = it + 1;
    if (!changed) break;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (int d = 0; d < dim; ++d) sums[assign[i] * dim + d] += row(i)[d];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Empty cluster: move it onto the sample farthest from its centroid.
        std::size_t far = 0;
        float far_d = -1.0f;
        for (std::size_t i = 0; i < n; ++i) {
          const float d = simd::squared_distance(row(i), model.centroid(assign[i]), dim);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        std::copy_n(row(far), dim, model.centroids.begin() + static_cast<std::ptrdiff_t>(c) * dim);
        assign[far] = c;
        continue;
      }
      for (int d = 0; d < dim; ++d) {
        model.centroids[c * dim + d] = static_cast<float>(sums[c * dim + d] / counts[c]);
      }
    }
  }
  return model;
}

CompositionMap assign_feature_clusters(const FeatureMap& features, const ForegroundMask& fg,
                                       const ClusterModel& model) {
  if (features.dim != model.dim) {
    throw ShapeError("feature width " + std::to_string(features.dim) + " does not match centroid width " +
                     std::to_string(model.dim));
  }
  if (!model.feature_backend_id.empty() && features.backend_id != model.feature_backend_id) {
    throw ArgumentError("features from '" + features.backend_id + "' but clusters fit on '" +
                        model.feature_backend_id + "'");
  }
  const FeatureMap f = at_mask_resolution(features, fg.mask);
  CompositionMap out(fg.mask.width(), fg.mask.height(), model.k + 1);
  for (std::size_t p = 0; p < fg.mask.size(); ++p) {
    if (!fg.mask[p]) continue;
    out.classes[p] = static_cast<std::uint16_t>(1 + nearest_centroid(model, f.values.data() + p * f.dim));
  }
  return out;
}

CompositionMap classify_mask_proposals(const CompositionMap& c_feat,
                                       std::span<const MaskProposal> proposals) {
  CompositionMap out = c_feat;
  std::vector<std::size_t> areas(proposals.size());
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    if (!proposals[i].mask.same_shape(c_feat.classes)) throw ShapeError("proposal shape differs from C_feat");
    areas[i] = count(proposals[i].mask);
  }
  std::vector<std::size_t> order(proposals.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return areas[a] > areas[b]; });

  std::vector<std::size_t> hist(static_cast<std::size_t>(c_feat.num_classes));
  for (std::size_t idx : order) {
    if (areas[idx] == 0) continue;
    const Mask& m = proposals[idx].mask;
    std::fill(hist.begin(), hist.end(), 0);
    for (std::size_t p = 0; p < m.size(); ++p) {
      if (m[p]) ++hist[c_feat.classes[p]];
    }
    std::uint16_t cls = 0;
    if (2 * hist[0] <= areas[idx]) {
      cls = 1;
      for (std::size_t c = 2; c < hist.size(); ++c) {
        if (hist[c] > hist[cls]) cls = static_cast<std::uint16_t>(c);
      }
    }
    for (std::size_t p = 0; p < m.size(); ++p) {
      if (m[p]) out.classes[p] = cls;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Segmenter

nlohmann::json SegmenterConfig::to_json() const {
  return {{"num_classes", num_classes}, {"epochs", epochs},         {"lr", lr},
          {"batch_size", batch_size},   {"optimizer", "adamw"},     {"weight_decay", weight_decay},
          {"base_width", base_width},   {"levels", levels},         {"space_to_depth", space_to_depth},
          {"seed", seed},               {"loss", "cross_entropy"}};
}

SegmenterConfig SegmenterConfig::from_json(const nlohmann::json& j) {
  SegmenterConfig c;
  c.num_classes = j.at("num_classes").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.lr = j.at("lr").get<float>();
  c.batch_size = j.at("batch_size").get<int>();
  c.weight_decay = j.at("weight_decay").get<float>();
  c.base_width = j.at("base_width").get<int>();
  c.levels = j.at("levels").get<int>();
  c.space_to_depth = j.at("space_to_depth").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

namespace {

nn::UNetConfig segmenter_net_config(const SegmenterConfig& cfg) {
  nn::UNetConfig u;
  u.in_channels = 3;
  u.out_channels = cfg.num_classes;
  u.base_width = cfg.base_width;
  u.levels = cfg.levels;
  return u;
}

}  // namespace

SegmenterModel::SegmenterModel(const SegmenterConfig& cfg)
    : cfg_(cfg), net_(segmenter_net_config(cfg), cfg.space_to_depth, mix_seed(cfg.seed, 0x5e6u)) {
  if (cfg.num_classes < 2) throw ArgumentError("segmenter needs at least two classes");
}

CompositionMap SegmenterModel::infer(const ImageSample& image) {
  return nn::argmax_map(net_.forward(nn::image_tensor(image.pixels)));
}

void SegmenterModel::save(const std::filesystem::path& path, const nlohmann::json& extra) {
  nlohmann::json manifest = {{"kind", "segmenter"}, {"config", cfg_.to_json()}, {"epoch_losses", epoch_losses}};
  if (!extra.is_null()) manifest["extra"] = extra;
  nn::save_checkpoint(path, net_.params(), manifest);
}

SegmenterModel SegmenterModel::load(const std::filesystem::path& path) {
  const auto manifest = nn::read_checkpoint_manifest(path);
  if (manifest.value("kind", "") != "segmenter") throw IoError("not a segmenter checkpoint: " + path.string());
  SegmenterModel m(SegmenterConfig::from_json(manifest.at("config")));
  nn::load_checkpoint(path, m.net_.params());
  m.epoch_losses = manifest.value("epoch_losses", std::vector<double>{});
  return m;
}

double cross_entropy(const nn::Tensor& logits, std::span<const CompositionMap* const> targets,
                     nn::Tensor* grad) {
  if (static_cast<int>(targets.size()) != logits.n) throw ShapeError("cross_entropy: batch size mismatch");
  const nn::Tensor probs = nn::softmax_channels(logits);
  const std::size_t hw = logits.plane();
  const double scale = 1.0 / (static_cast<double>(hw) * logits.n);
  if (grad) *grad = probs;
  double loss = 0.0;
  for (int i = 0; i < logits.n; ++i) {
    const CompositionMap& t = *targets[i];
    if (t.width() != logits.w || t.height() != logits.h || t.num_classes != logits.c) {
      throw ShapeError("cross_entropy: target does not match logits " + logits.shape_string());
    }
    const float* p = probs.sample(i);
    for (std::size_t q = 0; q < hw; ++q) {
      const int c = t.classes[q];
      loss -= std::log(std::max(1e-12, static_cast<double>(p[c * hw + q])));
    }
    if (grad) {
      float* g = grad->sample(i);
      for (std::size_t q = 0; q < hw; ++q) g[t.classes[q] * hw + q] -= 1.0f;
      for (std::size_t q = 0; q < logits.sample_size(); ++q) g[q] = static_cast<float>(g[q] * scale);
    }
  }
  return loss * scale;
}

SegmenterModel train_component_segmenter(std::span<const ImageSample> images,
                                         std::span<const CompositionMap> pseudo_labels,
                                         const SegmenterConfig& cfg) {
  if (images.empty()) throw ArgumentError("segmenter training corpus is empty");
  if (images.size() != pseudo_labels.size()) throw ArgumentError("images and pseudo-labels differ in count");
  for (const auto& c : pseudo_labels) {
    if (c.num_classes != cfg.num_classes) throw ArgumentError("pseudo-label class count differs from config");
  }
  if (cfg.batch_size < 1 || cfg.epochs < 1) throw ConfigError("segmenter epochs and batch size must be >= 1");

  SegmenterModel model(cfg);
  auto params = model.net().params();
  nn::AdamConfig ac;
  ac.lr = cfg.lr;
  ac.weight_decay = cfg.weight_decay;
  nn::Adam opt(params, ac);

  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(mix_seed(cfg.seed, 0x5e60000u + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const RgbImage*> ims;
      std::vector<const CompositionMap*> tgts;
      for (std::size_t j = start; j < end; ++j) {
        ims.push_back(&images[order[j]].pixels);
        tgts.push_back(&pseudo_labels[order[j]]);
      }
      opt.zero_grad();
      const nn::Tensor logits = model.net().forward(nn::image_batch(ims));
      nn::Tensor grad;
      const double loss = cross_entropy(logits, tgts, &grad);
      if (!std::isfinite(loss)) {
        throw TrainingError("segmenter loss became non-finite at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batches));
      }
      model.net().backward(grad);
      opt.step();
      epoch_loss += loss;
      ++batches;
    }
    model.epoch_losses.push_back(epoch_loss / static_cast<double>(batches));
    spdlog::debug("segmenter epoch {}/{}: loss {:.5f}", epoch + 1, cfg.epochs, model.epoch_losses.back());
  }
  return model;
}

CompositionMap infer_composition_map(SegmenterModel& model, const ImageSample& image) {
  return model.infer(image);
}

double mean_part_iou(const CompositionMap& pred, const CompositionMap& truth) {
  if (!pred.classes.same_shape(truth.classes)) throw ShapeError("mean_part_iou: shape mismatch");
  const int classes = std::max(pred.num_classes, truth.num_classes);
  std::vector<std::size_t> inter(classes), uni(classes);
  for (std::size_t p = 0; p < pred.classes.size(); ++p) {
    const int a = pred.classes[p];
    const int b = truth.classes[p];
    if (a == b) {
      ++inter[a];
      ++uni[a];
    } else {
      ++uni[a];
      ++uni[b];
    }
  }
  double sum = 0.0;
  int n = 0;
  for (int c = 1; c < classes; ++c) {
    if (uni[c] == 0) continue;
    sum += static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
    ++n;
  }
  return n == 0 ? 1.0 : sum / n;
}

}  // namespace salad::compmap
