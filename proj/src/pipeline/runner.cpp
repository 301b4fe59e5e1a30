#include "salad/pipeline/runner.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <spdlog/spdlog.h>

#include "salad/appearance/appearance.hpp"
#include "salad/comp/branch.hpp"
#include "salad/compmap/compmap.hpp"
#include "salad/core/compmap_io.hpp"
#include "salad/core/hash.hpp"
#include "salad/core/image_io.hpp"
#include "salad/core/resize.hpp"
#include "salad/global/global.hpp"
#include "salad/metrics/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace salad::pipeline {

namespace {

struct StageInfo {
  Stage stage;
  const char* name;
  const char* artifact;  // what downstream stages miss when this one has not run
  const char* command;
};

constexpr StageInfo kStages[] = {
    {Stage::gen_maps, "gen-maps", "composition maps", "salad gen-maps"},
    {Stage::train_appearance, "train-appearance", "appearance checkpoint", "salad train --branch appearance"},
    {Stage::train_composition, "train-composition", "composition branch checkpoint",
     "salad train --branch composition"},
    {Stage::train_global, "train-global", "global Gaussians", "salad train --branch global"},
    {Stage::calibrate, "calibrate", "calibration statistics", "salad calibrate"},
    {Stage::eval, "eval", "eval report", "salad eval"},
};

const StageInfo& info(Stage s) {
  for (const auto& i : kStages) {
    if (i.stage == s) return i;
  }
  throw ArgumentError("unknown stage");
}

// Upstream stages in the order their absence is reported.
std::vector<Stage> upstream(Stage s) {
  switch (s) {
    case Stage::gen_maps:
    case Stage::train_appearance: return {};
    case Stage::train_composition: return {Stage::gen_maps};
    case Stage::train_global: return {Stage::train_appearance, Stage::gen_maps};
    case Stage::calibrate:
      return {Stage::train_appearance, Stage::train_composition, Stage::train_global, Stage::gen_maps};
    case Stage::eval:
      return {Stage::calibrate, Stage::train_appearance, Stage::train_composition, Stage::train_global,
              Stage::gen_maps};
  }
  return {};
}

// Config keys each stage reads (see RunConfig::subset_json for the pattern rules).
std::vector<std::string> config_keys(Stage s) {
  switch (s) {
    case Stage::gen_maps:
      return {"seed", "seed.split", "seed.cluster", "seed.segmenter", "validation_fraction", "feature_backend",
              "feature_backend.", "mask_backend", "mask_backend.", "compmap.", "segmenter."};
    case Stage::train_appearance:
      return {"seed", "seed.split", "seed.appearance", "validation_fraction", "appearance_backend",
              "teacher_backend", "teacher_backend.", "appearance."};
    case Stage::train_composition: return {"seed", "seed.composition", "compmap.k", "composition."};
    case Stage::train_global: return {"compmap.k"};
    case Stage::calibrate: return {};
    case Stage::eval: return {"eval."};
  }
  return {};
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_json(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

// Paths inside the workdir are recorded relative to it.
std::string record_path(const fs::path& p, const fs::path& root) {
  const fs::path rel = p.lexically_relative(root);
  if (rel.empty() || *rel.begin() == "..") return fs::absolute(p).string();
  return rel.string();
}

fs::path resolve_recorded(const std::string& s, const fs::path& root) {
  const fs::path p(s);
  return p.is_absolute() ? p : root / p;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Logs roughly ten progress lines over a training run.
std::int64_t log_every(std::int64_t iterations) { return std::max<std::int64_t>(1, iterations / 10); }

std::optional<double> subset_auroc(const std::vector<double>& scores, const std::vector<SampleRecord>& recs,
                                   const std::function<bool(const SampleRecord&)>& positive) {
  std::vector<double> s;
  std::vector<int> l;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].label == Label::good) {
      s.push_back(scores[i]);
      l.push_back(0);
    } else if (positive(recs[i])) {
      s.push_back(scores[i]);
      l.push_back(1);
    }
  }
  const bool has_pos = std::find(l.begin(), l.end(), 1) != l.end();
  const bool has_neg = std::find(l.begin(), l.end(), 0) != l.end();
  if (!has_pos || !has_neg) return std::nullopt;
  return metrics::auroc(s, l);
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// AUROC overall and per logical / structural subset.
json auroc_block(const std::vector<double>& scores, const std::vector<SampleRecord>& recs) {
  return {{"overall", opt_json(subset_auroc(scores, recs, [](const SampleRecord&) { return true; }))},
          {"logical", opt_json(subset_auroc(scores, recs, [](const SampleRecord& r) {
             return r.label == Label::logical_anomaly;
           }))},
          {"structural", opt_json(subset_auroc(scores, recs, [](const SampleRecord& r) {
             return r.label == Label::structural_anomaly;
           }))}};
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::string to_string(Stage s) { return info(s).name; }

Stage stage_from_string(const std::string& s) {
  for (const auto& i : kStages) {
    if (s == i.name) return i.stage;
  }
  throw ConfigError("unknown stage '" + s + "'");
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> v = {Stage::gen_maps,     Stage::train_appearance, Stage::train_composition,
                                       Stage::train_global, Stage::calibrate,        Stage::eval};
  return v;
}

// ---------------------------------------------------------------------------
// Layout and lock

WorkdirLayout::WorkdirLayout(fs::path root, std::string category)
    : root_(std::move(root)), category_(std::move(category)) {}

fs::path WorkdirLayout::compmap_dir() const { return root_ / "compmaps" / category_; }

fs::path WorkdirLayout::compmap_path(const SampleRecord& r) const {
  // Test stems repeat across defect folders, so the folder is kept there.
  if (r.split == Split::test) return compmap_dir() / "test" / r.defect / (r.stem() + ".png");
  return compmap_dir() / to_string(r.split) / (r.stem() + ".png");
}

fs::path WorkdirLayout::pseudo_label_path(const SampleRecord& r) const {
  return root_ / "pseudo_labels" / category_ / (r.stem() + ".png");
}

fs::path WorkdirLayout::segmenter_checkpoint() const { return root_ / "segmenter" / (category_ + ".ckpt"); }
fs::path WorkdirLayout::cluster_model() const { return root_ / "segmenter" / (category_ + ".clusters.json"); }
fs::path WorkdirLayout::composition_recon() const { return root_ / "compbranch" / (category_ + ".recon.ckpt"); }
fs::path WorkdirLayout::composition_disc() const { return root_ / "compbranch" / (category_ + ".disc.ckpt"); }
fs::path WorkdirLayout::appearance_checkpoint() const { return root_ / "appearance" / (category_ + ".ckpt"); }
fs::path WorkdirLayout::gaussians() const { return root_ / "global" / (category_ + ".gauss"); }
fs::path WorkdirLayout::calibration() const { return root_ / "calibration" / (category_ + ".json"); }
fs::path WorkdirLayout::default_report() const { return root_ / "reports" / (category_ + ".json"); }
fs::path WorkdirLayout::manifest(Stage s) const {
  return root_ / "manifests" / category_ / (to_string(s) + ".json");
}
fs::path WorkdirLayout::lock_file() const { return root_ / ".salad.lock"; }

WorkdirLock::WorkdirLock(const fs::path& lock_file) : path_(lock_file) {
  fs::create_directories(path_.parent_path());
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const std::string pid = std::to_string(::getpid()) + "\n";
      const auto written = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      if (written != static_cast<ssize_t>(pid.size())) throw IoError("cannot write lock file " + path_.string());
      return;
    }
    if (errno != EEXIST) throw IoError("cannot create lock file " + path_.string() + ": " + std::strerror(errno));
    long owner = 0;
    {
      std::ifstream in(path_);
      in >> owner;
    }
    if (owner > 0 && ::kill(static_cast<pid_t>(owner), 0) == -1 && errno == ESRCH) {
      spdlog::warn("removing stale workdir lock left by process {}", owner);
      fs::remove(path_);
      continue;
    }
    throw Error("workdir is locked by process " + std::to_string(owner) + " (" + path_.string() + ")");
  }
  throw Error("cannot acquire workdir lock " + path_.string());
}

WorkdirLock::~WorkdirLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// ---------------------------------------------------------------------------
// Ground truth

std::vector<metrics::GtRegion> load_gt_regions(const SampleRecord& r, const CategoryIndex& cat) {
  std::vector<metrics::GtRegion> out;
  for (const auto& path : r.gt_regions) {
    const auto raw = read_png_gray(path);
    const auto values = raw.values();
    const std::uint8_t v = *std::max_element(values.begin(), values.end());
    if (v == 0) {
      spdlog::warn("empty ground-truth region {}", path.string());
      continue;
    }
    Mask native(raw.width(), raw.height());
    std::size_t area = 0;
    for (std::size_t p = 0; p < native.size(); ++p) {
      native[p] = raw[p] == v;
      area += native[p];
    }
    const DefectType* type = nullptr;
    for (const auto& d : cat.defects) {
      if (d.pixel_value == v) type = &d;
    }
    double saturation = static_cast<double>(area);
    if (type) {
      saturation = type->relative_saturation ? type->saturation_threshold * static_cast<double>(area)
                                             : type->saturation_threshold;
    } else {
      spdlog::warn("no defect type with pixel value {} for {}; saturating at the full region", int{v},
                   path.string());
    }
    // Areas are counted at the working resolution.
    saturation *= static_cast<double>(kWorkingSize) * kWorkingSize /
                  (static_cast<double>(raw.width()) * static_cast<double>(raw.height()));
    metrics::GtRegion region;
    region.mask = (raw.width() == kWorkingSize && raw.height() == kWorkingSize)
                      ? native
                      : resize_nearest(native, kWorkingSize, kWorkingSize);
    region.saturation_area = std::max(saturation, 1.0);
    out.push_back(std::move(region));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

struct Pipeline::Models {
  std::unique_ptr<appearance::AppearanceModel> appearance;
  std::optional<comp::CompositionBranch> composition;
  std::vector<global::ClassGaussian> gaussians;
  std::optional<compmap::SegmenterModel> segmenter;
  bool loaded_gaussians = false;

  appearance::AppearanceModel& app(const RunConfig& cfg, const WorkdirLayout& l) {
    if (!appearance) appearance = appearance::load_appearance_model(cfg.appearance_backend, l.appearance_checkpoint());
    return *appearance;
  }
  comp::CompositionBranch& comp(const WorkdirLayout& l) {
    if (!composition) composition.emplace(comp::CompositionBranch::load(l.composition_recon(), l.composition_disc()));
    return *composition;
  }
  const std::vector<global::ClassGaussian>& gauss(const WorkdirLayout& l) {
    if (!loaded_gaussians) {
      gaussians = global::load_gaussians(l.gaussians());
      loaded_gaussians = true;
    }
    return gaussians;
  }
  compmap::SegmenterModel& seg(const WorkdirLayout& l) {
    if (!segmenter) segmenter.emplace(compmap::SegmenterModel::load(l.segmenter_checkpoint()));
    return *segmenter;
  }
};

namespace {

struct Scored {
  AnomalyMap a_a;
  AnomalyMap a_c;
  double s_g = 0.0;
};

Scored score_image(appearance::AppearanceModel& app, comp::CompositionBranch& branch,
                   const std::vector<global::ClassGaussian>& gaussians, const ImageSample& image,
                   const CompositionMap& c) {
  Scored s;
  auto out = app.infer(image);
  s.a_a = std::move(out.a_a);
  s.a_c = branch.anomaly_map(c);
  if (!s.a_a.scores.same_shape(s.a_c.scores)) {
    s.a_a.scores = resize_bilinear(s.a_a.scores, s.a_c.scores.width(), s.a_c.scores.height());
  }
  s.s_g = global::mahalanobis_score(global::compute_descriptor(out.features, c), gaussians);
  return s;
}

}  // namespace

Pipeline::Pipeline(RunConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.finalize();
  cfg_.require_dataset();
  index_ = load_dataset_index(cfg_.dataset_root, cfg_.layout);
  if (index_.categories.empty()) throw ConfigError("no categories under " + cfg_.dataset_root.string());
  if (cfg_.category.empty()) {
    if (index_.categories.size() != 1) {
      std::string names;
      for (const auto& c : index_.categories) names += (names.empty() ? "" : ", ") + c.name;
      throw ConfigError("dataset holds several categories (" + names + "); set `category`");
    }
    category_ = index_.categories.front();
    cfg_.category = category_.name;
  } else {
    category_ = index_.category(cfg_.category);
  }
  layout_ = WorkdirLayout(resolve_workdir(cfg_), category_.name);
  if (category_.train.empty()) throw ConfigError("category " + category_.name + " has no training images");
  if (category_.validation.empty()) {
    auto carve = carve_validation_split(category_.train, cfg_.validation_fraction, cfg_.resolved_split_seed());
    if (carve.train_emptied) throw ConfigError("validation carve left no training images");
    train_ = std::move(carve.train);
    validation_ = std::move(carve.validation);
    validation_carved_ = true;
  } else {
    train_ = category_.train;
    validation_ = category_.validation;
  }
  if (validation_.size() < 2) throw ConfigError("calibration needs at least two validation images");
}

Pipeline::~Pipeline() = default;

fs::path Pipeline::report_path() const { return report_path_ ? *report_path_ : layout_.default_report(); }

fs::path Pipeline::csv_path() const {
  fs::path p = report_path();
  p.replace_extension(".csv");
  return p;
}

Pipeline::Models& Pipeline::models() {
  if (!models_) models_ = std::make_unique<Models>();
  return *models_;
}

const std::string& Pipeline::dataset_digest() const {
  if (dataset_digest_.empty()) {
    Sha256 h;
    auto add = [&](const fs::path& p) {
      h.update(p.lexically_relative(category_.root).string());
      h.update(std::string_view("\0", 1));
      h.update(sha256_file(p));
    };
    for (const auto* split : {&category_.train, &category_.validation, &category_.test}) {
      for (const auto& r : *split) {
        add(r.path);
        for (const auto& g : r.gt_regions) add(g);
      }
    }
    if (fs::exists(category_.root / "defects_config.json")) add(category_.root / "defects_config.json");
    dataset_digest_ = h.hex();
  }
  return dataset_digest_;
}

std::string Pipeline::require_upstream(Stage s) const {
  const auto& i = info(s);
  const fs::path mpath = layout_.manifest(s);
  const std::string hint = " (run `" + std::string(i.command) + "` first)";
  if (!fs::exists(mpath)) throw MissingArtifact("missing artifact: " + std::string(i.artifact) + hint);
  const json m = read_json(mpath);
  for (const auto& [name, digest] : m.at("outputs").items()) {
    const fs::path p = resolve_recorded(name, layout_.root());
    if (!fs::exists(p)) throw MissingArtifact("missing artifact: " + std::string(i.artifact) + " file " + p.string() + hint);
    if (sha256_file(p) != digest.get<std::string>()) {
      throw MissingArtifact("artifact changed since `" + std::string(i.name) + "` ran: " + p.string() + hint);
    }
  }
  return m.at("outputs_digest").get<std::string>();
}

std::string Pipeline::fingerprint(Stage s) const {
  json inputs = {{"stage", to_string(s)},
                 {"version", kPipelineVersion},
                 {"category", category_.name},
                 {"dataset", dataset_digest()},
                 {"config", cfg_.subset_json(config_keys(s))}};
  for (Stage u : upstream(s)) inputs["upstream"][to_string(u)] = require_upstream(u);
  if (s == Stage::eval) inputs["report"] = fs::absolute(report_path()).string();
  return sha256_hex(inputs.dump());
}

bool Pipeline::up_to_date(Stage s, const std::string& fp) const {
  const fs::path mpath = layout_.manifest(s);
  if (!fs::exists(mpath)) return false;
  const json m = read_json(mpath);
  if (m.value("fingerprint", "") != fp) return false;
  for (const auto& [name, digest] : m.at("outputs").items()) {
    const fs::path p = resolve_recorded(name, layout_.root());
    if (!fs::exists(p) || sha256_file(p) != digest.get<std::string>()) return false;
  }
  return true;
}

StageReport Pipeline::run(Stage s, bool force) {
  WorkdirLock lock(layout_.lock_file());
  StageReport rep;
  rep.stage = s;
  rep.category = category_.name;
  const std::string fp = fingerprint(s);
  if (!force && up_to_date(s, fp)) {
    rep.skipped = true;
    rep.status = "up-to-date";
    spdlog::info("{} [{}]: up-to-date", to_string(s), category_.name);
    return rep;
  }
  spdlog::info("{} [{}]: running", to_string(s), category_.name);
  const auto t0 = std::chrono::steady_clock::now();
  models_.reset();
  Outputs outputs;
  rep.details = execute(s, outputs);
  models_.reset();
  rep.wall_seconds = elapsed(t0);
  rep.status = "ran";

  json out_hashes = json::object();
  for (const auto& p : outputs) out_hashes[record_path(p, layout_.root())] = sha256_file(p);
  json manifest = {{"stage", to_string(s)},
                   {"category", category_.name},
                   {"version", kPipelineVersion},
                   {"fingerprint", fp},
                   {"config", cfg_.to_json()},
                   {"seeds",
                    {{"run", cfg_.seed},
                     {"split", cfg_.resolved_split_seed()},
                     {"cluster", cfg_.resolved_cluster_seed()},
                     {"segmenter", cfg_.resolved_segmenter_seed()},
                     {"composition", cfg_.resolved_composition_seed()},
                     {"appearance", cfg_.resolved_appearance_seed()}}},
                   {"validation",
                    {{"carved", validation_carved_}, {"count", validation_.size()}, {"train_count", train_.size()}}},
                   {"dataset_digest", dataset_digest()},
                   {"outputs", out_hashes},
                   {"outputs_digest", sha256_hex(out_hashes.dump())},
                   {"details", rep.details},
                   {"wall_seconds", rep.wall_seconds},
                   {"finished_at", utc_now()}};
  write_json(manifest, layout_.manifest(s));
  spdlog::info("{} [{}]: done in {:.1f}s", to_string(s), category_.name, rep.wall_seconds);
  return rep;
}

std::vector<StageReport> Pipeline::run_all(bool force) {
  std::vector<StageReport> out;
  for (Stage s : all_stages()) out.push_back(run(s, force));
  return out;
}

json Pipeline::execute(Stage s, Outputs& outputs) {
  switch (s) {
    case Stage::gen_maps: return gen_maps(outputs);
    case Stage::train_appearance: return train_appearance_stage(outputs);
    case Stage::train_composition: return train_composition_stage(outputs);
    case Stage::train_global: return train_global_stage(outputs);
    case Stage::calibrate: return calibrate_stage(outputs);
    case Stage::eval: return eval_stage(outputs);
  }
  throw ArgumentError("unknown stage");
}

json Pipeline::gen_maps(Outputs& outputs) {
  const auto extractor = backends::make_feature_extractor(cfg_.backends);
  const auto proposer = backends::make_mask_proposer(cfg_.backends);

  std::vector<ImageSample> images;
  std::vector<backends::FeatureMap> features;
  std::vector<compmap::ForegroundMask> fg;
  std::size_t empty_fg = 0;
  for (const auto& r : train_) {
    images.push_back(load_image(r.path, Split::train, Label::good));
    features.push_back(extractor->extract(images.back()));
    fg.push_back(compmap::compute_foreground_mask(images.back(), *proposer));
    empty_fg += fg.back().empty_warning;
  }
  if (empty_fg) spdlog::warn("{} training image(s) produced an empty foreground", empty_fg);

  compmap::ClusterOptions co;
  co.k = cfg_.k;
  co.seed = cfg_.resolved_cluster_seed();
  co.max_samples = cfg_.cluster_samples;
  co.max_iterations = cfg_.kmeans_iterations;
  const auto clusters = compmap::fit_cluster_model(features, fg, co);
  write_json(clusters.to_json(), layout_.cluster_model());
  outputs.push_back(layout_.cluster_model());

  std::vector<CompositionMap> pseudo;
  std::size_t proposals = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto c_feat = compmap::assign_feature_clusters(features[i], fg[i], clusters);
    const auto props = backends::deduplicate(proposer->propose_raw(images[i], cfg_.grid_points), cfg_.dedup_iou);
    proposals += props.size();
    pseudo.push_back(compmap::classify_mask_proposals(c_feat, props));
    const fs::path p = layout_.pseudo_label_path(train_[i]);
    save_composition_map(pseudo.back(), p);
    outputs.push_back(p);
  }
  features.clear();

  auto seg = compmap::train_component_segmenter(images, pseudo, cfg_.segmenter);
  seg.save(layout_.segmenter_checkpoint(), {{"category", category_.name}, {"clusters", clusters.to_json()}});
  outputs.push_back(layout_.segmenter_checkpoint());
  images.clear();

  std::size_t maps = 0;
  for (const auto* split : {&train_, &validation_, &category_.test}) {
    for (const auto& r : *split) {
      const auto image = load_image(r.path, r.split, r.label);
      const fs::path p = layout_.compmap_path(r);
      save_composition_map(seg.infer(image), p);
      outputs.push_back(p);
      ++maps;
    }
  }
  CompMapCacheMeta meta;
  meta.num_classes = cfg_.k + 1;
  meta.seed = cfg_.seed;
  meta.pipeline_version = kPipelineVersion;
  meta.backend_id = cfg_.backends.feature_backend;
  write_cache_meta(meta, layout_.compmap_dir());
  outputs.push_back(layout_.compmap_dir() / "meta.json");

  return {{"cluster_iterations", clusters.iterations},
          {"mean_proposals", static_cast<double>(proposals) / static_cast<double>(train_.size())},
          {"empty_foregrounds", empty_fg},
          {"segmenter_epoch_losses", seg.epoch_losses},
          {"segmenter", cfg_.segmenter.to_json()},
          {"maps_written", maps}};
}

json Pipeline::train_appearance_stage(Outputs& outputs) {
  const auto registered = appearance::registered_appearance_backends();
  if (std::find(registered.begin(), registered.end(), cfg_.appearance_backend) == registered.end()) {
    throw ConfigError("unknown appearance_backend '" + cfg_.appearance_backend + "'");
  }
  std::vector<ImageSample> images;
  for (const auto& r : train_) images.push_back(load_image(r.path, Split::train, Label::good));
  const std::int64_t every = log_every(cfg_.appearance.iterations);
  auto model = appearance::train_appearance(images, cfg_.appearance, [&](std::int64_t it, double loss) {
    if ((it + 1) % every == 0) spdlog::info("appearance {}/{} loss {:.5f}", it + 1, cfg_.appearance.iterations, loss);
  });
  model->save(layout_.appearance_checkpoint());
  outputs.push_back(layout_.appearance_checkpoint());
  const auto& curve = model->loss_curve;
  return {{"config", cfg_.appearance.to_json()},
          {"first_loss", curve.empty() ? 0.0 : curve.front()},
          {"final_loss", curve.empty() ? 0.0 : curve.back()}};
}

json Pipeline::train_composition_stage(Outputs& outputs) {
  std::vector<CompositionMap> maps;
  for (const auto& r : train_) {
    maps.push_back(load_composition_map(layout_.compmap_path(r)));
    if (maps.back().num_classes != cfg_.k + 1) {
      throw ConfigError("composition maps have " + std::to_string(maps.back().num_classes) +
                        " classes but compmap.k is " + std::to_string(cfg_.k));
    }
  }
  const std::int64_t every = log_every(cfg_.composition.iterations);
  auto branch = comp::train_composition_branch(maps, cfg_.composition, [&](std::int64_t it, double r, double d) {
    if ((it + 1) % every == 0) {
      spdlog::info("composition {}/{} recon {:.5f} disc {:.5f}", it + 1, cfg_.composition.iterations, r, d);
    }
  });
  branch.save(layout_.composition_recon(), layout_.composition_disc(), {{"category", category_.name}});
  outputs.push_back(layout_.composition_recon());
  outputs.push_back(layout_.composition_disc());
  auto window_mean = [](const std::vector<double>& v, bool head) {
    const std::size_t n = std::min<std::size_t>(v.size(), 50);
    if (n == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += head ? v[i] : v[v.size() - 1 - i];
    return s / static_cast<double>(n);
  };
  return {{"config", cfg_.composition.to_json()},
          {"recon_loss_first50", window_mean(branch.curve.recon_loss, true)},
          {"recon_loss_last50", window_mean(branch.curve.recon_loss, false)},
          {"disc_loss_first50", window_mean(branch.curve.disc_loss, true)},
          {"disc_loss_last50", window_mean(branch.curve.disc_loss, false)}};
}

json Pipeline::train_global_stage(Outputs& outputs) {
  auto& app = models().app(cfg_, layout_);
  std::vector<global::GlobalDescriptor> descriptors;
  for (const auto& r : train_) {
    const auto image = load_image(r.path, Split::train, Label::good);
    const auto out = app.infer(image);
    descriptors.push_back(global::compute_descriptor(out.features, load_composition_map(layout_.compmap_path(r))));
  }
  const auto gaussians = global::fit_gaussians(descriptors);
  global::save_gaussians(gaussians, layout_.gaussians());
  outputs.push_back(layout_.gaussians());
  json per_class = json::array();
  for (const auto& g : gaussians) {
    per_class.push_back({{"support", g.n_support},
                         {"epsilon", g.epsilon},
                         {"d_max", g.d_max},
                         {"pseudo_inverse", g.pseudo_inverse}});
  }
  return {{"classes", per_class}, {"descriptors", descriptors.size()}};
}

json Pipeline::calibrate_stage(Outputs& outputs) {
  auto& m = models();
  auto& app = m.app(cfg_, layout_);
  auto& branch = m.comp(layout_);
  const auto& gaussians = m.gauss(layout_);
  std::vector<metrics::BranchScores> scores;
  metrics::MapExtrema extrema;
  json samples = json::array();
  for (const auto& r : validation_) {
    const auto image = load_image(r.path, Split::validation, Label::good);
    const auto s = score_image(app, branch, gaussians, image, load_composition_map(layout_.compmap_path(r)));
    scores.push_back(metrics::branch_scores(s.a_a, s.a_c, s.s_g));
    extrema.include(s.a_a, s.a_c, scores.size() == 1);
    samples.push_back({{"image", r.path.lexically_relative(category_.root).string()},
                       {"a", scores.back().a},
                       {"c", scores.back().c},
                       {"g", scores.back().g}});
  }
  auto stats = metrics::calibrate(scores);
  stats.source = sha256_hex(samples.dump());
  const json out = {{"stats", stats.to_json()}, {"extrema", extrema.to_json()}, {"validation", samples}};
  write_json(out, layout_.calibration());
  outputs.push_back(layout_.calibration());
  return {{"samples", scores.size()}, {"stats", stats.to_json()}};
}

json Pipeline::eval_stage(Outputs& outputs) {
  auto& m = models();
  auto& app = m.app(cfg_, layout_);
  auto& branch = m.comp(layout_);
  const auto& gaussians = m.gauss(layout_);
  const json calib = read_json(layout_.calibration());
  const auto stats = metrics::ScoreStats::from_json(calib.at("stats"));
  const auto extrema = metrics::MapExtrema::from_json(calib.at("extrema"));
  const auto& test = category_.test;
  if (test.empty()) throw ConfigError("category " + category_.name + " has no test images");

  const bool localize = category_.localization_enabled();
  std::vector<metrics::BranchScores> raw;
  std::vector<metrics::FusionResult> fused;
  std::vector<Plane<float>> combined;
  std::vector<std::vector<metrics::GtRegion>> regions;
  for (const auto& r : test) {
    const auto image = load_image(r.path, Split::test, r.label);
    const auto s = score_image(app, branch, gaussians, image, load_composition_map(layout_.compmap_path(r)));
    raw.push_back(metrics::branch_scores(s.a_a, s.a_c, s.s_g));
    fused.push_back(metrics::fuse(raw.back(), stats, cfg_.fusion));
    if (localize) {
      combined.push_back(metrics::combined_localization_map(s.a_a, s.a_c, extrema).scores);
      regions.push_back(r.label == Label::good ? std::vector<metrics::GtRegion>{} : load_gt_regions(r, category_));
    }
  }

  auto totals = [&](const metrics::FusionOptions& o) {
    std::vector<double> v;
    for (const auto& s : raw) v.push_back(metrics::fuse(s, stats, o).total);
    return v;
  };
  std::vector<double> total;
  for (const auto& f : fused) total.push_back(f.total);

  json report;
  report["category"] = category_.name;
  report["version"] = kPipelineVersion;
  report["counts"] = {{"test", test.size()},
                      {"good", std::count_if(test.begin(), test.end(),
                                             [](const SampleRecord& r) { return r.label == Label::good; })},
                      {"validation", validation_.size()},
                      {"train", train_.size()}};
  report["fusion"] = {{"use_appearance", cfg_.fusion.use_a},
                      {"use_composition", cfg_.fusion.use_c},
                      {"use_global", cfg_.fusion.use_g}};
  report["image_auroc"] = auroc_block(total, test);

  json per_defect = json::object();
  std::vector<std::string> defects;
  for (const auto& r : test) {
    if (r.label != Label::good && std::find(defects.begin(), defects.end(), r.defect) == defects.end()) {
      defects.push_back(r.defect);
    }
  }
  for (const auto& d : defects) {
    per_defect[d] = opt_json(subset_auroc(total, test, [&](const SampleRecord& r) { return r.defect == d; }));
  }
  report["per_defect_auroc"] = per_defect;

  report["ablation"] = {
      {"without_appearance", auroc_block(totals({false, true, true}), test)},
      {"without_composition", auroc_block(totals({true, false, true}), test)},
      {"without_global", auroc_block(totals({true, true, false}), test)},
  };
  std::vector<double> a, c, g;
  for (const auto& s : raw) {
    a.push_back(s.a);
    c.push_back(s.c);
    g.push_back(s.g);
  }
  report["branch_auroc"] = {{"appearance", auroc_block(a, test)},
                            {"composition", auroc_block(c, test)},
                            {"global", auroc_block(g, test)}};

  if (localize) {
    std::vector<metrics::LocalizationSample> loc;
    for (std::size_t i = 0; i < test.size(); ++i) loc.push_back({&combined[i], std::move(regions[i])});
    report["auspro"] = {{"fpr_limit", cfg_.auspro.fpr_limit}, {"value", metrics::auspro(loc, cfg_.auspro)}};
  } else {
    report["auspro"] = nullptr;
  }
  report["per_image_csv"] = csv_path().filename().string();

  write_json(report, report_path());
  outputs.push_back(report_path());

  const fs::path csv = csv_path();
  {
    std::ofstream out(csv);
    if (!out) throw IoError("cannot write " + csv.string());
    out << "image,defect,label,as_a,as_c,as_g,z_a,z_c,z_g,score\n";
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto& f = fused[i];
      out << csv_field(test[i].path.lexically_relative(category_.root).string()) << ',' << csv_field(test[i].defect)
          << ',' << to_string(test[i].label) << ',' << fmt(f.as_a) << ',' << fmt(f.as_c) << ',' << fmt(f.as_g) << ','
          << fmt(f.z_a) << ',' << fmt(f.z_c) << ',' << fmt(f.z_g) << ',' << fmt(f.total) << '\n';
    }
  }
  outputs.push_back(csv);
  return {{"image_auroc", report["image_auroc"]}, {"auspro", report["auspro"]}};
}

InferResult Pipeline::infer(const fs::path& image_path, const fs::path& out_dir) {
  require_upstream(Stage::calibrate);
  for (Stage s : upstream(Stage::calibrate)) require_upstream(s);
  auto& m = models();
  const json calib = read_json(layout_.calibration());
  const auto stats = metrics::ScoreStats::from_json(calib.at("stats"));
  const auto extrema = metrics::MapExtrema::from_json(calib.at("extrema"));

  const auto image = load_image(image_path, Split::test, Label::unknown);
  InferResult res;
  res.composition = m.seg(layout_).infer(image);
  auto s = score_image(m.app(cfg_, layout_), m.comp(layout_), m.gauss(layout_), image, res.composition);
  const auto f = metrics::fuse(metrics::branch_scores(s.a_a, s.a_c, s.s_g), stats, cfg_.fusion);
  res.combined = metrics::combined_localization_map(s.a_a, s.a_c, extrema);
  res.a_a = std::move(s.a_a);
  res.a_c = std::move(s.a_c);
  res.s_g = s.s_g;
  res.total = f.total;
  res.scores = {{"image", image_path.string()},
                {"as_a", f.as_a},
                {"as_c", f.as_c},
                {"as_g", f.as_g},
                {"z_a", f.z_a},
                {"z_c", f.z_c},
                {"z_g", f.z_g},
                {"score", f.total}};
  if (!out_dir.empty()) {
    const std::string stem = image_path.stem().string();
    save_composition_map(res.composition, out_dir / (stem + "_composition.png"));
    write_png_heatmap(res.a_a.scores, static_cast<float>(extrema.a_min), static_cast<float>(extrema.a_max),
                      out_dir / (stem + "_appearance.png"));
    write_png_heatmap(res.a_c.scores, 0.0f, 1.0f, out_dir / (stem + "_composition_anomaly.png"));
    write_png_heatmap(res.combined.scores, 0.0f, 2.0f, out_dir / (stem + "_combined.png"));
    write_json(res.scores, out_dir / (stem + "_scores.json"));
  }
  return res;
}

}  // namespace salad::pipeline
