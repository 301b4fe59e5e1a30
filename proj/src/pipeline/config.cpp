#include "salad/pipeline/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "salad/core/random.hpp"

namespace fs = std::filesystem;

namespace salad::pipeline {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("config key '" + key + "': expected " + expected + ", got '" + value + "'");
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v, "a number");
    return d;
  } catch (const std::logic_error&) {
    bad_value(key, v, "a number");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "true or false");
}

std::string str(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string str(bool v) { return v ? "true" : "false"; }

std::string layout_name(DatasetLayout l) { return l == DatasetLayout::loco ? "loco" : "flat"; }

struct KeyDef {
  std::string key;
  std::string doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class T>
KeyDef int_key(std::string key, std::string doc, T RunConfig::*field) {
  return {key, std::move(doc), [field](const RunConfig& c) { return std::to_string(c.*field); },
          [field, key](RunConfig& c, const std::string& v) { c.*field = static_cast<T>(to_int(key, v)); }};
}

// Member of a nested struct.
template <class S, class T>
KeyDef nested_int(std::string key, std::string doc, S RunConfig::*outer, T S::*field) {
  return {key, std::move(doc), [=](const RunConfig& c) { return std::to_string(c.*outer.*field); },
          [=](RunConfig& c, const std::string& v) { c.*outer.*field = static_cast<T>(to_int(key, v)); }};
}

template <class S, class T>
KeyDef nested_real(std::string key, std::string doc, S RunConfig::*outer, T S::*field) {
  return {key, std::move(doc), [=](const RunConfig& c) { return str(static_cast<double>(c.*outer.*field)); },
          [=](RunConfig& c, const std::string& v) { c.*outer.*field = static_cast<T>(to_double(key, v)); }};
}

template <class S>
KeyDef nested_bool(std::string key, std::string doc, S RunConfig::*outer, bool S::*field) {
  return {key, std::move(doc), [=](const RunConfig& c) { return str(c.*outer.*field); },
          [=](RunConfig& c, const std::string& v) { c.*outer.*field = to_bool(key, v); }};
}

KeyDef seed_key(std::string key, std::string doc, std::optional<std::uint64_t> RunConfig::*field) {
  return {key, std::move(doc),
          [=](const RunConfig& c) { return (c.*field) ? std::to_string(*(c.*field)) : std::string(); },
          [=](RunConfig& c, const std::string& v) {
            if (v.empty()) {
              c.*field = std::nullopt;
            } else {
              c.*field = to_u64(key, v);
            }
          }};
}

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = [] {
    std::vector<KeyDef> t;
    t.push_back({"dataset.root", "dataset root (a category directory or a directory of categories)",
                 [](const RunConfig& c) { return c.dataset_root.string(); },
                 [](RunConfig& c, const std::string& v) { c.dataset_root = v; }});
    t.push_back({"dataset.layout", "loco or flat",
                 [](const RunConfig& c) { return layout_name(c.layout); },
                 [](RunConfig& c, const std::string& v) { c.layout = layout_from_string(v); }});
    t.push_back({"category", "category to run; may be empty when the root holds exactly one",
                 [](const RunConfig& c) { return c.category; },
                 [](RunConfig& c, const std::string& v) { c.category = v; }});
    t.push_back({"workdir", "artifact directory (falls back to $SALAD_WORKDIR)",
                 [](const RunConfig& c) { return c.workdir.string(); },
                 [](RunConfig& c, const std::string& v) { c.workdir = v; }});
    t.push_back({"seed", "run seed; per-module seeds default to values derived from it",
                 [](const RunConfig& c) { return std::to_string(c.seed); },
                 [](RunConfig& c, const std::string& v) { c.seed = to_u64("seed", v); }});
    t.push_back({"validation_fraction", "share of train carved into validation when none ships",
                 [](const RunConfig& c) { return str(c.validation_fraction); },
                 [](RunConfig& c, const std::string& v) {
                   c.validation_fraction = to_double("validation_fraction", v);
                 }});
    t.push_back({"feature_backend", "feature extractor id used for clustering",
                 [](const RunConfig& c) { return c.backends.feature_backend; },
                 [](RunConfig& c, const std::string& v) { c.backends.feature_backend = v; }});
    t.push_back({"mask_backend", "mask proposer id",
                 [](const RunConfig& c) { return c.backends.mask_backend; },
                 [](RunConfig& c, const std::string& v) { c.backends.mask_backend = v; }});
    t.push_back({"appearance_backend", "appearance model id",
                 [](const RunConfig& c) { return c.appearance_backend; },
                 [](RunConfig& c, const std::string& v) { c.appearance_backend = v; }});
    t.push_back({"teacher_backend", "frozen feature extractor used as the appearance teacher",
                 [](const RunConfig& c) { return c.teacher_backend; },
                 [](RunConfig& c, const std::string& v) { c.teacher_backend = v; }});
    t.push_back(int_key("compmap.k", "number of part clusters K", &RunConfig::k));
    t.push_back(int_key("compmap.grid_points", "mask prompts per image side", &RunConfig::grid_points));
    t.push_back({"compmap.dedup_iou", "proposals overlapping a better one above this IoU are dropped",
                 [](const RunConfig& c) { return str(c.dedup_iou); },
                 [](RunConfig& c, const std::string& v) { c.dedup_iou = to_double("compmap.dedup_iou", v); }});
    t.push_back(int_key("compmap.cluster_samples", "feature vectors sampled for k-means", &RunConfig::cluster_samples));
    t.push_back(int_key("compmap.kmeans_iterations", "Lloyd iteration cap", &RunConfig::kmeans_iterations));
    t.push_back(nested_int("segmenter.epochs", "component segmenter epochs", &RunConfig::segmenter,
                           &compmap::SegmenterConfig::epochs));
    t.push_back(nested_real("segmenter.lr", "AdamW learning rate", &RunConfig::segmenter,
                            &compmap::SegmenterConfig::lr));
    t.push_back(nested_int("segmenter.batch", "batch size", &RunConfig::segmenter,
                           &compmap::SegmenterConfig::batch_size));
    t.push_back(nested_real("segmenter.weight_decay", "AdamW weight decay", &RunConfig::segmenter,
                            &compmap::SegmenterConfig::weight_decay));
    t.push_back(nested_int("segmenter.width", "U-Net base width", &RunConfig::segmenter,
                           &compmap::SegmenterConfig::base_width));
    t.push_back(nested_int("segmenter.levels", "U-Net resolutions", &RunConfig::segmenter,
                           &compmap::SegmenterConfig::levels));
    t.push_back(nested_int("segmenter.space_to_depth", "pixel-unshuffle factor around the U-Net",
                           &RunConfig::segmenter, &compmap::SegmenterConfig::space_to_depth));
    t.push_back(nested_int("composition.iterations", "training iterations", &RunConfig::composition,
                           &comp::CompBranchConfig::iterations));
    t.push_back(nested_real("composition.lr", "Adam learning rate", &RunConfig::composition,
                            &comp::CompBranchConfig::lr));
    t.push_back(nested_real("composition.decay_fraction", "lr drops after this share of iterations",
                            &RunConfig::composition, &comp::CompBranchConfig::decay_fraction));
    t.push_back(nested_real("composition.decay_factor", "lr multiplier at the drop", &RunConfig::composition,
                            &comp::CompBranchConfig::decay_factor));
    t.push_back(nested_int("composition.batch", "batch size", &RunConfig::composition,
                           &comp::CompBranchConfig::batch_size));
    t.push_back(nested_real("composition.gamma", "focal loss gamma", &RunConfig::composition,
                            &comp::CompBranchConfig::gamma));
    t.push_back(nested_real("composition.alpha", "weight of the focal term in the discriminator loss",
                            &RunConfig::composition, &comp::CompBranchConfig::alpha));
    t.push_back(nested_int("composition.recon_width", "reconstruction U-Net base width", &RunConfig::composition,
                           &comp::CompBranchConfig::recon_width));
    t.push_back(nested_int("composition.disc_width", "discriminator U-Net base width", &RunConfig::composition,
                           &comp::CompBranchConfig::disc_width));
    t.push_back(nested_int("composition.levels", "U-Net resolutions", &RunConfig::composition,
                           &comp::CompBranchConfig::levels));
    t.push_back(nested_int("composition.space_to_depth", "pixel-unshuffle factor", &RunConfig::composition,
                           &comp::CompBranchConfig::space_to_depth));
    t.push_back(nested_int("composition.working_size", "map side length inside the branch (0 = native)",
                           &RunConfig::composition, &comp::CompBranchConfig::working_size));
    t.push_back(nested_bool("composition.soft_disc_input", "feed reconstruction probabilities to the discriminator",
                            &RunConfig::composition, &comp::CompBranchConfig::soft_disc_input));
    t.push_back(nested_int("appearance.iterations", "training iterations", &RunConfig::appearance,
                           &appearance::StudentTeacherConfig::iterations));
    t.push_back(nested_real("appearance.lr", "Adam learning rate", &RunConfig::appearance,
                            &appearance::StudentTeacherConfig::lr));
    t.push_back(nested_real("appearance.weight_decay", "weight decay", &RunConfig::appearance,
                            &appearance::StudentTeacherConfig::weight_decay));
    t.push_back(nested_real("appearance.decay_fraction", "lr drops after this share of iterations",
                            &RunConfig::appearance, &appearance::StudentTeacherConfig::decay_fraction));
    t.push_back(nested_real("appearance.decay_factor", "lr multiplier at the drop", &RunConfig::appearance,
                            &appearance::StudentTeacherConfig::decay_factor));
    t.push_back(nested_int("appearance.batch", "batch size", &RunConfig::appearance,
                           &appearance::StudentTeacherConfig::batch_size));
    t.push_back(nested_int("appearance.student_width", "student base width", &RunConfig::appearance,
                           &appearance::StudentTeacherConfig::student_width));
    t.push_back(nested_int("appearance.student_levels", "student resolutions", &RunConfig::appearance,
                           &appearance::StudentTeacherConfig::student_levels));
    t.push_back(nested_int("appearance.ae_width", "autoencoder base width", &RunConfig::appearance,
                           &appearance::StudentTeacherConfig::ae_width));
    t.push_back(nested_int("appearance.ae_levels", "autoencoder resolutions", &RunConfig::appearance,
                           &appearance::StudentTeacherConfig::ae_levels));
    t.push_back(nested_real("appearance.st_weight", "weight of the student/teacher map in A_a",
                            &RunConfig::appearance, &appearance::StudentTeacherConfig::st_weight));
    t.push_back(nested_real("eval.fpr_limit", "AUsPRO integration limit", &RunConfig::auspro,
                            &metrics::AusproOptions::fpr_limit));
    t.push_back(nested_int("eval.max_thresholds", "AUsPRO threshold cap (0 = all)", &RunConfig::auspro,
                           &metrics::AusproOptions::max_thresholds));
    t.push_back(nested_bool("eval.use_appearance", "include the appearance branch in the fused score",
                            &RunConfig::fusion, &metrics::FusionOptions::use_a));
    t.push_back(nested_bool("eval.use_composition", "include the composition branch in the fused score",
                            &RunConfig::fusion, &metrics::FusionOptions::use_c));
    t.push_back(nested_bool("eval.use_global", "include the global branch in the fused score",
                            &RunConfig::fusion, &metrics::FusionOptions::use_g));
    t.push_back(seed_key("seed.split", "validation carving seed", &RunConfig::split_seed));
    t.push_back(seed_key("seed.cluster", "k-means seed", &RunConfig::cluster_seed));
    t.push_back(seed_key("seed.segmenter", "segmenter init and shuffling seed", &RunConfig::segmenter_seed));
    t.push_back(seed_key("seed.composition", "composition branch seed", &RunConfig::composition_seed));
    t.push_back(seed_key("seed.appearance", "appearance branch seed", &RunConfig::appearance_seed));
    return t;
  }();
  return table;
}

// Backend parameters are open-ended: "<backend key>.<param>".
template <class C>
auto param_map(C& c, const std::string& key, std::string& param) -> decltype(&c.teacher_params) {
  for (const auto& [prefix, member] :
       {std::pair{std::string("feature_backend."), &c.backends.feature_params},
        std::pair{std::string("mask_backend."), &c.backends.mask_params},
        std::pair{std::string("teacher_backend."), &c.teacher_params}}) {
    if (key.rfind(prefix, 0) == 0 && key.size() > prefix.size()) {
      param = key.substr(prefix.size());
      return member;
    }
  }
  return nullptr;
}

std::uint64_t derive(const std::optional<std::uint64_t>& explicit_seed, std::uint64_t run_seed,
                     std::uint64_t stream) {
  return explicit_seed ? *explicit_seed : mix_seed(run_seed, stream);
}

}  // namespace

std::uint64_t RunConfig::resolved_split_seed() const { return derive(split_seed, seed, 1); }
std::uint64_t RunConfig::resolved_cluster_seed() const { return derive(cluster_seed, seed, 2); }
std::uint64_t RunConfig::resolved_segmenter_seed() const { return derive(segmenter_seed, seed, 3); }
std::uint64_t RunConfig::resolved_composition_seed() const { return derive(composition_seed, seed, 4); }
std::uint64_t RunConfig::resolved_appearance_seed() const { return derive(appearance_seed, seed, 5); }

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& def : key_table()) {
    if (def.key == key) {
      def.set(*this, value);
      return;
    }
  }
  std::string param;
  if (auto* m = param_map(*this, key, param)) {
    (*m)[param] = value;
    return;
  }
  throw ConfigError("unknown config key '" + key + "' (see `salad config --list`)");
}

std::string RunConfig::get(const std::string& key) const {
  for (const auto& def : key_table()) {
    if (def.key == key) return def.get(*this);
  }
  std::string param;
  if (const auto* m = param_map(*this, key, param)) {
    const auto it = m->find(param);
    return it == m->end() ? std::string() : it->second;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& def : key_table()) {
    out.emplace_back(def.key, def.get(*this));
    if (def.key == "teacher_backend") {
      for (const auto& [prefix, m] : {std::pair{"feature_backend.", &backends.feature_params},
                                      std::pair{"mask_backend.", &backends.mask_params},
                                      std::pair{"teacher_backend.", &teacher_params}}) {
        for (const auto& [k, v] : *m) out.emplace_back(prefix + k, v);
      }
    }
  }
  return out;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : entries()) j[k] = v;
  return j;
}

nlohmann::json RunConfig::subset_json(const std::vector<std::string>& prefixes) const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : entries()) {
    for (const auto& p : prefixes) {
      if (p.ends_with('.') ? k.rfind(p, 0) == 0 : k == p) {
        j[k] = v;
        break;
      }
    }
  }
  return j;
}

void RunConfig::finalize() {
  if (k < 1) throw ConfigError("compmap.k must be >= 1");
  if (grid_points < 1) throw ConfigError("compmap.grid_points must be >= 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in (0, 1)");
  }
  backends.seed = seed;
  segmenter.num_classes = k + 1;
  segmenter.seed = resolved_segmenter_seed();
  composition.num_classes = k + 1;
  composition.seed = resolved_composition_seed();
  appearance.seed = resolved_appearance_seed();
  appearance.teacher.feature_backend = teacher_backend;
  appearance.teacher.feature_params = teacher_params;
  appearance.teacher.seed = seed;
}

void RunConfig::require_dataset() const {
  if (dataset_root.empty()) throw ConfigError("dataset.root is not set");
  if (!fs::is_directory(dataset_root)) throw ConfigError("dataset.root does not exist: " + dataset_root.string());
}

const std::vector<ConfigKeyDoc>& config_key_docs() {
  static const std::vector<ConfigKeyDoc> docs = [] {
    std::vector<ConfigKeyDoc> d;
    for (const auto& def : key_table()) d.push_back({def.key, def.doc});
    d.push_back({"feature_backend.<param>", "backend parameter, e.g. feature_backend.weights=<dir>"});
    d.push_back({"mask_backend.<param>", "backend parameter, e.g. mask_backend.weights=<dir>"});
    d.push_back({"teacher_backend.<param>", "backend parameter for the appearance teacher"});
    return d;
  }();
  return docs;
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& cfg, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str(), path.string());
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg.entries()) out += k + " = " + v + "\n";
  return out;
}

fs::path resolve_workdir(const RunConfig& cfg) {
  if (!cfg.workdir.empty()) return cfg.workdir;
  if (const char* env = std::getenv("SALAD_WORKDIR"); env && *env) return env;
  throw ConfigError("no workdir: set `workdir` in the config or SALAD_WORKDIR");
}

}  // namespace salad::pipeline
