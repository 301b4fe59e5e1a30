// salad: command-line driver for the anomaly detection pipeline.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "salad/core/compmap_io.hpp"
#include "salad/core/error.hpp"
#include "salad/core/image_io.hpp"
#include "salad/pipeline/config.hpp"
#include "salad/pipeline/runner.hpp"
#include "salad/pipeline/toy.hpp"
#include "salad/sim/simulator.hpp"

namespace fs = std::filesystem;
using namespace salad;

namespace {

struct Common {
  std::vector<std::string> config_files;
  std::vector<std::string> overrides;
  std::string workdir;
  std::string dataset;
  std::string category;
  bool force = false;
  bool verbose = false;
  bool quiet = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_files, "key = value config file (repeatable, later files win)");
  app->add_option("-s,--set", c.overrides, "override one key, e.g. --set composition.iterations=2000");
  app->add_option("-w,--workdir", c.workdir, "artifact directory (default: config, then $SALAD_WORKDIR)");
  app->add_option("-d,--dataset", c.dataset, "dataset root");
  app->add_option("--category", c.category, "category to process");
}

pipeline::RunConfig build_config(const Common& c) {
  pipeline::RunConfig cfg;
  for (const auto& f : c.config_files) pipeline::apply_config_file(cfg, f);
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
    cfg.set(o.substr(0, eq), o.substr(eq + 1));
  }
  if (!c.workdir.empty()) cfg.workdir = c.workdir;
  if (!c.dataset.empty()) cfg.dataset_root = c.dataset;
  if (!c.category.empty()) cfg.category = c.category;
  return cfg;
}

void print_report(const pipeline::StageReport& r) {
  std::printf("%-18s %-12s %s  %.1fs\n", pipeline::to_string(r.stage).c_str(), r.category.c_str(),
              r.status.c_str(), r.wall_seconds);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const MissingArtifact*>(&e)) return 3;
  if (dynamic_cast<const AssetUnavailable*>(&e)) return 4;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ArgumentError*>(&e)) return 2;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SALAD logical and structural anomaly detection"};
  app.require_subcommand(1);
  Common common;
  app.add_flag("-v,--verbose", common.verbose, "debug logging");
  app.add_flag("-q,--quiet", common.quiet, "warnings and errors only");

  // gen-toy
  auto* gen_toy = app.add_subcommand("gen-toy", "write the procedural toy dataset");
  std::string toy_spec;
  std::string toy_out;
  std::optional<std::uint64_t> toy_seed;
  gen_toy->add_option("--spec", toy_spec, "toy spec JSON (default: built-in spec)");
  gen_toy->add_option("--out", toy_out, "output root")->required();
  gen_toy->add_option("--seed", toy_seed, "override the spec seed");

  // gen-maps
  auto* gen_maps = app.add_subcommand("gen-maps", "pseudo-labels, component segmenter and composition-map cache");
  add_common(gen_maps, common);
  std::string backend;
  std::optional<int> k;
  std::optional<std::uint64_t> seed;
  gen_maps->add_option("--backend", backend, "feature backend id");
  gen_maps->add_option("--k", k, "number of part clusters");
  gen_maps->add_option("--seed", seed, "run seed");
  gen_maps->add_flag("-f,--force", common.force, "rerun even when up to date");

  // train
  auto* train = app.add_subcommand("train", "train one branch");
  add_common(train, common);
  std::string branch;
  train->add_option("--branch", branch, "appearance, composition or global")
      ->required()
      ->check(CLI::IsMember({"appearance", "composition", "global"}));
  train->add_flag("-f,--force", common.force, "rerun even when up to date");

  auto* calibrate = app.add_subcommand("calibrate", "per-branch score statistics on the validation split");
  add_common(calibrate, common);
  calibrate->add_flag("-f,--force", common.force, "rerun even when up to date");

  auto* eval = app.add_subcommand("eval", "score the test split and write the report");
  add_common(eval, common);
  std::string report;
  eval->add_option("--report", report, "report JSON path (per-image CSV goes next to it)");
  eval->add_flag("-f,--force", common.force, "rerun even when up to date");

  auto* run = app.add_subcommand("run", "every stage in order, skipping those already up to date");
  add_common(run, common);
  run->add_option("--report", report, "report JSON path");
  run->add_flag("-f,--force", common.force, "rerun every stage");

  auto* infer = app.add_subcommand("infer", "score one image with trained models");
  add_common(infer, common);
  std::string image;
  std::string out_dir;
  infer->add_option("--image", image, "input PNG")->required()->check(CLI::ExistingFile);
  infer->add_option("--out", out_dir, "directory for maps and scores");

  auto* simulate = app.add_subcommand("simulate", "write one synthetic anomaly for a composition map");
  std::string sim_in;
  std::string sim_kind;
  std::string sim_source;
  std::uint64_t sim_seed = 0;
  std::string sim_out;
  simulate->add_option("--in", sim_in, "composition map PNG")->required()->check(CLI::ExistingFile);
  simulate->add_option("--kind", sim_kind, "structural, removal or inpaint")->required();
  simulate->add_option("--source", sim_source, "donor map for inpaint (default: the input map)");
  simulate->add_option("--seed", sim_seed, "seed");
  simulate->add_option("--out", sim_out, "output directory")->required();

  auto* config = app.add_subcommand("config", "list the config keys or print the resolved config");
  add_common(config, common);
  bool list_keys = false;
  config->add_flag("--list", list_keys, "document every key");

  CLI11_PARSE(app, argc, argv);
  if (common.verbose) spdlog::set_level(spdlog::level::debug);
  if (common.quiet) spdlog::set_level(spdlog::level::warn);

  try {
    if (gen_toy->parsed()) {
      pipeline::ToySpec spec = pipeline::ToySpec::default_spec();
      if (!toy_spec.empty()) {
        std::ifstream in(toy_spec);
        if (!in) throw IoError("cannot read " + toy_spec);
        spec = pipeline::ToySpec::from_json(nlohmann::json::parse(in));
      }
      if (toy_seed) spec.seed = *toy_seed;
      const auto index = pipeline::generate_toy_dataset(spec, toy_out);
      for (const auto& c : index.categories) {
        std::printf("%s: %zu train, %zu validation, %zu test\n", c.name.c_str(), c.train.size(),
                    c.validation.size(), c.test.size());
      }
      return 0;
    }
    if (simulate->parsed()) {
      const auto map = load_composition_map(sim_in);
      const auto source = sim_source.empty() ? map : load_composition_map(sim_source);
      sim::SyntheticSample s;
      switch (sim::kind_from_string(sim_kind)) {
        case sim::SyntheticKind::perlin_paste: s = sim::simulate_structural(map, sim_seed); break;
        case sim::SyntheticKind::component_removal: s = sim::simulate_removal(map, sim_seed); break;
        case sim::SyntheticKind::component_inpaint: s = sim::simulate_inpaint(map, source, sim_seed); break;
        default: throw ArgumentError("simulate needs --kind structural, removal or inpaint");
      }
      const fs::path out(sim_out);
      save_composition_map(s.augmented, out / "augmented.png");
      write_png_mask(s.gt_mask, out / "gt_mask.png");
      std::printf("%s sample written to %s\n", sim::to_string(s.kind).c_str(), out.c_str());
      return 0;
    }
    if (config->parsed()) {
      if (list_keys) {
        for (const auto& d : pipeline::config_key_docs()) std::printf("%-30s %s\n", d.key.c_str(), d.description.c_str());
      } else {
        std::fputs(pipeline::format_config(build_config(common)).c_str(), stdout);
      }
      return 0;
    }

    auto cfg = build_config(common);
    if (gen_maps->parsed()) {
      if (!backend.empty()) cfg.backends.feature_backend = backend;
      if (k) cfg.k = *k;
      if (seed) cfg.seed = *seed;
    }
    pipeline::Pipeline p(cfg);
    if (!report.empty()) p.set_report_path(report);

    if (gen_maps->parsed()) print_report(p.run(pipeline::Stage::gen_maps, common.force));
    if (train->parsed()) {
      const auto stage = branch == "appearance"    ? pipeline::Stage::train_appearance
                         : branch == "composition" ? pipeline::Stage::train_composition
                                                   : pipeline::Stage::train_global;
      print_report(p.run(stage, common.force));
    }
    if (calibrate->parsed()) print_report(p.run(pipeline::Stage::calibrate, common.force));
    if (eval->parsed() || run->parsed()) {
      if (run->parsed()) {
        for (const auto& r : p.run_all(common.force)) print_report(r);
      } else {
        print_report(p.run(pipeline::Stage::eval, common.force));
      }
      std::ifstream in(p.report_path());
      const auto j = nlohmann::json::parse(in);
      std::printf("image AUROC %s\nAUsPRO %s\nreport %s\n", j.at("image_auroc").dump().c_str(),
                  j.at("auspro").dump().c_str(), p.report_path().c_str());
    }
    if (infer->parsed()) {
      const auto res = p.infer(image, out_dir);
      std::printf("%s\n", res.scores.dump(2).c_str());
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e);
  }
  return 0;
}
