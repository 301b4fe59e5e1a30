#include "salad/comp/branch.hpp"

#include <cmath>

#include <spdlog/spdlog.h>

#include "salad/comp/losses.hpp"
#include "salad/core/random.hpp"
#include "salad/core/resize.hpp"
#include "salad/nn/convert.hpp"
#include "salad/nn/optim.hpp"

namespace salad::comp {

nlohmann::json CompBranchConfig::to_json() const {
  return {{"num_classes", num_classes},
          {"iterations", iterations},
          {"optimizer", "adam"},
          {"lr", lr},
          {"decay_fraction", decay_fraction},
          {"decay_factor", decay_factor},
          {"decay_step", nn::decay_step(iterations, decay_fraction)},
          {"batch_size", batch_size},
          {"gamma", gamma},
          {"alpha", alpha},
          {"recon_width", recon_width},
          {"disc_width", disc_width},
          {"levels", levels},
          {"space_to_depth", space_to_depth},
          {"working_size", working_size},
          {"soft_disc_input", soft_disc_input},
          {"seed", seed}};
}

CompBranchConfig CompBranchConfig::from_json(const nlohmann::json& j) {
  CompBranchConfig c;
  c.num_classes = j.at("num_classes").get<int>();
  c.iterations = j.at("iterations").get<std::int64_t>();
  c.lr = j.at("lr").get<float>();
  c.decay_fraction = j.at("decay_fraction").get<double>();
  c.decay_factor = j.at("decay_factor").get<float>();
  c.batch_size = j.at("batch_size").get<int>();
  c.gamma = j.at("gamma").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.recon_width = j.at("recon_width").get<int>();
  c.disc_width = j.at("disc_width").get<int>();
  c.levels = j.at("levels").get<int>();
  c.space_to_depth = j.at("space_to_depth").get<int>();
  c.working_size = j.value("working_size", 0);
  c.soft_disc_input = j.at("soft_disc_input").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

namespace {

nn::UNetConfig net_config(int in, int out, int width, int levels) {
  nn::UNetConfig u;
  u.in_channels = in;
  u.out_channels = out;
  u.base_width = width;
  u.levels = levels;
  return u;
}

std::vector<double> to_double(const float* p, std::size_t n) { return std::vector<double>(p, p + n); }

CompositionMap at_size(const CompositionMap& c, int size) {
  if (size <= 0 || (c.width() == size && c.height() == size)) return c;
  return resize_nearest(c, size, size);
}

}  // namespace

CompositionBranch::CompositionBranch(const CompBranchConfig& cfg)
    : cfg_(cfg),
      recon_(net_config(cfg.num_classes, cfg.num_classes, cfg.recon_width, cfg.levels), cfg.space_to_depth,
             mix_seed(cfg.seed, 0x7ec0u)),
      disc_(net_config(2 * cfg.num_classes, 1, cfg.disc_width, cfg.levels), cfg.space_to_depth,
            mix_seed(cfg.seed, 0xd15cu)) {
  if (cfg.num_classes < 2) throw ArgumentError("composition branch needs at least two classes");
}

nn::Tensor CompositionBranch::disc_input(const nn::Tensor& c_in_onehot, const nn::Tensor& rec_probs) const {
  if (cfg_.soft_disc_input) return nn::concat_channels(c_in_onehot, rec_probs);
  nn::Tensor hard(rec_probs.n, rec_probs.c, rec_probs.h, rec_probs.w);
  for (int i = 0; i < rec_probs.n; ++i) {
    const CompositionMap m = nn::argmax_map(rec_probs, i);
    for (std::size_t p = 0; p < rec_probs.plane(); ++p) hard.channel(i, m.classes[p])[p] = 1.0f;
  }
  return nn::concat_channels(c_in_onehot, hard);
}

Reconstruction CompositionBranch::reconstruct(const CompositionMap& c_in) {
  if (c_in.num_classes != cfg_.num_classes) {
    throw ArgumentError("map has " + std::to_string(c_in.num_classes) + " classes, branch expects " +
                        std::to_string(cfg_.num_classes));
  }
  Reconstruction r;
  r.probs = nn::softmax_channels(recon_.forward(nn::one_hot(c_in)));
  r.map = nn::argmax_map(r.probs);
  return r;
}

AnomalyMap CompositionBranch::discriminate(const CompositionMap& c_in, const Reconstruction& rec) {
  if (!c_in.classes.same_shape(rec.map.classes)) throw ShapeError("discriminate: map shapes differ");
  const nn::Tensor out = nn::sigmoid(disc_.forward(disc_input(nn::one_hot(c_in), rec.probs)));
  AnomalyMap a;
  a.range = MapRange::unit;
  a.scores = nn::plane_of(out);
  return a;
}

AnomalyMap CompositionBranch::anomaly_map(const CompositionMap& c) {
  const CompositionMap w = at_size(c, cfg_.working_size);
  AnomalyMap a = discriminate(w, reconstruct(w));
  if (!a.scores.same_shape(c.classes)) a.scores = resize_bilinear(a.scores, c.width(), c.height());
  return a;
}

std::pair<double, double> CompositionBranch::forward_backward(
    std::span<const CompositionMap* const> clean, std::span<const sim::SyntheticSample* const> augmented) {
  if (clean.size() != augmented.size() || clean.empty()) throw ArgumentError("forward_backward: bad batch");
  const int ws = cfg_.working_size;
  std::vector<CompositionMap> targets;
  std::vector<CompositionMap> aug_maps;
  std::vector<Mask> gt_masks;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    targets.push_back(at_size(*clean[i], ws));
    aug_maps.push_back(at_size(augmented[i]->augmented, ws));
    const Mask& m = augmented[i]->gt_mask;
    gt_masks.push_back(ws > 0 && (m.width() != ws || m.height() != ws) ? resize_nearest(m, ws, ws) : m);
  }
  std::vector<const CompositionMap*> inputs;
  for (const auto& m : aug_maps) inputs.push_back(&m);
  const nn::Tensor x = nn::one_hot_batch(inputs);
  const int n = x.n;
  const std::size_t hw = x.plane();
  const int classes = cfg_.num_classes;

  const nn::Tensor logits = recon_.forward(x);
  nn::Tensor g_rec(logits.n, logits.c, logits.h, logits.w);
  double recon_total = 0.0;
  std::vector<int> target(hw);
  std::vector<double> grad;
  for (int i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < hw; ++p) target[p] = targets[i].classes[p];
    recon_total += recon_loss(to_double(logits.sample(i), logits.sample_size()), target, classes, cfg_.gamma, &grad);
    float* g = g_rec.sample(i);
    for (std::size_t q = 0; q < grad.size(); ++q) g[q] = static_cast<float>(grad[q] / n);
  }
  const nn::Tensor probs = nn::softmax_channels(logits);

  const nn::Tensor d_logits = disc_.forward(disc_input(x, probs));
  nn::Tensor g_disc(d_logits.n, 1, d_logits.h, d_logits.w);
  double disc_total = 0.0;
  std::vector<int> gt(hw);
  for (int i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < hw; ++p) gt[p] = gt_masks[i][p];
    disc_total += disc_loss_logits(gt, to_double(d_logits.sample(i), hw), cfg_.alpha, cfg_.gamma, &grad);
    float* g = g_disc.sample(i);
    for (std::size_t q = 0; q < hw; ++q) g[q] = static_cast<float>(grad[q] / n);
  }
  // Both networks see the reconstruction only through a detached input.
  disc_.backward(g_disc);
  recon_.backward(g_rec);
  return {recon_total / n, disc_total / n};
}

void CompositionBranch::save(const std::filesystem::path& recon_path, const std::filesystem::path& disc_path,
                             const nlohmann::json& extra) {
  nlohmann::json manifest = {{"kind", "composition_branch"},
                             {"config", cfg_.to_json()},
                             {"final_recon_loss", curve.recon_loss.empty() ? 0.0 : curve.recon_loss.back()},
                             {"final_disc_loss", curve.disc_loss.empty() ? 0.0 : curve.disc_loss.back()}};
  if (!extra.is_null()) manifest["extra"] = extra;
  manifest["role"] = "recon";
  nn::save_checkpoint(recon_path, recon_.params(), manifest);
  manifest["role"] = "disc";
  nn::save_checkpoint(disc_path, disc_.params(), manifest);
}

CompositionBranch CompositionBranch::load(const std::filesystem::path& recon_path,
                                          const std::filesystem::path& disc_path) {
  const auto manifest = nn::read_checkpoint_manifest(recon_path);
  if (manifest.value("kind", "") != "composition_branch") {
    throw IoError("not a composition-branch checkpoint: " + recon_path.string());
  }
  CompositionBranch b(CompBranchConfig::from_json(manifest.at("config")));
  nn::load_checkpoint(recon_path, b.recon_.params());
  nn::load_checkpoint(disc_path, b.disc_.params());
  return b;
}

CompositionBranch train_composition_branch(std::span<const CompositionMap> compmaps, const CompBranchConfig& cfg,
                                           const ProgressFn& progress) {
  if (compmaps.empty()) throw ArgumentError("composition branch training corpus is empty");
  if (cfg.iterations < 1 || cfg.batch_size < 1) throw ConfigError("iterations and batch size must be >= 1");
  CompositionBranch branch(cfg);
  auto params = branch.recon_params();
  for (auto* p : branch.disc_params()) params.push_back(p);
  nn::AdamConfig ac;
  ac.lr = cfg.lr;
  nn::Adam opt(params, ac);

  std::vector<sim::SyntheticSample> samples(static_cast<std::size_t>(cfg.batch_size));
  std::vector<const CompositionMap*> clean(samples.size());
  std::vector<const sim::SyntheticSample*> aug(samples.size());
  for (std::int64_t it = 0; it < cfg.iterations; ++it) {
    Rng rng(mix_seed(cfg.seed, 0xc0de0000ull + static_cast<std::uint64_t>(it)));
    for (std::size_t b = 0; b < samples.size(); ++b) {
      const auto& c = compmaps[rng.below(compmaps.size())];
      samples[b] = sim::sample_training_example(c, compmaps, rng.next());
      clean[b] = &c;
      aug[b] = &samples[b];
    }
    opt.set_lr(nn::step_decay_lr(cfg.lr, it, cfg.iterations, cfg.decay_fraction, cfg.decay_factor));
    opt.zero_grad();
    const auto [lr_, ld] = branch.forward_backward(clean, aug);
    if (!std::isfinite(lr_) || !std::isfinite(ld)) {
      throw TrainingError("composition branch loss became non-finite at iteration " + std::to_string(it) +
                          " (recon " + std::to_string(lr_) + ", disc " + std::to_string(ld) + ")");
    }
    opt.step();
    branch.curve.recon_loss.push_back(lr_);
    branch.curve.disc_loss.push_back(ld);
    if (progress) progress(it, lr_, ld);
  }
  return branch;
}

}  // namespace salad::comp
