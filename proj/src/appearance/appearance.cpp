#include "salad/appearance/appearance.hpp"

#include <algorithm>
#include <cmath>

#include "salad/core/random.hpp"
#include "salad/core/resize.hpp"
#include "salad/nn/convert.hpp"
#include "salad/nn/optim.hpp"

namespace salad::appearance {

nlohmann::json StudentTeacherConfig::to_json() const {
  return {{"teacher", backends::to_json(teacher)},
          {"iterations", iterations},
          {"optimizer", "adam"},
          {"lr", lr},
          {"weight_decay", weight_decay},
          {"decay_fraction", decay_fraction},
          {"decay_factor", decay_factor},
          {"decay_step", nn::decay_step(iterations, decay_fraction)},
          {"batch_size", batch_size},
          {"student_width", student_width},
          {"student_levels", student_levels},
          {"ae_width", ae_width},
          {"ae_levels", ae_levels},
          {"st_weight", st_weight},
          {"seed", seed}};
}

StudentTeacherConfig StudentTeacherConfig::from_json(const nlohmann::json& j) {
  StudentTeacherConfig c;
  c.teacher = backends::backend_config_from_json(j.at("teacher"));
  c.iterations = j.at("iterations").get<std::int64_t>();
  c.lr = j.at("lr").get<float>();
  c.weight_decay = j.at("weight_decay").get<float>();
  c.decay_fraction = j.at("decay_fraction").get<double>();
  c.decay_factor = j.at("decay_factor").get<float>();
  c.batch_size = j.at("batch_size").get<int>();
  c.student_width = j.at("student_width").get<int>();
  c.student_levels = j.at("student_levels").get<int>();
  c.ae_width = j.at("ae_width").get<int>();
  c.ae_levels = j.at("ae_levels").get<int>();
  c.st_weight = j.at("st_weight").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

namespace {

nn::UNetConfig net(int in, int out, int width, int levels, bool skips) {
  nn::UNetConfig u;
  u.in_channels = in;
  u.out_channels = out;
  u.base_width = width;
  u.levels = levels;
  u.skips = skips;
  return u;
}

int space_to_depth(int feature_size) {
  if (feature_size < 1 || kWorkingSize % feature_size != 0) {
    throw ShapeError("teacher feature size " + std::to_string(feature_size) + " does not divide " +
                     std::to_string(kWorkingSize));
  }
  return kWorkingSize / feature_size;
}

// (H_f, W_f, D) interleaved -> (D, H_f, W_f) planes appended to `dst`.
void to_planes(const backends::FeatureMap& f, float* dst) {
  const std::size_t hw = static_cast<std::size_t>(f.width) * f.height;
  for (std::size_t p = 0; p < hw; ++p) {
    for (int c = 0; c < f.dim; ++c) dst[c * hw + p] = f.values[p * f.dim + c];
  }
}

// Mean squared error between channel ranges of `a` and `b`; writes 2(a-b)/count
// into `ga` (and its negation into `gb` when given).
double mse(const nn::Tensor& a, int a0, const nn::Tensor& b, int b0, int channels, nn::Tensor* ga,
           nn::Tensor* gb) {
  const std::size_t hw = a.plane();
  const double count = static_cast<double>(a.n) * channels * hw;
  double s = 0.0;
  for (int i = 0; i < a.n; ++i) {
    for (int c = 0; c < channels; ++c) {
      const float* pa = a.channel(i, a0 + c);
      const float* pb = b.channel(i, b0 + c);
      float* qa = ga ? ga->channel(i, a0 + c) : nullptr;
      float* qb = gb ? gb->channel(i, b0 + c) : nullptr;
      for (std::size_t p = 0; p < hw; ++p) {
        const double d = static_cast<double>(pa[p]) - pb[p];
        s += d * d;
        if (qa) qa[p] += static_cast<float>(2.0 * d / count);
        if (qb) qb[p] -= static_cast<float>(2.0 * d / count);
      }
    }
  }
  return s / count;
}

}  // namespace

StudentTeacherModel::StudentTeacherModel(const StudentTeacherConfig& cfg, int teacher_dim, int feature_size)
    : cfg_(cfg), dim_(teacher_dim), feature_size_(feature_size) {
  const int s = space_to_depth(feature_size);
  student_ = nn::UNet(net(3 * s * s, 2 * teacher_dim, cfg.student_width, cfg.student_levels, true),
                      mix_seed(cfg.seed, 0x57dull));
  ae_ = nn::UNet(net(3 * s * s, teacher_dim, cfg.ae_width, cfg.ae_levels, false), mix_seed(cfg.seed, 0xae0ull));
  teacher_ = backends::make_feature_extractor(cfg.teacher);
  teacher_mean.assign(static_cast<std::size_t>(teacher_dim), 0.0f);
  teacher_std.assign(static_cast<std::size_t>(teacher_dim), 1.0f);
}

nn::Tensor StudentTeacherModel::network_input(std::span<const RgbImage* const> images) const {
  return nn::pixel_unshuffle(nn::image_batch(images), space_to_depth(feature_size_));
}

backends::FeatureMap StudentTeacherModel::teacher_features(const ImageSample& image) const {
  backends::FeatureMap f = teacher_->extract(image);
  if (f.dim != dim_ || f.width != feature_size_ || f.height != feature_size_) {
    throw ShapeError("teacher output does not match the appearance model");
  }
  const std::size_t hw = static_cast<std::size_t>(f.width) * f.height;
  for (std::size_t p = 0; p < hw; ++p) {
    for (int c = 0; c < dim_; ++c) {
      float& v = f.values[p * dim_ + c];
      v = (v - teacher_mean[c]) / teacher_std[c];
    }
  }
  return f;
}

AppearanceOutput StudentTeacherModel::infer_with_teacher(const ImageSample& image, const backends::FeatureMap& f_t) {
  if (!trained) throw ArgumentError("appearance model is untrained");
  const RgbImage* im = &image.pixels;
  const nn::Tensor x = network_input(std::span<const RgbImage* const>(&im, 1));
  const nn::Tensor st = student_.forward(x);
  const nn::Tensor ae = ae_.forward(x);
  nn::Tensor t(1, dim_, f_t.height, f_t.width);
  to_planes(f_t, t.data.data());

  const std::size_t hw = t.plane();
  Plane<float> map(f_t.width, f_t.height);
  const double w = cfg_.st_weight;
  for (std::size_t p = 0; p < hw; ++p) {
    double d_st = 0.0, d_ae = 0.0;
    for (int c = 0; c < dim_; ++c) {
      const double a = static_cast<double>(t.channel(0, c)[p]) - st.channel(0, c)[p];
      const double b = static_cast<double>(ae.channel(0, c)[p]) - st.channel(0, dim_ + c)[p];
      d_st += a * a;
      d_ae += b * b;
    }
    map[p] = static_cast<float>((w * d_st + (1.0 - w) * d_ae) / dim_);
  }
  AppearanceOutput out;
  out.a_a.range = MapRange::nonnegative;
  out.a_a.scores = resize_bilinear(map, image.pixels.width, image.pixels.height);
  for (float& v : out.a_a.scores.values()) v = std::max(0.0f, v);
  out.features = f_t;
  return out;
}

AppearanceOutput StudentTeacherModel::infer(const ImageSample& image) {
  return infer_with_teacher(image, teacher_features(image));
}

void StudentTeacherModel::save(const std::filesystem::path& path) {
  std::vector<double> curve;
  const std::size_t stride = std::max<std::size_t>(1, loss_curve.size() / 200);
  for (std::size_t i = 0; i < loss_curve.size(); i += stride) curve.push_back(loss_curve[i]);
  nlohmann::json manifest = {{"kind", "appearance"},
                             {"backend", id()},
                             {"config", cfg_.to_json()},
                             {"teacher_dim", dim_},
                             {"feature_size", feature_size_},
                             {"teacher_mean", teacher_mean},
                             {"teacher_std", teacher_std},
                             {"trained", trained},
                             {"loss_curve", curve}};
  auto params = student_.params();
  for (auto* p : ae_.params()) params.push_back(p);
  nn::save_checkpoint(path, params, manifest);
}

std::unique_ptr<StudentTeacherModel> StudentTeacherModel::load(const std::filesystem::path& path) {
  const auto manifest = nn::read_checkpoint_manifest(path);
  if (manifest.value("kind", "") != "appearance") throw IoError("not an appearance checkpoint: " + path.string());
  auto m = std::make_unique<StudentTeacherModel>(StudentTeacherConfig::from_json(manifest.at("config")),
                                                 manifest.at("teacher_dim").get<int>(),
                                                 manifest.at("feature_size").get<int>());
  m->teacher_mean = manifest.at("teacher_mean").get<std::vector<float>>();
  m->teacher_std = manifest.at("teacher_std").get<std::vector<float>>();
  m->trained = manifest.at("trained").get<bool>();
  m->loss_curve = manifest.at("loss_curve").get<std::vector<double>>();
  auto params = m->student_.params();
  for (auto* p : m->ae_.params()) params.push_back(p);
  nn::load_checkpoint(path, params);
  return m;
}

std::unique_ptr<StudentTeacherModel> train_appearance(std::span<const ImageSample> images,
                                                      const StudentTeacherConfig& cfg, const ProgressFn& progress) {
  if (images.empty()) throw ArgumentError("appearance training corpus is empty");
  if (cfg.iterations < 1 || cfg.batch_size < 1) throw ConfigError("iterations and batch size must be >= 1");
  const auto teacher = backends::make_feature_extractor(cfg.teacher);

  std::vector<backends::FeatureMap> feats;
  feats.reserve(images.size());
  for (const auto& im : images) feats.push_back(teacher->extract(im));
  const int dim = feats[0].dim;
  const int size = feats[0].width;
  if (feats[0].height != size) throw ShapeError("teacher features must be square");
  auto model = std::make_unique<StudentTeacherModel>(cfg, dim, size);

  // Per-channel normalisation statistics.
  std::vector<double> sum(dim, 0.0), sq(dim, 0.0);
  double n = 0.0;
  for (const auto& f : feats) {
    for (std::size_t p = 0; p < f.values.size(); p += dim) {
      for (int c = 0; c < dim; ++c) {
        sum[c] += f.values[p + c];
        sq[c] += static_cast<double>(f.values[p + c]) * f.values[p + c];
      }
    }
    n += static_cast<double>(f.values.size() / dim);
  }
  for (int c = 0; c < dim; ++c) {
    const double mean = sum[c] / n;
    model->teacher_mean[c] = static_cast<float>(mean);
    model->teacher_std[c] = static_cast<float>(std::max(1e-6, std::sqrt(std::max(0.0, sq[c] / n - mean * mean))));
  }
  const std::size_t plane_size = static_cast<std::size_t>(dim) * size * size;
  std::vector<float> targets(plane_size * images.size());
  for (std::size_t i = 0; i < feats.size(); ++i) {
    auto& f = feats[i];
    for (std::size_t p = 0; p < f.values.size(); p += dim) {
      for (int c = 0; c < dim; ++c) f.values[p + c] = (f.values[p + c] - model->teacher_mean[c]) / model->teacher_std[c];
    }
    to_planes(f, targets.data() + i * plane_size);
  }

  auto params = model->student().params();
  for (auto* p : model->autoencoder().params()) params.push_back(p);
  nn::AdamConfig ac;
  ac.lr = cfg.lr;
  ac.weight_decay = cfg.weight_decay;
  nn::Adam opt(params, ac);

  std::vector<const RgbImage*> batch(static_cast<std::size_t>(cfg.batch_size));
  nn::Tensor t(cfg.batch_size, dim, size, size);
  for (std::int64_t it = 0; it < cfg.iterations; ++it) {
    Rng rng(mix_seed(cfg.seed, 0xa99e0000ull + static_cast<std::uint64_t>(it)));
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::size_t idx = rng.below(images.size());
      batch[b] = &images[idx].pixels;
      std::copy_n(targets.data() + idx * plane_size, plane_size, t.sample(b));
    }
    const nn::Tensor x = model->network_input(batch);
    opt.set_lr(nn::step_decay_lr(cfg.lr, it, cfg.iterations, cfg.decay_fraction, cfg.decay_factor));
    opt.zero_grad();
    const nn::Tensor st = model->student().forward(x);
    const nn::Tensor ae = model->autoencoder().forward(x);
    nn::Tensor g_st(st.n, st.c, st.h, st.w);
    nn::Tensor g_ae(ae.n, ae.c, ae.h, ae.w);
    double loss = mse(st, 0, t, 0, dim, &g_st, nullptr);
    loss += mse(ae, 0, t, 0, dim, &g_ae, nullptr);
    loss += mse(st, dim, ae, 0, dim, &g_st, nullptr);  // autoencoder output is a fixed target here
    if (!std::isfinite(loss)) {
      throw TrainingError("appearance loss became non-finite at iteration " + std::to_string(it));
    }
    model->student().backward(g_st);
    model->autoencoder().backward(g_ae);
    opt.step();
    model->loss_curve.push_back(loss);
    if (progress) progress(it, loss);
  }
  model->trained = true;
  return model;
}

std::vector<std::string> registered_appearance_backends() { return {"student-teacher"}; }

std::unique_ptr<AppearanceModel> load_appearance_model(const std::string& backend,
                                                       const std::filesystem::path& path) {
  if (backend == "student-teacher") return StudentTeacherModel::load(path);
  throw ConfigError("unknown appearance backend: " + backend);
}

}  // namespace salad::appearance
