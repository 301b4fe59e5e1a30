#include "salad/global/global.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "salad/core/resize.hpp"

namespace salad::global {

GlobalDescriptor compute_descriptor(const backends::FeatureMap& f_t, const CompositionMap& c) {
  const CompositionMap small =
      c.width() == f_t.width && c.height() == f_t.height ? c : resize_nearest(c, f_t.width, f_t.height);
  if (small.width() != f_t.width || small.height() != f_t.height) {
    throw ShapeError("composition map and feature map resolutions differ");
  }
  const int k = c.parts();
  if (k < 1) throw ArgumentError("composition map has no part classes");
  GlobalDescriptor g;
  g.vectors = Eigen::MatrixXd::Zero(k, f_t.dim);
  g.present.assign(static_cast<std::size_t>(k), false);
  std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
  for (int y = 0; y < f_t.height; ++y) {
    for (int x = 0; x < f_t.width; ++x) {
      const int cls = small(x, y);
      if (cls == 0) continue;
      if (cls > k) throw ArgumentError("class value outside {0..K}");
      const float* v = f_t.at(x, y);
      for (int d = 0; d < f_t.dim; ++d) g.vectors(cls - 1, d) += v[d];
      ++counts[cls - 1];
    }
  }
  for (int i = 0; i < k; ++i) {
    if (counts[i] == 0) continue;
    g.vectors.row(i) /= static_cast<double>(counts[i]);
    g.present[i] = true;
  }
  return g;
}

double mahalanobis(const ClassGaussian& g, const Eigen::VectorXd& x) {
  const Eigen::VectorXd d = x - g.mu;
  return std::sqrt(std::max(0.0, d.dot(g.sigma_inv * d)));
}

std::vector<ClassGaussian> fit_gaussians(std::span<const GlobalDescriptor> descriptors) {
  if (descriptors.empty()) throw ArgumentError("no descriptors to fit");
  const int k = descriptors[0].k();
  const int dim = descriptors[0].dim();
  std::vector<ClassGaussian> out(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    std::vector<const GlobalDescriptor*> support;
    for (const auto& d : descriptors) {
      if (d.k() != k || d.dim() != dim) throw ShapeError("descriptors differ in shape");
      if (d.present[c]) support.push_back(&d);
    }
    if (support.size() < 2) {
      throw ArgumentError("class " + std::to_string(c + 1) + " is present in " + std::to_string(support.size()) +
                          " training image(s); at least 2 are needed");
    }
    ClassGaussian& g = out[c];
    g.n_support = support.size();
    g.mu = Eigen::VectorXd::Zero(dim);
    for (const auto* d : support) g.mu += d->vectors.row(c).transpose();
    g.mu /= static_cast<double>(support.size());
    g.sigma = Eigen::MatrixXd::Zero(dim, dim);
    for (const auto* d : support) {
      const Eigen::VectorXd r = d->vectors.row(c).transpose() - g.mu;
      g.sigma.noalias() += r * r.transpose();
    }
    g.sigma /= static_cast<double>(support.size() - 1);
    g.epsilon = std::max(1e-8, 1e-3 * g.sigma.diagonal().mean());
    const Eigen::MatrixXd reg = g.sigma + g.epsilon * Eigen::MatrixXd::Identity(dim, dim);
    const Eigen::LLT<Eigen::MatrixXd> llt(reg);
    if (llt.info() == Eigen::Success) {
      g.sigma_inv = llt.solve(Eigen::MatrixXd::Identity(dim, dim));
    }
    if (llt.info() != Eigen::Success || !g.sigma_inv.allFinite()) {
      spdlog::warn("class {}: regularised covariance is singular, using the pseudo-inverse", c + 1);
      g.sigma_inv = reg.completeOrthogonalDecomposition().pseudoInverse();
      g.pseudo_inverse = true;
    }
    g.sigma_inv = 0.5 * (g.sigma_inv + g.sigma_inv.transpose());
    for (const auto* d : support) g.d_max = std::max(g.d_max, mahalanobis(g, d->vectors.row(c).transpose()));
  }
  return out;
}

std::vector<double> class_distances(const GlobalDescriptor& g, std::span<const ClassGaussian> gaussians) {
  if (static_cast<std::size_t>(g.k()) != gaussians.size()) throw ShapeError("class count differs from the fitted model");
  std::vector<double> d(gaussians.size());
  for (int c = 0; c < g.k(); ++c) {
    if (gaussians[c].mu.size() != g.dim()) throw ShapeError("feature width differs from the fitted model");
    d[c] = g.present[c] ? mahalanobis(gaussians[c], g.vectors.row(c).transpose()) : gaussians[c].d_max;
  }
  return d;
}

double mahalanobis_score(const GlobalDescriptor& g, std::span<const ClassGaussian> gaussians) {
  const auto d = class_distances(g, gaussians);
  double s = 0.0;
  for (double v : d) s += v;
  s /= static_cast<double>(d.size());
  if (!std::isfinite(s)) throw ArgumentError("global score is not finite");
  return s;
}

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  std::vector<double> v(static_cast<std::size_t>(m.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), m.rows(), m.cols()) = m;
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", v}};
}

Eigen::MatrixXd matrix_from(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto v = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != rows * cols) throw IoError("matrix payload size mismatch");
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), rows, cols);
}

}  // namespace

void save_gaussians(std::span<const ClassGaussian> gaussians, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "salad-gaussians";
  j["version"] = 1;
  auto& arr = j["classes"];
  arr = nlohmann::json::array();
  for (const auto& g : gaussians) {
    arr.push_back({{"mu", matrix_json(g.mu)},
                   {"sigma", matrix_json(g.sigma)},
                   {"sigma_inv", matrix_json(g.sigma_inv)},
                   {"epsilon", g.epsilon},
                   {"d_max", g.d_max},
                   {"n_support", g.n_support},
                   {"pseudo_inverse", g.pseudo_inverse}});
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  // Full precision so a reload reproduces scores bit for bit.
  out << j.dump(1);
}

std::vector<ClassGaussian> load_gaussians(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt Gaussian file " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "salad-gaussians") throw IoError("not a Gaussian file: " + path.string());
  std::vector<ClassGaussian> out;
  for (const auto& e : j.at("classes")) {
    ClassGaussian g;
    g.mu = matrix_from(e.at("mu"));
    g.sigma = matrix_from(e.at("sigma"));
    g.sigma_inv = matrix_from(e.at("sigma_inv"));
    g.epsilon = e.at("epsilon").get<double>();
    g.d_max = e.at("d_max").get<double>();
    g.n_support = e.at("n_support").get<std::size_t>();
    g.pseudo_inverse = e.at("pseudo_inverse").get<bool>();
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace salad::global
