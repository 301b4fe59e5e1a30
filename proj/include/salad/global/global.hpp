#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "salad/backends/backend.hpp"
#include "salad/core/types.hpp"

namespace salad::global {

/// Per-part-class mean feature vectors; row c-1 belongs to class c.
struct GlobalDescriptor {
  Eigen::MatrixXd vectors;     // K x D
  std::vector<bool> present;   // K

  int k() const { return static_cast<int>(vectors.rows()); }
  int dim() const { return static_cast<int>(vectors.cols()); }
};

/// `c` is brought to the feature resolution by nearest-neighbour resizing;
/// background is excluded.
GlobalDescriptor compute_descriptor(const backends::FeatureMap& f_t, const CompositionMap& c);

struct ClassGaussian {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;      // unbiased, before regularisation
  Eigen::MatrixXd sigma_inv;  // inverse of sigma + epsilon * I
  double epsilon = 0.0;
  double d_max = 0.0;
  std::size_t n_support = 0;
  bool pseudo_inverse = false;
};

/// Throws ArgumentError naming the class when fewer than two descriptors have it.
std::vector<ClassGaussian> fit_gaussians(std::span<const GlobalDescriptor> descriptors);

double mahalanobis(const ClassGaussian& g, const Eigen::VectorXd& x);

/// d_c per part class; absent classes take that class's d_max.
std::vector<double> class_distances(const GlobalDescriptor& g, std::span<const ClassGaussian> gaussians);

/// S_g = (1/K) sum_c d_c.
double mahalanobis_score(const GlobalDescriptor& g, std::span<const ClassGaussian> gaussians);

void save_gaussians(std::span<const ClassGaussian> gaussians, const std::filesystem::path& path);
std::vector<ClassGaussian> load_gaussians(const std::filesystem::path& path);

}  // namespace salad::global
