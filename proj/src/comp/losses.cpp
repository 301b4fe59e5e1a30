#include "salad/comp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "salad/core/error.hpp"

namespace salad::comp {

namespace {

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw ArgumentError(std::string(what) + ": non-finite input");
  }
}

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0); }

double focal_term(double pt, double gamma) { return -std::pow(1.0 - pt, gamma) * std::log(pt); }

// d/dp of -(1-p)^g log p, zero where the clamp is active.
double focal_deriv(double p, double gamma) {
  if (p < kProbClamp) return 0.0;
  const double q = 1.0 - p;
  const double first = gamma == 0.0 ? 0.0 : gamma * std::pow(q, gamma - 1.0) * std::log(p);
  return first - std::pow(q, gamma) / p;
}

std::size_t pixels_of(std::size_t n, int classes) {
  if (classes < 1 || n % static_cast<std::size_t>(classes) != 0) {
    throw ShapeError("buffer size is not a multiple of the class count");
  }
  return n / static_cast<std::size_t>(classes);
}

}  // namespace

void softmax(std::span<const double> logits, int classes, std::vector<double>& probs) {
  const std::size_t n = pixels_of(logits.size(), classes);
  probs.resize(logits.size());
  for (std::size_t p = 0; p < n; ++p) {
    double mx = logits[p];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, logits[c * n + p]);
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) {
      probs[c * n + p] = std::exp(logits[c * n + p] - mx);
      sum += probs[c * n + p];
    }
    for (int c = 0; c < classes; ++c) probs[c * n + p] /= sum;
  }
}

double focal_loss(std::span<const double> probs, std::span<const int> target, int classes,
                  double gamma, FocalMode mode) {
  require_finite(probs, "focal_loss");
  const std::size_t n = mode == FocalMode::binary ? probs.size() : pixels_of(probs.size(), classes);
  if (target.size() != n) throw ShapeError("focal_loss: target size mismatch");
  if (n == 0) throw ShapeError("focal_loss: empty input");
  double sum = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    double pt;
    if (mode == FocalMode::binary) {
      pt = target[p] ? probs[p] : 1.0 - probs[p];
    } else {
      if (target[p] < 0 || target[p] >= classes) throw ArgumentError("focal_loss: target class out of range");
      pt = probs[static_cast<std::size_t>(target[p]) * n + p];
    }
    sum += focal_term(clamp_prob(pt), gamma);
  }
  return sum / static_cast<double>(n);
}

double dice_loss(std::span<const double> probs, std::span<const double> target_onehot, int classes,
                 double eps) {
  require_finite(probs, "dice_loss");
  require_finite(target_onehot, "dice_loss");
  if (probs.size() != target_onehot.size()) throw ShapeError("dice_loss: shape mismatch");
  const std::size_t n = pixels_of(probs.size(), classes);
  double mean = 0.0;
  for (int c = 0; c < classes; ++c) {
    double inter = 0.0, sp = 0.0, st = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      inter += probs[c * n + p] * target_onehot[c * n + p];
      sp += probs[c * n + p];
      st += target_onehot[c * n + p];
    }
    mean += (2.0 * inter + eps) / (sp + st + eps);
  }
  return 1.0 - mean / classes;
}

double l1_loss(std::span<const double> a, std::span<const double> b) {
  require_finite(a, "l1_loss");
  require_finite(b, "l1_loss");
  if (a.size() != b.size() || a.empty()) throw ShapeError("l1_loss: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double recon_loss(std::span<const double> logits, std::span<const int> target, int classes,
                  double gamma, std::vector<double>* grad) {
  require_finite(logits, "recon_loss");
  const std::size_t n = pixels_of(logits.size(), classes);
  if (target.size() != n) throw ShapeError("recon_loss: target size mismatch");
  std::vector<double> probs;
  softmax(logits, classes, probs);
  std::vector<double> onehot(logits.size(), 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    if (target[p] < 0 || target[p] >= classes) throw ArgumentError("recon_loss: target class out of range");
    onehot[static_cast<std::size_t>(target[p]) * n + p] = 1.0;
  }
  const double loss = focal_loss(probs, target, classes, gamma, FocalMode::multiclass) +
                      dice_loss(probs, onehot, classes);
  if (!grad) return loss;

  // d(loss)/d(probs), then through the softmax Jacobian.
  std::vector<double> dp(logits.size(), 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t i = static_cast<std::size_t>(target[p]) * n + p;
    dp[i] += focal_deriv(probs[i], gamma) / static_cast<double>(n);
  }
  constexpr double eps = 1.0;
  for (int c = 0; c < classes; ++c) {
    double inter = 0.0, s = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      inter += probs[c * n + p] * onehot[c * n + p];
      s += probs[c * n + p] + onehot[c * n + p];
    }
    const double denom = s + eps;
    for (std::size_t p = 0; p < n; ++p) {
      const double d = (2.0 * onehot[c * n + p] * denom - (2.0 * inter + eps)) / (denom * denom);
      dp[c * n + p] -= d / classes;
    }
  }
  grad->assign(logits.size(), 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    double dot = 0.0;
    for (int c = 0; c < classes; ++c) dot += probs[c * n + p] * dp[c * n + p];
    for (int c = 0; c < classes; ++c) {
      (*grad)[c * n + p] = probs[c * n + p] * (dp[c * n + p] - dot);
    }
  }
  return loss;
}

double disc_loss(std::span<const int> gt, std::span<const double> pred, double alpha, double gamma) {
  require_finite(pred, "disc_loss");
  if (gt.size() != pred.size()) throw ShapeError("disc_loss: shape mismatch");
  std::vector<double> target(gt.begin(), gt.end());
  return alpha * focal_loss(pred, gt, 2, gamma, FocalMode::binary) + l1_loss(target, pred);
}

double disc_loss_logits(std::span<const int> gt, std::span<const double> logits, double alpha,
                        double gamma, std::vector<double>* grad) {
  require_finite(logits, "disc_loss");
  std::vector<double> pred(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) pred[i] = 1.0 / (1.0 + std::exp(-logits[i]));
  const double loss = disc_loss(gt, pred, alpha, gamma);
  if (!grad) return loss;
  const double inv_n = 1.0 / static_cast<double>(logits.size());
  grad->resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = pred[i];
    const double pt = gt[i] ? p : 1.0 - p;
    const double dpt_dp = gt[i] ? 1.0 : -1.0;
    const double d_focal = focal_deriv(pt, gamma) * dpt_dp;
    const double diff = p - gt[i];
    const double d_l1 = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    (*grad)[i] = (alpha * d_focal + d_l1) * inv_n * p * (1.0 - p);
  }
  return loss;
}

}  // namespace salad::comp
