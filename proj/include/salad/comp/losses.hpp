#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace salad::comp {

// Probability and logit buffers are channel-major for one sample:
// value(c, p) = buf[c * pixels + p]. All losses are means over pixels.

inline constexpr double kProbClamp = 1e-7;

enum class FocalMode { multiclass, binary };

/// Multiclass: probs holds classes * pixels entries and target holds class ids.
/// Binary: probs holds the foreground probability per pixel, target is 0/1.
double focal_loss(std::span<const double> probs, std::span<const int> target, int classes,
                  double gamma, FocalMode mode);

/// 1 - mean over classes of (2 sum p t + eps) / (sum p + sum t + eps).
double dice_loss(std::span<const double> probs, std::span<const double> target_onehot, int classes,
                 double eps = 1.0);

/// Mean absolute difference.
double l1_loss(std::span<const double> a, std::span<const double> b);

/// Focal (multiclass, on softmax probabilities) + dice, from raw logits.
/// `grad`, when given, receives d(loss)/d(logits).
double recon_loss(std::span<const double> logits, std::span<const int> target, int classes,
                  double gamma, std::vector<double>* grad);

/// alpha * binary focal + L1 on probabilities in [0,1].
double disc_loss(std::span<const int> gt, std::span<const double> pred, double alpha, double gamma);

/// Same on logits (pred = sigmoid(logits)), with optional gradient.
double disc_loss_logits(std::span<const int> gt, std::span<const double> logits, double alpha,
                        double gamma, std::vector<double>* grad);

void softmax(std::span<const double> logits, int classes, std::vector<double>& probs);

}  // namespace salad::comp
