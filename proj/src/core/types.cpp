#include "salad/core/types.hpp"

#include <algorithm>
#include <cmath>

namespace salad {

std::size_t count(const Mask& m) {
  return static_cast<std::size_t>(std::count_if(m.values().begin(), m.values().end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

double iou(const Mask& a, const Mask& b) {
  if (!a.same_shape(b)) throw ShapeError("iou: mask shapes differ");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0;
    const bool y = b[i] != 0;
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "unknown";
}

std::string to_string(Label l) {
  switch (l) {
    case Label::good: return "good";
    case Label::logical_anomaly: return "logical_anomaly";
    case Label::structural_anomaly: return "structural_anomaly";
    case Label::unknown: return "unknown";
  }
  return "unknown";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw ArgumentError("unknown split: " + s);
}

void ImageSample::validate() const {
  if (pixels.width != kWorkingSize || pixels.height != kWorkingSize) {
    throw ArgumentError("image is not at the working resolution: " + source_path);
  }
  for (float v : pixels.rgb) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw ArgumentError("image pixel outside [0,1]: " + source_path);
    }
  }
}

void CompositionMap::validate() const {
  if (num_classes < 1) throw ArgumentError("composition map needs at least one class");
  for (std::uint16_t v : classes.values()) {
    if (v >= num_classes) {
      throw ArgumentError("composition map value " + std::to_string(v) + " outside {0.." +
                          std::to_string(num_classes - 1) + "}");
    }
  }
}

void AnomalyMap::validate() const {
  for (float v : scores.values()) {
    if (!std::isfinite(v)) throw ArgumentError("anomaly map holds a non-finite value");
    if (v < 0.0f) throw ArgumentError("anomaly map holds a negative value");
    if (range == MapRange::unit && v > 1.0f) throw ArgumentError("anomaly map value above 1");
  }
}

float AnomalyMap::max() const {
  if (scores.empty()) throw ArgumentError("empty anomaly map");
  return *std::max_element(scores.values().begin(), scores.values().end());
}

}  // namespace salad
