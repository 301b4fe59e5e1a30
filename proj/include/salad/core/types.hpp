#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "salad/core/error.hpp"

namespace salad {

/// Every pipeline stage works on square images of this side length.
inline constexpr int kWorkingSize = 256;

/// Dense single-channel 2-D array, row-major.
template <class T>
class Plane {
 public:
  Plane() = default;
  Plane(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {
    if (width < 0 || height < 0) throw ArgumentError("negative plane size");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& operator()(int x, int y) const {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  bool same_shape(const Plane& o) const { return width_ == o.width_ && height_ == o.height_; }
  template <class U>
  bool same_shape(const Plane<U>& o) const {
    return width_ == o.width() && height_ == o.height();
  }

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// Boolean mask stored one byte per pixel (0 or 1).
using Mask = Plane<std::uint8_t>;

std::size_t count(const Mask& m);
double iou(const Mask& a, const Mask& b);

/// Interleaved RGB image with values in [0,1].
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;

  RgbImage() = default;
  RgbImage(int w, int h, float fill = 0.0f)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

  float& at(int x, int y, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int x, int y, int c) const {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  const float* pixel(int x, int y) const {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

enum class Split { train, validation, test };
enum class Label { good, logical_anomaly, structural_anomaly, unknown };

std::string to_string(Split s);
std::string to_string(Label l);
Split split_from_string(const std::string& s);

struct ImageSample {
  RgbImage pixels;
  std::string source_path;
  Split split = Split::train;
  Label label = Label::unknown;

  /// Throws ArgumentError unless the image is working-size with finite values in [0,1].
  void validate() const;
};

/// Per-pixel component class (0 = background, 1..K = parts).
struct CompositionMap {
  Plane<std::uint16_t> classes;
  int num_classes = 0;  // K + 1

  CompositionMap() = default;
  CompositionMap(int width, int height, int num_classes_)
      : classes(width, height, 0), num_classes(num_classes_) {}

  int width() const { return classes.width(); }
  int height() const { return classes.height(); }
  int parts() const { return num_classes - 1; }
  std::uint16_t operator()(int x, int y) const { return classes(x, y); }
  std::uint16_t& operator()(int x, int y) { return classes(x, y); }

  /// Throws ArgumentError when a value falls outside {0..K}.
  void validate() const;

  friend bool operator==(const CompositionMap&, const CompositionMap&) = default;
};

enum class MapRange { unit, nonnegative };

struct AnomalyMap {
  Plane<float> scores;
  MapRange range = MapRange::nonnegative;

  /// Throws ArgumentError on non-finite or out-of-range values.
  void validate() const;
  float max() const;
};

}  // namespace salad
