#include "salad/core/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "salad/core/resize.hpp"

namespace salad {

namespace {

struct SimpleImage {
  png_image img;
  SimpleImage() {
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
  }
  ~SimpleImage() { png_image_free(&img); }
};

std::vector<std::uint8_t> read_simple(const std::filesystem::path& path, png_uint_32 format,
                                      int& width, int& height) {
  SimpleImage s;
  if (png_image_begin_read_from_file(&s.img, path.c_str()) == 0) {
    throw IoError("cannot decode PNG " + path.string() + ": " + s.img.message);
  }
  s.img.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(s.img));
  if (png_image_finish_read(&s.img, nullptr, buf.data(), 0, nullptr) == 0) {
    throw IoError("cannot decode PNG " + path.string() + ": " + s.img.message);
  }
  width = static_cast<int>(s.img.width);
  height = static_cast<int>(s.img.height);
  return buf;
}

void write_simple(const std::filesystem::path& path, png_uint_32 format, int width, int height,
                  const std::uint8_t* data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  SimpleImage s;
  s.img.width = static_cast<png_uint_32>(width);
  s.img.height = static_cast<png_uint_32>(height);
  s.img.format = format;
  if (png_image_write_to_file(&s.img, path.c_str(), 0, data, 0, nullptr) == 0) {
    throw IoError("cannot write PNG " + path.string() + ": " + s.img.message);
  }
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

RgbImage read_png_rgb(const std::filesystem::path& path) {
  int w = 0;
  int h = 0;
  const auto buf = read_simple(path, PNG_FORMAT_RGB, w, h);
  RgbImage out(w, h);
  for (std::size_t i = 0; i < buf.size(); ++i) out.rgb[i] = buf[i] / 255.0f;
  return out;
}

void write_png_rgb(const RgbImage& image, const std::filesystem::path& path) {
  std::vector<std::uint8_t> buf(image.rgb.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_byte(image.rgb[i]);
  write_simple(path, PNG_FORMAT_RGB, image.width, image.height, buf.data());
}

Mask read_png_mask(const std::filesystem::path& path, int value) {
  int w = 0;
  int h = 0;
  const auto buf = read_simple(path, PNG_FORMAT_GRAY, w, h);
  Mask m(w, h);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    m[i] = value < 0 ? (buf[i] != 0) : (buf[i] == value);
  }
  return m;
}

void write_png_mask(const Mask& mask, const std::filesystem::path& path) {
  std::vector<std::uint8_t> buf(mask.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = mask[i] ? 255 : 0;
  write_simple(path, PNG_FORMAT_GRAY, mask.width(), mask.height(), buf.data());
}

Plane<std::uint8_t> read_png_gray(const std::filesystem::path& path) {
  int w = 0;
  int h = 0;
  const auto buf = read_simple(path, PNG_FORMAT_GRAY, w, h);
  Plane<std::uint8_t> out(w, h);
  std::copy(buf.begin(), buf.end(), out.values().begin());
  return out;
}

void write_png_gray(const Plane<std::uint8_t>& values, const std::filesystem::path& path) {
  write_simple(path, PNG_FORMAT_GRAY, values.width(), values.height(), values.data());
}

void write_png_heatmap(const Plane<float>& plane, float lo, float hi,
                       const std::filesystem::path& path) {
  std::vector<std::uint8_t> buf(plane.size());
  const float span = hi > lo ? hi - lo : 1.0f;
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_byte((plane[i] - lo) / span);
  write_simple(path, PNG_FORMAT_GRAY, plane.width(), plane.height(), buf.data());
}

ImageSample load_image(const std::filesystem::path& path, Split split, Label label) {
  ImageSample s;
  s.pixels = read_png_rgb(path);
  if (s.pixels.width != kWorkingSize || s.pixels.height != kWorkingSize) {
    s.pixels = resize_bilinear(s.pixels, kWorkingSize, kWorkingSize);
  }
  s.source_path = path.string();
  s.split = split;
  s.label = label;
  return s;
}

}  // namespace salad
