#include "salad/core/compmap_io.hpp"

#include <png.h>

#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

namespace salad {

namespace {

constexpr const char* kClassKey = "salad.num_classes";

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::array<png_color, 256> make_palette() {
  std::array<png_color, 256> pal{};
  pal[0] = {0, 0, 0};
  // Golden-angle hue walk keeps neighbouring class ids visually distinct.
  for (int i = 1; i < 256; ++i) {
    const double h = std::fmod(i * 137.508, 360.0) / 60.0;
    const double s = 0.75;
    const double v = i % 2 ? 0.95 : 0.75;
    const double c = v * s;
    const double x = c * (1.0 - std::fabs(std::fmod(h, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(h)) {
      case 0: r = c; g = x; break;
      case 1: r = x; g = c; break;
      case 2: g = c; b = x; break;
      case 3: g = x; b = c; break;
      case 4: r = x; b = c; break;
      default: r = c; b = x; break;
    }
    const double m = v - c;
    pal[i] = {static_cast<png_byte>((r + m) * 255), static_cast<png_byte>((g + m) * 255),
              static_cast<png_byte>((b + m) * 255)};
  }
  return pal;
}

}  // namespace

void save_composition_map(const CompositionMap& map, const std::filesystem::path& path) {
  for (std::uint16_t v : map.classes.values()) {
    if (v > 255) {
      throw IoError("composition map value " + std::to_string(v) +
                    " does not fit an 8-bit palette image: " + path.string());
    }
  }
  if (map.num_classes < 1 || map.num_classes > 256) {
    throw IoError("composition map class count out of the 8-bit range: " + path.string());
  }
  map.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path.string());

  std::vector<png_byte> rows(map.classes.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<png_byte>(map.classes[i]);
  std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(map.height()));
  for (int y = 0; y < map.height(); ++y) row_ptrs[y] = rows.data() + static_cast<std::size_t>(y) * map.width();
  const auto palette = make_palette();
  const std::string count = std::to_string(map.num_classes);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed: " + path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing composition map: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(map.width()),
               static_cast<png_uint_32>(map.height()), 8, PNG_COLOR_TYPE_PALETTE,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_PLTE(png, info, const_cast<png_colorp>(palette.data()), 256);
  png_text text{};
  text.compression = PNG_TEXT_COMPRESSION_NONE;
  text.key = const_cast<png_charp>(kClassKey);
  text.text = const_cast<png_charp>(count.c_str());
  png_set_text(png, info, &text, 1);
  png_write_info(png, info);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

CompositionMap load_composition_map(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open composition map: " + path.string());
  std::array<png_byte, 8> sig{};
  if (std::fread(sig.data(), 1, sig.size(), fp.get()) != sig.size() ||
      png_sig_cmp(sig.data(), 0, sig.size()) != 0) {
    throw IoError("not a PNG composition map: " + path.string());
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed: " + path.string());
  }
  std::vector<png_byte> pixels;
  std::vector<png_bytep> row_ptrs;
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  volatile int num_classes = -1;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt composition map: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, static_cast<int>(sig.size()));
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (bit_depth != 8 || (color_type != PNG_COLOR_TYPE_PALETTE && color_type != PNG_COLOR_TYPE_GRAY)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("composition map is not an 8-bit indexed image: " + path.string());
  }
  png_textp texts = nullptr;
  int ntext = 0;
  png_get_text(png, info, &texts, &ntext);
  for (int i = 0; i < ntext; ++i) {
    if (std::strcmp(texts[i].key, kClassKey) == 0) num_classes = std::atoi(texts[i].text);
  }
  pixels.resize(static_cast<std::size_t>(width) * height);
  row_ptrs.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) row_ptrs[y] = pixels.data() + static_cast<std::size_t>(y) * width;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (num_classes < 1) {
    const auto dir = path.parent_path();
    if (std::filesystem::exists(dir / "meta.json")) {
      num_classes = read_cache_meta(dir).num_classes;
    } else {
      throw IoError("composition map carries no class count and no meta.json: " + path.string());
    }
  }
  const int classes = num_classes;
  CompositionMap map(static_cast<int>(width), static_cast<int>(height), classes);
  for (std::size_t i = 0; i < pixels.size(); ++i) map.classes[i] = pixels[i];
  try {
    map.validate();
  } catch (const ArgumentError& e) {
    throw IoError(std::string(e.what()) + ": " + path.string());
  }
  return map;
}

void write_cache_meta(const CompMapCacheMeta& meta, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["num_classes"] = meta.num_classes;
  j["seed"] = meta.seed;
  j["pipeline_version"] = meta.pipeline_version;
  j["backend_id"] = meta.backend_id;
  std::ofstream out(dir / "meta.json");
  if (!out) throw IoError("cannot write " + (dir / "meta.json").string());
  out << j.dump(2) << '\n';
}

CompMapCacheMeta read_cache_meta(const std::filesystem::path& dir) {
  const auto p = dir / "meta.json";
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  try {
    const auto j = nlohmann::json::parse(in);
    CompMapCacheMeta m;
    m.num_classes = j.at("num_classes").get<int>();
    m.seed = j.value("seed", std::uint64_t{0});
    m.pipeline_version = j.value("pipeline_version", std::string{});
    m.backend_id = j.value("backend_id", std::string{});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed " + p.string() + ": " + e.what());
  }
}

}  // namespace salad
