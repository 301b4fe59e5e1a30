#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "salad/core/compmap_io.hpp"
#include "salad/core/dataset.hpp"
#include "salad/core/error.hpp"
#include "salad/core/hash.hpp"
#include "salad/core/image_io.hpp"
#include "salad/core/random.hpp"
#include "salad/core/resize.hpp"

using namespace salad;
namespace fs = std::filesystem;

namespace {

void touch_png(const fs::path& p, float v = 0.5f) {
  fs::create_directories(p.parent_path());
  write_png_rgb(RgbImage(8, 8, v), p);
}

std::vector<SampleRecord> records(int n) {
  std::vector<SampleRecord> out;
  for (int i = 0; i < n; ++i) out.push_back({fs::path("train/good") / (std::to_string(1000 + i) + ".png")});
  return out;
}

}  // namespace

TEST(DatasetIndex, LocoCountsAndSortedPaths) {
  salad::testing::TempDir dir("loco");
  const fs::path cat = dir / "toycat";
  for (const char* n : {"002", "000", "001"}) touch_png(cat / "train/good" / (std::string(n) + ".png"));
  touch_png(cat / "validation/good/000.png");
  touch_png(cat / "test/good/000.png");
  touch_png(cat / "test/logical_anomalies/000.png");
  const auto idx = load_dataset_index(dir.path(), DatasetLayout::loco);
  const auto& c = idx.category("toycat");
  ASSERT_EQ(c.train.size(), 3u);
  EXPECT_EQ(c.validation.size(), 1u);
  EXPECT_EQ(c.test.size(), 2u);
  EXPECT_TRUE(std::is_sorted(c.train.begin(), c.train.end(),
                             [](const auto& a, const auto& b) { return a.path < b.path; }));
  EXPECT_FALSE(c.has_ground_truth);
  EXPECT_FALSE(c.localization_enabled());
  EXPECT_THROW(idx.category("nope"), ConfigError);
}

TEST(DatasetIndex, LocoCategoryStructure) {
  salad::testing::TempDir dir("breakfast");
  const fs::path cat = dir / "breakfast_box";
  touch_png(cat / "train/good/000.png");
  touch_png(cat / "validation/good/000.png");
  touch_png(cat / "test/good/000.png");
  touch_png(cat / "test/logical_anomalies/000.png");
  touch_png(cat / "test/structural_anomalies/000.png");
  touch_png(cat / "ground_truth/logical_anomalies/000/000.png");
  touch_png(cat / "ground_truth/logical_anomalies/000/001.png");
  touch_png(cat / "ground_truth/structural_anomalies/000/000.png");
  write_defects_config({{"missing_item", 255, 1.0, true}}, cat / "defects_config.json");
  const auto idx = load_dataset_index(dir.path(), DatasetLayout::loco);
  const auto& c = idx.category("breakfast_box");
  ASSERT_EQ(c.test.size(), 3u);
  std::map<std::string, Label> labels;
  for (const auto& r : c.test) labels[r.defect] = r.label;
  EXPECT_EQ(labels.at("good"), Label::good);
  EXPECT_EQ(labels.at("logical_anomalies"), Label::logical_anomaly);
  EXPECT_EQ(labels.at("structural_anomalies"), Label::structural_anomaly);
  for (const auto& r : c.test) {
    if (r.defect == "logical_anomalies") EXPECT_EQ(r.gt_regions.size(), 2u);
  }
  EXPECT_TRUE(c.localization_enabled());
}

TEST(DatasetIndex, Errors) {
  EXPECT_THROW(load_dataset_index("/nonexistent/salad", DatasetLayout::loco), ConfigError);
  salad::testing::TempDir dir("noval");
  touch_png(dir / "cat/train/good/000.png");
  touch_png(dir / "cat/test/good/000.png");
  try {
    load_dataset_index(dir.path(), DatasetLayout::loco);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("missing split"), std::string::npos);
  }
  EXPECT_NO_THROW(load_dataset_index(dir.path(), DatasetLayout::flat));
  fs::remove(dir / "cat/train/good/000.png");
  EXPECT_THROW(load_dataset_index(dir.path(), DatasetLayout::flat), ConfigError);
  EXPECT_THROW(layout_from_string("mvtec3d"), ConfigError);
}

TEST(DefectsConfig, RoundTripAndMalformed) {
  salad::testing::TempDir dir("defects");
  const std::vector<DefectType> d = {{"a", 255, 0.5, true}, {"b", 254, 900.0, false}};
  write_defects_config(d, dir / "d.json");
  const auto back = read_defects_config(dir / "d.json");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].name, "b");
  EXPECT_EQ(back[1].pixel_value, 254);
  EXPECT_FALSE(back[1].relative_saturation);
  std::ofstream(dir / "bad.json") << "[{\"name\": 3}]";
  EXPECT_THROW(read_defects_config(dir / "bad.json"), IoError);
}

TEST(ValidationCarve, TenPercentCeilingAndDeterminism) {
  auto c = carve_validation_split(records(100), 0.10, 7);
  EXPECT_EQ(c.train.size(), 90u);
  EXPECT_EQ(c.validation.size(), 10u);
  EXPECT_FALSE(c.train_emptied);
  const auto again = carve_validation_split(records(100), 0.10, 7);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(again.validation[i].path, c.validation[i].path);
  for (const auto& v : c.validation) EXPECT_EQ(v.split, Split::validation);

  c = carve_validation_split(records(1), 0.10, 7);
  EXPECT_EQ(c.train.size(), 0u);
  EXPECT_EQ(c.validation.size(), 1u);
  EXPECT_TRUE(c.train_emptied);

  EXPECT_THROW(carve_validation_split(records(10), 0.0, 1), ArgumentError);
  EXPECT_THROW(carve_validation_split(records(10), 1.0, 1), ArgumentError);
}

TEST(CompMapIo, RoundTripBoundsAndCorruption) {
  salad::testing::TempDir dir("cmio");
  const auto m = salad::testing::random_composition_map(64, 5, 3);
  save_composition_map(m, dir / "m.png");
  EXPECT_EQ(load_composition_map(dir / "m.png"), m);

  CompositionMap bg(16, 16, 4);
  save_composition_map(bg, dir / "bg.png");
  const auto back = load_composition_map(dir / "bg.png");
  EXPECT_EQ(back.num_classes, 4);
  EXPECT_EQ(back, bg);

  CompositionMap big(4, 4, 400);
  big(1, 1) = 300;
  EXPECT_THROW(save_composition_map(big, dir / "big.png"), Error);

  std::ofstream(dir / "junk.png") << "junk";
  try {
    load_composition_map(dir / "junk.png");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("junk.png"), std::string::npos);
  }
}

TEST(CompMapIo, CacheMetaRoundTrip) {
  salad::testing::TempDir dir("meta");
  write_cache_meta({7, 42, "1", "stub-color"}, dir.path());
  const auto m = read_cache_meta(dir.path());
  EXPECT_EQ(m.num_classes, 7);
  EXPECT_EQ(m.seed, 42u);
  EXPECT_EQ(m.backend_id, "stub-color");
}

TEST(ImageIo, PngRoundTrips) {
  salad::testing::TempDir dir("png");
  const auto im = salad::testing::random_image(32, 1);
  write_png_rgb(im.pixels, dir / "a.png");
  const auto back = read_png_rgb(dir / "a.png");
  ASSERT_EQ(back.width, 32);
  for (std::size_t i = 0; i < back.rgb.size(); ++i) EXPECT_NEAR(back.rgb[i], im.pixels.rgb[i], 0.5 / 255.0 + 1e-6);

  Mask m(9, 7);
  m(3, 4) = 1;
  write_png_mask(m, dir / "m.png");
  EXPECT_EQ(read_png_mask(dir / "m.png"), m);
  EXPECT_THROW(read_png_rgb(dir / "none.png"), IoError);
}

TEST(ImageIo, LoadImageResizesToWorkingSize) {
  salad::testing::TempDir dir("load");
  write_png_rgb(RgbImage(40, 30, 0.25f), dir / "x.png");
  const auto s = load_image(dir / "x.png", Split::test, Label::good);
  EXPECT_EQ(s.pixels.width, kWorkingSize);
  EXPECT_EQ(s.pixels.height, kWorkingSize);
  EXPECT_NEAR(s.pixels.at(100, 100, 1), 0.25f, 1e-2);
  EXPECT_NO_THROW(s.validate());
}

TEST(Resize, NearestAndBilinear) {
  const auto m = salad::testing::random_composition_map(32, 3, 4);
  EXPECT_EQ(resize_nearest(m, 32, 32), m);
  const auto up = resize_nearest(m, 64, 64);
  EXPECT_EQ(up(5, 9), m(2, 4));
  EXPECT_EQ(up.num_classes, m.num_classes);

  Plane<float> p(8, 8, 3.0f);
  const auto q = resize_bilinear(p, 13, 5);
  for (float v : q.values()) EXPECT_FLOAT_EQ(v, 3.0f);
  Plane<float> ramp(4, 1);
  for (int x = 0; x < 4; ++x) ramp(x, 0) = static_cast<float>(x);
  EXPECT_EQ(resize_bilinear(ramp, 4, 1), ramp);
}

TEST(Hash, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  Sha256 h;
  h.update("a").update("bc");
  EXPECT_EQ(h.hex(), sha256_hex("abc"));
  salad::testing::TempDir dir("hash");
  std::ofstream(dir / "f.txt") << "abc";
  EXPECT_EQ(sha256_file(dir / "f.txt"), sha256_hex("abc"));
}

TEST(Random, MixSeedAndRanges) {
  EXPECT_EQ(mix_seed(1, 2), mix_seed(1, 2));
  EXPECT_NE(mix_seed(1, 2), mix_seed(1, 3));
  EXPECT_NE(mix_seed(1, 2), mix_seed(2, 2));
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto v = rng.below(7);
    EXPECT_LT(v, 7u);
    const int r = rng.range(-2, 2);
    EXPECT_GE(r, -2);
    EXPECT_LE(r, 2);
  }
}

TEST(Types, ValidationRejectsBadValues) {
  CompositionMap m(4, 4, 3);
  m(0, 0) = 3;
  EXPECT_THROW(m.validate(), ArgumentError);
  AnomalyMap a;
  a.scores = Plane<float>(2, 2, 0.5f);
  a.range = MapRange::unit;
  EXPECT_NO_THROW(a.validate());
  a.scores(0, 0) = 1.5f;
  EXPECT_THROW(a.validate(), ArgumentError);
  a.range = MapRange::nonnegative;
  a.scores(1, 1) = std::nanf("");
  EXPECT_THROW(a.validate(), ArgumentError);
}
