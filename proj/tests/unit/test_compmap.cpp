#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "salad/compmap/compmap.hpp"
#include "salad/core/error.hpp"

using namespace salad;
using namespace salad::compmap;

namespace {

constexpr int N = kWorkingSize;

ImageSample object_image(Mask* truth) {
  ImageSample im;
  im.pixels = RgbImage(N, N, 0.85f);
  *truth = Mask(N, N);
  for (int y = 70; y < 190; ++y) {
    for (int x = 60; x < 200; ++x) {
      const bool left = x < 130;
      im.pixels.at(x, y, 0) = left ? 0.7f : 0.1f;
      im.pixels.at(x, y, 1) = 0.2f;
      im.pixels.at(x, y, 2) = left ? 0.1f : 0.6f;
      (*truth)(x, y) = 1;
    }
  }
  return im;
}

FeatureMap features(int w, int h, int dim, const std::vector<std::vector<float>>& per_pixel) {
  FeatureMap f;
  f.width = w;
  f.height = h;
  f.dim = dim;
  for (const auto& v : per_pixel) f.values.insert(f.values.end(), v.begin(), v.end());
  return f;
}

ClusterModel model_2d(std::vector<float> centroids) {
  ClusterModel m;
  m.k = static_cast<int>(centroids.size() / 2);
  m.dim = 2;
  m.centroids = std::move(centroids);
  return m;
}

MaskProposal rect(int x0, int y0, int x1, int y1, int w, int h) {
  MaskProposal p;
  p.mask = Mask(w, h);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) p.mask(x, y) = 1;
  }
  return p;
}

}  // namespace

TEST(Foreground, CenteredObject) {
  Mask truth;
  const auto im = object_image(&truth);
  const auto fg = compute_foreground_mask(im, backends::BackendConfig{});
  EXPECT_FALSE(fg.empty_warning);
  EXPECT_GE(iou(fg.mask, truth), 0.95);
}

TEST(Foreground, ConstantImageWarns) {
  ImageSample im;
  im.pixels = RgbImage(N, N, 0.4f);
  const auto fg = compute_foreground_mask(im, backends::BackendConfig{});
  EXPECT_TRUE(fg.empty_warning);
  EXPECT_EQ(count(fg.mask), 0u);
}

TEST(Foreground, CornerOnlyRegionsLeaveNearlyEverything) {
  ImageSample im;
  im.pixels = RgbImage(N, N, 0.5f);
  for (int y = 0; y < N; ++y) {
    for (int x = 0; x < N; ++x) {
      const bool corner = (x < 8 || x >= N - 8) && (y < 8 || y >= N - 8);
      if (corner) im.pixels.at(x, y, 0) = 0.0f;
    }
  }
  const auto fg = compute_foreground_mask(im, backends::BackendConfig{});
  EXPECT_EQ(count(fg.mask), static_cast<std::size_t>(N) * N - 4 * 64);
}

TEST(Clustering, ThreeColoursSeparateAndSeedIsDeterministic) {
  std::vector<std::vector<float>> px;
  for (int i = 0; i < 300; ++i) {
    const int c = i % 3;
    px.push_back({c == 0 ? 1.0f : 0.0f, c == 1 ? 1.0f : 0.0f, c == 2 ? 1.0f : 0.0f});
  }
  const auto f = features(30, 10, 3, px);
  ForegroundMask fg{Mask(30, 10, 1), false};
  ClusterOptions opt;
  opt.k = 3;
  opt.seed = 4;
  const auto m = fit_cluster_model(std::span(&f, 1), std::span(&fg, 1), opt);
  const auto c = assign_feature_clusters(f, fg, m);
  // Each colour maps to one cluster and the three clusters differ.
  for (int i = 0; i < 300; ++i) EXPECT_EQ(c.classes[i], c.classes[i % 3]);
  EXPECT_NE(c.classes[0], c.classes[1]);
  EXPECT_NE(c.classes[1], c.classes[2]);
  EXPECT_NE(c.classes[0], c.classes[2]);
  EXPECT_EQ(fit_cluster_model(std::span(&f, 1), std::span(&fg, 1), opt).centroids, m.centroids);
}

TEST(Clustering, TooFewDistinctVectors) {
  const auto f = features(4, 4, 2, std::vector<std::vector<float>>(16, {0.3f, 0.3f}));
  ForegroundMask fg{Mask(4, 4, 1), false};
  ClusterOptions opt;
  opt.k = 2;
  EXPECT_THROW(fit_cluster_model(std::span(&f, 1), std::span(&fg, 1), opt), ArgumentError);
  fg.mask = Mask(4, 4, 0);
  fg.mask(0, 0) = 1;
  EXPECT_THROW(fit_cluster_model(std::span(&f, 1), std::span(&fg, 1), opt), ArgumentError);
}

TEST(Assignment, NearestCentroidBackgroundAndTies) {
  const auto m = model_2d({0, 0, 2, 0, 4, 0});
  const float on2[2] = {4, 0};
  EXPECT_EQ(nearest_centroid(m, on2), 2);
  const float tie[2] = {1, 0};
  EXPECT_EQ(nearest_centroid(m, tie), 0);

  const auto f = features(2, 1, 2, {{4, 0}, {4, 0}});
  ForegroundMask fg{Mask(2, 1), false};
  fg.mask(0, 0) = 1;
  const auto c = assign_feature_clusters(f, fg, m);
  EXPECT_EQ(c(0, 0), 3);
  EXPECT_EQ(c(1, 0), 0);
  EXPECT_EQ(c.num_classes, 4);

  const auto wrong = features(2, 1, 3, {{0, 0, 0}, {0, 0, 0}});
  EXPECT_THROW(assign_feature_clusters(wrong, fg, m), ShapeError);
}

TEST(ProposalClassification, MajorityRules) {
  CompositionMap c(10, 10, 4);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 10; ++x) c(x, y) = x < 6 ? 2 : 3;
  }
  std::vector<MaskProposal> props = {rect(0, 0, 10, 10, 10, 10)};
  auto out = classify_mask_proposals(c, props);
  for (auto v : out.classes.values()) EXPECT_EQ(v, 2);

  CompositionMap bg(10, 10, 4);
  for (int x = 0; x < 2; ++x) {
    for (int y = 0; y < 10; ++y) bg(x, y) = 1;
  }
  out = classify_mask_proposals(bg, props);
  for (auto v : out.classes.values()) EXPECT_EQ(v, 0);

  EXPECT_EQ(classify_mask_proposals(c, std::vector<MaskProposal>{}), c);
}

TEST(ProposalClassification, SmallProposalPaintedOnTop) {
  CompositionMap c(20, 20, 4);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 20; ++x) c(x, y) = (x >= 8 && x < 12 && y >= 8 && y < 12) ? 3 : 1;
  }
  // Small one first in the list so that order of input does not matter.
  std::vector<MaskProposal> props = {rect(8, 8, 12, 12, 20, 20), rect(0, 0, 20, 20, 20, 20)};
  const auto out = classify_mask_proposals(c, props);
  EXPECT_EQ(out(10, 10), 3);
  EXPECT_EQ(out(2, 2), 1);
}

TEST(PartIou, ExamplesAndArgmaxIdentity) {
  const auto a = salad::testing::random_composition_map(32, 3, 1);
  EXPECT_EQ(mean_part_iou(a, a), 1.0);
  CompositionMap l(4, 1, 3), r(4, 1, 3);
  l(0, 0) = 1;
  l(1, 0) = 1;
  r(1, 0) = 1;
  r(2, 0) = 2;
  // class 1: 1/2, class 2: 0/1
  EXPECT_DOUBLE_EQ(mean_part_iou(l, r), 0.25);
}

TEST(Segmenter, ConfigJsonRoundTripAndDeterministicInference) {
  SegmenterConfig cfg;
  cfg.num_classes = 3;
  cfg.base_width = 4;
  cfg.levels = 2;
  cfg.space_to_depth = 4;
  cfg.seed = 3;
  const auto back = SegmenterConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  SegmenterModel m(cfg);
  const auto im = salad::testing::random_image(N, 2);
  const auto c1 = m.infer(im);
  EXPECT_EQ(c1, m.infer(im));
  EXPECT_EQ(c1.num_classes, 3);

  salad::testing::TempDir dir("seg");
  m.save(dir / "seg.ckpt");
  auto loaded = SegmenterModel::load(dir / "seg.ckpt");
  EXPECT_EQ(loaded.infer(im), c1);
}

TEST(Segmenter, EmptyCorpusIsRejected) {
  SegmenterConfig cfg;
  EXPECT_THROW(train_component_segmenter({}, {}, cfg), ArgumentError);
}
