#include <gtest/gtest.h>

#include "criteria.hpp"
#include "fixtures.hpp"
#include "salad/sim/simulator.hpp"

using namespace salad;
using namespace salad::sim;

namespace {

void fill_rect(CompositionMap& m, int x0, int y0, int x1, int y1, std::uint16_t cls) {
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) m(x, y) = cls;
  }
}

}  // namespace

TEST(Perlin, DeterministicPerSeed) {
  EXPECT_EQ(perlin_mask(64, 48, 5), perlin_mask(64, 48, 5));
  EXPECT_NE(perlin_mask(64, 48, 5), perlin_mask(64, 48, 6));
}

TEST(Perlin, DegenerateSize) {
  const auto m = perlin_mask(1, 1, 3);
  EXPECT_EQ(m.width(), 1);
  EXPECT_EQ(m.height(), 1);
  EXPECT_LE(m[0], 1);
}

TEST(Perlin, MeanCoverageIsModerate) {
  double total = 0;
  const int n = 200;  // the acceptance sweep runs 1000 at working size
  for (int s = 0; s < n; ++s) {
    const auto m = perlin_mask(256, 256, static_cast<std::uint64_t>(s));
    total += static_cast<double>(count(m)) / static_cast<double>(m.size());
  }
  const double mean = total / n;
  EXPECT_GT(mean, 0.2);
  EXPECT_LT(mean, 0.8);
}

TEST(Components, TwoBlobsSmallBlobAndDiagonals) {
  CompositionMap m(40, 40, 3);
  fill_rect(m, 0, 0, 10, 10, 1);
  fill_rect(m, 20, 20, 30, 30, 1);
  fill_rect(m, 35, 0, 37, 5, 2);  // 10 px
  auto comps = connected_components(m, 50);
  ASSERT_EQ(comps.size(), 2u);
  for (const auto& c : comps) {
    EXPECT_EQ(c.class_id, 1);
    EXPECT_EQ(c.area, 100u);
  }
  EXPECT_EQ(connected_components(m, 10).size(), 3u);

  CompositionMap d(4, 4, 2);
  d(0, 0) = 1;
  d(1, 1) = 1;
  d(2, 2) = 1;
  comps = connected_components(d, 1);
  ASSERT_EQ(comps.size(), 1u);
  EXPECT_EQ(comps[0].area, 3u);
}

TEST(Structural, AllBackgroundNeverYieldsNoOpAnomaly) {
  CompositionMap m(32, 32, 2);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto out = simulate_structural(m, s);
    if (out.kind == SyntheticKind::none) {
      EXPECT_EQ(out.augmented, m);
      EXPECT_EQ(count(out.gt_mask), 0u);
    } else {
      EXPECT_NE(out.augmented, m);
    }
    EXPECT_EQ(check_invariants(m, out), "");
  }
}

TEST(Structural, GroundTruthIsTheChangedPixels) {
  CompositionMap m(32, 32, 3);
  fill_rect(m, 0, 0, 16, 32, 1);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto out = simulate_structural(m, s);
    for (std::size_t p = 0; p < m.classes.size(); ++p) {
      EXPECT_EQ(out.gt_mask[p] != 0, out.augmented.classes[p] != m.classes[p]);
    }
  }
}

TEST(Removal, LonePartFillsWithBackground) {
  CompositionMap m(48, 48, 2);
  fill_rect(m, 10, 10, 30, 30, 1);
  const auto out = simulate_removal(m, 1);
  ASSERT_EQ(out.kind, SyntheticKind::component_removal);
  for (std::size_t p = 0; p < m.classes.size(); ++p) EXPECT_EQ(out.augmented.classes[p], 0);
  // The erased region merges with the surrounding background component.
  EXPECT_EQ(count(out.gt_mask), m.classes.size());
}

TEST(Removal, MergedNeighbourIsCoveredEntirely) {
  CompositionMap m(48, 48, 3);
  fill_rect(m, 0, 0, 48, 48, 2);
  fill_rect(m, 10, 10, 30, 30, 1);
  int seen = 0;
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto out = simulate_removal(m, s);
    if (out.kind != SyntheticKind::component_removal) continue;
    if (out.augmented(15, 15) != 2) continue;  // the class-2 component itself was erased
    ++seen;
    EXPECT_EQ(count(out.gt_mask), m.classes.size());
  }
  EXPECT_GT(seen, 0);
}

TEST(Removal, NoComponentMeansClean) {
  CompositionMap m(16, 16, 2);
  fill_rect(m, 2, 2, 5, 5, 1);
  const auto out = simulate_removal(m, 0);
  EXPECT_EQ(out.kind, SyntheticKind::none);
  EXPECT_EQ(out.augmented, m);
}

TEST(Inpaint, CoversEveryPixelOfThePastedClass) {
  CompositionMap bag(64, 64, 3);
  fill_rect(bag, 5, 5, 15, 25, 1);   // existing screw
  fill_rect(bag, 40, 40, 60, 60, 2);
  CompositionMap donor(64, 64, 3);
  fill_rect(donor, 25, 5, 35, 25, 1);  // a second screw elsewhere
  const auto out = simulate_inpaint(bag, donor, 3);
  ASSERT_EQ(out.kind, SyntheticKind::component_inpaint);
  for (std::size_t p = 0; p < bag.classes.size(); ++p) {
    EXPECT_EQ(out.gt_mask[p] != 0, out.augmented.classes[p] == 1) << p;
  }
  EXPECT_EQ(count(out.gt_mask), 400u);
  EXPECT_EQ(salad::testing::invariant_violation(bag, &donor, out), "");
}

TEST(Inpaint, IdenticalComponentIsNotAnAnomaly) {
  CompositionMap m(32, 32, 2);
  fill_rect(m, 4, 4, 20, 20, 1);
  const auto out = simulate_inpaint(m, m, 0);
  EXPECT_EQ(out.kind, SyntheticKind::none);
  EXPECT_EQ(out.augmented, m);
}

TEST(Mixing, CleanDrawsAreUntouched) {
  std::vector<CompositionMap> corpus;
  for (std::uint64_t s = 0; s < 4; ++s) corpus.push_back(salad::testing::random_composition_map(64, 3, s));
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto out = sample_training_example(corpus[0], corpus, s);
    EXPECT_EQ(check_invariants(corpus[0], out), "");
    if (out.kind == SyntheticKind::none) {
      EXPECT_EQ(out.augmented, corpus[0]);
      EXPECT_EQ(count(out.gt_mask), 0u);
    }
  }
  EXPECT_EQ(sample_training_example(corpus[1], corpus, 9).augmented,
            sample_training_example(corpus[1], corpus, 9).augmented);
}

TEST(Kinds, StringRoundTrip) {
  for (auto k : {SyntheticKind::none, SyntheticKind::perlin_paste, SyntheticKind::component_inpaint,
                 SyntheticKind::component_removal}) {
    EXPECT_EQ(kind_from_string(to_string(k)), k);
  }
}
