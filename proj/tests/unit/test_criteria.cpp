#include <gtest/gtest.h>

#include "criteria.hpp"

using salad::testing::CheckResult;

TEST(Oracles, LibraryMathMatchesDirectImplementations) {
  const CheckResult r = salad::testing::check_math_oracles(100, 101);
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Oracles, LossGradientsMatchCentralDifferences) {
  const CheckResult r = salad::testing::check_loss_gradients(20, 102);
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Oracles, CalibrationIdentities) {
  const CheckResult r = salad::testing::check_calibration(100, 103);
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Oracles, SimulatorSweep) {
  const CheckResult r = salad::testing::check_simulator(200, 2000, 104);
  EXPECT_TRUE(r.pass) << r.detail;
}
