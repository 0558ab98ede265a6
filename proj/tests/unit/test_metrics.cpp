#include <cmath>

#include <gtest/gtest.h>

#include "floodda/metrics.hpp"

using namespace floodda;
using namespace floodda::metrics;

namespace {

// 10 x 10 maps: 23 TP, 5 FP, 12 FN, 60 TN in row-major order.
std::pair<WetMask, WetMask> constructed_maps() {
  GridHeader h;
  h.n_rows = 10;
  h.n_cols = 10;
  WetMask sim{h, std::vector<std::int8_t>(100, 0)};
  WetMask obs = sim;
  std::size_t p = 0;
  for (int i = 0; i < 23; ++i, ++p) sim.cells[p] = obs.cells[p] = 1;
  for (int i = 0; i < 5; ++i, ++p) sim.cells[p] = 1;
  for (int i = 0; i < 12; ++i, ++p) obs.cells[p] = 1;
  return {sim, obs};
}

}  // namespace

TEST(Rmse, HandExamples) {
  const Series a{{0, 900, 1800, 2700}, {1.0, 2.0, 3.0, 4.0}};
  EXPECT_DOUBLE_EQ(rmse(a, a), 0.0);
  Series off = a;
  for (double& v : off.values) v += 0.2;
  EXPECT_NEAR(rmse(off, a), 0.2, 1e-12);
  Series mixed = a;
  const double d[] = {0.1, -0.1, 0.2, -0.2};
  for (int i = 0; i < 4; ++i) mixed.values[static_cast<std::size_t>(i)] += d[i];
  EXPECT_NEAR(rmse(mixed, a), std::sqrt(0.025), 1e-12);
  EXPECT_NEAR(rmse(mixed, a), 0.1581, 5e-5);
}

TEST(Rmse, PairsWithinTolerance) {
  const Series sim{{0, 100, 200}, {1.0, 5.0, 9.0}};
  const Series obs{{90, 1000}, {4.0, 0.0}};
  // 1000 has no simulated sample within 50 s and is skipped.
  EXPECT_DOUBLE_EQ(rmse(sim, obs, 50.0), 1.0);
  EXPECT_ANY_THROW(rmse(sim, Series{{5000}, {1.0}}, 50.0));
}

TEST(Gain, TableOneRows) {
  const std::vector<double> olv{0.106, 0.392, 0.536}, olc{1.209, 1.405, 1.598};
  EXPECT_NEAR(gain({0.062, 0.071, 0.081}, olv), 69.43, 0.01);
  EXPECT_NEAR(gain({0.073, 0.074, 0.090}, olv), 65.15, 0.01);
  EXPECT_NEAR(gain({0.160, 0.148, 0.130}, olc), 89.37, 0.01);
  EXPECT_NEAR(gain({0.166, 0.160, 0.141}, olc), 88.69, 0.01);
  EXPECT_DOUBLE_EQ(gain(olv, olv), 0.0);
  EXPECT_ANY_THROW(gain({0.1}, {0.1, 0.2}));
  EXPECT_ANY_THROW(gain({0.1}, {0.0}));
}

TEST(Contingency, ConstructedCounts) {
  const auto [sim, obs] = constructed_maps();
  const auto m = contingency(sim, obs);
  EXPECT_EQ(m.counts[TP], 23u);
  EXPECT_EQ(m.counts[FP], 5u);
  EXPECT_EQ(m.counts[FN], 12u);
  EXPECT_EQ(m.counts[TN], 60u);
  EXPECT_EQ(m.labels.cells[0], TP);
  EXPECT_EQ(m.labels.cells[25], FP);
  EXPECT_EQ(m.labels.cells[30], FN);
  EXPECT_EQ(m.labels.cells[99], TN);
  EXPECT_DOUBLE_EQ(csi(m).value, 57.5);
}

TEST(Contingency, IdentityAllDryAndNodata) {
  auto [sim, obs] = constructed_maps();
  const auto same = contingency(obs, obs);
  EXPECT_EQ(same.counts[FP] + same.counts[FN], 0u);
  EXPECT_DOUBLE_EQ(csi(same).value, 100.0);
  EXPECT_FALSE(csi(same).degenerate);

  WetMask dry = obs, wet = obs;
  std::fill(dry.cells.begin(), dry.cells.end(), 0);
  std::fill(wet.cells.begin(), wet.cells.end(), 1);
  const auto fn = contingency(dry, wet);
  EXPECT_EQ(fn.counts[FN], 100u);
  EXPECT_DOUBLE_EQ(csi(fn).value, 0.0);

  const auto none = contingency(dry, dry);
  EXPECT_TRUE(csi(none).degenerate);
  EXPECT_DOUBLE_EQ(csi(none).value, 100.0);

  sim.cells[0] = WetMask::kNoData;
  const auto nd = contingency(sim, obs);
  EXPECT_EQ(nd.labels.cells[0], kContingencyNoData);
  EXPECT_EQ(nd.valid(), 99u);

  WetMask small = obs;
  small.header.n_rows = 5;
  small.cells.resize(50);
  EXPECT_ANY_THROW(contingency(small, obs));
}

TEST(Hwm, HandExamples) {
  const std::vector<double> s{10.0, 11.0};
  EXPECT_DOUBLE_EQ(hwm_rmse(s, s), 0.0);
  EXPECT_NEAR(hwm_rmse(s, {10.5, 11.5}), 0.5, 1e-12);
  EXPECT_NEAR(hwm_rmse(s, {10.3, 10.6}), std::sqrt(0.125), 1e-12);
  EXPECT_NEAR(hwm_rmse(s, {10.3, 10.6}), 0.3536, 5e-5);
  EXPECT_ANY_THROW(hwm_rmse(s, {1.0}));
}

TEST(LeadTime, PeriodSelection) {
  const Series obs{{0, 900, 1800, 2700}, {1, 2, 3, 4}};
  const Series f{{900, 2700}, {2, 4}};
  EXPECT_DOUBLE_EQ(leadtime_rmse(f, obs, 0, 3000, 450), 0.0);
  const Series g{{900, 2700}, {2.5, 4}};
  EXPECT_NEAR(leadtime_rmse(g, obs, 0, 1000, 450), 0.5, 1e-12);
  EXPECT_ANY_THROW(leadtime_rmse(g, obs, 5000, 6000, 450));
}
