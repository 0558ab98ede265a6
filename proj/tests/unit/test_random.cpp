#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "floodda/random.hpp"

using namespace floodda::random;

TEST(Random, StreamIsPureFunctionOfKeyAndIndex) {
  const Stream a({11, Purpose::Test, 2, 3});
  const Stream b({11, Purpose::Test, 2, 3});
  for (std::uint64_t n = 0; n < 100; ++n) EXPECT_EQ(a.uniform(n), b.uniform(n));
  // Evaluation order does not matter.
  EXPECT_EQ(a.normal(57), b.normal(57));
}

TEST(Random, KeysSeparateStreams) {
  std::set<double> first;
  for (std::uint64_t s = 0; s < 4; ++s)
    for (std::uint64_t a = 0; a < 4; ++a)
      for (std::uint64_t b = 0; b < 4; ++b) first.insert(Stream({s, Purpose::PriorDraw, a, b}).uniform(0));
  EXPECT_EQ(first.size(), 64u);
  EXPECT_NE(Stream({1, Purpose::PriorDraw, 0, 0}).uniform(0),
            Stream({1, Purpose::ObsPerturbation, 0, 0}).uniform(0));
}

TEST(Random, UniformOpenIntervalAndMoments) {
  const Stream s({5, Purpose::Test, 0, 0});
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform(static_cast<std::uint64_t>(i));
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sq += u * u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
  EXPECT_NEAR(sq / n - 0.25, 1.0 / 12.0, 0.002);
}

TEST(Random, NormalMoments) {
  const Stream s({9, Purpose::Test, 1, 1});
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal(static_cast<std::uint64_t>(i));
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.015);
}

TEST(Random, QuantileInvertsCdf) {
  for (double p : {1e-9, 0.001, 0.1, 0.3, 0.5, 0.77, 0.99, 1 - 1e-9})
    EXPECT_NEAR(normal_cdf(normal_quantile(p)), p, 1e-12 + 1e-9 * p);
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-12);
}

TEST(Random, TruncatedNormalStaysInBounds) {
  const Stream s({3, Purpose::Test, 0, 0});
  for (std::uint64_t i = 0; i < 5000; ++i) {
    const double v = truncated_normal(30.0, 40.0, 5.0, 80.0, s.uniform(i));
    ASSERT_GE(v, 5.0);
    ASSERT_LE(v, 80.0);
  }
  // Median of a mildly truncated draw sits near the mean.
  EXPECT_NEAR(truncated_normal(1.0, 0.25, 0.1, 5.0, 0.5), 1.0, 1e-3);
  // Zero spread collapses to the mean.
  EXPECT_DOUBLE_EQ(truncated_normal(2.0, 0.0, 0.1, 5.0, 0.9), 2.0);
}
