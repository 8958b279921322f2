#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "repdecay/rng.hpp"

using repdecay::Rng;

TEST(Rng, SameSeedAndStreamReproduce) {
  Rng a(42, 3), b(42, 3);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, StreamsDiffer) {
  Rng a(42, 0), b(42, 1), c(43, 0);
  EXPECT_NE(a.next_u64(), b.next_u64());
  EXPECT_NE(Rng(42, 0).next_u64(), c.next_u64());
}

TEST(Rng, DerivedSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 10000; ++i) seen.insert(repdecay::derive_seed(7, i));
  EXPECT_EQ(seen.size(), 10000u);
}

TEST(Rng, UniformRangesAndMean) {
  Rng r(1);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double v = r.uniform_pos();
    ASSERT_GT(v, 0.0);
    ASSERT_LE(v, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / n, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST(Rng, ExponentialMean) {
  Rng r(2);
  const int n = 200000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += r.exponential(4.0);
  EXPECT_NEAR(sum / n, 0.25, 4.0 * 0.25 / std::sqrt(n));
}

TEST(Rng, UniformIndexIsUniform) {
  Rng r(3);
  const int k = 7;
  const int n = 70000;
  std::vector<int> counts(k, 0);
  for (int i = 0; i < n; ++i) {
    const auto x = r.uniform_index(k);
    ASSERT_LT(x, static_cast<std::uint64_t>(k));
    ++counts[x];
  }
  double chi2 = 0.0;
  const double e = static_cast<double>(n) / k;
  for (int c : counts) chi2 += (c - e) * (c - e) / e;
  EXPECT_LT(chi2, 22.46);  // 0.999 quantile, 6 degrees of freedom
}

TEST(Rng, PoissonMeanAndVariance) {
  Rng r(4);
  const int n = 100000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = static_cast<double>(r.poisson(3.5));
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  EXPECT_NEAR(mean, 3.5, 4.0 * std::sqrt(3.5 / n));
  EXPECT_NEAR(s2 / n - mean * mean, 3.5, 0.1);
  EXPECT_EQ(r.poisson(0.0), 0u);
  EXPECT_THROW(r.poisson(-1.0), std::invalid_argument);
}

TEST(Rng, SubsetsAreDistinctAndUniform) {
  Rng r(5);
  std::vector<std::uint32_t> out;
  std::vector<int> hits(6, 0);
  const int n = 60000;
  for (int i = 0; i < n; ++i) {
    repdecay::sample_subset(6, 3, r, out);
    ASSERT_EQ(out.size(), 3u);
    std::set<std::uint32_t> s(out.begin(), out.end());
    ASSERT_EQ(s.size(), 3u);
    for (auto x : out) ++hits[x];
  }
  for (int h : hits) EXPECT_NEAR(h, n / 2, 5.0 * std::sqrt(n * 0.25));
  EXPECT_THROW(repdecay::sample_subset(2, 3, r, out), std::invalid_argument);
}
