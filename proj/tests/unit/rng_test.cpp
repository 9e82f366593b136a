#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "flythrough/rng.hpp"

using flythrough::Rng;

TEST(Rng, SameSeedAndLabelReproduce) {
  Rng a(42, "train"), b(42, "train");
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(Rng, StreamsAreSeparated) {
  Rng a(42, "train"), b(42, "init"), c(43, "train");
  int same_ab = 0, same_ac = 0;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next(), y = b.next(), z = c.next();
    same_ab += x == y;
    same_ac += x == z;
  }
  EXPECT_EQ(same_ab, 0);
  EXPECT_EQ(same_ac, 0);
}

TEST(Rng, ForkDependsOnlyOnParentKey) {
  Rng a(1, "x");
  Rng b(1, "x");
  for (int i = 0; i < 10; ++i) a.next();
  EXPECT_EQ(a.fork(3).next(), b.fork(3).next());
  EXPECT_EQ(a.fork("fill").next(), b.fork("fill").next());
  EXPECT_NE(b.fork(3).next(), b.fork(4).next());
  EXPECT_NE(b.fork("fill").next(), b.fork("sample").next());
}

TEST(Rng, UniformRangeAndMoments) {
  Rng rng(7, "moments");
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sum2 += u * u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
  EXPECT_NEAR(sum2 / n - (sum / n) * (sum / n), 1.0 / 12.0, 0.002);
}

TEST(Rng, NormalMoments) {
  Rng rng(8, "normal");
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum2 += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sum2 / n, 1.0, 0.02);
}

TEST(Rng, UniformIndexCoversRange) {
  Rng rng(9, "index");
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto k = rng.uniform_index(7);
    ASSERT_LT(k, 7u);
    seen.insert(k);
  }
  EXPECT_EQ(seen.size(), 7u);
}
