#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <numeric>
#include <set>
#include <vector>

#include "hmrl/rng.hpp"

using namespace hmrl;

TEST(Rng, UniformIndexStaysInRange) {
  Rng rng = make_rng(3);
  for (std::size_t n : {1u, 2u, 5u, 7u, 1000u}) {
    for (int i = 0; i < 2000; ++i) EXPECT_LT(uniform_index(rng, n), n);
  }
  EXPECT_THROW(uniform_index(rng, 0), std::invalid_argument);
}

TEST(Rng, UniformIndexChiSquare) {
  Rng rng = make_rng(11);
  constexpr std::size_t kBins = 5, kDraws = 50000;
  std::array<double, kBins> hist{};
  for (std::size_t i = 0; i < kDraws; ++i) ++hist[uniform_index(rng, kBins)];
  const double expected = static_cast<double>(kDraws) / kBins;
  double chi2 = 0;
  for (double h : hist) chi2 += (h - expected) * (h - expected) / expected;
  EXPECT_LT(chi2, 18.47);  // 4 dof, p = 0.001
}

TEST(Rng, UniformUnitInHalfOpenInterval) {
  Rng rng = make_rng(5);
  double lo = 1, hi = 0, sum = 0;
  constexpr int kDraws = 100000;
  for (int i = 0; i < kDraws; ++i) {
    const double u = uniform_unit(rng);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  EXPECT_LT(lo, 1e-3);
  EXPECT_GT(hi, 1 - 1e-3);
  EXPECT_NEAR(sum / kDraws, 0.5, 0.005);
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng rng = make_rng(9);
  std::vector<int> v(20);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  shuffle(rng, std::span<int>(w));
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(Rng, SameSeedSameStream) {
  Rng a = make_rng(42), b = make_rng(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
}

TEST(Rng, DerivedSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    for (std::uint64_t stream = 0; stream < 10; ++stream) seen.insert(derive_seed(seed, stream));
  }
  EXPECT_EQ(seen.size(), 500u);
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
}
