#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "ramix/rng.hpp"

using ramix::RngStream;

TEST(Rng, SplitMix64MatchesReferenceSequence) {
  std::uint64_t state = 1234567;
  const std::uint64_t expected[] = {6457827717110365317ull, 3203168211198807973ull, 9817491932198370423ull,
                                    4593380528125082431ull, 16408922859458223821ull};
  for (auto e : expected) EXPECT_EQ(ramix::splitmix64(state), e);
}

TEST(Rng, XoshiroMatchesReferenceSequence) {
  auto r = RngStream::from_state({1, 2, 3, 4});
  const std::uint64_t expected[] = {11520ull, 0ull, 1509978240ull, 1215971899390074240ull, 1216172134540287360ull,
                                    607988272756665600ull};
  for (auto e : expected) EXPECT_EQ(r.next_u64(), e);
}

TEST(Rng, SameSeedAndStreamGiveSameDraws) {
  RngStream a(42, 7), b(42, 7);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, StreamsDiffer) {
  RngStream a(42, 0), b(42, 1), c(43, 0);
  const auto x = a.next_u64();
  EXPECT_NE(x, b.next_u64());
  EXPECT_NE(x, c.next_u64());
}

TEST(Rng, MixSeedIsOrderSensitive) {
  EXPECT_NE(ramix::mix_seed({1, 2}), ramix::mix_seed({2, 1}));
  EXPECT_EQ(ramix::mix_seed({1, 2}), ramix::mix_seed({1, 2}));
}

TEST(Rng, UniformIsInUnitInterval) {
  RngStream r(5, 5);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  EXPECT_LT(lo, 1e-3);
  EXPECT_GT(hi, 1.0 - 1e-3);
  EXPECT_NEAR(sum / n, 0.5, 0.005);
}

TEST(Rng, UniformUsesTop53Bits) {
  auto a = RngStream::from_state({1, 2, 3, 4});
  auto b = RngStream::from_state({1, 2, 3, 4});
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.uniform(), static_cast<double>(b.next_u64() >> 11) / 9007199254740992.0);
}

TEST(Rng, NormalMomentsAndBoxMullerForm) {
  RngStream r(9, 1);
  const int n = 200000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s1 += z;
    s2 += z * z;
  }
  const double mean = s1 / n;
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(s2 / n - mean * mean, 1.0, 0.02);

  auto a = RngStream::from_state({11, 22, 33, 44});
  auto b = RngStream::from_state({11, 22, 33, 44});
  const double u1 = 1.0 - b.uniform();
  const double u2 = b.uniform();
  EXPECT_EQ(a.normal(), std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793 * u2));
}

TEST(Rng, BelowStaysInRangeAndCoversIt) {
  RngStream r(3, 3);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto v = r.below(7);
    ASSERT_LT(v, 7u);
    ++counts[v];
  }
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(Rng, PermutationIsAPermutation) {
  RngStream r(1, 2);
  auto p = r.permutation(100);
  std::set<std::size_t> seen(p.begin(), p.end());
  EXPECT_EQ(seen.size(), 100u);
  EXPECT_EQ(*seen.rbegin(), 99u);
  std::vector<std::size_t> id(100);
  for (std::size_t i = 0; i < 100; ++i) id[i] = i;
  EXPECT_NE(p, id);
}
