#include <algorithm>
#include <cstring>
#include <set>

#include "test_util.hpp"

using namespace capel;

TEST(Rng, SameSeedSameSequence) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= x != c.next_u64();
  }
  EXPECT_TRUE(differs);
  Rng g1(7), g2(7);
  for (int i = 0; i < 101; ++i) EXPECT_EQ(g1.gaussian(), g2.gaussian());
}

TEST(Rng, UniformRange) {
  Rng r(1);
  double sum = 0;
  for (int i = 0; i < 20000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 20000, 0.5, 0.01);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(r.uniform_index(7), 7u);
}

TEST(Rng, GaussianMoments) {
  Rng r(5);
  double s = 0, s2 = 0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const double g = r.gaussian();
    s += g;
    s2 += g * g;
  }
  EXPECT_NEAR(s / n, 0.0, 0.02);
  EXPECT_NEAR(s2 / n, 1.0, 0.03);
}

TEST(Rng, ChooseKFullPopulationIsPermutation) {
  Rng r(3);
  auto pick = r.choose_k(5, 5);
  std::sort(pick.begin(), pick.end());
  EXPECT_EQ(pick, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(Rng, ChooseKDistinctAndBounded) {
  Rng r(8);
  for (int t = 0; t < 100; ++t) {
    const auto pick = r.choose_k(20, 6);
    EXPECT_EQ(pick.size(), 6u);
    EXPECT_EQ(std::set<std::size_t>(pick.begin(), pick.end()).size(), 6u);
    for (auto p : pick) EXPECT_LT(p, 20u);
  }
}

TEST(Rng, ChooseKTooManyFails) {
  Rng r(0);
  EXPECT_CAPEL_ERROR(r.choose_k(3, 4), ErrorCode::InvalidArgument);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng r(11);
  std::vector<int> v(30);
  for (int i = 0; i < 30; ++i) v[static_cast<std::size_t>(i)] = i;
  auto s = v;
  r.shuffle(std::span<int>(s));
  EXPECT_NE(s, v);
  std::sort(s.begin(), s.end());
  EXPECT_EQ(s, v);
}

TEST(Rng, DerivedSeedsDependOnTag) {
  EXPECT_EQ(derive_seed(1, "split"), derive_seed(1, "split"));
  EXPECT_NE(derive_seed(1, "split"), derive_seed(1, "shuffle"));
  EXPECT_NE(derive_seed(1, "split"), derive_seed(2, "split"));
}

TEST(Rng, Fnv1aKnownVector) {
  // FNV-1a 64 of "a" is 0xaf63dc4c8601ec8c.
  const std::byte a{'a'};
  EXPECT_EQ(fnv1a64(std::span<const std::byte>(&a, 1)), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64({}), 0xcbf29ce484222325ULL);
}
