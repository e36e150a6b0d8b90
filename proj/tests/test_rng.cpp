#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "mvcn/rng.hpp"

namespace {

using mvcn::NoiseStream;
using mvcn::StreamKind;

// Known-answer vectors for Philox4x64-10 from the Random123 distribution.
TEST(Philox, KnownAnswerZero) {
  const auto out = mvcn::philox4x64({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out[0], 0x16554d9eca36314cULL);
  EXPECT_EQ(out[1], 0xdb20fe9d672d0fdcULL);
  EXPECT_EQ(out[2], 0xd7e772cee186176bULL);
  EXPECT_EQ(out[3], 0x7e68b68aec7ba23bULL);
}

TEST(Philox, KnownAnswerAllOnes) {
  constexpr std::uint64_t ones = ~0ULL;
  const auto out = mvcn::philox4x64({ones, ones, ones, ones}, {ones, ones});
  EXPECT_EQ(out[0], 0x87b092c3013fe90bULL);
  EXPECT_EQ(out[1], 0x438c3c67be8d0224ULL);
  EXPECT_EQ(out[2], 0x9cc7d7c69cd777b6ULL);
  EXPECT_EQ(out[3], 0xa09caebf594f0ba0ULL);
}

TEST(Philox, KnownAnswerPiDigits) {
  const auto out = mvcn::philox4x64({0x243f6a8885a308d3ULL, 0x13198a2e03707344ULL, 0xa4093822299f31d0ULL,
                                     0x082efa98ec4e6c89ULL},
                                    {0x452821e638d01377ULL, 0xbe5466cf34e90c6cULL});
  EXPECT_EQ(out[0], 0xa528f45403e61d95ULL);
  EXPECT_EQ(out[1], 0x38c72dbd566e9788ULL);
  EXPECT_EQ(out[2], 0xa5a1610e72fd18b5ULL);
  EXPECT_EQ(out[3], 0x57bd43b5e52b7fe6ULL);
}

TEST(Normals, SameAddressSameVector) {
  const NoiseStream s{42, {3, StreamKind::Idiosyncratic, 17}, 1234};
  const auto a = mvcn::draw_normal(s, 5);
  const auto b = mvcn::draw_normal(s, 5);
  EXPECT_EQ(a, b);
  for (double v : a) EXPECT_TRUE(std::isfinite(v));
}

TEST(Normals, AddressComponentsAllMatter) {
  const NoiseStream base{42, {3, StreamKind::Idiosyncratic, 17}, 1234};
  const double x = mvcn::draw_normal(base, 1)[0];
  auto vary = [&](auto mutate) {
    NoiseStream s = base;
    mutate(s);
    return mvcn::draw_normal(s, 1)[0];
  };
  EXPECT_NE(x, vary([](NoiseStream& s) { s.seed = 43; }));
  EXPECT_NE(x, vary([](NoiseStream& s) { s.stream.block = 4; }));
  EXPECT_NE(x, vary([](NoiseStream& s) { s.stream.particle = 18; }));
  EXPECT_NE(x, vary([](NoiseStream& s) { s.stream.kind = StreamKind::Initial; }));
  EXPECT_NE(x, vary([](NoiseStream& s) { s.counter = 1235; }));
}

TEST(Normals, CommonStreamIgnoresParticle) {
  const NoiseStream a{9, {1, StreamKind::Common, 0}, 5};
  const NoiseStream b{9, {1, StreamKind::Common, 77}, 5};
  EXPECT_EQ(mvcn::draw_normal(a, 3), mvcn::draw_normal(b, 3));
}

TEST(Normals, PrefixStable) {
  // Asking for more coordinates never changes the leading ones.
  const NoiseStream s{5, {0, StreamKind::Idiosyncratic, 2}, 99};
  const auto short_draw = mvcn::draw_normal(s, 3);
  const auto long_draw = mvcn::draw_normal(s, 11);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(short_draw[k], long_draw[k]);
}

TEST(Normals, StepDrawIsSliceOfGroupDraw) {
  const mvcn::StreamId id{2, StreamKind::Idiosyncratic, 8};
  const std::size_t d = 3;
  for (std::uint64_t counter = 0; counter < 12; ++counter) {
    const auto group = mvcn::draw_normal(NoiseStream{11, id, counter / mvcn::kStepGroup}, mvcn::kStepGroup * d);
    std::vector<double> step(d);
    mvcn::draw_step_normal(NoiseStream{11, id, counter}, step);
    const std::size_t slot = counter % mvcn::kStepGroup;
    for (std::size_t k = 0; k < d; ++k) EXPECT_EQ(step[k], group[slot * d + k]);
  }
}

TEST(Normals, MillionDrawMarginals) {
  constexpr std::size_t n = 1'000'000;
  double sum = 0.0, sum_sq = 0.0, sum_4 = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    const double x = mvcn::draw_normal(NoiseStream{2024, {0, StreamKind::Idiosyncratic, 0}, c}, 1)[0];
    sum += x;
    sum_sq += x * x;
    sum_4 += x * x * x * x;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.004);
  // Var(x^2) = 2, so 4 standard errors is 4 * sqrt(2 / n).
  EXPECT_NEAR(var, 1.0, 4.0 * std::sqrt(2.0 / n));
  // Var(x^4) = 96.
  EXPECT_NEAR(sum_4 / n, 3.0, 4.0 * std::sqrt(96.0 / n));
}

TEST(Normals, CoordinatesWithinOneDrawAreUncorrelated) {
  constexpr std::size_t n = 250'000;
  double s01 = 0.0, s23 = 0.0, s14 = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    const auto z = mvcn::draw_normal(NoiseStream{3, {1, StreamKind::Idiosyncratic, 4}, c}, 5);
    s01 += z[0] * z[1];
    s23 += z[2] * z[3];
    s14 += z[1] * z[4];
  }
  const double bound = 4.0 / std::sqrt(static_cast<double>(n));
  EXPECT_NEAR(s01 / n, 0.0, bound);
  EXPECT_NEAR(s23 / n, 0.0, bound);
  EXPECT_NEAR(s14 / n, 0.0, bound);
}

TEST(Normals, DistinctStreamsUncorrelated) {
  constexpr std::size_t n = 1'000'000;
  double idio_idio = 0.0, idio_common = 0.0, block_block = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    const double a = mvcn::draw_normal(NoiseStream{7, {0, StreamKind::Idiosyncratic, 0}, c}, 1)[0];
    const double b = mvcn::draw_normal(NoiseStream{7, {0, StreamKind::Idiosyncratic, 1}, c}, 1)[0];
    const double z = mvcn::draw_normal(NoiseStream{7, {0, StreamKind::Common, 0}, c}, 1)[0];
    const double w = mvcn::draw_normal(NoiseStream{7, {1, StreamKind::Common, 0}, c}, 1)[0];
    idio_idio += a * b;
    idio_common += a * z;
    block_block += z * w;
  }
  EXPECT_NEAR(idio_idio / n, 0.0, 0.004);
  EXPECT_NEAR(idio_common / n, 0.0, 0.004);
  EXPECT_NEAR(block_block / n, 0.0, 0.004);
}

TEST(Uniform, OpenAtZeroClosedAtOne) {
  double lo = 1.0, hi = 0.0, sum = 0.0;
  constexpr std::size_t n = 100'000;
  for (std::size_t c = 0; c < n; ++c) {
    const double u = mvcn::draw_uniform(NoiseStream{1, {0, StreamKind::Initial, 3}, c});
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  EXPECT_GT(lo, 0.0);
  EXPECT_LE(hi, 1.0);
  EXPECT_NEAR(sum / n, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST(DeriveSeed, DistinctTagsDistinctSeeds) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t tag = 0; tag < 1000; ++tag) seen.insert(mvcn::derive_seed(12345, tag));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_EQ(mvcn::derive_seed(1, 2), mvcn::derive_seed(1, 2));
  EXPECT_NE(mvcn::derive_seed(1, 2), mvcn::derive_seed(2, 2));
}

}  // namespace
