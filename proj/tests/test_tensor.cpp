#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace psdip;
using psdip::testing::random_tensor;

TEST(Tensor3, LayoutIsBandLast) {
  Tensor3<double> t(2, 3, 4);
  t(1, 2, 3) = 7.0;
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t[(1 * 3 + 2) * 4 + 3], 7.0);
  EXPECT_EQ(t.shape_string(), "2x3x4");
}

TEST(Tensor3, PayloadMustMatchShape) {
  EXPECT_THROW(Tensor3<double>(2, 2, 2, std::vector<double>(7)), Error);
  EXPECT_THROW(Tensor3<double>(0, 2, 2), Error);
  EXPECT_THROW(Tensor2<double>(2, 2, std::vector<double>(3)), Error);
}

TEST(Elementwise, MulByOnesIsIdentity) {
  std::mt19937_64 rng(1);
  const auto x = random_tensor(rng, 4, 5, 3);
  EXPECT_EQ(mul(x, Tensor3<double>(4, 5, 3, 1.0)), x);
}

TEST(Elementwise, FrobSqOfOnes) { EXPECT_EQ(frob_sq(Tensor3<double>(2, 2, 1, 1.0)), 4.0); }

TEST(Elementwise, DivGuardedReplacesTinyDenominators) {
  const Tensor3<double> one(1, 1, 1, 1.0), zero(1, 1, 1, 0.0);
  EXPECT_DOUBLE_EQ(div_guarded(one, zero)[0], 1e8);
  EXPECT_DOUBLE_EQ(div_guarded(one, Tensor3<double>(1, 1, 1, -1e-9))[0], -1e8);
  EXPECT_DOUBLE_EQ(div_guarded(one, Tensor3<double>(1, 1, 1, 4.0))[0], 0.25);
}

TEST(Elementwise, ShapeMismatchThrows) {
  EXPECT_THROW(add(Tensor3<double>(2, 2, 1), Tensor3<double>(2, 2, 2)), Error);
}

TEST(Elementwise, FrobSqOfDifferenceIsZeroOnlyAtEquality) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_tensor(rng, 3, 4, 2);
    auto y = x;
    EXPECT_EQ(frob_sq(sub(x, y)), 0.0);
    y[rng() % y.size()] += 1e-3;
    EXPECT_GT(frob_sq(sub(x, y)), 0.0);
  }
}

TEST(Bands, ConcatThenSliceRoundTrips) {
  std::mt19937_64 rng(3);
  const auto a = random_tensor(rng, 3, 3, 2), b = random_tensor(rng, 3, 3, 1);
  const auto c = concat_bands(a, b);
  EXPECT_EQ(c.bands(), 3u);
  EXPECT_EQ(slice_bands(c, 0, 2), a);
  EXPECT_EQ(slice_bands(c, 2, 1), b);
}

TEST(Reductions, StddevUsesPopulationConvention) {
  const std::vector<double> v = {1.0, 2.0, 3.0, 4.0};
  EXPECT_DOUBLE_EQ(mean<double>(v), 2.5);
  EXPECT_DOUBLE_EQ(stddev<double>(v), std::sqrt(1.25));
}

TEST(Cast, FloatRoundTripKeepsShape) {
  std::mt19937_64 rng(4);
  const auto x = random_tensor(rng, 2, 3, 2);
  const auto f = cast<float>(x);
  EXPECT_TRUE(f.same_shape(x));
  EXPECT_NEAR(cast<double>(f)[5], x[5], 1e-7);
}
