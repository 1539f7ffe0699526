#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace psdip;
using psdip::testing::random_matrix;
using psdip::testing::random_tensor;
using psdip::testing::rel_gap;

namespace {

// Reflection written as repeated folding, independent of mirror_index.
std::size_t reflect(long i, long n) {
  while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
  return static_cast<std::size_t>(i);
}

// Textbook quadratic-time convolution with mirror boundaries.
Tensor3<double> naive_conv(const Tensor3<double>& x, const std::vector<Tensor2<double>>& ks) {
  const long H = static_cast<long>(x.height()), W = static_cast<long>(x.width());
  Tensor3<double> out(x.height(), x.width(), x.bands());
  for (std::size_t b = 0; b < x.bands(); ++b) {
    const auto& k = ks.size() == 1 ? ks[0] : ks[b];
    const long n = static_cast<long>(k.height()), h = n / 2;
    for (long i = 0; i < H; ++i)
      for (long j = 0; j < W; ++j) {
        double acc = 0.0;
        for (long u = 0; u < n; ++u)
          for (long v = 0; v < n; ++v)
            acc += k(static_cast<std::size_t>(u), static_cast<std::size_t>(v)) *
                   x(reflect(i + h - u, H), reflect(j + h - v, W), b);
        out(static_cast<std::size_t>(i), static_cast<std::size_t>(j), b) = acc;
      }
  }
  return out;
}

std::vector<Tensor2<double>> random_kernels(std::mt19937_64& rng, std::size_t count, std::size_t n) {
  std::vector<Tensor2<double>> ks;
  for (std::size_t k = 0; k < count; ++k) ks.push_back(random_matrix(rng, n, n));
  return ks;
}

// Dense 1-D Keys interpolation matrix (a = -0.5) built from the closed-form weights.
std::vector<std::vector<double>> dense_cubic(std::size_t n, std::size_t r) {
  std::vector<std::vector<double>> m(n * r, std::vector<double>(n, 0.0));
  for (std::size_t I = 0; I < n * r; ++I) {
    const double pos = (static_cast<double>(I) - (static_cast<double>(r) - 1.0) / 2.0) / static_cast<double>(r);
    for (long k = static_cast<long>(std::floor(pos)) - 1; k <= static_cast<long>(std::floor(pos)) + 2; ++k) {
      const double t = std::abs(pos - static_cast<double>(k));
      double w = 0.0;
      if (t <= 1) w = 1.5 * t * t * t - 2.5 * t * t + 1;
      else if (t < 2) w = -0.5 * t * t * t + 2.5 * t * t - 4 * t + 2;
      m[I][reflect(k, static_cast<long>(n))] += w;
    }
  }
  return m;
}

}  // namespace

TEST(MirrorIndex, HalfSampleSymmetric) {
  EXPECT_EQ(mirror_index(-1, 5), 0u);
  EXPECT_EQ(mirror_index(-2, 5), 1u);
  EXPECT_EQ(mirror_index(5, 5), 4u);
  EXPECT_EQ(mirror_index(6, 5), 3u);
  for (long i = -23; i < 30; ++i) EXPECT_EQ(mirror_index(i, 4), reflect(i, 4)) << i;
}

TEST(Conv2dSame, ConstantImageIsPreservedByNormalizedKernel) {
  std::mt19937_64 rng(10);
  auto k = random_matrix(rng, 5, 5, 0.0, 1.0);
  double sum = 0.0;
  for (double v : k.data()) sum += v;
  for (auto& v : k.storage()) v /= sum;
  const Tensor3<double> c(12, 9, 2, 0.37);
  const auto out = conv2d_same<double>(c, std::vector{k});
  for (double v : out.data()) EXPECT_NEAR(v, 0.37, 1e-15);
}

TEST(Conv2dSame, ImpulseResponseIsTheKernel) {
  // True convolution: an impulse at the center reproduces K itself around the center.
  Tensor3<double> x(9, 9, 1);
  x(4, 4, 0) = 1.0;
  Tensor2<double> k(3, 3);
  for (std::size_t k_ = 0; k_ < 9; ++k_) k[k_] = static_cast<double>(k_ + 1);
  const auto out = conv2d_same<double>(x, std::vector{k});
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(out(3 + a, 3 + b, 0), k(a, b));
  EXPECT_EQ(frob_sq(out), frob_sq(as_tensor3(k)));
}

TEST(Conv2dSame, MatchesNaiveReference) {
  std::mt19937_64 rng(11);
  for (std::size_t n : {1u, 3u, 5u, 7u}) {
    const auto x = random_tensor(rng, 16, 16, 2);
    const auto ks = random_kernels(rng, 2, n);
    EXPECT_LE(max_abs_diff(conv2d_same<double>(x, ks), naive_conv(x, ks)), 1e-12) << "kernel " << n;
  }
  // Shared kernel, non-square image, kernel half-width equal to the image size.
  const auto x = random_tensor(rng, 5, 8, 3);
  const auto ks = random_kernels(rng, 1, 11);
  EXPECT_LE(max_abs_diff(conv2d_same<double>(x, ks), naive_conv(x, ks)), 1e-12);
}

TEST(Conv2dSame, RejectsBadKernels) {
  const Tensor3<double> x(8, 8, 2);
  EXPECT_THROW(conv2d_same<double>(x, std::vector{Tensor2<double>(4, 4)}), Error);
  EXPECT_THROW(conv2d_same<double>(x, std::vector{Tensor2<double>(3, 3), Tensor2<double>(3, 3), Tensor2<double>(3, 3)}),
               Error);
  EXPECT_THROW(conv2d_same<double>(x, std::vector{Tensor2<double>(19, 19)}), Error);
  try {
    conv2d_same<double>(x, std::vector{Tensor2<double>(4, 4)});
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "conv.kernel_even");
  }
}

TEST(Conv2dSame, DecimatedVariantEqualsComposition) {
  std::mt19937_64 rng(12);
  const auto x = random_tensor(rng, 16, 12, 3);
  const auto ks = random_kernels(rng, 3, 9);
  for (std::size_t offset = 0; offset < 4; ++offset)
    EXPECT_EQ(conv2d_decimated<double>(x, ks, 4, offset), decimate(conv2d_same<double>(x, ks), 4, offset));
}

TEST(Decimate, RampSamples) {
  Tensor3<double> x(8, 8, 1);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) x(i, j, 0) = static_cast<double>(i);
  const auto y = decimate(x, 4, 0);
  ASSERT_EQ(y.shape_string(), "2x2x1");
  EXPECT_EQ(y(0, 0, 0), 0.0);
  EXPECT_EQ(y(0, 1, 0), 0.0);
  EXPECT_EQ(y(1, 0, 0), 4.0);
  EXPECT_EQ(y(1, 1, 0), 4.0);
  EXPECT_EQ(decimate(x, 4, 3)(1, 0, 0), 7.0);
}

TEST(Decimate, RatioOneIsIdentity) {
  std::mt19937_64 rng(13);
  const auto x = random_tensor(rng, 5, 7, 2);
  EXPECT_EQ(decimate(x, 1), x);
}

TEST(Decimate, RejectsIndivisibleShapesAndBadOffsets) {
  EXPECT_THROW(decimate(Tensor3<double>(9, 8, 1), 4), Error);
  EXPECT_THROW(decimate(Tensor3<double>(8, 8, 1), 4, 4), Error);
}

TEST(Decimate, ZeroInsertIsRightInverse) {
  std::mt19937_64 rng(14);
  const auto y = random_tensor(rng, 3, 4, 2);
  for (std::size_t offset = 0; offset < 3; ++offset) EXPECT_EQ(decimate(zero_insert(y, 3, offset), 3, offset), y);
}

TEST(Adjoint, DecimateAndZeroInsert) {
  std::mt19937_64 rng(15);
  const auto x = random_tensor(rng, 8, 8, 1), y = random_tensor(rng, 2, 2, 1);
  EXPECT_LE(rel_gap(dot(decimate(x, 4, 1), y), dot(x, zero_insert(y, 4, 1))), 1e-12);
}

TEST(Adjoint, ConvolutionAgainstItsTranspose) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t H = 6 + rng() % 10, W = 6 + rng() % 10, n = 2 * (rng() % 5) + 1;
    const auto x = random_tensor(rng, H, W, 2), y = random_tensor(rng, H, W, 2);
    const auto ks = random_kernels(rng, 2, n);
    EXPECT_LE(rel_gap(dot(conv2d_same<double>(x, ks), y), dot(x, conv2d_same_adjoint<double>(y, ks))), 1e-12);
  }
}

TEST(Upsample, ConstantImageStaysConstant) {
  const Tensor3<double> c(5, 6, 2, 0.42);
  for (std::size_t r : {1u, 2u, 3u, 4u}) {
    const auto up = upsample(c, r);
    for (double v : up.data()) EXPECT_NEAR(v, 0.42, 1e-14);
  }
}

TEST(Upsample, RatioOneIsIdentity) {
  std::mt19937_64 rng(17);
  const auto y = random_tensor(rng, 4, 5, 3);
  EXPECT_LE(max_abs_diff(upsample(y, 1), y), 1e-15);
}

TEST(Upsample, ReproducesLinearRampInInterior) {
  Tensor3<double> y(8, 8, 1);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) y(i, j, 0) = static_cast<double>(i);
  const auto x = upsample(y, 2);
  // Low-res row i sits at high-res coordinate 2i + 0.5, so x(I) = (I - 0.5) / 2 away from the borders.
  for (std::size_t I = 4; I < 12; ++I)
    for (std::size_t J = 0; J < 16; ++J) EXPECT_NEAR(x(I, J, 0), (static_cast<double>(I) - 0.5) / 2.0, 1e-12);
}

TEST(Upsample, MatchesDenseInterpolationMatrix) {
  std::mt19937_64 rng(18);
  const std::size_t h = 5, w = 3, r = 4;
  const auto y = random_tensor(rng, h, w, 2);
  const auto R = dense_cubic(h, r), C = dense_cubic(w, r);
  const auto x = upsample(y, r);
  for (std::size_t I = 0; I < h * r; ++I)
    for (std::size_t J = 0; J < w * r; ++J)
      for (std::size_t b = 0; b < 2; ++b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t j = 0; j < w; ++j) acc += R[I][i] * C[J][j] * y(i, j, b);
        EXPECT_NEAR(x(I, J, b), acc, 1e-12);
      }
}

TEST(Adjoint, UpsampleAgainstItsTranspose) {
  std::mt19937_64 rng(19);
  for (std::size_t r : {1u, 2u, 3u, 4u}) {
    const auto y = random_tensor(rng, 4, 6, 2), g = random_tensor(rng, 4 * r, 6 * r, 2);
    EXPECT_LE(rel_gap(dot(upsample(y, r), g), dot(y, upsample_adjoint(g, r))), 1e-12);
  }
}
