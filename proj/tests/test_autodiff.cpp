#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace psdip;
using psdip::testing::random_matrix;
using psdip::testing::random_tensor;
using psdip::testing::rel_gap;

using Fn = std::function<Var<double>(Tape<double>&, std::span<const Var<double>>)>;

namespace {

// relu whose backward wrongly passes gradients where the input is exactly zero.
Var<double> relu_inclusive_mask(const Var<double>& a) {
  return a.tape()->record(psdip::relu(a.value()), {a}, [](const Tensor3<double>& g, ad::In<double> x,
                                                          ad::Out<double> d) {
    for (std::size_t k = 0; k < g.size(); ++k)
      if ((*x[0])[k] >= 0.0) (*d[0])[k] += g[k];
  });
}

// f(x) = ||relu(-(relu(x) + 2 relu(-x))) + 1||^2. The outer relu sees -|x|-like values that touch
// zero at x = 0, where f is locally constant; only the strict mask gets the zero gradient there.
Fn kink_probe(Var<double> (*act)(const Var<double>&)) {
  return [act](Tape<double>& tape, std::span<const Var<double>> v) {
    const auto inner = ad::add(act(v[0]), ad::scale(act(ad::scale(v[0], -1.0)), 2.0));
    const auto outer = act(ad::scale(inner, -1.0));
    return ad::frob_sq(ad::add(outer, tape.constant(Tensor3<double>(2, 2, 1, 1.0))));
  };
}

Var<double> strict_relu(const Var<double>& a) { return ad::relu(a); }

std::vector<Tensor2<double>> normalized_kernels(std::mt19937_64& rng, std::size_t count, std::size_t n) {
  std::vector<Tensor2<double>> ks;
  for (std::size_t c = 0; c < count; ++c) {
    auto k = random_matrix(rng, n, n, 0.0, 1.0);
    double s = 0.0;
    for (double v : k.data()) s += v;
    for (auto& v : k.storage()) v /= s;
    ks.push_back(k);
  }
  return ks;
}

}  // namespace

TEST(Tape, FrobSqGradientAtOnes) {
  Tape<double> tape;
  const auto x = tape.leaf(Tensor3<double>(2, 2, 1, 1.0));
  const auto grads = tape.backward(ad::frob_sq(x), {x});
  for (double v : grads[x].data()) EXPECT_EQ(v, 2.0);
}

TEST(Tape, ReluGradientMask) {
  Tape<double> tape;
  Tensor3<double> v(1, 1, 3);
  v[0] = -1.0;
  v[1] = 1.0;
  v[2] = 0.0;
  const auto x = tape.leaf(v);
  const auto loss = ad::frob_sq(ad::add(ad::relu(x), tape.constant(Tensor3<double>(1, 1, 3, 0.5))));
  const auto g = tape.backward(loss, {x})[x];
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 3.0);  // 2 * (1 + 0.5) * 1
  EXPECT_EQ(g[2], 0.0);
}

TEST(Tape, ZeroGradientAtMinimum) {
  std::mt19937_64 rng(30);
  const auto c = random_tensor(rng, 3, 3, 2);
  Tape<double> tape;
  const auto x = tape.leaf(c);
  const auto g = tape.backward(ad::frob_sq(ad::sub(x, tape.constant(c))), {x})[x];
  for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(Tape, RejectsNonScalarLoss) {
  Tape<double> tape;
  const auto x = tape.leaf(Tensor3<double>(2, 2, 1, 1.0));
  try {
    tape.backward(x, {x});
    FAIL() << "expected a throw";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "tape.non_scalar");
  }
}

TEST(Tape, RejectsForeignVariables) {
  Tape<double> a, b;
  const auto x = a.leaf(Tensor3<double>(1, 1, 1, 1.0));
  const auto y = b.leaf(Tensor3<double>(1, 1, 1, 1.0));
  EXPECT_THROW(ad::add(x, y), Error);
  EXPECT_THROW(b.backward(ad::frob_sq(y), {x}), Error);
}

TEST(Tape, UnreachedLeafGetsZeroGradient) {
  Tape<double> tape;
  const auto x = tape.leaf(Tensor3<double>(2, 1, 1, 3.0));
  const auto unused = tape.leaf(Tensor3<double>(1, 2, 1, 3.0));
  const auto grads = tape.backward(ad::frob_sq(x), {x, unused});
  EXPECT_EQ(grads[unused], Tensor3<double>(1, 2, 1));
}

TEST(Tape, FanOutAccumulates) {
  Tape<double> tape;
  const auto x = tape.leaf(Tensor3<double>(1, 1, 1, 3.0));
  const auto loss = ad::frob_sq(ad::add(x, ad::add(x, x)));  // (3x)^2
  EXPECT_DOUBLE_EQ(tape.backward(loss, {x})[x][0], 54.0);
}

TEST(Tape, NonFiniteGradientIsNumericalError) {
  Tape<double> tape;
  const auto x = tape.leaf(Tensor3<double>(1, 1, 1, 1e200));
  try {
    tape.backward(ad::frob_sq(ad::scale(x, 1e200)), {x});
    FAIL() << "expected a throw";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numerical);
  }
}

TEST(Tape, BackwardIsLinearInTheLoss) {
  std::mt19937_64 rng(31);
  const auto ks = normalized_kernels(rng, 2, 3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto xv = random_tensor(rng, 8, 8, 2), c = random_tensor(rng, 8, 8, 2);
    const double a = std::uniform_real_distribution<double>(-2, 2)(rng);
    const double b = std::uniform_real_distribution<double>(-2, 2)(rng);
    const auto grad = [&](int which) {
      Tape<double> tape;
      const auto x = tape.leaf(xv);
      const auto f = ad::frob_sq(ad::conv2d_same(ad::mul(x, tape.constant(c)), ks));
      const auto g = ad::frob_sq(ad::relu(ad::sub(x, tape.constant(c))));
      const auto loss = which == 0 ? f : which == 1 ? g : ad::add(ad::scale(f, a), ad::scale(g, b));
      return tape.backward(loss, {x})[x];
    };
    const auto gf = grad(0), gg = grad(1), gc = grad(2);
    for (std::size_t k = 0; k < gc.size(); ++k) EXPECT_NEAR(gc[k], a * gf[k] + b * gg[k], 1e-12);
  }
}

TEST(Tape, LinearPrimitiveBackwardsAreAdjoints) {
  std::mt19937_64 rng(32);
  const auto ks = normalized_kernels(rng, 3, 5);
  // <L x, y> must equal <x, L^T y>, where L^T y is the tape gradient of <L x, y>.
  const auto check = [&](auto op, const Tensor3<double>& xv, std::size_t oh, std::size_t ow) {
    const auto yv = random_tensor(rng, oh, ow, xv.bands());
    Tape<double> tape;
    const auto x = tape.leaf(xv);
    const auto lx = op(x);
    // <Lx, y> = (||Lx + y||^2 - ||Lx - y||^2) / 4 keeps everything inside the tape's primitive set.
    const auto yc = tape.constant(yv);
    const auto inner = ad::scale(ad::sub(ad::frob_sq(ad::add(lx, yc)), ad::frob_sq(ad::sub(lx, yc))), 0.25);
    const auto g = tape.backward(inner, {x})[x];
    EXPECT_LE(rel_gap(dot(lx.value(), yv), dot(xv, g)), 1e-10);
  };
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = random_tensor(rng, 8, 12, 3);
    check([&](const Var<double>& v) { return ad::conv2d_same(v, ks); }, x, 8, 12);
    check([&](const Var<double>& v) { return ad::decimate(v, 4, 2); }, x, 2, 3);
    check([&](const Var<double>& v) { return ad::conv2d_decimated(v, ks, 4, 1); }, x, 2, 3);
    check([&](const Var<double>& v) { return ad::upsample(v, 3); }, x, 24, 36);
    check([&](const Var<double>& v) { return ad::zero_insert(v, 2, 1); }, x, 16, 24);
  }
}

TEST(Tape, DegradationGradientMatchesClosedForm) {
  std::mt19937_64 rng(33);
  const auto ks = normalized_kernels(rng, 2, 9);
  const auto xv = random_tensor(rng, 16, 16, 2), yv = random_tensor(rng, 4, 4, 2);
  Tape<double> tape;
  const auto x = tape.leaf(xv);
  const auto loss = ad::frob_sq(ad::sub(ad::decimate(ad::conv2d_same(x, ks), 4), tape.constant(yv)));
  const auto g = tape.backward(loss, {x})[x];
  const auto resid = sub(decimate(conv2d_same<double>(xv, ks), 4), yv);
  const auto expected = scale(conv2d_same_adjoint<double>(zero_insert(resid, 4), ks), 2.0);
  EXPECT_LE(max_abs_diff(g, expected), 1e-10 * std::max(1.0, frob_sq(expected)));
}

TEST(Gradcheck, FrobSqPasses) {
  std::mt19937_64 rng(34);
  const Fn f = [](Tape<double>&, std::span<const Var<double>> v) { return ad::frob_sq(v[0]); };
  const auto rep = gradcheck<double>(f, {random_tensor(rng, 3, 3, 2)}, 1e-5, 1e-6);
  EXPECT_TRUE(rep.passed) << rep.worst;
}

TEST(Gradcheck, ConvolutionMatchesFiniteDifferences) {
  std::mt19937_64 rng(35);
  const auto ks = normalized_kernels(rng, 1, 5);
  const auto c = random_tensor(rng, 8, 8, 1);
  const Fn f = [&](Tape<double>& tape, std::span<const Var<double>> v) {
    return ad::frob_sq(ad::sub(ad::conv2d_same(v[0], ks), tape.constant(c)));
  };
  const auto rep = gradcheck<double>(f, {random_tensor(rng, 8, 8, 1)}, 1e-5, 1e-6);
  EXPECT_TRUE(rep.passed) << rep.worst;
}

TEST(Gradcheck, MixedPrimitivesMatchFiniteDifferences) {
  std::mt19937_64 rng(36);
  const Fn f = [](Tape<double>& tape, std::span<const Var<double>> v) {
    const auto up = ad::upsample(v[0], 2);
    const auto both = ad::concat_bands(ad::mul(up, v[1]), v[1]);
    return ad::frob_sq(ad::sub(ad::relu(both), tape.constant(Tensor3<double>(8, 8, 2, 0.1))));
  };
  const auto rep = gradcheck<double>(f, {random_tensor(rng, 4, 4, 1), random_tensor(rng, 8, 8, 1, 0.5, 1.5)}, 1e-5,
                                     1e-6);
  EXPECT_TRUE(rep.passed) << rep.worst;
}

TEST(Gradcheck, StrictReluPassesAtTheKink) {
  const auto rep = gradcheck<double>(kink_probe(&strict_relu), {Tensor3<double>(2, 2, 1, 0.0)}, 1e-5, 1e-6);
  EXPECT_TRUE(rep.passed) << rep.worst;
}

TEST(Gradcheck, DetectsWrongReluMaskAtTheKink) {
  const auto rep = gradcheck<double>(kink_probe(&relu_inclusive_mask), {Tensor3<double>(2, 2, 1, 0.0)}, 1e-5, 1e-4);
  EXPECT_FALSE(rep.passed);
  EXPECT_GT(rep.worst, 1e-4);
}

TEST(Gradcheck, SubsamplesEntriesWhenAsked) {
  std::mt19937_64 rng(37);
  const Fn f = [](Tape<double>&, std::span<const Var<double>> v) { return ad::frob_sq(v[0]); };
  GradcheckOptions opts;
  opts.max_entries = 5;
  const auto rep = gradcheck<double>(f, {random_tensor(rng, 10, 10, 3)}, 1e-5, 1e-6, opts);
  EXPECT_TRUE(rep.passed);
  EXPECT_EQ(rep.max_rel_error.size(), 1u);
}
