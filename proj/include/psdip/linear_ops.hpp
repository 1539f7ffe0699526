#pragma once

// Linear image operators (per-band convolution, decimation, bicubic resampling)
// together with their exact adjoints.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "psdip/error.hpp"
#include "psdip/parallel.hpp"
#include "psdip/tensor.hpp"

namespace psdip {

/// Symmetric (half-sample) reflection: -1 -> 0, -2 -> 1, n -> n-1, n+1 -> n-2.
/// Repeats with period 2n so any integer maps into [0, n).
inline std::size_t mirror_index(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t k = i % period;
  if (k < 0) k += period;
  if (k >= static_cast<std::ptrdiff_t>(n)) k = period - 1 - k;
  return static_cast<std::size_t>(k);
}

namespace detail {

template <class T>
void check_kernels(std::size_t height, std::size_t width, std::size_t bands,
                   std::span<const Tensor2<T>> kernels) {
  require(kernels.size() == 1 || kernels.size() == bands, "conv.kernel_count",
          "kernel count must be 1 or equal the band count");
  for (const auto& k : kernels) {
    require(k.height() == k.width(), "conv.kernel_shape", "convolution kernels must be square");
    require(k.height() % 2 == 1, "conv.kernel_even", "convolution kernels must have odd size");
    const std::size_t half = k.height() / 2;
    require(half <= height && half <= width, "conv.kernel_too_large",
            "kernel of size " + std::to_string(k.height()) + " exceeds the mirror-padded image extent");
  }
}

// One band of x extended by `h` mirrored samples on every side.
template <class T>
std::vector<T> mirror_pad_band(const Tensor3<T>& x, std::size_t b, std::size_t h) {
  const std::size_t H = x.height(), W = x.width(), PW = W + 2 * h;
  std::vector<T> pad((H + 2 * h) * PW);
  for (std::size_t a = 0; a < H + 2 * h; ++a) {
    const std::size_t i = mirror_index(static_cast<std::ptrdiff_t>(a) - static_cast<std::ptrdiff_t>(h), H);
    for (std::size_t c = 0; c < PW; ++c)
      pad[a * PW + c] = x(i, mirror_index(static_cast<std::ptrdiff_t>(c) - static_cast<std::ptrdiff_t>(h), W), b);
  }
  return pad;
}

// 180-degree rotation, so convolution becomes correlation over the padded buffer.
template <class T>
std::vector<T> flipped(const Tensor2<T>& k) {
  return std::vector<T>(k.data().rbegin(), k.data().rend());
}

// Convolution output at (i, j) from a padded band; shared by every forward path so that
// sampled and dense evaluations round identically.
template <class T>
inline T conv_at(const T* pad, std::size_t pw, const T* kf, std::size_t n, std::size_t i, std::size_t j) {
  T acc{0};
  for (std::size_t u = 0; u < n; ++u) {
    const T* row = pad + (i + u) * pw + j;
    const T* krow = kf + u * n;
    for (std::size_t v = 0; v < n; ++v) acc += krow[v] * row[v];
  }
  return acc;
}

template <class T>
Tensor3<T> conv2d_strided(const Tensor3<T>& x, std::span<const Tensor2<T>> kernels, std::size_t r, std::size_t offset) {
  const std::size_t H = x.height(), W = x.width(), S = x.bands();
  check_kernels(H, W, S, kernels);
  Tensor3<T> out(H / r, W / r, S);
  parallel_for(S, [&](std::size_t b) {
    const Tensor2<T>& K = kernels.size() == 1 ? kernels[0] : kernels[b];
    const std::size_t n = K.height(), h = n / 2, pw = W + 2 * h;
    const auto pad = mirror_pad_band(x, b, h);
    const auto kf = flipped(K);
    for (std::size_t i = 0; i < out.height(); ++i)
      for (std::size_t j = 0; j < out.width(); ++j)
        out(i, j, b) = conv_at(pad.data(), pw, kf.data(), n, r * i + offset, r * j + offset);
  });
  return out;
}

}  // namespace detail

/// Per-band true convolution with mirror boundary handling.
/// out(i,j,b) = sum_{u,v} K_b(u,v) x(i + h - u, j + h - v, b), h = half kernel size.
template <class T>
Tensor3<T> conv2d_same(const Tensor3<T>& x, std::span<const Tensor2<T>> kernels) {
  return detail::conv2d_strided(x, kernels, 1, 0);
}

/// decimate(conv2d_same(x, kernels), r, offset) evaluated only at the kept samples.
template <class T>
Tensor3<T> conv2d_decimated(const Tensor3<T>& x, std::span<const Tensor2<T>> kernels, std::size_t r,
                            std::size_t offset) {
  require(r >= 1, "decimate.ratio", "decimation ratio must be >= 1");
  require(offset < r, "decimate.offset", "decimation offset must lie in [0, r)");
  require(x.height() % r == 0 && x.width() % r == 0, "decimate.divisible",
          "image size " + x.shape_string() + " is not divisible by ratio " + std::to_string(r));
  return detail::conv2d_strided(x, kernels, r, offset);
}

/// Adjoint of conv2d_same: scatters each sample back through the mirrored taps.
/// Zero samples are skipped, which makes zero-inserted inputs cheap.
template <class T>
Tensor3<T> conv2d_same_adjoint(const Tensor3<T>& g, std::span<const Tensor2<T>> kernels) {
  const std::size_t H = g.height(), W = g.width(), S = g.bands();
  detail::check_kernels(H, W, S, kernels);
  Tensor3<T> out(H, W, S);
  parallel_for(S, [&](std::size_t b) {
    const Tensor2<T>& K = kernels.size() == 1 ? kernels[0] : kernels[b];
    const std::size_t n = K.height(), h = n / 2, pw = W + 2 * h;
    const auto kf = detail::flipped(K);
    std::vector<T> pad((H + 2 * h) * pw, T{0});
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const T gij = g(i, j, b);
        if (gij == T{0}) continue;
        for (std::size_t u = 0; u < n; ++u) {
          T* row = pad.data() + (i + u) * pw + j;
          const T* krow = kf.data() + u * n;
          for (std::size_t v = 0; v < n; ++v) row[v] += krow[v] * gij;
        }
      }
    // Fold the padded border back onto the image (transpose of mirror padding).
    for (std::size_t a = 0; a < H + 2 * h; ++a) {
      const std::size_t i = mirror_index(static_cast<std::ptrdiff_t>(a) - static_cast<std::ptrdiff_t>(h), H);
      for (std::size_t c = 0; c < pw; ++c)
        out(i, mirror_index(static_cast<std::ptrdiff_t>(c) - static_cast<std::ptrdiff_t>(h), W), b) += pad[a * pw + c];
    }
  });
  return out;
}

/// Keeps samples (r*i + offset, r*j + offset).
template <class T>
Tensor3<T> decimate(const Tensor3<T>& x, std::size_t r, std::size_t offset = 0) {
  require(r >= 1, "decimate.ratio", "decimation ratio must be >= 1");
  require(offset < r, "decimate.offset", "decimation offset must lie in [0, r)");
  require(x.height() % r == 0 && x.width() % r == 0, "decimate.divisible",
          "image size " + x.shape_string() + " is not divisible by ratio " + std::to_string(r));
  const std::size_t h = x.height() / r, w = x.width() / r, S = x.bands();
  Tensor3<T> out(h, w, S);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t b = 0; b < S; ++b) out(i, j, b) = x(r * i + offset, r * j + offset, b);
  return out;
}

/// Adjoint of decimate: places y on the sampled grid of an (h*r) x (w*r) zero image.
template <class T>
Tensor3<T> zero_insert(const Tensor3<T>& y, std::size_t r, std::size_t offset = 0) {
  require(r >= 1, "decimate.ratio", "decimation ratio must be >= 1");
  require(offset < r, "decimate.offset", "decimation offset must lie in [0, r)");
  const std::size_t S = y.bands();
  Tensor3<T> out(y.height() * r, y.width() * r, S);
  for (std::size_t i = 0; i < y.height(); ++i)
    for (std::size_t j = 0; j < y.width(); ++j)
      for (std::size_t b = 0; b < S; ++b) out(r * i + offset, r * j + offset, b) = y(i, j, b);
  return out;
}

/// Keys cubic convolution weight with a = -0.5 (Catmull-Rom).
inline double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

namespace detail {

struct Tap {
  std::size_t index;
  double weight;
};

// Row I of the 1-D bicubic upsampling matrix from n samples to n*r samples.
// Low-res sample k sits at high-res coordinate r*k + (r-1)/2.
inline std::vector<std::array<Tap, 4>> cubic_taps(std::size_t n, std::size_t r) {
  std::vector<std::array<Tap, 4>> taps(n * r);
  const double shift = (static_cast<double>(r) - 1.0) / 2.0;
  for (std::size_t I = 0; I < n * r; ++I) {
    const double u = (static_cast<double>(I) - shift) / static_cast<double>(r);
    const double base = std::floor(u);
    const double frac = u - base;
    for (int k = 0; k < 4; ++k) {
      const auto src = static_cast<std::ptrdiff_t>(base) - 1 + k;
      taps[I][k] = {mirror_index(src, n), cubic_weight(frac - static_cast<double>(k - 1))};
    }
  }
  return taps;
}

}  // namespace detail

/// Separable bicubic upsampling by r with mirror boundary handling.
template <class T>
Tensor3<T> upsample(const Tensor3<T>& y, std::size_t r) {
  require(r >= 1, "upsample.ratio", "upsampling ratio must be >= 1");
  const std::size_t h = y.height(), w = y.width(), S = y.bands();
  const auto rows = detail::cubic_taps(h, r);
  const auto cols = detail::cubic_taps(w, r);
  Tensor3<T> tmp(h * r, w, S);
  for (std::size_t I = 0; I < h * r; ++I)
    for (const auto& tap : rows[I])
      for (std::size_t j = 0; j < w; ++j)
        for (std::size_t b = 0; b < S; ++b) tmp(I, j, b) += static_cast<T>(tap.weight) * y(tap.index, j, b);
  Tensor3<T> out(h * r, w * r, S);
  for (std::size_t I = 0; I < h * r; ++I)
    for (std::size_t J = 0; J < w * r; ++J)
      for (const auto& tap : cols[J])
        for (std::size_t b = 0; b < S; ++b) out(I, J, b) += static_cast<T>(tap.weight) * tmp(I, tap.index, b);
  return out;
}

/// Transpose of the bicubic upsampling matrix; maps (h*r, w*r, S) back to (h, w, S).
template <class T>
Tensor3<T> upsample_adjoint(const Tensor3<T>& g, std::size_t r) {
  require(r >= 1, "upsample.ratio", "upsampling ratio must be >= 1");
  require(g.height() % r == 0 && g.width() % r == 0, "upsample.divisible",
          "adjoint input is not a multiple of the ratio");
  const std::size_t h = g.height() / r, w = g.width() / r, S = g.bands();
  const auto rows = detail::cubic_taps(h, r);
  const auto cols = detail::cubic_taps(w, r);
  Tensor3<T> tmp(h * r, w, S);
  for (std::size_t I = 0; I < h * r; ++I)
    for (std::size_t J = 0; J < w * r; ++J)
      for (const auto& tap : cols[J])
        for (std::size_t b = 0; b < S; ++b) tmp(I, tap.index, b) += static_cast<T>(tap.weight) * g(I, J, b);
  Tensor3<T> out(h, w, S);
  for (std::size_t I = 0; I < h * r; ++I)
    for (const auto& tap : rows[I])
      for (std::size_t j = 0; j < w; ++j)
        for (std::size_t b = 0; b < S; ++b) out(tap.index, j, b) += static_cast<T>(tap.weight) * tmp(I, j, b);
  return out;
}

}  // namespace psdip
