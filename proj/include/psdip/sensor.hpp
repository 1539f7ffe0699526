#pragma once

// Imaging-chain model: MTF-matched Gaussian blur, blur + decimation (Wald degradation),
// histogram-matched extended PAN, and a seeded synthetic scene generator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "psdip/error.hpp"
#include "psdip/linear_ops.hpp"
#include "psdip/random.hpp"
#include "psdip/tensor.hpp"

namespace psdip {

template <class T = double>
struct BlurBank {
  std::vector<Tensor2<T>> kernels;  // one per band (or a single shared kernel)
  std::size_t size = 0;             // odd kernel side N
  std::size_t ratio = 1;
  std::vector<double> gnyq;

  std::span<const Tensor2<T>> view() const noexcept { return kernels; }
};

/// Spatial standard deviation (in high-res samples) of a Gaussian whose MTF equals gnyq
/// at the low-res Nyquist frequency 1/(2r).
inline double mtf_sigma(double gnyq, std::size_t r) {
  require(gnyq > 0.0 && gnyq < 1.0, "mtf.gnyq", "gain at Nyquist must lie in (0, 1)");
  require(r >= 1, "mtf.ratio", "ratio must be >= 1");
  return static_cast<double>(r) / std::numbers::pi * std::sqrt(2.0 * std::log(1.0 / gnyq));
}

/// Truncated, renormalized isotropic Gaussian of size n x n.
template <class T = double>
Tensor2<T> gaussian_kernel(double sigma, std::size_t n) {
  require(n % 2 == 1, "mtf.kernel_even", "kernel size must be odd");
  require(sigma > 0.0, "mtf.sigma", "sigma must be positive");
  const auto h = static_cast<double>(n / 2);
  Tensor2<double> k(n, n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double di = static_cast<double>(i) - h, dj = static_cast<double>(j) - h;
      k(i, j) = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
      total += k(i, j);
    }
  Tensor2<T> out(n, n);
  for (std::size_t q = 0; q < k.size(); ++q) out[q] = static_cast<T>(k[q] / total);
  return out;
}

template <class T = double>
BlurBank<T> mtf_kernel_bank(std::span<const double> gnyq, std::size_t r, std::size_t n) {
  require(!gnyq.empty(), "mtf.gnyq", "at least one gain value is required");
  require(n % 2 == 1, "mtf.kernel_even", "kernel size must be odd");
  require(n >= 4 * r + 1, "mtf.kernel_small", "kernel size must be at least 4r+1");
  BlurBank<T> bank;
  bank.size = n;
  bank.ratio = r;
  bank.gnyq.assign(gnyq.begin(), gnyq.end());
  for (double g : gnyq) bank.kernels.push_back(gaussian_kernel<T>(mtf_sigma(g, r), n));
  return bank;
}

template <class T = double>
BlurBank<T> mtf_kernel_bank(double gnyq, std::size_t bands, std::size_t r, std::size_t n) {
  const std::vector<double> g(bands, gnyq);
  return mtf_kernel_bank<T>(g, r, n);
}

struct SensorNoise {
  double amplitude = 0.0;  // standard deviation of additive Gaussian noise
  std::uint64_t seed = 0;
};

/// Blur with the bank, then keep every r-th sample starting at `offset`.
template <class T>
Tensor3<T> degrade(const Tensor3<T>& x, const BlurBank<T>& bank, std::size_t r, std::size_t offset = 0,
                   SensorNoise noise = {}) {
  auto y = conv2d_decimated(x, bank.view(), r, offset);
  if (noise.amplitude > 0.0) {
    Rng rng(noise.seed);
    for (auto& v : y.data()) v += static_cast<T>(noise.amplitude * rng.normal());
  }
  return y;
}

template <class T>
Tensor2<T> degrade(const Tensor2<T>& p, const BlurBank<T>& bank, std::size_t r, std::size_t offset = 0) {
  require(bank.kernels.size() == 1, "mtf.pan_bank", "single-band degradation needs a single kernel");
  return band(degrade(as_tensor3(p), bank, r, offset), 0);
}

/// Per band b: (p - mean(p)) * std(y_b) / std(p) + mean(y_b), population statistics.
template <class T>
Tensor3<T> extend_pan(const Tensor2<T>& p, const Tensor3<T>& y) {
  const T pm = mean<T>(p.data());
  const T ps = stddev<T>(p.data());
  if (!(ps > T{0})) fail_argument("pan.constant", "PAN image has zero standard deviation");
  const std::size_t S = y.bands();
  Tensor3<T> out(p.height(), p.width(), S);
  for (std::size_t b = 0; b < S; ++b) {
    const auto yb = band(y, b);
    const T ym = mean<T>(yb.data());
    const T gain = stddev<T>(yb.data()) / ps;
    for (std::size_t q = 0; q < p.size(); ++q) out[q * S + b] = (p[q] - pm) * gain + ym;
  }
  return out;
}

struct SceneSpec {
  std::uint64_t seed = 7;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t bands = 4;
  std::vector<double> pan_weights;          // empty = uniform
  std::vector<double> texture_scales = {1.5, 4.0, 10.0};
  std::size_t rectangles = 10;
};

template <class T = double>
struct Scene {
  Tensor3<T> hrms;
  Tensor2<T> pan;
};

namespace detail {

// Unit-variance, zero-mean smooth random field: white noise blurred by a Gaussian of
// the given correlation length, computed on a margin-padded canvas and cropped.
inline std::vector<double> smooth_field(Rng& rng, std::size_t H, std::size_t W, double scale) {
  const auto m = static_cast<std::size_t>(std::ceil(3.0 * scale));
  const std::size_t PH = H + 2 * m, PW = W + 2 * m;
  std::vector<double> canvas(PH * PW);
  for (auto& v : canvas) v = rng.normal();
  std::vector<double> taps(2 * m + 1);
  double total = 0.0;
  for (std::size_t t = 0; t < taps.size(); ++t) {
    const double d = static_cast<double>(t) - static_cast<double>(m);
    taps[t] = std::exp(-d * d / (2.0 * scale * scale));
    total += taps[t];
  }
  for (auto& t : taps) t /= total;
  std::vector<double> rows(H * PW, 0.0);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t t = 0; t < taps.size(); ++t)
      for (std::size_t j = 0; j < PW; ++j) rows[i * PW + j] += taps[t] * canvas[(i + t) * PW + j];
  std::vector<double> field(H * W, 0.0);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j)
      for (std::size_t t = 0; t < taps.size(); ++t) field[i * W + j] += taps[t] * rows[i * PW + j + t];
  const double mu = mean<double>(field);
  const double sd = stddev<double>(field);
  for (auto& v : field) v = (v - mu) / (sd > 0.0 ? sd : 1.0);
  return field;
}

inline void stretch(std::span<double> v, double lo, double hi) {
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  const double a = *mn, span = *mx - *mn;
  for (auto& x : v) x = span > 0.0 ? std::clamp(lo + (hi - lo) * (x - a) / span, lo, hi) : 0.5 * (lo + hi);
}

}  // namespace detail

/// Seeded synthetic HRMS/PAN pair. HRMS bands share a smooth texture and sharp rectangles
/// with band-specific perturbations; every sample lies in [0.05, 0.95].
template <class T = double>
Scene<T> synth_scene(const SceneSpec& spec) {
  require(spec.height > 0 && spec.width > 0 && spec.bands > 0, "synth.shape", "scene dimensions must be positive");
  require(!spec.texture_scales.empty(), "synth.scales", "at least one texture scale is required");
  std::vector<double> weights = spec.pan_weights;
  if (weights.empty()) weights.assign(spec.bands, 1.0 / static_cast<double>(spec.bands));
  require(weights.size() == spec.bands, "synth.pan_weights", "pan_weights must have one entry per band");

  const std::size_t H = spec.height, W = spec.width, S = spec.bands, N = H * W;
  Rng rng(spec.seed);

  std::vector<double> shared(N, 0.0);
  for (double s : spec.texture_scales) {
    const auto f = detail::smooth_field(rng, H, W, s);
    for (std::size_t q = 0; q < N; ++q) shared[q] += f[q] / static_cast<double>(spec.texture_scales.size());
  }

  struct Rect {
    std::size_t i0, i1, j0, j1;
  };
  std::vector<Rect> rects;
  for (std::size_t k = 0; k < spec.rectangles; ++k) {
    const std::size_t rh = 2 + rng.below(std::max<std::size_t>(1, H / 3));
    const std::size_t rw = 2 + rng.below(std::max<std::size_t>(1, W / 3));
    const std::size_t i0 = rng.below(H), j0 = rng.below(W);
    rects.push_back({i0, std::min(H, i0 + rh), j0, std::min(W, j0 + rw)});
  }

  Scene<T> scene{Tensor3<T>(H, W, S), Tensor2<T>(H, W)};
  std::vector<double> pan(N, 0.0);
  for (std::size_t b = 0; b < S; ++b) {
    const double shared_gain = rng.uniform(0.7, 1.3);
    const auto own = detail::smooth_field(rng, H, W, spec.texture_scales.front() + 1.0);
    std::vector<double> xb(N);
    for (std::size_t q = 0; q < N; ++q) xb[q] = shared_gain * shared[q] + 0.35 * own[q];
    for (const auto& r : rects) {
      const double amp = rng.uniform(-1.5, 1.5);
      for (std::size_t i = r.i0; i < r.i1; ++i)
        for (std::size_t j = r.j0; j < r.j1; ++j) xb[i * W + j] += amp;
    }
    const double lo = rng.uniform(0.05, 0.3), hi = rng.uniform(0.6, 0.95);
    detail::stretch(xb, lo, hi);
    for (std::size_t q = 0; q < N; ++q) {
      scene.hrms[q * S + b] = static_cast<T>(xb[q]);
      pan[q] += weights[b] * xb[q];
    }
  }
  detail::stretch(pan, 0.05, 0.95);
  for (std::size_t q = 0; q < N; ++q) scene.pan[q] = static_cast<T>(pan[q]);
  return scene;
}

}  // namespace psdip
