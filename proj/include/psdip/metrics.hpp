#pragma once

// Reduced-resolution (PSNR, SSIM, SAM, ERGAS, SCC) and full-resolution (QNR) quality indices.
// All inputs are expected in [0, 1].

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psdip/error.hpp"
#include "psdip/linear_ops.hpp"
#include "psdip/sensor.hpp"
#include "psdip/tensor.hpp"

namespace psdip {

inline constexpr double kPsnrCap = 99.0;

/// Global-MSE PSNR with unit peak, capped at 99 dB.
template <class T>
double psnr(const Tensor3<T>& x, const Tensor3<T>& ref) {
  require_same_shape(x, ref, "psnr");
  double acc = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double d = static_cast<double>(x[k]) - static_cast<double>(ref[k]);
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(x.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

namespace detail {

// 'valid' correlation of a single-band image with a small separable-or-not window.
inline std::vector<double> filter_valid(std::span<const double> img, std::size_t H, std::size_t W,
                                        const Tensor2<double>& win) {
  const std::size_t n = win.height(), OH = H - n + 1, OW = W - n + 1;
  std::vector<double> out(OH * OW, 0.0);
  for (std::size_t i = 0; i < OH; ++i)
    for (std::size_t j = 0; j < OW; ++j) {
      double acc = 0.0;
      for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = 0; v < n; ++v) acc += win(u, v) * img[(i + u) * W + j + v];
      out[i * OW + j] = acc;
    }
  return out;
}

inline std::vector<double> band_values(const auto& x, std::size_t b) {
  std::vector<double> v(x.pixels());
  for (std::size_t q = 0; q < v.size(); ++q) v[q] = static_cast<double>(x[q * x.bands() + b]);
  return v;
}

inline double ssim_band(std::span<const double> a, std::span<const double> b, std::size_t H, std::size_t W) {
  const auto win = gaussian_kernel<double>(1.5, 11);
  constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t q = 0; q < a.size(); ++q) {
    aa[q] = a[q] * a[q];
    bb[q] = b[q] * b[q];
    ab[q] = a[q] * b[q];
  }
  const auto mu_a = filter_valid(a, H, W, win), mu_b = filter_valid(b, H, W, win);
  const auto s_aa = filter_valid(aa, H, W, win), s_bb = filter_valid(bb, H, W, win), s_ab = filter_valid(ab, H, W, win);
  double acc = 0.0;
  for (std::size_t q = 0; q < mu_a.size(); ++q) {
    const double ma = mu_a[q], mb = mu_b[q];
    const double va = s_aa[q] - ma * ma, vb = s_bb[q] - mb * mb, cov = s_ab[q] - ma * mb;
    acc += ((2 * ma * mb + C1) * (2 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
  }
  return acc / static_cast<double>(mu_a.size());
}

}  // namespace detail

/// Mean over bands of single-scale SSIM (11x11 Gaussian window, sigma 1.5, L = 1).
template <class T>
double ssim(const Tensor3<T>& x, const Tensor3<T>& ref) {
  require_same_shape(x, ref, "ssim");
  require(x.height() >= 11 && x.width() >= 11, "metrics.ssim_size", "SSIM needs images of at least 11x11");
  double acc = 0.0;
  for (std::size_t b = 0; b < x.bands(); ++b)
    acc += detail::ssim_band(detail::band_values(x, b), detail::band_values(ref, b), x.height(), x.width());
  return acc / static_cast<double>(x.bands());
}

/// Mean spectral angle in degrees. Pixels where either vector has norm < 1e-12 are skipped.
/// The angle is atan2(|x ^ r|, x . r), which equals the arccos form but is exact for parallel vectors.
template <class T>
double sam(const Tensor3<T>& x, const Tensor3<T>& ref) {
  require_same_shape(x, ref, "sam");
  const std::size_t S = x.bands();
  double acc = 0.0;
  std::size_t counted = 0;
  for (std::size_t q = 0; q < x.pixels(); ++q) {
    double xx = 0.0, rr = 0.0, xr = 0.0, wedge = 0.0;
    for (std::size_t b = 0; b < S; ++b) {
      const double xb = x[q * S + b], rb = ref[q * S + b];
      xx += xb * xb;
      rr += rb * rb;
      xr += xb * rb;
      for (std::size_t c = b + 1; c < S; ++c) {
        const double w = xb * ref[q * S + c] - x[q * S + c] * rb;
        wedge += w * w;
      }
    }
    if (std::sqrt(xx) < 1e-12 || std::sqrt(rr) < 1e-12) continue;
    acc += std::atan2(std::sqrt(wedge), xr);
    ++counted;
  }
  if (counted == 0) fail_numerical("metrics.degenerate", "SAM undefined: every pixel has a zero spectral vector");
  return acc / static_cast<double>(counted) * 180.0 / std::numbers::pi;
}

/// 100 / r * sqrt(mean_b(mse_b / mean(ref_b)^2)).
template <class T>
double ergas(const Tensor3<T>& x, const Tensor3<T>& ref, std::size_t r) {
  require_same_shape(x, ref, "ergas");
  require(r >= 1, "metrics.ratio", "ERGAS ratio must be >= 1");
  const std::size_t S = x.bands();
  double acc = 0.0;
  for (std::size_t b = 0; b < S; ++b) {
    const auto xb = detail::band_values(x, b), rb = detail::band_values(ref, b);
    double se = 0.0;
    for (std::size_t q = 0; q < xb.size(); ++q) se += (xb[q] - rb[q]) * (xb[q] - rb[q]);
    const double mu = mean<double>(rb);
    if (mu == 0.0) fail_numerical("metrics.degenerate", "ERGAS undefined: reference band has zero mean");
    acc += (se / static_cast<double>(xb.size())) / (mu * mu);
  }
  return 100.0 / static_cast<double>(r) * std::sqrt(acc / static_cast<double>(S));
}

namespace detail {

inline std::vector<double> highpass(std::span<const double> img, std::size_t H, std::size_t W) {
  constexpr std::ptrdiff_t h = 2;
  std::vector<double> out(img.size());
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      double acc = 0.0;
      for (std::ptrdiff_t u = -h; u <= h; ++u)
        for (std::ptrdiff_t v = -h; v <= h; ++v)
          acc += img[mirror_index(static_cast<std::ptrdiff_t>(i) + u, H) * W +
                     mirror_index(static_cast<std::ptrdiff_t>(j) + v, W)];
      out[i * W + j] = img[i * W + j] - acc / 25.0;
    }
  return out;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const double ma = mean<double>(a), mb = mean<double>(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t q = 0; q < a.size(); ++q) {
    sab += (a[q] - ma) * (b[q] - mb);
    saa += (a[q] - ma) * (a[q] - ma);
    sbb += (b[q] - mb) * (b[q] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) fail_numerical("metrics.degenerate", "correlation undefined for a zero-variance input");
  return sab / std::sqrt(saa * sbb);
}

}  // namespace detail

/// Mean over bands of the correlation between 5x5-box high-pass versions of x and ref.
template <class T>
double scc(const Tensor3<T>& x, const Tensor3<T>& ref) {
  require_same_shape(x, ref, "scc");
  const std::size_t H = x.height(), W = x.width();
  double acc = 0.0;
  for (std::size_t b = 0; b < x.bands(); ++b) {
    const auto hx = detail::highpass(detail::band_values(x, b), H, W);
    const auto hr = detail::highpass(detail::band_values(ref, b), H, W);
    acc += detail::pearson(hx, hr);
  }
  return acc / static_cast<double>(x.bands());
}

/// Universal image-quality index averaged over all block x block windows (stride 1).
/// The block is clamped to the image size.
inline double q_index(std::span<const double> a, std::span<const double> b, std::size_t H, std::size_t W,
                      std::size_t block = 32) {
  require(a.size() == H * W && b.size() == H * W, "shape.mismatch", "q_index: image sizes differ");
  const std::size_t n = std::min({block, H, W});
  // Summed-area tables of a, b, a^2, b^2, ab.
  const std::size_t SW = W + 1;
  std::vector<double> sa((H + 1) * SW, 0.0), sb(sa), saa(sa), sbb(sa), sab(sa);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      const double x = a[i * W + j], y = b[i * W + j];
      const std::size_t o = (i + 1) * SW + j + 1, up = i * SW + j + 1, left = (i + 1) * SW + j, diag = i * SW + j;
      sa[o] = x + sa[up] + sa[left] - sa[diag];
      sb[o] = y + sb[up] + sb[left] - sb[diag];
      saa[o] = x * x + saa[up] + saa[left] - saa[diag];
      sbb[o] = y * y + sbb[up] + sbb[left] - sbb[diag];
      sab[o] = x * y + sab[up] + sab[left] - sab[diag];
    }
  const auto box = [&](const std::vector<double>& s, std::size_t i, std::size_t j) {
    return s[(i + n) * SW + j + n] - s[i * SW + j + n] - s[(i + n) * SW + j] + s[i * SW + j];
  };
  const double N = static_cast<double>(n * n);
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i + n <= H; ++i)
    for (std::size_t j = 0; j + n <= W; ++j) {
      const double ma = box(sa, i, j) / N, mb = box(sb, i, j) / N;
      const double va = std::max(0.0, box(saa, i, j) / N - ma * ma);
      const double vb = std::max(0.0, box(sbb, i, j) / N - mb * mb);
      const double cov = box(sab, i, j) / N - ma * mb;
      const double mean_term = ma * ma + mb * mb, var_term = va + vb;
      double q;
      if (mean_term > 0.0 && var_term > 0.0)
        q = 4.0 * cov * ma * mb / (var_term * mean_term);
      else if (mean_term > 0.0)
        q = 2.0 * ma * mb / mean_term;
      else if (var_term > 0.0)
        q = 2.0 * cov / var_term;
      else
        q = 1.0;
      acc += q;
      ++count;
    }
  return acc / static_cast<double>(count);
}

struct QnrReport {
  double qnr = 0.0;
  double d_lambda = 0.0;
  double d_s = 0.0;
};

/// No-reference quality with block-32 Q indices and unit exponents. `pan_bank` is the
/// single-kernel bank used to produce the low-resolution PAN.
template <class T>
QnrReport qnr(const Tensor3<T>& fused, const Tensor3<T>& y, const Tensor2<T>& p, std::size_t r,
              const BlurBank<T>& pan_bank, std::size_t offset = 0, std::size_t block = 32) {
  require(fused.height() == p.height() && fused.width() == p.width(), "metrics.resolution",
          "fused image and PAN must share the full resolution");
  require(fused.height() == y.height() * r && fused.width() == y.width() * r && fused.bands() == y.bands(),
          "metrics.resolution", "fused image must be the LRMS size times the ratio");
  const std::size_t S = fused.bands(), H = fused.height(), W = fused.width(), h = y.height(), w = y.width();
  const auto p_low = degrade(p, pan_bank, r, offset);
  std::vector<std::vector<double>> xf(S), yl(S);
  for (std::size_t b = 0; b < S; ++b) {
    xf[b] = detail::band_values(fused, b);
    yl[b] = detail::band_values(y, b);
  }
  const std::vector<double> ph(p.data().begin(), p.data().end()), pl(p_low.data().begin(), p_low.data().end());

  QnrReport rep;
  std::size_t pairs = 0;
  for (std::size_t b = 0; b < S; ++b)
    for (std::size_t c = b + 1; c < S; ++c) {
      rep.d_lambda += std::abs(q_index(xf[b], xf[c], H, W, block) - q_index(yl[b], yl[c], h, w, block));
      ++pairs;
    }
  if (pairs > 0) rep.d_lambda /= static_cast<double>(pairs);
  for (std::size_t b = 0; b < S; ++b)
    rep.d_s += std::abs(q_index(xf[b], ph, H, W, block) - q_index(yl[b], pl, h, w, block));
  rep.d_s /= static_cast<double>(S);
  rep.qnr = (1.0 - rep.d_lambda) * (1.0 - rep.d_s);
  return rep;
}

/// Mean squared error between an estimated coefficient tensor and x_gt / p_hat (guarded division).
template <class T>
double mse_g(const Tensor3<T>& g_est, const Tensor3<T>& x_gt, const Tensor3<T>& p_hat) {
  const auto g_true = div_guarded(x_gt, p_hat);
  require_same_shape(g_est, g_true, "mse_g");
  double acc = 0.0;
  for (std::size_t k = 0; k < g_est.size(); ++k) {
    const double d = static_cast<double>(g_est[k]) - static_cast<double>(g_true[k]);
    acc += d * d;
  }
  return acc / static_cast<double>(g_est.size());
}

struct MetricReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double sam = 0.0;
  double ergas = 0.0;
  double scc = 0.0;
  std::optional<QnrReport> qnr;
};

template <class T>
MetricReport reference_metrics(const Tensor3<T>& x, const Tensor3<T>& ref, std::size_t r) {
  return MetricReport{psnr(x, ref), ssim(x, ref), sam(x, ref), ergas(x, ref, r), scc(x, ref), std::nullopt};
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population convention
};

inline MeanStd mean_std(std::span<const double> v) {
  require(!v.empty(), "metrics.empty", "cannot aggregate an empty list");
  return {mean<double>(v), stddev<double>(v)};
}

}  // namespace psdip
