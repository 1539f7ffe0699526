#pragma once

// Baseline that regularizes the coefficient tensor G with anisotropic total variation:
//   min_{X, G} ||Y - (X*K) down_r||^2 + lambda1 ||X - G . P_hat||^2 + lambda2 TV(G)
// solved by alternating single (sub)gradient steps on X and G, with G starting at zero.

#include <chrono>
#include <optional>

#include "psdip/config.hpp"
#include "psdip/linear_ops.hpp"
#include "psdip/metrics.hpp"
#include "psdip/solver.hpp"
#include "psdip/tensor.hpp"

namespace psdip {

/// Sum over bands of absolute vertical and horizontal forward differences.
template <class T>
double tv_norm(const Tensor3<T>& g) {
  const std::size_t H = g.height(), W = g.width(), S = g.bands();
  double acc = 0.0;
  for (std::size_t b = 0; b < S; ++b) {
    for (std::size_t i = 0; i + 1 < H; ++i)
      for (std::size_t j = 0; j < W; ++j) acc += std::abs(static_cast<double>(g(i + 1, j, b) - g(i, j, b)));
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j + 1 < W; ++j) acc += std::abs(static_cast<double>(g(i, j + 1, b) - g(i, j, b)));
  }
  return acc;
}

template <class T>
T sign0(T v) {
  return v > T{0} ? T{1} : (v < T{0} ? T{-1} : T{0});
}

/// Subgradient of tv_norm with sign(0) = 0.
template <class T>
Tensor3<T> tv_subgradient(const Tensor3<T>& g) {
  const std::size_t H = g.height(), W = g.width(), S = g.bands();
  Tensor3<T> out(H, W, S);
  for (std::size_t b = 0; b < S; ++b) {
    for (std::size_t i = 0; i + 1 < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const T s = sign0(g(i + 1, j, b) - g(i, j, b));
        out(i + 1, j, b) += s;
        out(i, j, b) -= s;
      }
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j + 1 < W; ++j) {
        const T s = sign0(g(i, j + 1, b) - g(i, j, b));
        out(i, j + 1, b) += s;
        out(i, j, b) -= s;
      }
  }
  return out;
}

template <class T>
struct TvResult {
  Tensor3<T> x;
  Tensor3<T> g;
  RunLog log;
};

template <class T>
TvResult<T> pstv_run(const Tensor3<T>& y, const Tensor2<T>& pan, const RunConfig& cfg,
                     const Tensor3<T>* reference = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  RunConfig tv_cfg = cfg;
  tv_cfg.lambda = cfg.tv.lambda1;
  tv_cfg.ablation = {};
  auto prob = make_problem(y, pan, tv_cfg);

  TvResult<T> res;
  res.x = upsample(prob.y, prob.ratio);
  res.g = Tensor3<T>(res.x.height(), res.x.width(), res.x.bands());
  const T step_x = static_cast<T>(cfg.tv_step_x());
  const T step_g = static_cast<T>(cfg.tv.step_g);
  const T two_l1 = static_cast<T>(2.0 * cfg.tv.lambda1);
  const T l2 = static_cast<T>(cfg.tv.lambda2);
  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    const auto gx = x_gradient(prob, res.x, res.g);
    for (std::size_t k = 0; k < gx.size(); ++k) res.x[k] -= step_x * gx[k];

    const auto tv = tv_subgradient(res.g);
    for (std::size_t k = 0; k < res.g.size(); ++k) {
      const T fit = res.x[k] - res.g[k] * prob.p_hat[k];
      res.g[k] -= step_g * (-two_l1 * prob.p_hat[k] * fit + l2 * tv[k]);
    }

    const auto terms = objective(prob, res.x, res.g);
    const double total = terms.l_y + cfg.tv.lambda1 * terms.l_p + cfg.tv.lambda2 * tv_norm(res.g);
    check_finite_loss(total, "the TV solver");
    std::optional<double> quality;
    if (reference != nullptr) quality = psnr(res.x, *reference);
    res.log.records.push_back({"tv", t, terms.l_y, terms.l_p, total, quality});
  }
  res.log.phase_seconds["tv"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace psdip
