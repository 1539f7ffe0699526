#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "psdip/error.hpp"
#include "psdip/tensor.hpp"

namespace psdip {

/// Adam with bias-corrected moments over a list of parameter tensors.
template <class T = double>
struct AdamState {
  double lr = 1e-3;
  double b1 = 0.9;
  double b2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<Tensor3<T>> m;
  std::vector<Tensor3<T>> v;

  static AdamState for_params(const std::vector<Tensor3<T>>& like, double lr) {
    AdamState s;
    s.lr = lr;
    for (const auto& p : like) {
      s.m.emplace_back(p.height(), p.width(), p.bands());
      s.v.emplace_back(p.height(), p.width(), p.bands());
    }
    return s;
  }

  void step(std::vector<Tensor3<T>>& params, const std::vector<Tensor3<T>>& grads) {
    require(params.size() == m.size() && grads.size() == m.size(), "adam.shape",
            "Adam state does not match the parameter list");
    ++t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      require(params[i].same_shape(m[i]) && grads[i].same_shape(m[i]), "adam.shape", "Adam tensor shape mismatch");
      auto& mi = m[i];
      auto& vi = v[i];
      for (std::size_t k = 0; k < params[i].size(); ++k) {
        const double g = grads[i][k];
        const double mk = b1 * mi[k] + (1.0 - b1) * g;
        const double vk = b2 * vi[k] + (1.0 - b2) * g * g;
        mi[k] = static_cast<T>(mk);
        vi[k] = static_cast<T>(vk);
        const double step = lr * (mk / c1) / (std::sqrt(vk / c2) + eps);
        params[i][k] = static_cast<T>(params[i][k] - step);
      }
    }
  }
};

}  // namespace psdip
