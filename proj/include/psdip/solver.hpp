#pragma once

// Alternating solver for
//   min_{X, theta} ||Y - (X * K) down_r||_F^2 + lambda ||X - f_theta(X, P) . P_hat||_F^2
// with a gradient step on X, an Adam step on theta, and an Adam-driven initialization of theta.

#include <chrono>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "psdip/adam.hpp"
#include "psdip/autodiff.hpp"
#include "psdip/config.hpp"
#include "psdip/linear_ops.hpp"
#include "psdip/metrics.hpp"
#include "psdip/net.hpp"
#include "psdip/sensor.hpp"
#include "psdip/tensor.hpp"

namespace psdip {

/// Observed data and fixed operators of one fusion problem.
template <class T = double>
struct Problem {
  Tensor3<T> y;      // LRMS, h x w x S
  Tensor2<T> pan;    // H x W
  Tensor3<T> p_hat;  // extended PAN, H x W x S
  BlurBank<T> bank;
  std::size_t ratio = 4;
  std::size_t offset = 0;
  double lambda = 0.1;
  std::optional<Tensor3<T>> noise;  // frozen network input (noise-input ablation)

  std::size_t bands() const noexcept { return y.bands(); }

  Tensor3<T> net_input(const Tensor3<T>& x) const { return noise ? *noise : network_input(x, pan); }

  Tensor3<T> degrade(const Tensor3<T>& x) const { return psdip::degrade(x, bank, ratio, offset); }
};

template <class T>
Problem<T> make_problem(const Tensor3<T>& y, const Tensor2<T>& pan, const RunConfig& cfg) {
  cfg.validate();
  require(pan.height() == y.height() * cfg.ratio && pan.width() == y.width() * cfg.ratio, "shape.ratio",
          "PAN size must equal the LRMS size times the ratio");
  Problem<T> prob;
  prob.y = y;
  prob.pan = pan;
  prob.p_hat = extend_pan(pan, y);
  const auto g = cfg.band_gnyq(y.bands());
  prob.bank = mtf_kernel_bank<T>(g, cfg.ratio, cfg.kernel_size);
  prob.ratio = cfg.ratio;
  prob.offset = cfg.offset;
  prob.lambda = cfg.lambda;
  if (cfg.ablation.noise_input)
    prob.noise = noise_input<T>(cfg.seed + 1, pan.height(), pan.width(), y.bands() + 1);
  return prob;
}

template <class T>
NetArch arch_for(const Problem<T>& prob, const RunConfig& cfg) {
  return NetArch::for_bands(prob.bands(), cfg.hidden_channels, cfg.res_blocks);
}

struct LossTerms {
  double l_y = 0.0;
  double l_p = 0.0;
  double total = 0.0;
};

/// Objective value for a given X and coefficient tensor G.
template <class T>
LossTerms objective(const Problem<T>& prob, const Tensor3<T>& x, const Tensor3<T>& g) {
  LossTerms t;
  t.l_y = static_cast<double>(frob_sq(sub(prob.y, prob.degrade(x))));
  t.l_p = static_cast<double>(frob_sq(sub(x, mul(g, prob.p_hat))));
  t.total = t.l_y + prob.lambda * t.l_p;
  return t;
}

/// Full objective L(X, theta) with the network fed from X (or the frozen noise input).
template <class T>
LossTerms objective(const Problem<T>& prob, const Tensor3<T>& x, const NetParams<T>& params) {
  return objective(prob, x, forward_input(params, prob.net_input(x)));
}

template <class T>
struct TapedLoss {
  Var<T> total;
  Var<T> l_y;
  Var<T> l_p;
  Var<T> g;
};

/// Taped objective. `net_in` is the network input node: concat(x, p) built from `x` itself,
/// a constant holding a frozen iterate, or the noise tensor.
template <class T>
TapedLoss<T> loss_main(const Problem<T>& prob, const Var<T>& x, const NetVars<T>& net, const Var<T>& net_in) {
  auto& tape = *x.tape();
  const auto y = tape.constant(prob.y);
  const auto p_hat = tape.constant(prob.p_hat);
  const auto l_y = ad::frob_sq(ad::sub(y, ad::conv2d_decimated(x, prob.bank.kernels, prob.ratio, prob.offset)));
  const auto g = forward(net, net_in);
  const auto l_p = ad::frob_sq(ad::sub(x, ad::mul(g, p_hat)));
  const auto total = ad::add(l_y, ad::scale(l_p, static_cast<T>(prob.lambda)));
  return {total, l_y, l_p, g};
}

/// Closed-form gradient of the X-subproblem with G held constant:
/// 2 K^T U (degrade(x) - y) + 2 lambda (x - G . P_hat), U = zero insertion.
template <class T>
Tensor3<T> x_gradient(const Problem<T>& prob, const Tensor3<T>& x, const Tensor3<T>& g) {
  const auto resid = sub(prob.degrade(x), prob.y);
  auto grad = scale(conv2d_same_adjoint(zero_insert(resid, prob.ratio, prob.offset), prob.bank.view()), T{2});
  const auto fit = sub(x, mul(g, prob.p_hat));
  const T c = static_cast<T>(2.0 * prob.lambda);
  for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += c * fit[k];
  return grad;
}

/// Gradient of L'(X) = ||Y - (X*K) down_r||^2 + lambda ||X - f(X, P) . P_hat||^2, differentiating
/// through the network input as well.
template <class T>
Tensor3<T> x_gradient_unfixed(const Problem<T>& prob, const Tensor3<T>& x, const NetParams<T>& params) {
  Tape<T> tape;
  const auto xv = tape.leaf(x);
  const auto net = attach(tape, params, false);
  const auto net_in = prob.noise ? tape.constant(*prob.noise) : ad::concat_bands(xv, tape.constant(as_tensor3(prob.pan)));
  const auto loss = loss_main(prob, xv, net, net_in);
  return tape.backward(loss.total, {xv})[xv];
}

template <class T>
struct XStep {
  Tensor3<T> x;
  Tensor3<T> g;  // coefficient tensor used for the step (fixed-input mode)
};

/// X_t = X_{t-1} - alpha * grad. In fixed mode G = f(theta, X_{t-1}) is a constant; `g_prev`
/// may supply it when already known.
template <class T>
XStep<T> update_x(const Tensor3<T>& x_prev, const NetParams<T>& params, const Problem<T>& prob, double alpha,
                  bool unfix_network_input = false, const Tensor3<T>* g_prev = nullptr) {
  require(alpha > 0.0, "config.positive", "alpha must be positive");
  XStep<T> out;
  Tensor3<T> grad;
  if (unfix_network_input) {
    grad = x_gradient_unfixed(prob, x_prev, params);
  } else {
    out.g = g_prev != nullptr ? *g_prev : forward_input(params, prob.net_input(x_prev));
    grad = x_gradient(prob, x_prev, out.g);
  }
  out.x = x_prev;
  const T a = static_cast<T>(alpha);
  for (std::size_t k = 0; k < grad.size(); ++k) out.x[k] -= a * grad[k];
  return out;
}

/// One Adam step on grad_theta L(X_t, theta); X_t is fixed, including as network input.
/// Returns the objective at (X_t, theta before the step).
template <class T>
LossTerms update_theta(NetParams<T>& params, AdamState<T>& adam, const Tensor3<T>& x_t, const Problem<T>& prob) {
  Tape<T> tape;
  const auto xv = tape.constant(x_t);
  const auto net = attach(tape, params, true);
  const auto loss = loss_main(prob, xv, net, tape.constant(prob.net_input(x_t)));
  const auto leaves = net.all();
  const auto grads = tape.backward(loss.total, leaves);
  std::vector<Tensor3<T>> g;
  g.reserve(leaves.size());
  for (const auto& l : leaves) g.push_back(grads[l]);
  auto flat = flatten(params);
  adam.step(flat, g);
  params = unflatten(params, flat);
  return {static_cast<double>(loss.l_y.value()[0]), static_cast<double>(loss.l_p.value()[0]),
          static_cast<double>(loss.total.value()[0])};
}

template <class T>
struct InitResult {
  NetParams<T> params;
  RunLog log;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Minimizes ||Y_up - f_theta(Y_up, P) . (P_hat * K)||_F^2 with Adam (learning rate beta).
template <class T>
InitResult<T> init_theta(NetParams<T> params, const Tensor3<T>& y_up, const Problem<T>& prob, const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  InitResult<T> res;
  const auto blurred_p_hat = conv2d_same(prob.p_hat, prob.bank.view());
  const auto input = prob.net_input(y_up);
  const auto init_loss = [&](Tape<T>& tape, const NetVars<T>& net) {
    const auto target = tape.constant(y_up);
    const auto guide = tape.constant(blurred_p_hat);
    return ad::frob_sq(ad::sub(target, ad::mul(forward(net, tape.constant(input)), guide)));
  };
  auto adam = AdamState<T>::for_params(flatten(params), cfg.beta);
  for (std::size_t step = 1; step <= cfg.init_steps; ++step) {
    Tape<T> tape;
    const auto net = attach(tape, params, true);
    const auto loss = init_loss(tape, net);
    const double value = static_cast<double>(loss.value()[0]);
    check_finite_loss(value, "theta initialization");
    if (step == 1) res.initial_loss = value;
    if (log_init_step(step)) res.log.records.push_back({"init", step, std::nullopt, std::nullopt, value, std::nullopt});
    const auto leaves = net.all();
    const auto grads = tape.backward(loss, leaves);
    std::vector<Tensor3<T>> g;
    for (const auto& l : leaves) g.push_back(grads[l]);
    auto flat = flatten(params);
    adam.step(flat, g);
    params = unflatten(params, flat);
  }
  {
    Tape<T> tape;
    res.final_loss = static_cast<double>(init_loss(tape, attach(tape, params, false)).value()[0]);
    if (cfg.init_steps == 0) res.initial_loss = res.final_loss;
  }
  res.params = std::move(params);
  res.log.phase_seconds["init"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

template <class T>
struct PsdipResult {
  Tensor3<T> x;          // X_T
  Tensor3<T> g;          // G_T = f(theta_T, X_T)
  Tensor3<T> g_initial;  // f(theta_0, X_0)
  NetParams<T> params;   // theta_T
  RunLog log;
  double objective_initial = 0.0;  // L(X_0, theta_0)
  double objective_final = 0.0;    // L(X_T, theta_T)
};

/// Main alternating loop starting from X_0 = upsample(Y) and the given theta_0.
template <class T>
PsdipResult<T> psdip_iterate(const Problem<T>& prob, NetParams<T> theta0, const RunConfig& cfg,
                             const Tensor3<T>* reference = nullptr, RunLog log = {}) {
  const auto start = std::chrono::steady_clock::now();
  PsdipResult<T> res;
  Tensor3<T> x = upsample(prob.y, prob.ratio);
  NetParams<T> params = std::move(theta0);
  res.g_initial = forward_input(params, prob.net_input(x));
  res.objective_initial = objective(prob, x, res.g_initial).total;
  check_finite_loss(res.objective_initial, "the main loop");

  auto adam = AdamState<T>::for_params(flatten(params), cfg.beta);
  std::optional<Tensor3<T>> g_known = res.g_initial;  // f(current theta, current X) when known
  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    auto xs = update_x(x, params, prob, cfg.alpha, cfg.ablation.unfix_network_input, g_known ? &*g_known : nullptr);
    x = std::move(xs.x);
    g_known.reset();
    LossTerms terms;
    if (cfg.ablation.freeze_theta_after_init) {
      g_known = forward_input(params, prob.net_input(x));
      terms = objective(prob, x, *g_known);
    } else {
      terms = update_theta(params, adam, x, prob);
    }
    check_finite_loss(terms.total, "the main loop");
    std::optional<double> quality;
    if (reference != nullptr) quality = psnr(x, *reference);
    log.records.push_back({"main", t, terms.l_y, terms.l_p, terms.total, quality});
  }
  res.g = forward_input(params, prob.net_input(x));
  res.objective_final = objective(prob, x, res.g).total;
  check_finite_loss(res.objective_final, "the main loop");
  res.x = std::move(x);
  res.params = std::move(params);
  log.phase_seconds["main"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  res.log = std::move(log);
  return res;
}

/// theta_0: random initialization followed (unless skipped) by the initialization phase.
template <class T>
InitResult<T> initial_theta(const Problem<T>& prob, const RunConfig& cfg) {
  auto params = init_params<T>(arch_for(prob, cfg), cfg.seed, cfg.output_init_gain);
  if (cfg.ablation.skip_init) {
    InitResult<T> res;
    res.params = std::move(params);
    return res;
  }
  return init_theta(std::move(params), upsample(prob.y, prob.ratio), prob, cfg);
}

template <class T>
PsdipResult<T> psdip_run(const Tensor3<T>& y, const Tensor2<T>& pan, const RunConfig& cfg,
                         const Tensor3<T>* reference = nullptr) {
  const auto prob = make_problem(y, pan, cfg);
  auto init = initial_theta(prob, cfg);
  return psdip_iterate(prob, std::move(init.params), cfg, reference, std::move(init.log));
}

}  // namespace psdip
