#pragma once

// Reverse-mode differentiation over Tensor3 values. Forward values are computed eagerly
// when a primitive is recorded; backward() sweeps the tape once in reverse order.

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "psdip/conv_layer.hpp"
#include "psdip/error.hpp"
#include "psdip/linear_ops.hpp"
#include "psdip/tensor.hpp"

namespace psdip {

template <class T>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while its tape lives.
template <class T>
class Var {
 public:
  Var() = default;

  std::size_t id() const noexcept { return id_; }
  Tape<T>* tape() const noexcept { return tape_; }
  const Tensor3<T>& value() const { return tape_->value(*this); }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradients keyed by leaf node id; each entry has the leaf's shape.
template <class T>
class GradMap {
 public:
  const Tensor3<T>& operator[](const Var<T>& leaf) const {
    auto it = grads_.find(leaf.id());
    if (it == grads_.end()) fail_argument("tape.unknown_leaf", "no gradient recorded for this leaf");
    return it->second;
  }
  bool contains(const Var<T>& leaf) const { return grads_.count(leaf.id()) != 0; }
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  friend class Tape<T>;
  std::map<std::size_t, Tensor3<T>> grads_;
};

template <class T>
class Tape {
 public:
  /// Accumulates (+=) the vector-Jacobian product into each non-null input gradient.
  /// `inputs` holds the forward values of the recorded inputs, in recording order.
  using BackwardFn = std::function<void(const Tensor3<T>& upstream, std::span<const Tensor3<T>* const> inputs,
                                        std::span<Tensor3<T>* const> input_grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor3<T> value) { return push(std::move(value), {}, nullptr, true); }
  Var<T> constant(Tensor3<T> value) { return push(std::move(value), {}, nullptr, false); }

  /// Appends a primitive application whose forward value has already been computed.
  Var<T> record(Tensor3<T> value, std::vector<Var<T>> inputs, BackwardFn backward) {
    bool needs = false;
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (const auto& in : inputs) {
      check_owned(in);
      ids.push_back(in.id());
      needs = needs || nodes_[in.id()].requires_grad;
    }
    return push(std::move(value), std::move(ids), needs ? std::move(backward) : nullptr, needs);
  }

  const Tensor3<T>& value(const Var<T>& v) const {
    check_owned(v);
    return nodes_[v.id()].value;
  }
  bool requires_grad(const Var<T>& v) const {
    check_owned(v);
    return nodes_[v.id()].requires_grad;
  }
  std::size_t size() const noexcept { return nodes_.size(); }

  void check_owned(const Var<T>& v) const {
    if (v.tape() != this || v.id() >= nodes_.size())
      fail_argument("tape.foreign", "variable does not belong to this tape");
  }

  GradMap<T> backward(const Var<T>& loss, std::span<const Var<T>> leaves) const {
    check_owned(loss);
    const auto& out = nodes_[loss.id()].value;
    require(out.size() == 1, "tape.non_scalar", "backward requires a scalar loss, got " + out.shape_string());

    std::vector<Tensor3<T>> grads(loss.id() + 1);
    grads[loss.id()] = Tensor3<T>(1, 1, 1, T{1});
    std::vector<Tensor3<T>*> slots;
    std::vector<const Tensor3<T>*> values;
    for (std::size_t n = loss.id() + 1; n-- > 0;) {
      const Node& node = nodes_[n];
      if (grads[n].empty() || !node.backward) continue;
      slots.assign(node.inputs.size(), nullptr);
      values.assign(node.inputs.size(), nullptr);
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const std::size_t in = node.inputs[k];
        values[k] = &nodes_[in].value;
        if (!nodes_[in].requires_grad) continue;
        if (grads[in].empty()) {
          const auto& v = nodes_[in].value;
          grads[in] = Tensor3<T>(v.height(), v.width(), v.bands());
        }
        slots[k] = &grads[in];
      }
      node.backward(grads[n], values, slots);
    }

    GradMap<T> result;
    for (const auto& leaf : leaves) {
      check_owned(leaf);
      const auto& v = nodes_[leaf.id()].value;
      Tensor3<T> g = leaf.id() < grads.size() && !grads[leaf.id()].empty()
                         ? grads[leaf.id()]
                         : Tensor3<T>(v.height(), v.width(), v.bands());
      if (!all_finite<T>(g.data())) fail_numerical("tape.non_finite_gradient", "gradient contains NaN or Inf");
      result.grads_.insert_or_assign(leaf.id(), std::move(g));
    }
    return result;
  }

  GradMap<T> backward(const Var<T>& loss, std::initializer_list<Var<T>> leaves) const {
    return backward(loss, std::span<const Var<T>>(leaves.begin(), leaves.size()));
  }

 private:
  struct Node {
    Tensor3<T> value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Var<T> push(Tensor3<T> value, std::vector<std::size_t> inputs, BackwardFn backward, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backward), requires_grad});
    return Var<T>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

// Differentiable primitives. Each records its forward value and vector-Jacobian product.
namespace ad {

namespace detail {
template <class T>
Tape<T>& common_tape(const Var<T>& a, const Var<T>& b) {
  if (a.tape() == nullptr || a.tape() != b.tape())
    fail_argument("tape.foreign", "operands live on different tapes");
  return *a.tape();
}
template <class T>
Tape<T>& tape_of(const Var<T>& a) {
  if (a.tape() == nullptr) fail_argument("tape.foreign", "variable is not attached to a tape");
  return *a.tape();
}
template <class T>
void accumulate(Tensor3<T>* dst, const Tensor3<T>& src, T factor = T{1}) {
  if (dst == nullptr) return;
  for (std::size_t k = 0; k < src.size(); ++k) (*dst)[k] += factor * src[k];
}
}  // namespace detail

template <class T>
using In = std::span<const Tensor3<T>* const>;
template <class T>
using Out = std::span<Tensor3<T>* const>;

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  auto& tape = detail::common_tape(a, b);
  return tape.record(psdip::add(a.value(), b.value()), {a, b}, [](const Tensor3<T>& g, In<T>, Out<T> d) {
    detail::accumulate(d[0], g);
    detail::accumulate(d[1], g);
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  auto& tape = detail::common_tape(a, b);
  return tape.record(psdip::sub(a.value(), b.value()), {a, b}, [](const Tensor3<T>& g, In<T>, Out<T> d) {
    detail::accumulate(d[0], g);
    detail::accumulate(d[1], g, T{-1});
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  auto& tape = detail::common_tape(a, b);
  return tape.record(psdip::mul(a.value(), b.value()), {a, b}, [](const Tensor3<T>& g, In<T> x, Out<T> d) {
    if (d[0] != nullptr)
      for (std::size_t k = 0; k < g.size(); ++k) (*d[0])[k] += g[k] * (*x[1])[k];
    if (d[1] != nullptr)
      for (std::size_t k = 0; k < g.size(); ++k) (*d[1])[k] += g[k] * (*x[0])[k];
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T c) {
  auto& tape = detail::tape_of(a);
  return tape.record(psdip::scale(a.value(), c), {a},
                     [c](const Tensor3<T>& g, In<T>, Out<T> d) { detail::accumulate(d[0], g, c); });
}

/// Derivative at 0 is taken as 0 (mask is input > 0).
template <class T>
Var<T> relu(const Var<T>& a) {
  auto& tape = detail::tape_of(a);
  return tape.record(psdip::relu(a.value()), {a}, [](const Tensor3<T>& g, In<T> x, Out<T> d) {
    for (std::size_t k = 0; k < g.size(); ++k)
      if ((*x[0])[k] > T{0}) (*d[0])[k] += g[k];
  });
}

template <class T>
Var<T> concat_bands(const Var<T>& a, const Var<T>& b) {
  auto& tape = detail::common_tape(a, b);
  return tape.record(psdip::concat_bands(a.value(), b.value()), {a, b}, [](const Tensor3<T>& g, In<T> x, Out<T> d) {
    const std::size_t sa = x[0]->bands(), sb = x[1]->bands();
    detail::accumulate(d[0], slice_bands(g, 0, sa));
    detail::accumulate(d[1], slice_bands(g, sa, sb));
  });
}

/// Sum of squares as a 1x1x1 tensor.
template <class T>
Var<T> frob_sq(const Var<T>& a) {
  auto& tape = detail::tape_of(a);
  return tape.record(Tensor3<T>(1, 1, 1, psdip::frob_sq(a.value())), {a}, [](const Tensor3<T>& g, In<T> x, Out<T> d) {
    const T factor = T{2} * g[0];
    for (std::size_t k = 0; k < x[0]->size(); ++k) (*d[0])[k] += factor * (*x[0])[k];
  });
}

template <class T>
Var<T> conv2d_same(const Var<T>& a, std::vector<Tensor2<T>> kernels) {
  auto& tape = detail::tape_of(a);
  auto shared = std::make_shared<const std::vector<Tensor2<T>>>(std::move(kernels));
  return tape.record(psdip::conv2d_same(a.value(), std::span<const Tensor2<T>>(*shared)), {a},
                     [shared](const Tensor3<T>& g, In<T>, Out<T> d) {
                       detail::accumulate(d[0], conv2d_same_adjoint(g, std::span<const Tensor2<T>>(*shared)));
                     });
}

/// Blur followed by decimation, evaluated only at the kept samples.
template <class T>
Var<T> conv2d_decimated(const Var<T>& a, std::vector<Tensor2<T>> kernels, std::size_t r, std::size_t offset = 0) {
  auto& tape = detail::tape_of(a);
  auto shared = std::make_shared<const std::vector<Tensor2<T>>>(std::move(kernels));
  return tape.record(psdip::conv2d_decimated(a.value(), std::span<const Tensor2<T>>(*shared), r, offset), {a},
                     [shared, r, offset](const Tensor3<T>& g, In<T>, Out<T> d) {
                       detail::accumulate(d[0], conv2d_same_adjoint(psdip::zero_insert(g, r, offset),
                                                                    std::span<const Tensor2<T>>(*shared)));
                     });
}

template <class T>
Var<T> decimate(const Var<T>& a, std::size_t r, std::size_t offset = 0) {
  auto& tape = detail::tape_of(a);
  return tape.record(psdip::decimate(a.value(), r, offset), {a}, [r, offset](const Tensor3<T>& g, In<T>, Out<T> d) {
    for (std::size_t i = 0; i < g.height(); ++i)
      for (std::size_t j = 0; j < g.width(); ++j)
        for (std::size_t b = 0; b < g.bands(); ++b) (*d[0])(r * i + offset, r * j + offset, b) += g(i, j, b);
  });
}

template <class T>
Var<T> zero_insert(const Var<T>& a, std::size_t r, std::size_t offset = 0) {
  auto& tape = detail::tape_of(a);
  return tape.record(psdip::zero_insert(a.value(), r, offset), {a}, [r, offset](const Tensor3<T>& g, In<T>, Out<T> d) {
    detail::accumulate(d[0], psdip::decimate(g, r, offset));
  });
}

template <class T>
Var<T> upsample(const Var<T>& a, std::size_t r) {
  auto& tape = detail::tape_of(a);
  return tape.record(psdip::upsample(a.value(), r), {a}, [r](const Tensor3<T>& g, In<T>, Out<T> d) {
    detail::accumulate(d[0], upsample_adjoint(g, r));
  });
}

/// Multi-channel convolution layer; see conv_layer.hpp for the weight layout.
template <class T>
Var<T> conv_layer(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  auto& tape = detail::common_tape(x, weight);
  detail::common_tape(x, bias);
  return tape.record(psdip::conv_layer(x.value(), weight.value(), bias.value()), {x, weight, bias},
                     [](const Tensor3<T>& g, In<T> v, Out<T> d) {
                       const bool need_params = d[1] != nullptr || d[2] != nullptr;
                       auto grads = conv_layer_backward(*v[0], *v[1], *v[2], g, d[0] != nullptr, need_params);
                       detail::accumulate(d[0], grads.input);
                       detail::accumulate(d[1], grads.weight);
                       detail::accumulate(d[2], grads.bias);
                     });
}

}  // namespace ad

struct GradcheckOptions {
  // Check at most this many randomly chosen entries per leaf (0 = every entry).
  std::size_t max_entries = 0;
  std::uint64_t seed = 0;
  // Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
};

struct GradcheckReport {
  std::vector<double> max_rel_error;  // one entry per leaf
  double worst = 0.0;
  bool passed = false;
};

/// Compares tape gradients of a scalar function against central differences.
template <class T>
GradcheckReport gradcheck(const std::function<Var<T>(Tape<T>&, std::span<const Var<T>>)>& f,
                          std::vector<Tensor3<T>> leaves, double step, double tol, GradcheckOptions opts = {}) {
  require(step > 0.0, "gradcheck.step", "finite-difference step must be positive");
  std::vector<Tensor3<T>> analytic;
  {
    Tape<T> tape;
    std::vector<Var<T>> vars;
    for (const auto& l : leaves) vars.push_back(tape.leaf(l));
    const auto loss = f(tape, vars);
    const auto grads = tape.backward(loss, vars);
    for (const auto& v : vars) analytic.push_back(grads[v]);
  }
  const auto eval = [&](const std::vector<Tensor3<T>>& point) {
    Tape<T> tape;
    std::vector<Var<T>> vars;
    for (const auto& l : point) vars.push_back(tape.constant(l));
    return static_cast<double>(f(tape, vars).value()[0]);
  };

  GradcheckReport report;
  std::mt19937_64 rng(opts.seed);
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const std::size_t n = leaves[li].size();
    std::vector<std::size_t> entries;
    if (opts.max_entries == 0 || opts.max_entries >= n) {
      for (std::size_t k = 0; k < n; ++k) entries.push_back(k);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (std::size_t k = 0; k < opts.max_entries; ++k) entries.push_back(pick(rng));
    }
    double worst = 0.0;
    for (std::size_t k : entries) {
      const T saved = leaves[li][k];
      leaves[li][k] = static_cast<T>(saved + step);
      const double fp = eval(leaves);
      leaves[li][k] = static_cast<T>(saved - step);
      const double fm = eval(leaves);
      leaves[li][k] = saved;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = static_cast<double>(analytic[li][k]);
      const double denom = std::max({std::abs(a), std::abs(numeric), opts.floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    report.max_rel_error.push_back(worst);
    report.worst = std::max(report.worst, worst);
  }
  report.passed = report.worst <= tol;
  return report;
}

}  // namespace psdip
