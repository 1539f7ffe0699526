#pragma once

// Convolutional prior network G = f(X, P): a PanNet-style residual stack whose final ReLU
// keeps the coefficient tensor nonnegative.

#include <cmath>
#include <cstdint>
#include <vector>

#include "psdip/autodiff.hpp"
#include "psdip/conv_layer.hpp"
#include "psdip/error.hpp"
#include "psdip/random.hpp"
#include "psdip/tensor.hpp"

namespace psdip {

struct NetArch {
  std::size_t in_channels = 5;  // S + 1
  std::size_t out_channels = 4;  // S
  std::size_t hidden_channels = 32;
  std::size_t res_blocks = 4;
  std::size_t kernel = 3;

  static NetArch for_bands(std::size_t bands, std::size_t hidden = 32, std::size_t blocks = 4) {
    return NetArch{bands + 1, bands, hidden, blocks, 3};
  }

  std::size_t layers() const noexcept { return 2 + 2 * res_blocks; }

  std::size_t layer_in(std::size_t l) const noexcept { return l == 0 ? in_channels : hidden_channels; }
  std::size_t layer_out(std::size_t l) const noexcept { return l + 1 == layers() ? out_channels : hidden_channels; }

  void validate() const {
    require(in_channels > 0 && out_channels > 0 && hidden_channels > 0, "net.arch", "channel counts must be positive");
    require(kernel % 2 == 1, "net.arch", "network kernel must be odd");
  }

  bool operator==(const NetArch&) const = default;
};

/// Convolution weights (layout per conv_layer.hpp) and biases, one pair per layer.
template <class T = double>
struct NetParams {
  NetArch arch;
  std::vector<Tensor3<T>> weights;
  std::vector<Tensor3<T>> biases;
  std::uint64_t seed = 0;

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += w.size();
    for (const auto& b : biases) n += b.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& w : weights)
      if (!psdip::all_finite<T>(w.data())) return false;
    for (const auto& b : biases)
      if (!psdip::all_finite<T>(b.data())) return false;
    return true;
  }
};

// Scale on the last layer's uniform bound. At 1.0 the first Adam steps overshoot and the
// output ReLU goes dead on most seeds, leaving G stuck at zero.
inline constexpr double kOutputInitGain = 0.1;

/// Fan-in scaled uniform weights U(-s, s), s = sqrt(6 / fan_in), times `output_gain` on the
/// last layer; zero biases.
template <class T = double>
NetParams<T> init_params(const NetArch& arch, std::uint64_t seed, double output_gain = kOutputInitGain) {
  arch.validate();
  NetParams<T> params{arch, {}, {}, seed};
  Rng rng(seed);
  const std::size_t taps = arch.kernel * arch.kernel;
  for (std::size_t l = 0; l < arch.layers(); ++l) {
    const std::size_t cin = arch.layer_in(l), cout = arch.layer_out(l);
    double s = std::sqrt(6.0 / static_cast<double>(taps * cin));
    if (l + 1 == arch.layers()) s *= output_gain;
    Tensor3<T> w(taps, cin, cout);
    for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-s, s));
    params.weights.push_back(std::move(w));
    params.biases.emplace_back(1, 1, cout);
  }
  return params;
}

template <class T = double>
Tensor3<T> noise_input(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t channels) {
  Tensor3<T> z(height, width, channels);
  Rng rng(seed);
  for (auto& v : z.data()) v = static_cast<T>(rng.normal());
  return z;
}

template <class T>
void check_params(const NetParams<T>& params, std::size_t input_channels) {
  const auto& arch = params.arch;
  require(params.weights.size() == arch.layers() && params.biases.size() == arch.layers(), "net.params",
          "parameter list does not match the architecture");
  require(input_channels == arch.in_channels, "net.input",
          "network expects " + std::to_string(arch.in_channels) + " input channels, got " +
              std::to_string(input_channels));
  const std::size_t taps = arch.kernel * arch.kernel;
  for (std::size_t l = 0; l < arch.layers(); ++l) {
    const auto& w = params.weights[l];
    require(w.height() == taps && w.width() == arch.layer_in(l) && w.bands() == arch.layer_out(l), "net.params",
            "weight shape mismatch at layer " + std::to_string(l));
    require(params.biases[l].size() == arch.layer_out(l), "net.params", "bias shape mismatch at layer " + std::to_string(l));
  }
}

/// Network input: the bands of x followed by p.
template <class T>
Tensor3<T> network_input(const Tensor3<T>& x, const Tensor2<T>& p) {
  return concat_bands(x, as_tensor3(p));
}

/// Plain forward pass on a prepared input (H x W x in_channels).
template <class T>
Tensor3<T> forward_input(const NetParams<T>& params, const Tensor3<T>& input) {
  check_params(params, input.bands());
  const std::size_t last = params.arch.layers() - 1;
  auto h = relu(conv_layer(input, params.weights[0], params.biases[0]));
  for (std::size_t blk = 0; blk < params.arch.res_blocks; ++blk) {
    const std::size_t l = 1 + 2 * blk;
    auto t = relu(conv_layer(h, params.weights[l], params.biases[l]));
    t = conv_layer(t, params.weights[l + 1], params.biases[l + 1]);
    h = add(t, h);
  }
  return relu(conv_layer(h, params.weights[last], params.biases[last]));
}

/// G = f(x, p).
template <class T>
Tensor3<T> forward(const NetParams<T>& params, const Tensor3<T>& x, const Tensor2<T>& p) {
  require(x.height() == p.height() && x.width() == p.width(), "shape.mismatch", "x and p sizes differ");
  return forward_input(params, network_input(x, p));
}

/// Parameters placed on a tape.
template <class T>
struct NetVars {
  NetArch arch;
  std::vector<Var<T>> weights;
  std::vector<Var<T>> biases;

  /// Weights then biases, in layer order.
  std::vector<Var<T>> all() const {
    std::vector<Var<T>> v(weights);
    v.insert(v.end(), biases.begin(), biases.end());
    return v;
  }
};

template <class T>
NetVars<T> attach(Tape<T>& tape, const NetParams<T>& params, bool differentiable) {
  NetVars<T> vars{params.arch, {}, {}};
  for (const auto& w : params.weights) vars.weights.push_back(differentiable ? tape.leaf(w) : tape.constant(w));
  for (const auto& b : params.biases) vars.biases.push_back(differentiable ? tape.leaf(b) : tape.constant(b));
  return vars;
}

/// Taped forward pass; mirrors forward_input operation for operation.
template <class T>
Var<T> forward(const NetVars<T>& net, const Var<T>& input) {
  const std::size_t last = net.arch.layers() - 1;
  require(net.weights.size() == net.arch.layers(), "net.params", "parameter list does not match the architecture");
  auto h = ad::relu(ad::conv_layer(input, net.weights[0], net.biases[0]));
  for (std::size_t blk = 0; blk < net.arch.res_blocks; ++blk) {
    const std::size_t l = 1 + 2 * blk;
    auto t = ad::relu(ad::conv_layer(h, net.weights[l], net.biases[l]));
    t = ad::conv_layer(t, net.weights[l + 1], net.biases[l + 1]);
    h = ad::add(t, h);
  }
  return ad::relu(ad::conv_layer(h, net.weights[last], net.biases[last]));
}

/// Rebuilds a parameter set from per-leaf tensors ordered as NetVars::all().
template <class T>
NetParams<T> unflatten(const NetParams<T>& like, const std::vector<Tensor3<T>>& tensors) {
  const std::size_t L = like.arch.layers();
  require(tensors.size() == 2 * L, "net.params", "expected weights followed by biases");
  NetParams<T> out{like.arch, {}, {}, like.seed};
  out.weights.assign(tensors.begin(), tensors.begin() + static_cast<std::ptrdiff_t>(L));
  out.biases.assign(tensors.begin() + static_cast<std::ptrdiff_t>(L), tensors.end());
  return out;
}

template <class T>
std::vector<Tensor3<T>> flatten(const NetParams<T>& params) {
  std::vector<Tensor3<T>> v(params.weights);
  v.insert(v.end(), params.biases.begin(), params.biases.end());
  return v;
}

}  // namespace psdip
