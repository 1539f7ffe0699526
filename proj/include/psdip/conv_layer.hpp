#pragma once

// Multi-channel 2-D convolution (stride 1, mirror padding) used by the prior network.
// Implemented as im2col followed by a dense product.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstddef>

#include "psdip/error.hpp"
#include "psdip/linear_ops.hpp"
#include "psdip/parallel.hpp"
#include "psdip/tensor.hpp"

namespace psdip {

/// Weight layout: Tensor3(k*k, in_channels, out_channels), i.e. a row-major
/// (k*k*in) x out matrix whose row index is tap * in + channel.
struct ConvGeometry {
  std::size_t kernel;
  std::size_t in_channels;
  std::size_t out_channels;
};

namespace detail {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <class T>
ConvGeometry check_conv_layer(const Tensor3<T>& x, const Tensor3<T>& weight, const Tensor3<T>& bias) {
  const std::size_t taps = weight.height();
  const auto k = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(taps))));
  require(k * k == taps && k % 2 == 1, "conv_layer.kernel", "conv layer kernel must be odd and square");
  require(weight.width() == x.bands(), "conv_layer.in_channels",
          "conv layer expects " + std::to_string(weight.width()) + " input channels, got " +
              std::to_string(x.bands()));
  require(bias.size() == weight.bands(), "conv_layer.bias", "bias length must equal output channels");
  require(k / 2 <= x.height() && k / 2 <= x.width(), "conv.kernel_too_large", "conv layer kernel exceeds image");
  return {k, weight.width(), weight.bands()};
}

// Rows are pixels, columns are (tap, channel) pairs of the mirror-padded neighbourhood.
template <class T>
RowMatrix<T> im2col(const Tensor3<T>& x, std::size_t k) {
  const std::size_t H = x.height(), W = x.width(), C = x.bands();
  const auto h = static_cast<std::ptrdiff_t>(k / 2);
  RowMatrix<T> col(static_cast<Eigen::Index>(H * W), static_cast<Eigen::Index>(k * k * C));
  parallel_for(H, [&](std::size_t i) {
    for (std::size_t j = 0; j < W; ++j) {
      T* row = col.row(static_cast<Eigen::Index>(i * W + j)).data();
      for (std::size_t u = 0; u < k; ++u) {
        const std::size_t ii = mirror_index(static_cast<std::ptrdiff_t>(i + u) - h, H);
        for (std::size_t v = 0; v < k; ++v) {
          const std::size_t jj = mirror_index(static_cast<std::ptrdiff_t>(j + v) - h, W);
          const T* src = x.data().data() + (ii * W + jj) * C;
          std::copy_n(src, C, row + (u * k + v) * C);
        }
      }
    }
  });
  return col;
}

}  // namespace detail

/// out(p, o) = bias(o) + sum_{tap, c} in(neighbour(p, tap), c) * weight(tap, c, o)  (cross-correlation).
template <class T>
Tensor3<T> conv_layer(const Tensor3<T>& x, const Tensor3<T>& weight, const Tensor3<T>& bias) {
  const auto geo = detail::check_conv_layer(x, weight, bias);
  const auto col = detail::im2col(x, geo.kernel);
  const auto rows = static_cast<Eigen::Index>(geo.kernel * geo.kernel * geo.in_channels);
  const auto outc = static_cast<Eigen::Index>(geo.out_channels);
  Eigen::Map<const detail::RowMatrix<T>> wmat(weight.data().data(), rows, outc);
  Eigen::Map<const detail::RowVector<T>> bvec(bias.data().data(), outc);
  Tensor3<T> out(x.height(), x.width(), geo.out_channels);
  Eigen::Map<detail::RowMatrix<T>> omat(out.data().data(), static_cast<Eigen::Index>(x.pixels()), outc);
  omat.noalias() = col * wmat;
  omat.rowwise() += bvec;
  return out;
}

template <class T>
struct ConvLayerGrads {
  Tensor3<T> input;
  Tensor3<T> weight;
  Tensor3<T> bias;
};

/// Vector-Jacobian product of conv_layer. Skips the input gradient when need_input is false.
template <class T>
ConvLayerGrads<T> conv_layer_backward(const Tensor3<T>& x, const Tensor3<T>& weight, const Tensor3<T>& bias,
                                      const Tensor3<T>& grad_out, bool need_input, bool need_params) {
  const auto geo = detail::check_conv_layer(x, weight, bias);
  const std::size_t k = geo.kernel, C = geo.in_channels;
  const auto rows = static_cast<Eigen::Index>(k * k * C);
  const auto outc = static_cast<Eigen::Index>(geo.out_channels);
  const auto npix = static_cast<Eigen::Index>(x.pixels());
  Eigen::Map<const detail::RowMatrix<T>> wmat(weight.data().data(), rows, outc);
  Eigen::Map<const detail::RowMatrix<T>> gmat(grad_out.data().data(), npix, outc);

  ConvLayerGrads<T> grads;
  if (need_params) {
    const auto col = detail::im2col(x, k);
    grads.weight = Tensor3<T>(weight.height(), weight.width(), weight.bands());
    Eigen::Map<detail::RowMatrix<T>> dw(grads.weight.data().data(), rows, outc);
    dw.noalias() = col.transpose() * gmat;
    grads.bias = Tensor3<T>(1, 1, geo.out_channels);
    Eigen::Map<detail::RowVector<T>> db(grads.bias.data().data(), outc);
    db = gmat.colwise().sum();
  }
  if (need_input) {
    const detail::RowMatrix<T> dcol = gmat * wmat.transpose();
    const std::size_t H = x.height(), W = x.width();
    const auto h = static_cast<std::ptrdiff_t>(k / 2);
    grads.input = Tensor3<T>(H, W, C);
    T* dx = grads.input.data().data();
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        const T* row = dcol.row(static_cast<Eigen::Index>(i * W + j)).data();
        for (std::size_t u = 0; u < k; ++u) {
          const std::size_t ii = mirror_index(static_cast<std::ptrdiff_t>(i + u) - h, H);
          for (std::size_t v = 0; v < k; ++v) {
            const std::size_t jj = mirror_index(static_cast<std::ptrdiff_t>(j + v) - h, W);
            T* dst = dx + (ii * W + jj) * C;
            const T* src = row + (u * k + v) * C;
            for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
  return grads;
}

}  // namespace psdip
