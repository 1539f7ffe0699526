#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "psdip/error.hpp"

namespace psdip {

/// Dense H x W x S array stored row-major with the band index fastest (band-last).
template <class T = double>
class Tensor3 {
  static_assert(std::is_floating_point_v<T>);

 public:
  using value_type = T;

  Tensor3() = default;
  Tensor3(std::size_t height, std::size_t width, std::size_t bands, T fill = T{})
      : h_(height), w_(width), s_(bands), data_(checked_size(height, width, bands), fill) {}
  Tensor3(std::size_t height, std::size_t width, std::size_t bands, std::vector<T> data)
      : h_(height), w_(width), s_(bands), data_(std::move(data)) {
    require(data_.size() == checked_size(height, width, bands), "shape.payload",
            "tensor payload length does not match its shape");
  }

  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t bands() const noexcept { return s_; }
  std::size_t pixels() const noexcept { return h_ * w_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t i, std::size_t j, std::size_t b) noexcept { return data_[(i * w_ + j) * s_ + b]; }
  T operator()(std::size_t i, std::size_t j, std::size_t b) const noexcept {
    return data_[(i * w_ + j) * s_ + b];
  }
  T& operator[](std::size_t k) noexcept { return data_[k]; }
  T operator[](std::size_t k) const noexcept { return data_[k]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  template <class U>
  bool same_shape(const Tensor3<U>& o) const noexcept {
    return h_ == o.height() && w_ == o.width() && s_ == o.bands();
  }

  std::string shape_string() const {
    return std::to_string(h_) + "x" + std::to_string(w_) + "x" + std::to_string(s_);
  }

  bool operator==(const Tensor3&) const = default;

 private:
  static std::size_t checked_size(std::size_t h, std::size_t w, std::size_t s) {
    require(h > 0 && w > 0 && s > 0, "shape.nonpositive", "tensor dimensions must be positive");
    return h * w * s;
  }

  std::size_t h_ = 0, w_ = 0, s_ = 0;
  std::vector<T> data_;
};

/// Dense H x W row-major array (PAN images, blur kernels).
template <class T = double>
class Tensor2 {
  static_assert(std::is_floating_point_v<T>);

 public:
  using value_type = T;

  Tensor2() = default;
  Tensor2(std::size_t height, std::size_t width, T fill = T{})
      : h_(height), w_(width), data_(checked_size(height, width), fill) {}
  Tensor2(std::size_t height, std::size_t width, std::vector<T> data)
      : h_(height), w_(width), data_(std::move(data)) {
    require(data_.size() == checked_size(height, width), "shape.payload",
            "matrix payload length does not match its shape");
  }

  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * w_ + j]; }
  T operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * w_ + j]; }
  T& operator[](std::size_t k) noexcept { return data_[k]; }
  T operator[](std::size_t k) const noexcept { return data_[k]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  bool operator==(const Tensor2&) const = default;

 private:
  static std::size_t checked_size(std::size_t h, std::size_t w) {
    require(h > 0 && w > 0, "shape.nonpositive", "matrix dimensions must be positive");
    return h * w;
  }

  std::size_t h_ = 0, w_ = 0;
  std::vector<T> data_;
};

// Denominators smaller than this in magnitude are replaced by sign(d) * kDivGuard.
inline constexpr double kDivGuard = 1e-8;

template <class T>
void require_same_shape(const Tensor3<T>& a, const Tensor3<T>& b, const char* what) {
  if (!a.same_shape(b))
    fail_argument("shape.mismatch", std::string(what) + ": shape " + a.shape_string() + " vs " + b.shape_string());
}

template <class T, class Op>
Tensor3<T> zip(const Tensor3<T>& a, const Tensor3<T>& b, Op op, const char* what) {
  require_same_shape(a, b, what);
  Tensor3<T> out(a.height(), a.width(), a.bands());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = op(a[k], b[k]);
  return out;
}

template <class T>
Tensor3<T> add(const Tensor3<T>& a, const Tensor3<T>& b) {
  return zip(a, b, [](T x, T y) { return x + y; }, "add");
}
template <class T>
Tensor3<T> sub(const Tensor3<T>& a, const Tensor3<T>& b) {
  return zip(a, b, [](T x, T y) { return x - y; }, "sub");
}
template <class T>
Tensor3<T> mul(const Tensor3<T>& a, const Tensor3<T>& b) {
  return zip(a, b, [](T x, T y) { return x * y; }, "mul");
}

template <class T>
T guard_denominator(T d) {
  const T eps = static_cast<T>(kDivGuard);
  if (std::abs(d) >= eps) return d;
  return std::signbit(d) ? -eps : eps;
}

template <class T>
Tensor3<T> div_guarded(const Tensor3<T>& a, const Tensor3<T>& b) {
  return zip(a, b, [](T x, T y) { return x / guard_denominator(y); }, "div_guarded");
}

template <class T>
Tensor3<T> scale(Tensor3<T> x, T c) {
  for (auto& v : x.data()) v *= c;
  return x;
}

template <class T>
Tensor3<T> relu(Tensor3<T> x) {
  for (auto& v : x.data()) v = v > T{0} ? v : T{0};
  return x;
}

/// Squared Frobenius norm, accumulated in index order.
template <class T>
T frob_sq(const Tensor3<T>& x) {
  T acc{0};
  for (T v : x.data()) acc += v * v;
  return acc;
}

template <class T>
T dot(const Tensor3<T>& a, const Tensor3<T>& b) {
  require_same_shape(a, b, "dot");
  T acc{0};
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

template <class T>
T max_abs_diff(const Tensor3<T>& a, const Tensor3<T>& b) {
  require_same_shape(a, b, "max_abs_diff");
  T m{0};
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

template <class T>
bool all_finite(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

/// Stacks the bands of a and b (a's bands first).
template <class T>
Tensor3<T> concat_bands(const Tensor3<T>& a, const Tensor3<T>& b) {
  require(a.height() == b.height() && a.width() == b.width(), "shape.mismatch",
          "concat_bands: spatial sizes differ");
  const std::size_t sa = a.bands(), sb = b.bands();
  Tensor3<T> out(a.height(), a.width(), sa + sb);
  for (std::size_t p = 0; p < a.pixels(); ++p) {
    std::copy_n(a.data().begin() + p * sa, sa, out.data().begin() + p * (sa + sb));
    std::copy_n(b.data().begin() + p * sb, sb, out.data().begin() + p * (sa + sb) + sa);
  }
  return out;
}

/// Bands [first, first + count) of x.
template <class T>
Tensor3<T> slice_bands(const Tensor3<T>& x, std::size_t first, std::size_t count) {
  require(count > 0 && first + count <= x.bands(), "shape.bands", "slice_bands: band range out of bounds");
  Tensor3<T> out(x.height(), x.width(), count);
  for (std::size_t p = 0; p < x.pixels(); ++p)
    std::copy_n(x.data().begin() + p * x.bands() + first, count, out.data().begin() + p * count);
  return out;
}

template <class T>
Tensor2<T> band(const Tensor3<T>& x, std::size_t b) {
  require(b < x.bands(), "shape.bands", "band index out of range");
  Tensor2<T> out(x.height(), x.width());
  for (std::size_t p = 0; p < x.pixels(); ++p) out[p] = x[p * x.bands() + b];
  return out;
}

template <class T>
Tensor3<T> as_tensor3(const Tensor2<T>& m) {
  return Tensor3<T>(m.height(), m.width(), 1, m.storage());
}

/// Replicates a single-band image over `bands` bands.
template <class T>
Tensor3<T> replicate(const Tensor2<T>& m, std::size_t bands) {
  Tensor3<T> out(m.height(), m.width(), bands);
  for (std::size_t p = 0; p < m.size(); ++p)
    for (std::size_t b = 0; b < bands; ++b) out[p * bands + b] = m[p];
  return out;
}

template <class To, class From>
Tensor3<To> cast(const Tensor3<From>& x) {
  if constexpr (std::is_same_v<To, From>) {
    return x;
  } else {
    std::vector<To> d(x.data().begin(), x.data().end());
    return Tensor3<To>(x.height(), x.width(), x.bands(), std::move(d));
  }
}

template <class To, class From>
Tensor2<To> cast(const Tensor2<From>& x) {
  if constexpr (std::is_same_v<To, From>) {
    return x;
  } else {
    std::vector<To> d(x.data().begin(), x.data().end());
    return Tensor2<To>(x.height(), x.width(), std::move(d));
  }
}

template <class T>
T mean(std::span<const T> v) {
  T acc{0};
  for (T x : v) acc += x;
  return acc / static_cast<T>(v.size());
}

/// Population (1/N) standard deviation.
template <class T>
T stddev(std::span<const T> v) {
  const T m = mean(v);
  T acc{0};
  for (T x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<T>(v.size()));
}

}  // namespace psdip
