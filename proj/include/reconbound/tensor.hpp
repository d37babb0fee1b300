#pragma once

// Dense row-major tensors over a generic scalar, plus the dual-number scalar
// used for forward-mode derivatives. Everything here is header-only so the
// same code paths instantiate for double and Dual.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace reconbound {

// First-order dual number: carries a value and one directional derivative.
struct Dual {
  double v = 0.0;
  double t = 0.0;

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit by design
  Dual(double value, double tangent) : v(value), t(tangent) {}

  Dual& operator+=(const Dual& o) { v += o.v; t += o.t; return *this; }
  Dual& operator-=(const Dual& o) { v -= o.v; t -= o.t; return *this; }
  Dual& operator*=(const Dual& o) {
    t = t * o.v + v * o.t;
    v *= o.v;
    return *this;
  }
};

inline Dual operator+(Dual a, const Dual& b) { return a += b; }
inline Dual operator-(Dual a, const Dual& b) { return a -= b; }
inline Dual operator*(Dual a, const Dual& b) { return a *= b; }
inline Dual operator-(const Dual& a) { return {-a.v, -a.t}; }
inline Dual operator/(const Dual& a, const Dual& b) {
  const double inv = 1.0 / b.v;
  return {a.v * inv, (a.t - a.v * inv * b.t) * inv};
}
inline bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
inline bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }

inline Dual exp(const Dual& a) {
  const double e = std::exp(a.v);
  return {e, e * a.t};
}
inline Dual log(const Dual& a) { return {std::log(a.v), a.t / a.v}; }
inline Dual log1p(const Dual& a) { return {std::log1p(a.v), a.t / (1.0 + a.v)}; }
inline Dual sqrt(const Dual& a) {
  const double s = std::sqrt(a.v);
  return {s, s > 0.0 ? a.t / (2.0 * s) : 0.0};
}
inline Dual tanh(const Dual& a) {
  const double th = std::tanh(a.v);
  return {th, (1.0 - th * th) * a.t};
}
inline Dual erf(const Dual& a) {
  constexpr double two_over_sqrt_pi = 1.1283791670955126;
  return {std::erf(a.v), two_over_sqrt_pi * std::exp(-a.v * a.v) * a.t};
}

// Scalar access helpers so generic code can read values/tangents uniformly.
inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.v; }
inline double tangent_of(double) { return 0.0; }
inline double tangent_of(const Dual& x) { return x.t; }

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= d;
  }
  return n;
}

template <class S>
class TensorT {
 public:
  TensorT() = default;
  TensorT(Shape shape, std::vector<S> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
      throw std::invalid_argument("tensor data does not match shape");
  }

  static TensorT zeros(Shape shape) {
    int64_t n = shape_numel(shape);
    return TensorT(std::move(shape), std::vector<S>(static_cast<size_t>(n), S(0.0)));
  }
  static TensorT full(Shape shape, double fill) {
    int64_t n = shape_numel(shape);
    return TensorT(std::move(shape), std::vector<S>(static_cast<size_t>(n), S(fill)));
  }
  static TensorT vector(std::vector<S> data) {
    Shape s{static_cast<int64_t>(data.size())};
    return TensorT(std::move(s), std::move(data));
  }
  static TensorT scalar(S v) { return TensorT(Shape{}, std::vector<S>{v}); }

  const Shape& shape() const { return shape_; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  int64_t dim(size_t i) const { return shape_.at(i); }
  bool is_scalar() const { return data_.size() == 1 && shape_.empty(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  S& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const S& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
  std::vector<S>& raw() { return data_; }
  const std::vector<S>& raw() const { return data_; }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (const S& x : data_)
      if (!std::isfinite(value_of(x))) return false;
    return true;
  }

  void fill(S v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  Shape shape_;
  std::vector<S> data_;
};

using Tensor = TensorT<double>;
using DualTensor = TensorT<Dual>;

// Elementwise helpers used across modules. All require matching shapes.
template <class S>
void axpy(double a, const TensorT<S>& x, TensorT<S>& y) {
  if (!x.same_shape(y)) throw std::invalid_argument("axpy shape mismatch");
  for (int64_t i = 0; i < x.numel(); ++i) y[i] += S(a) * x[i];
}

inline double dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) throw std::invalid_argument("dot length mismatch");
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

inline void scale_inplace(Tensor& a, double c) {
  for (int64_t i = 0; i < a.numel(); ++i) a[i] *= c;
}

inline Tensor values_of(const DualTensor& t) {
  Tensor out = Tensor::zeros(t.shape());
  for (int64_t i = 0; i < t.numel(); ++i) out[i] = t[i].v;
  return out;
}

inline Tensor tangents_of(const DualTensor& t) {
  Tensor out = Tensor::zeros(t.shape());
  for (int64_t i = 0; i < t.numel(); ++i) out[i] = t[i].t;
  return out;
}

inline DualTensor duals_of(const Tensor& value, const Tensor& tangent) {
  if (!value.same_shape(tangent))
    throw std::invalid_argument("dual lift shape mismatch");
  DualTensor out = DualTensor::zeros(value.shape());
  for (int64_t i = 0; i < value.numel(); ++i) out[i] = Dual(value[i], tangent[i]);
  return out;
}

inline DualTensor duals_of(const Tensor& value) {
  DualTensor out = DualTensor::zeros(value.shape());
  for (int64_t i = 0; i < value.numel(); ++i) out[i] = Dual(value[i], 0.0);
  return out;
}

}  // namespace reconbound
