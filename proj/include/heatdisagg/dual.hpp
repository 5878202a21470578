#pragma once

// Forward-mode dual numbers carrying a dense tangent vector. Model code is
// templated on its scalar so the same expressions yield values (double) or
// values plus gradients with respect to all guide parameters (Dual).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace heatdisagg {

class Dual {
 public:
  Dual() = default;
  Dual(double v) : v_(v) {}  // NOLINT: implicit lift of constants
  Dual(double v, std::vector<double> d) : v_(v), d_(std::move(d)) {}

  /// Independent variable `index` out of `n`.
  static Dual variable(double v, std::size_t index, std::size_t n) {
    std::vector<double> d(n, 0.0);
    d[index] = 1.0;
    return {v, std::move(d)};
  }

  double value() const { return v_; }
  const std::vector<double>& tangent() const { return d_; }
  double derivative(std::size_t i) const { return i < d_.size() ? d_[i] : 0.0; }

  /// Chain rule: f(x) with f'(x) = slope.
  Dual apply(double fv, double slope) const {
    std::vector<double> d(d_.size());
    for (std::size_t i = 0; i < d_.size(); ++i) d[i] = slope * d_[i];
    return {fv, std::move(d)};
  }

  /// a * x + b * y on tangents.
  static Dual combine(double v, double a, const Dual& x, double b, const Dual& y) {
    std::vector<double> d(std::max(x.d_.size(), y.d_.size()), 0.0);
    for (std::size_t i = 0; i < x.d_.size(); ++i) d[i] += a * x.d_[i];
    for (std::size_t i = 0; i < y.d_.size(); ++i) d[i] += b * y.d_[i];
    return {v, std::move(d)};
  }

  Dual& operator+=(const Dual& o) { return *this = combine(v_ + o.v_, 1.0, *this, 1.0, o); }
  Dual& operator-=(const Dual& o) { return *this = combine(v_ - o.v_, 1.0, *this, -1.0, o); }
  Dual& operator*=(const Dual& o) { return *this = combine(v_ * o.v_, o.v_, *this, v_, o); }
  Dual& operator/=(const Dual& o) {
    const double q = v_ / o.v_;
    return *this = combine(q, 1.0 / o.v_, *this, -q / o.v_, o);
  }

  /// Adds slope * x's tangent to this tangent in place.
  void accumulate(double slope, const Dual& x) {
    if (d_.size() < x.d_.size()) d_.resize(x.d_.size(), 0.0);
    for (std::size_t i = 0; i < x.d_.size(); ++i) d_[i] += slope * x.d_[i];
  }

 private:
  double v_ = 0.0;
  std::vector<double> d_;
};

inline Dual operator+(Dual a, const Dual& b) { return a += b; }
inline Dual operator-(Dual a, const Dual& b) { return a -= b; }
inline Dual operator*(Dual a, const Dual& b) { return a *= b; }
inline Dual operator/(Dual a, const Dual& b) { return a /= b; }
inline Dual operator-(const Dual& a) { return a.apply(-a.value(), -1.0); }

inline bool operator<(const Dual& a, const Dual& b) { return a.value() < b.value(); }
inline bool operator>(const Dual& a, const Dual& b) { return a.value() > b.value(); }

inline Dual exp(const Dual& x) {
  const double e = std::exp(x.value());
  return x.apply(e, e);
}
inline Dual log(const Dual& x) { return x.apply(std::log(x.value()), 1.0 / x.value()); }
inline Dual log1p(const Dual& x) {
  return x.apply(std::log1p(x.value()), 1.0 / (1.0 + x.value()));
}
inline Dual sqrt(const Dual& x) {
  const double s = std::sqrt(x.value());
  return x.apply(s, 0.5 / s);
}
inline Dual lgamma(const Dual& x) {
  return x.apply(boost::math::lgamma(x.value()), boost::math::digamma(x.value()));
}

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.value(); }

// Scalar helpers used by templated model code. Overloads for double live here
// too so that unqualified calls resolve uniformly.
inline double lgamma_fn(double x) { return boost::math::lgamma(x); }
inline Dual lgamma_fn(const Dual& x) { return lgamma(x); }

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
inline Dual sigmoid(const Dual& x) {
  const double s = sigmoid(x.value());
  return x.apply(s, s * (1.0 - s));
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
inline Dual softplus(const Dual& x) { return x.apply(softplus(x.value()), sigmoid(x.value())); }

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

}  // namespace heatdisagg
