#pragma once

#include <cmath>

#include "sdr/common.hpp"

namespace sdr::ad {

/// Forward-mode scalar carrying value, gradient and Hessian with respect to a
/// fixed set of seed variables. One evaluation of a templated function on
/// these scalars yields the exact first and second derivatives of the output.
///
/// The Hessian propagation makes each multiply O(n^2) in the number of seeds;
/// the dynamics here have at most ~13 seeds, so this stays cheap.
class D2 {
 public:
  D2() : v_(0.0) {}
  explicit D2(double v) : v_(v) {}
  D2(double v, Vec g, Mat h) : v_(v), g_(std::move(g)), h_(std::move(h)) {}

  static D2 constant(double v, int n) { return D2(v, Vec::Zero(n), Mat::Zero(n, n)); }
  static D2 seed(double v, int n, int index) {
    Vec g = Vec::Zero(n);
    g(index) = 1.0;
    return D2(v, std::move(g), Mat::Zero(n, n));
  }

  double value() const { return v_; }
  const Vec& grad() const { return g_; }
  const Mat& hess() const { return h_; }
  int dim() const { return static_cast<int>(g_.size()); }

  D2 operator-() const { return D2(-v_, -g_, -h_); }

  friend D2 operator+(const D2& a, const D2& b) { return D2(a.v_ + b.v_, a.g_ + b.g_, a.h_ + b.h_); }
  friend D2 operator-(const D2& a, const D2& b) { return D2(a.v_ - b.v_, a.g_ - b.g_, a.h_ - b.h_); }
  friend D2 operator*(const D2& a, const D2& b) {
    return D2(a.v_ * b.v_, a.g_ * b.v_ + b.g_ * a.v_,
              a.h_ * b.v_ + b.h_ * a.v_ + a.g_ * b.g_.transpose() + b.g_ * a.g_.transpose());
  }
  friend D2 operator/(const D2& a, const D2& b) { return a * inv(b); }

  friend D2 operator+(const D2& a, double c) { return D2(a.v_ + c, a.g_, a.h_); }
  friend D2 operator+(double c, const D2& a) { return a + c; }
  friend D2 operator-(const D2& a, double c) { return D2(a.v_ - c, a.g_, a.h_); }
  friend D2 operator-(double c, const D2& a) { return D2(c - a.v_, -a.g_, -a.h_); }
  friend D2 operator*(const D2& a, double c) { return D2(a.v_ * c, a.g_ * c, a.h_ * c); }
  friend D2 operator*(double c, const D2& a) { return a * c; }
  friend D2 operator/(const D2& a, double c) { return a * (1.0 / c); }
  friend D2 operator/(double c, const D2& a) { return inv(a) * c; }

  /// Chain rule for a scalar map with known first/second derivative at a.v_.
  friend D2 unary(const D2& a, double f, double df, double d2f) {
    return D2(f, df * a.g_, df * a.h_ + d2f * (a.g_ * a.g_.transpose()));
  }

  friend D2 inv(const D2& a) {
    const double r = 1.0 / a.v_;
    return unary(a, r, -r * r, 2.0 * r * r * r);
  }
  friend D2 sin(const D2& a) { return unary(a, std::sin(a.v_), std::cos(a.v_), -std::sin(a.v_)); }
  friend D2 cos(const D2& a) { return unary(a, std::cos(a.v_), -std::sin(a.v_), -std::cos(a.v_)); }
  friend D2 exp(const D2& a) {
    const double e = std::exp(a.v_);
    return unary(a, e, e, e);
  }
  friend D2 sqrt(const D2& a) {
    const double s = std::sqrt(a.v_);
    return unary(a, s, 0.5 / s, -0.25 / (s * a.v_));
  }
  friend D2 pow(const D2& a, double p) {
    const double f = std::pow(a.v_, p);
    return unary(a, f, p * std::pow(a.v_, p - 1.0), p * (p - 1.0) * std::pow(a.v_, p - 2.0));
  }

  friend bool operator<(const D2& a, double c) { return a.v_ < c; }
  friend bool operator>(const D2& a, double c) { return a.v_ > c; }

 private:
  double v_;
  Vec g_;
  Mat h_;
};

/// First-order-only variant for Jacobian evaluations on hot paths.
class D1 {
 public:
  D1() : v_(0.0) {}
  explicit D1(double v) : v_(v) {}
  D1(double v, Vec g) : v_(v), g_(std::move(g)) {}

  static D1 constant(double v, int n) { return D1(v, Vec::Zero(n)); }
  static D1 seed(double v, int n, int index) {
    Vec g = Vec::Zero(n);
    g(index) = 1.0;
    return D1(v, std::move(g));
  }

  double value() const { return v_; }
  const Vec& grad() const { return g_; }

  D1 operator-() const { return D1(-v_, -g_); }

  friend D1 operator+(const D1& a, const D1& b) { return D1(a.v_ + b.v_, a.g_ + b.g_); }
  friend D1 operator-(const D1& a, const D1& b) { return D1(a.v_ - b.v_, a.g_ - b.g_); }
  friend D1 operator*(const D1& a, const D1& b) {
    return D1(a.v_ * b.v_, a.g_ * b.v_ + b.g_ * a.v_);
  }
  friend D1 operator/(const D1& a, const D1& b) {
    const double r = 1.0 / b.v_;
    return D1(a.v_ * r, (a.g_ - (a.v_ * r) * b.g_) * r);
  }

  friend D1 operator+(const D1& a, double c) { return D1(a.v_ + c, a.g_); }
  friend D1 operator+(double c, const D1& a) { return a + c; }
  friend D1 operator-(const D1& a, double c) { return D1(a.v_ - c, a.g_); }
  friend D1 operator-(double c, const D1& a) { return D1(c - a.v_, -a.g_); }
  friend D1 operator*(const D1& a, double c) { return D1(a.v_ * c, a.g_ * c); }
  friend D1 operator*(double c, const D1& a) { return a * c; }
  friend D1 operator/(const D1& a, double c) { return a * (1.0 / c); }
  friend D1 operator/(double c, const D1& a) {
    const double r = 1.0 / a.v_;
    return D1(c * r, (-c * r * r) * a.g_);
  }

  friend D1 unary(const D1& a, double f, double df) { return D1(f, df * a.g_); }
  friend D1 sin(const D1& a) { return unary(a, std::sin(a.v_), std::cos(a.v_)); }
  friend D1 cos(const D1& a) { return unary(a, std::cos(a.v_), -std::sin(a.v_)); }
  friend D1 exp(const D1& a) {
    const double e = std::exp(a.v_);
    return unary(a, e, e);
  }
  friend D1 sqrt(const D1& a) {
    const double s = std::sqrt(a.v_);
    return unary(a, s, 0.5 / s);
  }
  friend D1 pow(const D1& a, double p) {
    return unary(a, std::pow(a.v_, p), p * std::pow(a.v_, p - 1.0));
  }

  friend bool operator<(const D1& a, double c) { return a.v_ < c; }
  friend bool operator>(const D1& a, double c) { return a.v_ > c; }

 private:
  double v_;
  Vec g_;
};

inline double value_of(double x) { return x; }
inline double value_of(const D1& x) { return x.value(); }
inline double value_of(const D2& x) { return x.value(); }

}  // namespace sdr::ad
