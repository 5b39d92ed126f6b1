#pragma once

// Test-only numerical oracles, independent of the library's solution paths:
// an adaptive Dormand-Prince integrator and an affine Riccati sweep for
// linear-quadratic problems. Kept header-only so every suite can use them.

#include <cmath>
#include <functional>
#include <stdexcept>

#include "sdr/common.hpp"

namespace oracles {

using sdr::Mat;
using sdr::Vec;

/// Adaptive Dormand-Prince 5(4).
inline Vec rk45(const std::function<Vec(double, const Vec&)>& f, double t0, const Vec& x0,
                double tf, double rtol = 1e-10, double atol = 1e-12) {
  static const double a21 = 1.0 / 5;
  static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                      a54 = -212.0 / 729;
  static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                      a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                      b6 = 11.0 / 84;
  static const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static const double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                      e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  double t = t0;
  Vec x = x0;
  double h = (tf - t0) / 100.0;
  const double hmin = (tf - t0) * 1e-14;
  int steps = 0;
  while (t < tf) {
    if (t + h > tf) h = tf - t;
    const Vec k1 = f(t, x);
    const Vec k2 = f(t + c2 * h, x + h * (a21 * k1));
    const Vec k3 = f(t + c3 * h, x + h * (a31 * k1 + a32 * k2));
    const Vec k4 = f(t + c4 * h, x + h * (a41 * k1 + a42 * k2 + a43 * k3));
    const Vec k5 = f(t + c5 * h, x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const Vec k6 = f(t + h, x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    const Vec x5 = x + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const Vec k7 = f(t + h, x5);
    const Vec err_vec = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double err = 0.0;
    for (int i = 0; i < x.size(); ++i) {
      const double sc = atol + rtol * std::max(std::abs(x(i)), std::abs(x5(i)));
      err = std::max(err, std::abs(err_vec(i)) / sc);
    }
    if (err <= 1.0) {
      t += h;
      x = x5;
    }
    const double factor = std::min(5.0, std::max(0.2, 0.9 * std::pow(err > 0 ? err : 1e-10, -0.2)));
    h *= factor;
    if (h < hmin) throw std::runtime_error("rk45: step size underflow");
    if (++steps > 20'000'000) throw std::runtime_error("rk45: step cap exceeded");
  }
  return x;
}

/// Affine backward Riccati sweep for the scalar/vector LQ problem
///   min  int c_x'dx + c_u'du + 1/2 [dx;du]' [Hxx Hxu; Hux Huu] [dx;du] dt
///        + sigma_f'dx(T) + 1/2 dx(T)' Qf dx(T)
///   s.t. dx' = A dx + B du + r,  dx(0) = dx0.
/// Returns the optimal state/control/costate at the requested times by dense
/// RK4 on the coupled sweep + forward pass. Everything is time-invariant here;
/// enough for the oracle problems.
struct LqOracle {
  Mat A, B, Hxx, Hxu, Huu, Qf;
  Vec c_x, c_u, r, sigma_f, dx0;
  double t0 = 0.0, tf = 1.0;

  // P' and s' right-hand sides of the sweep (integrated backward).
  void sweep(int n_steps, std::vector<Mat>& P, std::vector<Vec>& s) const {
    const int nx = static_cast<int>(A.rows());
    const double h = (tf - t0) / n_steps;
    P.assign(n_steps + 1, Mat::Zero(nx, nx));
    s.assign(n_steps + 1, Vec::Zero(nx));
    P[n_steps] = Qf;
    s[n_steps] = sigma_f;
    const Mat huu_inv = Huu.inverse();
    auto pdot = [&](const Mat& p) -> Mat {
      const Mat k = huu_inv * (Hxu.transpose() + B.transpose() * p);
      return -(A.transpose() * p + p * A + Hxx - (Hxu + p * B) * k);
    };
    auto sdot = [&](const Mat& p, const Vec& sv) -> Vec {
      const Mat k = huu_inv * (Hxu.transpose() + B.transpose() * p);
      const Mat acl = A - B * k;
      return -(acl.transpose() * sv + c_x - k.transpose() * c_u + p * r);
    };
    for (int i = n_steps; i > 0; --i) {
      // RK4 backward step
      const Mat& p = P[i];
      const Vec& sv = s[i];
      const Mat k1 = pdot(p);
      const Vec l1 = sdot(p, sv);
      const Mat k2 = pdot(p - 0.5 * h * k1);
      const Vec l2 = sdot(p - 0.5 * h * k1, sv - 0.5 * h * l1);
      const Mat k3 = pdot(p - 0.5 * h * k2);
      const Vec l3 = sdot(p - 0.5 * h * k2, sv - 0.5 * h * l2);
      const Mat k4 = pdot(p - h * k3);
      const Vec l4 = sdot(p - h * k3, sv - h * l3);
      P[i - 1] = p - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      s[i - 1] = sv - h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
    }
  }

  // Forward pass; returns dx, du, dlambda sampled on the sweep grid.
  void solve(int n_steps, std::vector<Vec>& dx, std::vector<Vec>& du,
             std::vector<Vec>& dlam) const {
    std::vector<Mat> P;
    std::vector<Vec> s;
    sweep(n_steps, P, s);
    const double h = (tf - t0) / n_steps;
    const Mat huu_inv = Huu.inverse();
    dx.assign(n_steps + 1, dx0);
    du.assign(n_steps + 1, Vec::Zero(B.cols()));
    dlam.assign(n_steps + 1, Vec::Zero(A.rows()));
    auto control = [&](int i, const Vec& x) {
      return Vec(-huu_inv * (c_u + Hxu.transpose() * x + B.transpose() * (P[i] * x + s[i])));
    };
    auto xdot = [&](int i, const Vec& x) { return Vec(A * x + B * control(i, x) + r); };
    for (int i = 0; i < n_steps; ++i) {
      // RK4 with midpoint tables interpolated linearly between grid values
      const Vec k1 = xdot(i, dx[i]);
      const Vec xm1 = dx[i] + 0.5 * h * k1;
      // midpoint sweep values: linear interpolation
      const Vec k2 = [&] {
        const Mat pm = 0.5 * (P[i] + P[i + 1]);
        const Vec sm = 0.5 * (s[i] + s[i + 1]);
        const Vec um = -huu_inv * (c_u + Hxu.transpose() * xm1 + B.transpose() * (pm * xm1 + sm));
        return Vec(A * xm1 + B * um + r);
      }();
      const Vec xm2 = dx[i] + 0.5 * h * k2;
      const Vec k3 = [&] {
        const Mat pm = 0.5 * (P[i] + P[i + 1]);
        const Vec sm = 0.5 * (s[i] + s[i + 1]);
        const Vec um = -huu_inv * (c_u + Hxu.transpose() * xm2 + B.transpose() * (pm * xm2 + sm));
        return Vec(A * xm2 + B * um + r);
      }();
      const Vec xe = dx[i] + h * k3;
      const Vec k4 = xdot(i + 1, xe);
      dx[i + 1] = dx[i] + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    for (int i = 0; i <= n_steps; ++i) {
      du[i] = control(i, dx[i]);
      dlam[i] = P[i] * dx[i] + s[i];
    }
  }
};

}  // namespace oracles
