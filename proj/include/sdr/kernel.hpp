#pragma once

#include <Eigen/Cholesky>
#include <memory>
#include <vector>

#include "sdr/common.hpp"

namespace sdr {

/// Compactly supported Wendland radial functions. The subscript pair follows
/// the usual (d,k) convention; C2 is Psi_{3,1}, C4 is Psi_{4,2}.
enum class WendlandFamily { C2, C4 };

struct KernelConfig {
  WendlandFamily family = WendlandFamily::C2;
  double lengthscale = 3.0;  // radians for the aerodynamic-coefficient models
  int input_dim = 2;

  bool operator==(const KernelConfig&) const = default;
};

/// Partial-derivative multi-index, one entry per input dimension.
using MultiIndex = std::vector<int>;

int multi_index_order(const MultiIndex& a);
MultiIndex zero_index(int d);
MultiIndex unit_index(int d, int axis);

/// Psi(r), Psi'(r) or Psi''(r) (order 0/1/2). Identically 0 for r >= 1; the
/// polynomial piece's one-sided limit is used at the support knots.
double wendland_eval(WendlandFamily family, double r, int order);

/// phi(r) = Psi'(r)/r in closed form (finite at r = 0), and its derivative.
/// These carry the radial chain rule without 0/0 evaluations.
double wendland_phi(WendlandFamily family, double r);
double wendland_phi_deriv(WendlandFamily family, double r);

/// D1^{d1} D2^{d2} k(y,z) for k(y,z) = Psi(||y-z||/l), with |d1|,|d2| <= 1.
double kernel_eval(const KernelConfig& cfg, const Vec& y, const Vec& z, const MultiIndex& d1,
                   const MultiIndex& d2);

/// D1^{a} k(y,z) (derivatives in the first argument only), |a| <= 2.
double kernel_deriv1(const KernelConfig& cfg, const Vec& y, const Vec& z, const MultiIndex& a);

/// D1^{a} D2^{a} k(y,y), the diagonal term of the power function.
double kernel_diag(const KernelConfig& cfg, const MultiIndex& a);

/// Cholesky factorization of the kernel Gram matrix k(Y,Y), with the diagonal
/// jitter that was actually needed to make the factorization succeed.
struct GramFactorization {
  KernelConfig config;
  Mat points;  // N x d, one sample site per row
  Mat gram;    // k(Y,Y), jitter-free
  Eigen::LLT<Mat> llt;
  double jitter = 0.0;

  int size() const { return static_cast<int>(points.rows()); }
  Vec solve(const Vec& rhs) const;
  /// Row vector k(y, Y) differentiated by `a` in the free argument.
  Vec kernel_vector(const Vec& y, const MultiIndex& a) const;
};

/// Builds k(Y,Y) and factorizes with escalating diagonal jitter
/// (0, 1e-12, 1e-10, 1e-8 relative to the mean diagonal).
GramFactorization build_gram(const KernelConfig& cfg, const Mat& points);

struct Interpolant {
  std::shared_ptr<const GramFactorization> factorization;
  Vec coefficients;
  Vec values;

  int size() const { return static_cast<int>(values.size()); }
};

/// Solves k(Y,Y) a = G through the factorization.
Interpolant fit(std::shared_ptr<const GramFactorization> factorization, const Vec& values);

/// D^a interpolant at y: sum_i a_i D1^a k(y, y_i). |a| <= 1 for C2, <= 2 for C4.
double interp_eval(const Interpolant& interp, const Vec& y, const MultiIndex& a);
double interp_eval(const Interpolant& interp, const Vec& y);

/// P^a(y; Y) = sqrt(max(0, D1^a D2^a k(y,y) - D1^a k(y,Y) K^{-1} D2^a k(Y,y))).
/// Supports |a| <= 1; an empty factorization gives sqrt(diagonal term).
double power_function(const KernelConfig& cfg, const GramFactorization& fact, const Vec& y,
                      const MultiIndex& a);

/// sqrt(G^T k(Y,Y)^{-1} G) through the factorization.
double rkhs_norm(const Interpolant& interp);

/// Cached quantities for evaluating power functions after a trial site is
/// appended, without refactorizing: c = K^{-1} k(Y,y+) and the Schur
/// complement s = k(y+,y+) - k(y+,Y) c. The updated squared power at a probe
/// is base^2 - (D1^a k(probe,y+) - v^T c)^2 / s with v = D1^a k(probe, Y).
struct PowerUpdate {
  Vec k_trial;   // k(Y, y+)
  Vec c;         // K^{-1} k(Y, y+)
  double schur;  // squared power function of the trial site itself
  bool degenerate = false;  // trial coincides with an existing site
};

PowerUpdate prepare_power_update(const KernelConfig& cfg, const GramFactorization& fact,
                                 const Vec& y_plus);

double updated_power_sq(const PowerUpdate& upd, double base_sq, double k_alpha_probe_trial,
                        double v_dot_c);

}  // namespace sdr
