#include "sdr/kernel.hpp"

#include <algorithm>
#include <cmath>

namespace sdr {

namespace {

// Polynomial pieces on [0,1). Everything vanishes identically for r >= 1,
// including the one-sided limits at r = 1.
double psi_c2(double r, int order) {
  const double om = 1.0 - r;
  switch (order) {
    case 0: return om * om * om * om * (4.0 * r + 1.0);
    case 1: return -20.0 * r * om * om * om;
    case 2: return -20.0 * om * om * (1.0 - 4.0 * r);
  }
  return 0.0;
}

double psi_c4(double r, int order) {
  const double om = 1.0 - r;
  const double om2 = om * om;
  switch (order) {
    case 0: return om2 * om2 * om2 * (35.0 * r * r + 18.0 * r + 3.0);
    case 1: return -56.0 * r * (5.0 * r + 1.0) * om2 * om2 * om;
    case 2: return 56.0 * om2 * om2 * (35.0 * r * r - 4.0 * r - 1.0);
  }
  return 0.0;
}

constexpr double kDuplicateRel = 1e-12;

}  // namespace

int multi_index_order(const MultiIndex& a) {
  int s = 0;
  for (int v : a) s += v;
  return s;
}

MultiIndex zero_index(int d) { return MultiIndex(static_cast<std::size_t>(d), 0); }

MultiIndex unit_index(int d, int axis) {
  MultiIndex a = zero_index(d);
  a.at(static_cast<std::size_t>(axis)) = 1;
  return a;
}

double wendland_eval(WendlandFamily family, double r, int order) {
  if (r < 0.0 || order < 0 || order > 2) {
    throw Error(ErrorCode::InvalidRequest, "wendland_eval: order must be in {0,1,2} and r >= 0");
  }
  if (r >= 1.0) return 0.0;
  return family == WendlandFamily::C2 ? psi_c2(r, order) : psi_c4(r, order);
}

double wendland_phi(WendlandFamily family, double r) {
  if (r >= 1.0) return 0.0;
  const double om = 1.0 - r;
  if (family == WendlandFamily::C2) return -20.0 * om * om * om;
  const double om2 = om * om;
  return -56.0 * (5.0 * r + 1.0) * om2 * om2 * om;
}

double wendland_phi_deriv(WendlandFamily family, double r) {
  if (r >= 1.0) return 0.0;
  const double om = 1.0 - r;
  if (family == WendlandFamily::C2) return 60.0 * om * om;
  const double om2 = om * om;
  return 1680.0 * r * om2 * om2;
}

namespace {

// Axis list of a multi-index, e.g. (1,1) -> {0,1}, (2,0) -> {0,0}.
void axes_of(const MultiIndex& a, int* axes, int* count) {
  *count = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (int rep = 0; rep < a[i]; ++rep) axes[(*count)++] = static_cast<int>(i);
  }
}

double deriv1_impl(const KernelConfig& cfg, const Vec& y, const Vec& z, const MultiIndex& a) {
  const double l = cfg.lengthscale;
  const Vec u = y - z;
  const double r = u.norm() / l;
  int axes[2];
  int order = 0;
  axes_of(a, axes, &order);
  switch (order) {
    case 0: return wendland_eval(cfg.family, r, 0);
    case 1: return wendland_phi(cfg.family, r) * u(axes[0]) / (l * l);
    case 2: {
      const int i = axes[0], j = axes[1];
      double v = (i == j) ? wendland_phi(cfg.family, r) / (l * l) : 0.0;
      if (r > 0.0 && r < 1.0) {
        v += wendland_phi_deriv(cfg.family, r) * u(i) * u(j) / (l * l * l * l * r);
      }
      return v;
    }
  }
  throw Error(ErrorCode::InvalidRequest, "kernel derivative order > 2 not supported");
}

}  // namespace

double kernel_deriv1(const KernelConfig& cfg, const Vec& y, const Vec& z, const MultiIndex& a) {
  if (multi_index_order(a) > 2) {
    throw Error(ErrorCode::InvalidRequest, "kernel_deriv1: |a| <= 2 required");
  }
  return deriv1_impl(cfg, y, z, a);
}

double kernel_eval(const KernelConfig& cfg, const Vec& y, const Vec& z, const MultiIndex& d1,
                   const MultiIndex& d2) {
  const int o1 = multi_index_order(d1);
  const int o2 = multi_index_order(d2);
  if (o1 > 1 || o2 > 1) {
    throw Error(ErrorCode::InvalidRequest, "kernel_eval: |d1|, |d2| <= 1 required");
  }
  if (o2 == 0) return deriv1_impl(cfg, y, z, d1);
  if (o1 == 0) {
    // D2^a k(y,z) = -D1^a k(y,z) for odd |a| of a radial kernel.
    return -deriv1_impl(cfg, y, z, d2);
  }
  // Mixed (1,1): -phi(r) delta_ij / l^2 - phi'(r) u_i u_j / (l^4 r).
  int ai[2], aj[2];
  int c1 = 0, c2 = 0;
  axes_of(d1, ai, &c1);
  axes_of(d2, aj, &c2);
  const int i = ai[0], j = aj[0];
  const double l = cfg.lengthscale;
  const Vec u = y - z;
  const double r = u.norm() / l;
  double v = (i == j) ? -wendland_phi(cfg.family, r) / (l * l) : 0.0;
  if (r > 0.0 && r < 1.0) {
    v -= wendland_phi_deriv(cfg.family, r) * u(i) * u(j) / (l * l * l * l * r);
  }
  return v;
}

double kernel_diag(const KernelConfig& cfg, const MultiIndex& a) {
  const int order = multi_index_order(a);
  if (order == 0) return wendland_eval(cfg.family, 0.0, 0);
  if (order == 1) {
    return -wendland_phi(cfg.family, 0.0) / (cfg.lengthscale * cfg.lengthscale);
  }
  throw Error(ErrorCode::InvalidRequest, "kernel_diag: |a| <= 1 required");
}

Vec GramFactorization::solve(const Vec& rhs) const {
  if (size() == 0) return Vec();
  return llt.solve(rhs);
}

Vec GramFactorization::kernel_vector(const Vec& y, const MultiIndex& a) const {
  const int n = size();
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = deriv1_impl(config, y, points.row(i), a);
  return v;
}

GramFactorization build_gram(const KernelConfig& cfg, const Mat& points) {
  GramFactorization fact;
  fact.config = cfg;
  fact.points = points;
  const int n = static_cast<int>(points.rows());
  if (n == 0) return fact;
  if (points.cols() != cfg.input_dim) {
    throw Error(ErrorCode::InvalidRequest, "build_gram: point dimension mismatch");
  }

  const double dup_tol = kDuplicateRel * cfg.lengthscale;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if ((points.row(i) - points.row(j)).norm() <= dup_tol) {
        throw Error(ErrorCode::DuplicateSample,
                    "build_gram: samples " + std::to_string(i) + " and " + std::to_string(j) +
                        " coincide");
      }
    }
  }

  Mat gram(n, n);
  const MultiIndex a0 = zero_index(cfg.input_dim);
  for (int i = 0; i < n; ++i) {
    gram(i, i) = wendland_eval(cfg.family, 0.0, 0);
    for (int j = i + 1; j < n; ++j) {
      const double v = deriv1_impl(cfg, points.row(i), points.row(j), a0);
      gram(i, j) = v;
      gram(j, i) = v;
    }
  }
  fact.gram = gram;

  const double mean_diag = gram.diagonal().mean();
  const double rel_jitters[] = {0.0, 1e-12, 1e-10, 1e-8};
  for (double rel : rel_jitters) {
    const double jitter = rel * mean_diag;
    Mat shifted = gram;
    shifted.diagonal().array() += jitter;
    fact.llt.compute(shifted);
    if (fact.llt.info() == Eigen::Success) {
      fact.jitter = jitter;
      return fact;
    }
  }
  throw Error(ErrorCode::IllConditioned, "build_gram: factorization failed at maximum jitter");
}

Interpolant fit(std::shared_ptr<const GramFactorization> factorization, const Vec& values) {
  if (!factorization || values.size() != factorization->size()) {
    throw Error(ErrorCode::InvalidRequest, "fit: value count must match sample count");
  }
  Interpolant interp;
  interp.factorization = std::move(factorization);
  interp.values = values;
  interp.coefficients = interp.factorization->solve(values);
  return interp;
}

double interp_eval(const Interpolant& interp, const Vec& y, const MultiIndex& a) {
  const auto& fact = *interp.factorization;
  const int order = multi_index_order(a);
  const int max_order = fact.config.family == WendlandFamily::C4 ? 2 : 1;
  if (order > max_order) {
    throw Error(ErrorCode::InvalidRequest, "interp_eval: derivative order exceeds kernel smoothness");
  }
  double s = 0.0;
  for (int i = 0; i < fact.size(); ++i) {
    s += interp.coefficients(i) * deriv1_impl(fact.config, y, fact.points.row(i), a);
  }
  return s;
}

double interp_eval(const Interpolant& interp, const Vec& y) {
  return interp_eval(interp, y, zero_index(interp.factorization->config.input_dim));
}

double power_function(const KernelConfig& cfg, const GramFactorization& fact, const Vec& y,
                      const MultiIndex& a) {
  const double diag = kernel_diag(cfg, a);
  if (fact.size() == 0) return std::sqrt(std::max(0.0, diag));
  const Vec v = fact.kernel_vector(y, a);
  const double sq = diag - v.dot(fact.solve(v));
  return std::sqrt(std::max(0.0, sq));
}

double rkhs_norm(const Interpolant& interp) {
  if (interp.size() == 0) return 0.0;
  return std::sqrt(std::max(0.0, interp.values.dot(interp.coefficients)));
}

PowerUpdate prepare_power_update(const KernelConfig& cfg, const GramFactorization& fact,
                                 const Vec& y_plus) {
  PowerUpdate upd;
  upd.k_trial = fact.kernel_vector(y_plus, zero_index(cfg.input_dim));
  upd.c = fact.solve(upd.k_trial);
  const double diag = wendland_eval(cfg.family, 0.0, 0);
  upd.schur = fact.size() == 0 ? diag : diag - upd.k_trial.dot(upd.c);
  // A trial on top of an existing site spans nothing new; skip the update to
  // avoid dividing by a vanishing Schur complement.
  if (upd.schur <= 1e-12 * diag) upd.degenerate = true;
  return upd;
}

double updated_power_sq(const PowerUpdate& upd, double base_sq, double k_alpha_probe_trial,
                        double v_dot_c) {
  if (upd.degenerate) return base_sq;
  const double num = k_alpha_probe_trial - v_dot_c;
  return std::max(0.0, base_sq - num * num / upd.schur);
}

}  // namespace sdr
