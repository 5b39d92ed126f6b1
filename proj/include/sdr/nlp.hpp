#pragma once

#include <Eigen/Sparse>
#include <functional>
#include <string>

#include "sdr/common.hpp"

namespace sdr {

using SpMat = Eigen::SparseMatrix<double>;

/// General NLP:  min f(z)  s.t.  cE(z) = 0,  cI(z) <= 0,  lb <= z <= ub.
/// The Hessian callback returns the Hessian of f + y^T cE + w^T cI. Variable
/// bounds are kept out of cI: the solver handles them with direct barriers so
/// iterates remain strictly inside the box. Empty lb/ub mean unbounded.
struct NlpProblem {
  int n = 0;
  int m_eq = 0;
  int m_ineq = 0;
  std::function<double(const Vec&)> objective;
  std::function<Vec(const Vec&)> gradient;
  std::function<Vec(const Vec&)> eq;
  std::function<SpMat(const Vec&)> eq_jac;
  std::function<Vec(const Vec&)> ineq;
  std::function<SpMat(const Vec&)> ineq_jac;
  std::function<SpMat(const Vec&, const Vec&, const Vec&)> lagrangian_hessian;
  Vec z_lb, z_ub;
};

struct IpOptions {
  double mu_init = 1e-2;
  double mu_factor = 0.2;
  double mu_min = 1e-9;
  double tau = 0.995;  // fraction-to-boundary
  double kkt_tol = 1e-8;
  int max_iter = 500;
  std::function<void(const std::string&)> log;  // one line per iteration
};

struct IpWarmStart {
  Vec y;   // equality multipliers
  Vec w;   // inequality multipliers (positive)
  Vec s;   // slacks (positive)
  Vec zl;  // lower-bound duals (positive where finite)
  Vec zu;  // upper-bound duals
};

struct IpResult {
  Vec z;
  Vec y;
  Vec w;
  Vec s;
  Vec zl, zu;  // bound duals
  bool converged = false;
  int iterations = 0;
  double kkt_error = 0.0;
  double objective = 0.0;
  double mu_final = 0.0;
  double primal_infeasibility = 0.0;
  std::string json_summary() const;
};

/// Primal-dual log-barrier method with monotone mu reduction, exact Newton on
/// the condensed barrier KKT system, fraction-to-boundary rule and an l1
/// penalty line search; falls back to a pure feasibility (Gauss-Newton) step
/// when the Newton direction is unusable.
IpResult interior_point_solve(const NlpProblem& nlp, const Vec& z0, const IpOptions& opts = {},
                              const IpWarmStart* warm = nullptr);

}  // namespace sdr
