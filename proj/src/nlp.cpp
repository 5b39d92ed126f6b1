#include "sdr/nlp.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace sdr {

namespace {

struct Eval {
  double f = 0.0;
  Vec grad;
  Vec ce;
  Vec ci;
  SpMat je;
  SpMat ji;
};

Eval evaluate(const NlpProblem& nlp, const Vec& z) {
  Eval e;
  e.f = nlp.objective(z);
  e.grad = nlp.gradient(z);
  e.ce = nlp.m_eq > 0 ? nlp.eq(z) : Vec(0);
  e.je = nlp.m_eq > 0 ? nlp.eq_jac(z) : SpMat(0, nlp.n);
  e.ci = nlp.m_ineq > 0 ? nlp.ineq(z) : Vec(0);
  e.ji = nlp.m_ineq > 0 ? nlp.ineq_jac(z) : SpMat(0, nlp.n);
  return e;
}

double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

// Bound bookkeeping: indices of finite lower/upper bounds.
struct Bounds {
  Vec lb, ub;
  std::vector<int> lo, hi;
  bool has(int) const { return !lo.empty() || !hi.empty(); }
};

Bounds make_bounds(const NlpProblem& nlp) {
  Bounds b;
  b.lb = nlp.z_lb.size() == nlp.n ? nlp.z_lb : Vec::Constant(nlp.n, -std::numeric_limits<double>::infinity());
  b.ub = nlp.z_ub.size() == nlp.n ? nlp.z_ub : Vec::Constant(nlp.n, std::numeric_limits<double>::infinity());
  for (int i = 0; i < nlp.n; ++i) {
    if (std::isfinite(b.lb(i))) b.lo.push_back(i);
    if (std::isfinite(b.ub(i))) b.hi.push_back(i);
  }
  return b;
}

// Clamp strictly inside the box. The relative pad matters: starting (or
// restarting) the barrier phase with near-zero margins makes the bound
// Hessian astronomically large, so initialization pushes ~1% inside while the
// restoration line search only guards against literal bound crossings.
void push_inside(const Bounds& b, Vec& z, double kappa) {
  for (int i : b.lo) {
    double pad = kappa * std::max(1.0, std::abs(b.lb(i)));
    if (std::isfinite(b.ub(i))) pad = std::min(pad, kappa * (b.ub(i) - b.lb(i)));
    if (!(z(i) >= b.lb(i) + pad)) z(i) = b.lb(i) + pad;
  }
  for (int i : b.hi) {
    double pad = kappa * std::max(1.0, std::abs(b.ub(i)));
    if (std::isfinite(b.lb(i))) pad = std::min(pad, kappa * (b.ub(i) - b.lb(i)));
    if (!(z(i) <= b.ub(i) - pad)) z(i) = b.ub(i) - pad;
  }
  for (int i : b.lo) {
    if (std::isfinite(b.ub(i)) && z(i) >= b.ub(i)) z(i) = 0.5 * (b.lb(i) + b.ub(i));
  }
}

double violation(const Eval& e) {
  double v = inf_norm(e.ce);
  if (e.ci.size() > 0) v = std::max(v, std::max(0.0, e.ci.maxCoeff()));
  return v;
}

}  // namespace

std::string IpResult::json_summary() const {
  std::ostringstream os;
  os.precision(12);
  os << "{\"converged\":" << (converged ? "true" : "false") << ",\"iterations\":" << iterations
     << ",\"kkt_error\":" << kkt_error << ",\"objective\":" << objective
     << ",\"mu_final\":" << mu_final << ",\"primal_infeasibility\":" << primal_infeasibility
     << "}";
  return os.str();
}

namespace {

// Damped Gauss-Newton on 1/2 ||cE||^2 + 1/2 ||(cI)_+||^2 within the box.
// Pulls a badly infeasible iterate toward the feasible set; the objective is
// ignored here.
void restore_feasibility(const NlpProblem& nlp, const Bounds& b, Vec& z, Eval& e, int max_steps,
                         double target) {
  double lambda = 1e-8;
  for (int step = 0; step < max_steps; ++step) {
    if (violation(e) <= target) return;
    const Vec vi = e.ci.size() > 0 ? Vec(e.ci.cwiseMax(0.0)) : Vec(0);
    const double phi0 = 0.5 * (e.ce.squaredNorm() + vi.squaredNorm());

    Vec grad = Vec::Zero(nlp.n);
    SpMat gn(nlp.n, nlp.n);
    if (nlp.m_eq > 0) {
      grad += e.je.transpose() * e.ce;
      gn = SpMat(e.je.transpose() * e.je);
    }
    if (nlp.m_ineq > 0) {
      Vec mask = (e.ci.array() > 0.0).cast<double>();
      SpMat jim = mask.asDiagonal() * e.ji;
      grad += jim.transpose() * vi;
      gn = gn.rows() == nlp.n ? SpMat(gn + SpMat(jim.transpose() * jim))
                              : SpMat(jim.transpose() * jim);
    }
    bool moved = false;
    for (int attempt = 0; attempt < 10 && !moved; ++attempt) {
      SpMat reg(nlp.n, nlp.n);
      reg.setIdentity();
      SpMat sys = gn + SpMat(lambda * reg);
      Eigen::SimplicialLDLT<SpMat> ldlt(sys);
      if (ldlt.info() != Eigen::Success) {
        lambda *= 10.0;
        continue;
      }
      const Vec dz = ldlt.solve(-grad);
      if (!dz.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      double alpha = 1.0;
      for (int ls = 0; ls < 30; ++ls) {
        Vec z_try = z + alpha * dz;
        push_inside(b, z_try, 1e-9);
        Eval e_try;
        bool ok = true;
        try {
          e_try = evaluate(nlp, z_try);
        } catch (const Error&) {
          ok = false;
        }
        if (ok) {
          const Vec vi_try = e_try.ci.size() > 0 ? Vec(e_try.ci.cwiseMax(0.0)) : Vec(0);
          const double phi_try = 0.5 * (e_try.ce.squaredNorm() + vi_try.squaredNorm());
          if (phi_try < phi0 * (1.0 - 1e-6 * alpha)) {
            z = z_try;
            e = e_try;
            moved = true;
            lambda = std::max(1e-8, lambda * 0.3);
            break;
          }
        }
        alpha *= 0.5;
      }
      if (!moved) lambda *= 10.0;
    }
    if (!moved) return;
  }
}

}  // namespace

IpResult interior_point_solve(const NlpProblem& nlp, const Vec& z0, const IpOptions& opts,
                              const IpWarmStart* warm) {
  const int n = nlp.n;
  const int m_eq = nlp.m_eq;
  const int m_ineq = nlp.m_ineq;
  const Bounds b = make_bounds(nlp);

  Vec z = z0;
  push_inside(b, z, 1e-2);
  Eval e = evaluate(nlp, z);

  double mu = opts.mu_init;
  Vec s(m_ineq), w(m_ineq), y;
  Vec zl = Vec::Zero(n), zu = Vec::Zero(n);

  auto margin_lo = [&](const Vec& zz, int i) { return zz(i) - b.lb(i); };
  auto margin_hi = [&](const Vec& zz, int i) { return b.ub(i) - zz(i); };

  const bool have_warm = warm != nullptr && warm->y.size() == m_eq && warm->w.size() == m_ineq &&
                         warm->s.size() == m_ineq;
  if (have_warm) {
    y = warm->y;
    s = warm->s.cwiseMax(1e-12);
    w = warm->w.cwiseMax(1e-12);
    if (warm->zl.size() == n) zl = warm->zl;
    if (warm->zu.size() == n) zu = warm->zu;
    double comp = 0.0;
    int terms = 0;
    for (int i = 0; i < m_ineq; ++i, ++terms) comp += s(i) * w(i);
    for (int i : b.lo) comp += margin_lo(z, i) * std::max(zl(i), 1e-12), ++terms;
    for (int i : b.hi) comp += margin_hi(z, i) * std::max(zu(i), 1e-12), ++terms;
    if (terms > 0) mu = std::min(opts.mu_init, std::max(opts.mu_min, comp / terms));
  } else {
    y = Vec::Zero(m_eq);
    for (int i = 0; i < m_ineq; ++i) s(i) = std::max(-e.ci(i), std::sqrt(mu));
    for (int i = 0; i < m_ineq; ++i) w(i) = mu / s(i);
  }
  for (int i : b.lo) zl(i) = std::max(zl(i), mu / margin_lo(z, i));
  for (int i : b.hi) zu(i) = std::max(zu(i), mu / margin_hi(z, i));

  const double kappa_eps = 10.0;

  auto resync_slacks = [&] {
    for (int i = 0; i < m_ineq; ++i) {
      s(i) = std::max(-e.ci(i), std::sqrt(std::max(mu, 1e-10)));
      w(i) = mu / s(i);
    }
    for (int i : b.lo) zl(i) = mu / margin_lo(z, i);
    for (int i : b.hi) zu(i) = mu / margin_hi(z, i);
  };

  auto dual_residual = [&]() {
    Vec r = e.grad;
    if (m_eq > 0) r += e.je.transpose() * y;
    if (m_ineq > 0) r += e.ji.transpose() * w;
    for (int i : b.lo) r(i) -= zl(i);
    for (int i : b.hi) r(i) += zu(i);
    return r;
  };

  // Scaled optimality error, Ipopt-style.
  auto kkt_error = [&](double mu_ref) {
    const double s_max = 100.0;
    double mult_sum = y.lpNorm<1>() + w.lpNorm<1>();
    int mult_count = m_eq + m_ineq;
    for (int i : b.lo) mult_sum += zl(i), ++mult_count;
    for (int i : b.hi) mult_sum += zu(i), ++mult_count;
    const double sd = std::max(s_max, mult_sum / std::max(1, mult_count)) / s_max;
    double err = inf_norm(dual_residual()) / sd;
    err = std::max(err, inf_norm(e.ce));
    if (m_ineq > 0) err = std::max(err, inf_norm(e.ci + s));
    double comp = 0.0;
    for (int i = 0; i < m_ineq; ++i) comp = std::max(comp, std::abs(s(i) * w(i) - mu_ref));
    for (int i : b.lo) comp = std::max(comp, std::abs(margin_lo(z, i) * zl(i) - mu_ref));
    for (int i : b.hi) comp = std::max(comp, std::abs(margin_hi(z, i) * zu(i) - mu_ref));
    const double sc = std::max(s_max, mult_sum / std::max(1, mult_count)) / s_max;
    return std::max(err, comp / sc);
  };

  auto barrier_merit = [&](const Eval& ev, const Vec& zz, const Vec& ss, double nu_val) {
    double phi = ev.f;
    if (m_ineq > 0) phi -= mu * ss.array().log().sum();
    for (int i : b.lo) phi -= mu * std::log(margin_lo(zz, i));
    for (int i : b.hi) phi -= mu * std::log(margin_hi(zz, i));
    phi += nu_val * ev.ce.lpNorm<1>();
    if (m_ineq > 0) phi += nu_val * (ev.ci + ss).lpNorm<1>();
    return phi;
  };

  auto refresh_duals = [&] {
    if (m_eq == 0) return;
    Vec rhs_w = e.grad;
    if (m_ineq > 0) rhs_w += e.ji.transpose() * w;
    for (int i : b.lo) rhs_w(i) -= zl(i);
    for (int i : b.hi) rhs_w(i) += zu(i);
    SpMat jjt = SpMat(e.je * e.je.transpose());
    SpMat ridge(m_eq, m_eq);
    ridge.setIdentity();
    jjt = jjt + SpMat(1e-10 * ridge);
    Eigen::SimplicialLDLT<SpMat> ldlt(jjt);
    if (ldlt.info() == Eigen::Success) {
      const Vec y_ls = ldlt.solve(-(e.je * rhs_w));
      if (y_ls.allFinite()) y = y_ls;
    }
  };

  auto recentre_after_restore = [&] {
    push_inside(b, z, 1e-3);
    e = evaluate(nlp, z);
    resync_slacks();
    refresh_duals();
  };

  if (violation(e) > 0.1) {
    restore_feasibility(nlp, b, z, e, 300, 1e-4);
    recentre_after_restore();
  }

  IpResult res;
  int iter = 0;
  int stall_count = 0;
  for (; iter < opts.max_iter; ++iter) {
    // Slack reset: snap slacks of strictly satisfied rows up to their margin.
    for (int i = 0; i < m_ineq; ++i) s(i) = std::max(s(i), -e.ci(i));

    if (kkt_error(0.0) <= opts.kkt_tol) {
      res.converged = true;
      break;
    }
    while (mu > opts.mu_min && kkt_error(mu) <= kappa_eps * mu) {
      mu = std::max(opts.mu_min, mu * opts.mu_factor);
    }

    Vec r_d = dual_residual();
    const Vec r_i = m_ineq > 0 ? Vec(e.ci + s) : Vec(0);

    if (m_eq > 0) {
      const double other = std::max({1.0, inf_norm(e.ce), inf_norm(r_i)});
      if (inf_norm(r_d) > 1e3 * other) {
        refresh_duals();
        r_d = dual_residual();
      }
    }

    // Condensed primal-dual system in (dz, dy).
    Vec rhs1 = -r_d;
    Vec bound_diag = Vec::Zero(n);
    for (int i : b.lo) {
      const double m = margin_lo(z, i);
      bound_diag(i) += zl(i) / m;
      rhs1(i) -= mu / m - zl(i);
    }
    for (int i : b.hi) {
      const double m = margin_hi(z, i);
      bound_diag(i) += zu(i) / m;
      rhs1(i) += mu / m - zu(i);
    }
    SpMat w_mat;
    {
      SpMat h = nlp.lagrangian_hessian(z, y, w);
      if (m_ineq > 0) {
        Vec sigma = (w.array() / s.array()).matrix();
        SpMat jis = sigma.asDiagonal() * e.ji;
        w_mat = h + SpMat(e.ji.transpose() * jis);
        rhs1 -= e.ji.transpose() *
                ((mu / s.array() - w.array() + sigma.array() * r_i.array()).matrix());
      } else {
        w_mat = h;
      }
    }

    const int dim = n + m_eq;
    Vec rhs(dim);
    rhs.head(n) = rhs1;
    if (m_eq > 0) rhs.tail(m_eq) = -e.ce;

    const double infeas0 = e.ce.lpNorm<1>() + (m_ineq > 0 ? (e.ci + s).lpNorm<1>() : 0.0);

    Vec dz, dy, ds(0), dw(0), dzl = Vec::Zero(n), dzu = Vec::Zero(n);
    double dphi = 0.0;
    double nu = 1.0;
    double delta_w = 0.0;
    double delta_c = 0.0;
    bool got_direction = false;
    for (int attempt = 0; attempt < 16 && !got_direction; ++attempt) {
      std::vector<Eigen::Triplet<double>> trips;
      trips.reserve(static_cast<std::size_t>(w_mat.nonZeros() + 2 * e.je.nonZeros() + dim));
      for (int k = 0; k < w_mat.outerSize(); ++k) {
        for (SpMat::InnerIterator it(w_mat, k); it; ++it) {
          trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
        }
      }
      for (int i = 0; i < n; ++i) {
        const double d = bound_diag(i) + delta_w;
        if (d != 0.0) trips.emplace_back(i, i, d);
      }
      for (int k = 0; k < e.je.outerSize(); ++k) {
        for (SpMat::InnerIterator it(e.je, k); it; ++it) {
          trips.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
          trips.emplace_back(static_cast<int>(it.col()), n + static_cast<int>(it.row()), it.value());
        }
      }
      if (m_eq > 0 && delta_c > 0.0) {
        for (int i = 0; i < m_eq; ++i) trips.emplace_back(n + i, n + i, -delta_c);
      }
      SpMat kkt(dim, dim);
      kkt.setFromTriplets(trips.begin(), trips.end());
      kkt.makeCompressed();

      auto escalate = [&] {
        delta_w = delta_w == 0.0 ? 1e-8 : delta_w * 100.0;
        delta_c = std::max(delta_c, 1e-12);
        if (delta_w > 1e12) {
          throw Error(ErrorCode::IllConditioned,
                      "interior_point_solve: KKT system singular after regularization cap");
        }
      };

      Eigen::SparseLU<SpMat> lu;
      lu.analyzePattern(kkt);
      lu.factorize(kkt);
      if (lu.info() != Eigen::Success) {
        escalate();
        continue;
      }
      const Vec step = lu.solve(rhs);
      const double lin_res = (kkt * step - rhs).lpNorm<Eigen::Infinity>();
      if (!step.allFinite() || lin_res > 1e-6 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>())) {
        escalate();
        continue;
      }

      dz = step.head(n);
      dy = m_eq > 0 ? Vec(step.tail(m_eq)) : Vec(0);
      if (m_ineq > 0) {
        ds = -r_i - e.ji * dz;
        dw = (mu / s.array() - w.array() - (w.array() / s.array()) * ds.array()).matrix();
      }
      for (int i : b.lo) dzl(i) = mu / margin_lo(z, i) - zl(i) - zl(i) / margin_lo(z, i) * dz(i);
      for (int i : b.hi) dzu(i) = mu / margin_hi(z, i) - zu(i) + zu(i) / margin_hi(z, i) * dz(i);

      double grad_dir = e.grad.dot(dz);
      if (m_ineq > 0) grad_dir -= mu * (ds.array() / s.array()).sum();
      for (int i : b.lo) grad_dir -= mu * dz(i) / margin_lo(z, i);
      for (int i : b.hi) grad_dir += mu * dz(i) / margin_hi(z, i);
      const double curv = dz.dot(w_mat * dz) + (bound_diag.array() * dz.array().square()).sum() +
                          delta_w * dz.squaredNorm();
      if (infeas0 > 1e-14 * (1.0 + std::abs(e.f))) {
        const double required = (grad_dir + 0.5 * std::max(0.0, curv)) / (0.5 * infeas0);
        nu = std::max(1.0, required + 1.0);
        dphi = grad_dir - nu * infeas0;
        got_direction = true;
      } else if (grad_dir <= 1e-14 * (1.0 + std::abs(e.f))) {
        dphi = grad_dir - nu * infeas0;
        got_direction = true;
      } else {
        escalate();
      }
    }
    if (!got_direction) {
      throw Error(ErrorCode::IllConditioned,
                  "interior_point_solve: no descent direction after regularization cap");
    }

    // Fraction-to-boundary for the primal (slacks and box margins) and for
    // the multipliers.
    double alpha_p_max = 1.0;
    for (int i = 0; i < m_ineq; ++i) {
      if (ds(i) < 0.0) alpha_p_max = std::min(alpha_p_max, -opts.tau * s(i) / ds(i));
    }
    for (int i : b.lo) {
      if (dz(i) < 0.0) alpha_p_max = std::min(alpha_p_max, -opts.tau * margin_lo(z, i) / dz(i));
    }
    for (int i : b.hi) {
      if (dz(i) > 0.0) alpha_p_max = std::min(alpha_p_max, opts.tau * margin_hi(z, i) / dz(i));
    }
    double alpha_d_max = 1.0;
    for (int i = 0; i < m_ineq; ++i) {
      if (dw(i) < 0.0) alpha_d_max = std::min(alpha_d_max, -opts.tau * w(i) / dw(i));
    }
    for (int i : b.lo) {
      if (dzl(i) < 0.0) alpha_d_max = std::min(alpha_d_max, -opts.tau * zl(i) / dzl(i));
    }
    for (int i : b.hi) {
      if (dzu(i) < 0.0) alpha_d_max = std::min(alpha_d_max, -opts.tau * zu(i) / dzu(i));
    }

    const double phi0 = barrier_merit(e, z, s, nu);

    double alpha = alpha_p_max;
    bool accepted = false;
    Eval e_new;
    Vec z_new, s_new;
    for (int ls = 0; ls < 40; ++ls) {
      z_new = z + alpha * dz;
      s_new = m_ineq > 0 ? Vec(s + alpha * ds) : Vec(0);
      bool ok = true;
      try {
        e_new = evaluate(nlp, z_new);
      } catch (const Error&) {
        ok = false;  // stepped outside the evaluable domain
      }
      if (ok && std::isfinite(e_new.f)) {
        const double phi_new = barrier_merit(e_new, z_new, s_new, nu);
        if (phi_new <= phi0 + 1e-4 * alpha * dphi + 1e-14 * std::abs(phi0)) {
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }

    if (!accepted) {
      // Newton failure: feasibility restoration burst, re-center, continue.
      const double before = violation(e);
      restore_feasibility(nlp, b, z, e, 100, 1e-8);
      if (violation(e) >= before * (1.0 - 1e-10)) {
        throw Error(ErrorCode::RestorationFailure,
                    "interior_point_solve: no acceptable step; worst constraint violation " +
                        std::to_string(violation(e)));
      }
      recentre_after_restore();
      stall_count = 0;
      continue;
    }

    z = z_new;
    if (m_ineq > 0) {
      s = s_new;
      w += alpha_d_max * dw;
      for (int i = 0; i < m_ineq; ++i) w(i) = std::max(w(i), 1e-14);
    }
    for (int i : b.lo) zl(i) = std::max(zl(i) + alpha_d_max * dzl(i), 1e-14);
    for (int i : b.hi) zu(i) = std::max(zu(i) + alpha_d_max * dzu(i), 1e-14);
    if (m_eq > 0) y += alpha * dy;
    e = e_new;

    if ((m_ineq > 0 || b.has(0)) && alpha_p_max < 1e-3) {
      ++stall_count;
    } else {
      stall_count = 0;
    }
    if (stall_count >= 5) {
      restore_feasibility(nlp, b, z, e, 100, 1e-8);
      recentre_after_restore();
      stall_count = 0;
    }

    if (opts.log) {
      std::ostringstream os;
      os.precision(3);
      os << "it=" << iter << " mu=" << mu << " f=" << e.f << " pinf=" << violation(e)
         << " kkt=" << kkt_error(mu) << " alpha_p=" << alpha << " alpha_d=" << alpha_d_max
         << " nu=" << nu;
      opts.log(os.str());
    }
  }

  if (!res.converged) {
    throw Error(ErrorCode::MaxIterations,
                "interior_point_solve: iteration cap reached (kkt error " +
                    std::to_string(kkt_error(0.0)) + ")");
  }

  res.z = z;
  res.y = y;
  res.w = w;
  res.s = s;
  res.zl = zl;
  res.zu = zu;
  res.iterations = iter;
  res.kkt_error = kkt_error(0.0);
  res.objective = e.f;
  res.mu_final = mu;
  res.primal_infeasibility = violation(e);
  return res;
}

}  // namespace sdr
