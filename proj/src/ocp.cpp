#include "sdr/ocp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

namespace sdr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDeg = M_PI / 180.0;

Mat horizontal(const Mat& a, const Mat& b, const Mat& c) {
  Mat out(a.rows(), a.cols() + b.cols() + c.cols());
  out << a, b, c;
  return out;
}

// Pads a Hessian over (x,u,p_in,g) with a duration row/col whose entries are
// the gradient of the underlying scalar (chain rule for T * scalar).
Mat expand_hess_with_duration(const Mat& h_in, const Vec& grad_in, double T, int t_pos) {
  const int nin = static_cast<int>(h_in.rows());
  Mat h = Mat::Zero(nin + 1, nin + 1);
  auto map = [&](int i) { return i < t_pos ? i : i + 1; };
  for (int i = 0; i < nin; ++i) {
    for (int j = 0; j < nin; ++j) h(map(i), map(j)) = T * h_in(i, j);
  }
  for (int i = 0; i < nin; ++i) {
    h(t_pos, map(i)) += grad_in(i);
    h(map(i), t_pos) += grad_in(i);
  }
  return h;
}

}  // namespace

TrackingWeights benchmark_tracking_weights() {
  TrackingWeights w;
  w.q_diag.resize(8);
  w.q_diag << 1e-3, 1e1, 0.0, 0.0, 1e1, 0.0, 0.0, 0.0;
  w.r_u = 1e8;
  w.r_p = 1e-3;
  return w;
}

OcpProblem normalize_time(const OcpProblem& prob, double T_lb, double T_ub) {
  if (!prob.free_final_time) {
    throw Error(ErrorCode::InvalidRequest, "normalize_time: problem has a fixed horizon");
  }
  OcpProblem out = prob;
  out.free_final_time = false;
  out.t0 = 0.0;
  out.tf = 1.0;
  out.n_p = prob.n_p + 1;
  const int nx = prob.n_x, nu = prob.n_u, np = prob.n_p, ng = prob.n_g;
  const int t_pos = nx + nu + np;
  out.projection.n_p = out.n_p;

  auto split = [np](const Vec& phat) {
    return std::make_pair(Vec(phat.head(np)), phat(np));
  };

  out.f = [=, f = prob.f](double tau, const Vec& x, const Vec& u, const Vec& phat, const Vec& g) {
    auto [p, T] = split(phat);
    return Vec(T * f(T * tau, x, u, p, g));
  };
  out.f_jac = [=, f = prob.f, f_jac = prob.f_jac](double tau, const Vec& x, const Vec& u,
                                                  const Vec& phat, const Vec& g, Mat& fx, Mat& fu,
                                                  Mat& fp, Mat& fg) {
    auto [p, T] = split(phat);
    Mat fxi, fui, fpi, fgi;
    f_jac(T * tau, x, u, p, g, fxi, fui, fpi, fgi);
    fx = T * fxi;
    fu = T * fui;
    fg = T * fgi;
    fp.resize(x.size(), np + 1);
    if (np > 0) fp.leftCols(np) = T * fpi;
    fp.col(np) = f(T * tau, x, u, p, g);
  };
  out.f_hess_vec = [=, f_jac = prob.f_jac, f_hess = prob.f_hess_vec](
                       double tau, const Vec& x, const Vec& u, const Vec& phat, const Vec& g,
                       const Vec& lam) {
    auto [p, T] = split(phat);
    const Mat h_in = f_hess(T * tau, x, u, p, g, lam);
    Mat fxi, fui, fpi, fgi;
    f_jac(T * tau, x, u, p, g, fxi, fui, fpi, fgi);
    Vec grad(nx + nu + np + ng);
    grad.head(nx) = fxi.transpose() * lam;
    grad.segment(nx, nu) = fui.transpose() * lam;
    if (np > 0) grad.segment(nx + nu, np) = fpi.transpose() * lam;
    grad.tail(ng) = fgi.transpose() * lam;
    return expand_hess_with_duration(h_in, grad, T, t_pos);
  };

  if (prob.l) {
    out.l = [=, l = prob.l](double tau, const Vec& x, const Vec& u, const Vec& phat, const Vec& g) {
      auto [p, T] = split(phat);
      return T * l(T * tau, x, u, p, g);
    };
    out.l_grad = [=, l = prob.l, l_grad = prob.l_grad](double tau, const Vec& x, const Vec& u,
                                                       const Vec& phat, const Vec& g, Vec& lx,
                                                       Vec& lu, Vec& lp, Vec& lg) {
      auto [p, T] = split(phat);
      Vec lxi, lui, lpi, lgi;
      l_grad(T * tau, x, u, p, g, lxi, lui, lpi, lgi);
      lx = T * lxi;
      lu = T * lui;
      lg = T * lgi;
      lp.resize(np + 1);
      if (np > 0) lp.head(np) = T * lpi;
      lp(np) = l(T * tau, x, u, p, g);
    };
    out.l_hess = [=, l_grad = prob.l_grad, l_hess = prob.l_hess](
                     double tau, const Vec& x, const Vec& u, const Vec& phat, const Vec& g) {
      auto [p, T] = split(phat);
      const Mat h_in = l_hess(T * tau, x, u, p, g);
      Vec lxi, lui, lpi, lgi;
      l_grad(T * tau, x, u, p, g, lxi, lui, lpi, lgi);
      Vec grad(nx + nu + np + ng);
      grad.head(nx) = lxi;
      grad.segment(nx, nu) = lui;
      if (np > 0) grad.segment(nx + nu, np) = lpi;
      grad.tail(ng) = lgi;
      return expand_hess_with_duration(h_in, grad, T, t_pos);
    };
  }

  if (prob.varphi) {
    out.varphi = [=, varphi = prob.varphi](const Vec& xf, const Vec& phat) {
      return varphi(xf, phat.head(np));
    };
    out.varphi_grad = [=, g0 = prob.varphi_grad](const Vec& xf, const Vec& phat, Vec& vx, Vec& vp) {
      Vec vpi;
      g0(xf, phat.head(np), vx, vpi);
      vp = Vec::Zero(np + 1);
      if (np > 0) vp.head(np) = vpi;
    };
    out.varphi_hess = [=, h0 = prob.varphi_hess](const Vec& xf, const Vec& phat) {
      const Mat h_in = h0(xf, phat.head(np));
      Mat h = Mat::Zero(nx + np + 1, nx + np + 1);
      h.topLeftCorner(nx + np, nx + np) = h_in;
      return h;
    };
  }

  if (prob.c) {
    out.c = [=, c = prob.c](double tau, const Vec& x, const Vec& u, const Vec& phat) {
      auto [p, T] = split(phat);
      return c(T * tau, x, u, p);
    };
    out.c_jac = [=, cj = prob.c_jac](double tau, const Vec& x, const Vec& u, const Vec& phat,
                                     Mat& cx, Mat& cu, Mat& cp) {
      auto [p, T] = split(phat);
      Mat cpi;
      cj(T * tau, x, u, p, cx, cu, cpi);
      cp = Mat::Zero(cx.rows(), np + 1);
      if (np > 0) cp.leftCols(np) = cpi;
    };
    out.c_hess_vec = [=, ch = prob.c_hess_vec](double tau, const Vec& x, const Vec& u,
                                               const Vec& phat, const Vec& w) {
      auto [p, T] = split(phat);
      const Mat h_in = ch(T * tau, x, u, p, w);
      Mat h = Mat::Zero(t_pos + 1, t_pos + 1);
      h.topLeftCorner(t_pos, t_pos) = h_in;
      return h;
    };
  }

  out.p_lb = Vec(np + 1);
  out.p_ub = Vec(np + 1);
  if (np > 0) {
    out.p_lb.head(np) = prob.p_lb;
    out.p_ub.head(np) = prob.p_ub;
  }
  out.p_lb(np) = T_lb;
  out.p_ub(np) = T_ub;
  return out;
}

namespace {

struct Ctx {
  const OcpProblem* prob = nullptr;
  const ComponentModel* model = nullptr;
  Mesh mesh;
  TranscriptionLayout L;
  Vec qw;

  Vec state_at(const Vec& z, int node) const {
    return z.segment(L.var_state(node, 0), L.n_x);
  }
  Vec control_at(const Vec& z, int c) const {
    return L.n_u > 0 ? Vec(z.segment(L.var_control(c, 0), L.n_u)) : Vec(0);
  }
  Vec params(const Vec& z) const {
    return L.n_p > 0 ? Vec(z.segment(L.var_param(0), L.n_p)) : Vec(0);
  }
};

double bound_or(const Vec& v, int i, double fallback) {
  return v.size() > i ? v(i) : fallback;
}

std::shared_ptr<Ctx> make_ctx(const OcpProblem& prob, const ComponentModel& model,
                              const Mesh& mesh) {
  auto ctx = std::make_shared<Ctx>();
  ctx->prob = &prob;
  ctx->model = &model;
  ctx->mesh = mesh;
  ctx->L = TranscriptionLayout{prob.n_x, prob.n_u, prob.n_p, mesh.K, mesh.n};
  ctx->qw = mesh.coll_quad_weights();
  return ctx;
}

// Variable bounds: nodal state boxes at the collocation nodes (the initial
// node is pinned by the initial-condition rows), control boxes, parameter
// boxes, and the terminal window intersected at the last node.
void fill_bounds(const OcpProblem& prob, const TranscriptionLayout& L, Vec& lb, Vec& ub) {
  lb = Vec::Constant(L.n_var(), -kInf);
  ub = Vec::Constant(L.n_var(), kInf);
  for (int c = 0; c < L.n_coll(); ++c) {
    for (int j = 0; j < L.n_x; ++j) {
      lb(L.var_state(c + 1, j)) = bound_or(prob.x_lb, j, -kInf);
      ub(L.var_state(c + 1, j)) = bound_or(prob.x_ub, j, kInf);
    }
    for (int j = 0; j < L.n_u; ++j) {
      lb(L.var_control(c, j)) = bound_or(prob.u_lb, j, -kInf);
      ub(L.var_control(c, j)) = bound_or(prob.u_ub, j, kInf);
    }
  }
  for (int j = 0; j < L.n_p; ++j) {
    lb(L.var_param(j)) = bound_or(prob.p_lb, j, -kInf);
    ub(L.var_param(j)) = bound_or(prob.p_ub, j, kInf);
  }
  const int last = L.n_state_nodes() - 1;
  for (int j = 0; j < L.n_x; ++j) {
    lb(L.var_state(last, j)) = std::max(lb(L.var_state(last, j)), bound_or(prob.xf_lb, j, -kInf));
    ub(L.var_state(last, j)) = std::min(ub(L.var_state(last, j)), bound_or(prob.xf_ub, j, kInf));
  }
}

}  // namespace

Vec Nlp::pack(const Trajectory& traj) const {
  Vec z = Vec::Zero(layout.n_var());
  for (int node = 0; node < layout.n_state_nodes(); ++node) {
    z.segment(layout.var_state(node, 0), layout.n_x) = traj.states.row(node).transpose();
  }
  for (int c = 0; c < layout.n_coll() && layout.n_u > 0; ++c) {
    z.segment(layout.var_control(c, 0), layout.n_u) = traj.controls.row(c).transpose();
  }
  for (int j = 0; j < layout.n_p; ++j) z(layout.var_param(j)) = traj.params(j);
  return z;
}

Trajectory Nlp::unpack(const Vec& z) const {
  Trajectory traj;
  traj.mesh = mesh;
  traj.states.resize(layout.n_state_nodes(), layout.n_x);
  for (int node = 0; node < layout.n_state_nodes(); ++node) {
    traj.states.row(node) = z.segment(layout.var_state(node, 0), layout.n_x).transpose();
  }
  traj.controls.resize(layout.n_coll(), layout.n_u);
  for (int c = 0; c < layout.n_coll() && layout.n_u > 0; ++c) {
    traj.controls.row(c) = z.segment(layout.var_control(c, 0), layout.n_u).transpose();
  }
  traj.params.resize(layout.n_p);
  for (int j = 0; j < layout.n_p; ++j) traj.params(j) = z(layout.var_param(j));
  return traj;
}

Nlp transcribe(const OcpProblem& prob, const ComponentModel& g_model, const Mesh& mesh) {
  auto ctx = make_ctx(prob, g_model, mesh);
  const auto& L = ctx->L;

  Nlp nlp;
  nlp.layout = L;
  nlp.mesh = mesh;
  nlp.problem.n = L.n_var();
  nlp.problem.m_eq = L.m_eq();
  nlp.problem.m_ineq = prob.n_c * L.n_coll();
  fill_bounds(prob, L, nlp.problem.z_lb, nlp.problem.z_ub);

  auto g_eval = [ctx](double t, const Vec& x, const Vec& u, const Vec& p) {
    return eval_g_jacobians(*ctx->model, ctx->prob->projection, t, x, u, p);
  };

  nlp.problem.objective = [ctx, g_eval](const Vec& z) {
    const auto& L = ctx->L;
    const auto& prob = *ctx->prob;
    const Vec p = ctx->params(z);
    double obj = 0.0;
    if (prob.varphi) obj += prob.varphi(ctx->state_at(z, L.n_state_nodes() - 1), p);
    if (prob.l) {
      for (int c = 0; c < L.n_coll(); ++c) {
        const double t = ctx->mesh.coll_time(c);
        const Vec x = ctx->state_at(z, c + 1);
        const Vec u = ctx->control_at(z, c);
        const Vec g = eval_g(*ctx->model, prob.projection, t, x, u, p);
        obj += ctx->qw(c) * prob.l(t, x, u, p, g);
      }
    }
    return obj;
  };

  nlp.problem.gradient = [ctx, g_eval](const Vec& z) {
    const auto& L = ctx->L;
    const auto& prob = *ctx->prob;
    const Vec p = ctx->params(z);
    Vec grad = Vec::Zero(L.n_var());
    if (prob.varphi) {
      Vec vx, vp;
      prob.varphi_grad(ctx->state_at(z, L.n_state_nodes() - 1), p, vx, vp);
      grad.segment(L.var_state(L.n_state_nodes() - 1, 0), L.n_x) += vx;
      for (int j = 0; j < L.n_p; ++j) grad(L.var_param(j)) += vp(j);
    }
    if (prob.l) {
      Vec lx, lu, lp, lg;
      for (int c = 0; c < L.n_coll(); ++c) {
        const double t = ctx->mesh.coll_time(c);
        const Vec x = ctx->state_at(z, c + 1);
        const Vec u = ctx->control_at(z, c);
        const GEval ge = g_eval(t, x, u, p);
        prob.l_grad(t, x, u, p, ge.values, lx, lu, lp, lg);
        grad.segment(L.var_state(c + 1, 0), L.n_x) += ctx->qw(c) * (lx + ge.jac_x.transpose() * lg);
        if (L.n_u > 0) {
          grad.segment(L.var_control(c, 0), L.n_u) += ctx->qw(c) * (lu + ge.jac_u.transpose() * lg);
        }
        if (L.n_p > 0) {
          const Vec gp = lp + ge.jac_p.transpose() * lg;
          for (int j = 0; j < L.n_p; ++j) grad(L.var_param(j)) += ctx->qw(c) * gp(j);
        }
      }
    }
    return grad;
  };

  nlp.problem.eq = [ctx](const Vec& z) {
    const auto& L = ctx->L;
    const auto& prob = *ctx->prob;
    const Vec p = ctx->params(z);
    Vec ce(L.m_eq());
    ce.head(L.n_x) = ctx->state_at(z, 0) - prob.x0;
    const Mat& D = ctx->mesh.rule.diff;
    const double half_dt = 0.5 * ctx->mesh.dt();
    for (int k = 0; k < ctx->mesh.K; ++k) {
      for (int i = 1; i <= ctx->mesh.n; ++i) {
        const int c = ctx->mesh.coll_index(k, i);
        const double t = ctx->mesh.node_time(k, i);
        const Vec x = ctx->state_at(z, k * ctx->mesh.n + i);
        const Vec u = ctx->control_at(z, c);
        Vec acc = Vec::Zero(L.n_x);
        for (int j = 0; j <= ctx->mesh.n; ++j) {
          acc += D(i - 1, j) * ctx->state_at(z, k * ctx->mesh.n + j);
        }
        const Vec g = eval_g(*ctx->model, prob.projection, t, x, u, p);
        acc -= half_dt * prob.f(t, x, u, p, g);
        ce.segment(L.n_x + c * L.n_x, L.n_x) = acc;
      }
    }
    return ce;
  };

  nlp.problem.eq_jac = [ctx, g_eval](const Vec& z) {
    const auto& L = ctx->L;
    const auto& prob = *ctx->prob;
    const Vec p = ctx->params(z);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(L.m_eq() * (L.n_x + L.n_u + L.n_p + ctx->mesh.n)));
    for (int j = 0; j < L.n_x; ++j) trips.emplace_back(j, L.var_state(0, j), 1.0);
    const Mat& D = ctx->mesh.rule.diff;
    const double half_dt = 0.5 * ctx->mesh.dt();
    Mat fx, fu, fp, fg;
    for (int k = 0; k < ctx->mesh.K; ++k) {
      for (int i = 1; i <= ctx->mesh.n; ++i) {
        const int c = ctx->mesh.coll_index(k, i);
        const int row0 = L.n_x + c * L.n_x;
        const double t = ctx->mesh.node_time(k, i);
        const Vec x = ctx->state_at(z, k * ctx->mesh.n + i);
        const Vec u = ctx->control_at(z, c);
        for (int j = 0; j <= ctx->mesh.n; ++j) {
          const double d = D(i - 1, j);
          for (int r = 0; r < L.n_x; ++r) {
            trips.emplace_back(row0 + r, L.var_state(k * ctx->mesh.n + j, r), d);
          }
        }
        const GEval ge = g_eval(t, x, u, p);
        prob.f_jac(t, x, u, p, ge.values, fx, fu, fp, fg);
        const Mat ax = half_dt * (fx + fg * ge.jac_x);
        for (int r = 0; r < L.n_x; ++r) {
          for (int cc = 0; cc < L.n_x; ++cc) {
            if (ax(r, cc) != 0.0) {
              trips.emplace_back(row0 + r, L.var_state(k * ctx->mesh.n + i, cc), -ax(r, cc));
            }
          }
        }
        if (L.n_u > 0) {
          const Mat au = half_dt * (fu + fg * ge.jac_u);
          for (int r = 0; r < L.n_x; ++r) {
            for (int cc = 0; cc < L.n_u; ++cc) {
              if (au(r, cc) != 0.0) trips.emplace_back(row0 + r, L.var_control(c, cc), -au(r, cc));
            }
          }
        }
        if (L.n_p > 0) {
          const Mat ap = half_dt * (fp + fg * ge.jac_p);
          for (int r = 0; r < L.n_x; ++r) {
            for (int cc = 0; cc < L.n_p; ++cc) {
              if (ap(r, cc) != 0.0) trips.emplace_back(row0 + r, L.var_param(cc), -ap(r, cc));
            }
          }
        }
      }
    }
    SpMat je(L.m_eq(), L.n_var());
    je.setFromTriplets(trips.begin(), trips.end());
    je.makeCompressed();
    return je;
  };

  nlp.problem.ineq = [ctx](const Vec& z) {
    const auto& L = ctx->L;
    const auto& prob = *ctx->prob;
    const Vec p = ctx->params(z);
    Vec ci(prob.n_c * L.n_coll());
    for (int c = 0; c < L.n_coll(); ++c) {
      const double t = ctx->mesh.coll_time(c);
      const Vec vals = prob.c(t, ctx->state_at(z, c + 1), ctx->control_at(z, c), p);
      for (int r = 0; r < prob.n_c; ++r) ci(c * prob.n_c + r) = vals(r);
    }
    return ci;
  };

  nlp.problem.ineq_jac = [ctx](const Vec& z) {
    const auto& L = ctx->L;
    const auto& prob = *ctx->prob;
    const Vec p = ctx->params(z);
    std::vector<Eigen::Triplet<double>> trips;
    Mat cx, cu, cp;
    for (int c = 0; c < L.n_coll(); ++c) {
      const double t = ctx->mesh.coll_time(c);
      prob.c_jac(t, ctx->state_at(z, c + 1), ctx->control_at(z, c), p, cx, cu, cp);
      for (int r = 0; r < prob.n_c; ++r) {
        for (int j = 0; j < L.n_x; ++j) {
          if (cx(r, j) != 0.0) trips.emplace_back(c * prob.n_c + r, L.var_state(c + 1, j), cx(r, j));
        }
        for (int j = 0; j < L.n_u; ++j) {
          if (cu(r, j) != 0.0) trips.emplace_back(c * prob.n_c + r, L.var_control(c, j), cu(r, j));
        }
        for (int j = 0; j < L.n_p; ++j) {
          if (cp(r, j) != 0.0) trips.emplace_back(c * prob.n_c + r, L.var_param(j), cp(r, j));
        }
      }
    }
    SpMat ji(prob.n_c * L.n_coll(), L.n_var());
    ji.setFromTriplets(trips.begin(), trips.end());
    ji.makeCompressed();
    return ji;
  };

  nlp.problem.lagrangian_hessian = [ctx, g_eval](const Vec& z, const Vec& y, const Vec& w) {
    const auto& L = ctx->L;
    const auto& prob = *ctx->prob;
    const Vec p = ctx->params(z);
    const int nz = L.n_x + L.n_u + L.n_p;
    std::vector<Eigen::Triplet<double>> trips;

    auto scatter = [&](int c, const Mat& hloc) {
      // Local ordering: state node c+1, control node c, parameters.
      std::vector<int> idx(static_cast<std::size_t>(nz));
      for (int j = 0; j < L.n_x; ++j) idx[static_cast<std::size_t>(j)] = L.var_state(c + 1, j);
      for (int j = 0; j < L.n_u; ++j) idx[static_cast<std::size_t>(L.n_x + j)] = L.var_control(c, j);
      for (int j = 0; j < L.n_p; ++j) idx[static_cast<std::size_t>(L.n_x + L.n_u + j)] = L.var_param(j);
      for (int a = 0; a < nz; ++a) {
        for (int b = 0; b < nz; ++b) {
          const double v = hloc(a, b);
          if (v != 0.0) {
            trips.emplace_back(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)], v);
          }
        }
      }
    };

    for (int c = 0; c < L.n_coll(); ++c) {
      const double t = ctx->mesh.coll_time(c);
      const Vec x = ctx->state_at(z, c + 1);
      const Vec u = ctx->control_at(z, c);
      const GEval ge = g_eval(t, x, u, p);
      const Mat gz = horizontal(ge.jac_x, ge.jac_u, ge.jac_p);
      Mat hloc = Mat::Zero(nz, nz);

      auto composite = [&](const Mat& hfull, const Vec& wg) {
        const Mat hzz = hfull.topLeftCorner(nz, nz);
        const Mat hzg = hfull.topRightCorner(nz, prob.n_g);
        const Mat hgg = hfull.bottomRightCorner(prob.n_g, prob.n_g);
        const Mat cross = hzg * gz;
        Mat h = hzz + cross + cross.transpose() + gz.transpose() * hgg * gz;
        h += g_hessian_weighted(*ctx->model, prob.projection, t, x, u, p, wg);
        return h;
      };

      if (prob.l) {
        Vec lx, lu, lp, lg;
        prob.l_grad(t, x, u, p, ge.values, lx, lu, lp, lg);
        hloc += ctx->qw(c) * composite(prob.l_hess(t, x, u, p, ge.values), lg);
      }
      {
        const Vec yc = y.segment(L.n_x + c * L.n_x, L.n_x);
        Mat fx, fu, fp, fg;
        prob.f_jac(t, x, u, p, ge.values, fx, fu, fp, fg);
        const Vec wg = fg.transpose() * yc;
        const double half_dt = 0.5 * ctx->mesh.dt();
        hloc -= half_dt * composite(prob.f_hess_vec(t, x, u, p, ge.values, yc), wg);
      }
      if (prob.n_c > 0) {
        const Vec wc = w.segment(c * prob.n_c, prob.n_c);
        if (wc.any()) hloc += prob.c_hess_vec(t, x, u, p, wc);
      }
      scatter(c, hloc);
    }

    if (prob.varphi) {
      const int last = L.n_state_nodes() - 1;
      const Mat hv = prob.varphi_hess(ctx->state_at(z, last), p);
      std::vector<int> idx(static_cast<std::size_t>(L.n_x + L.n_p));
      for (int j = 0; j < L.n_x; ++j) idx[static_cast<std::size_t>(j)] = L.var_state(last, j);
      for (int j = 0; j < L.n_p; ++j) idx[static_cast<std::size_t>(L.n_x + j)] = L.var_param(j);
      for (int a = 0; a < L.n_x + L.n_p; ++a) {
        for (int b = 0; b < L.n_x + L.n_p; ++b) {
          if (hv(a, b) != 0.0) {
            trips.emplace_back(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)],
                               hv(a, b));
          }
        }
      }
    }

    SpMat h(L.n_var(), L.n_var());
    h.setFromTriplets(trips.begin(), trips.end());
    h.makeCompressed();
    return h;
  };

  return nlp;
}

Mat extract_costate(const Vec& eq_multipliers, const Mesh& mesh, int n_x) {
  Mat lam(mesh.n_coll_nodes(), n_x);
  for (int c = 0; c < mesh.n_coll_nodes(); ++c) {
    const int i_local = c % mesh.n;
    lam.row(c) = -eq_multipliers.segment(n_x + c * n_x, n_x).transpose() / mesh.rule.weights(i_local);
  }
  return lam;
}

OcpSolution solve_ocp(const OcpProblem& prob, const ComponentModel& g_model, const Mesh& mesh,
                      const Vec& z0, const IpOptions& opts, const IpWarmStart* warm) {
  Nlp nlp = transcribe(prob, g_model, mesh);
  const IpResult r = interior_point_solve(nlp.problem, z0, opts, warm);
  OcpSolution sol;
  sol.trajectory = nlp.unpack(r.z);
  sol.objective = r.objective;
  sol.z = r.z;
  sol.y = r.y;
  sol.w = r.w;
  sol.s = r.s;
  sol.zl = r.zl;
  sol.zu = r.zu;
  sol.costate = extract_costate(r.y, mesh, prob.n_x);
  sol.kkt_error = r.kkt_error;
  sol.iterations = r.iterations;
  return sol;
}

namespace {

// Fixed-trim descent guess: hold the attitude states constant at a
// moment-trimmed (alpha, delta) pair, integrate the translational states, and
// smoothly level the flight path below ~55 km so the guess stays inside the
// dynamic-pressure and heating limits (a free dive to the 20 km floor would
// violate both badly, and an untrimmed attitude makes the pitch rows of the
// collocation system violently inconsistent).
template <typename S>
std::array<S, 8> guess_rhs_t(const std::array<S, 8>& x, const S g[3], const S& zero,
                             const HypersonicConstants& c, double unit) {
  auto dx = hypersonic_rhs_t<S>(x, zero, g, c, unit);
  const double h_m = ad::value_of(x[1]) * unit;
  S sigma = zero + 1.0;
  if (h_m <= 46000.0) {
    sigma = zero;
  } else if (h_m < 55000.0) {
    const S tt = (x[1] * unit - 46000.0) * (1.0 / 9000.0);
    sigma = tt * tt * (3.0 - 2.0 * tt);
  }
  // Below the blend band the flight path angle is steered to level with a
  // 10 s time constant instead of following the lift balance.
  dx[3] = dx[3] * sigma - (1.0 - sigma) * x[3] * 0.1;
  dx[4] = zero;
  dx[5] = zero;
  dx[6] = zero;
  dx[7] = zero;
  return dx;
}

// Flap setting delta = -5 deg with alpha chosen so the model's pitching
// moment vanishes (bisection; falls back to alpha = 10 deg when the model has
// no root in the box). Keeps the q-rows of the transcribed system consistent.
Vec trimmed_attitude(const ComponentModel& g_model) {
  const double delta0 = -5.0 * kDeg;
  auto moment = [&](double alpha) {
    Vec y(2);
    y << alpha, delta0;
    return g_model.values(y)(2);
  };
  double lo = -5.0 * kDeg, hi = 20.0 * kDeg;
  double alpha0 = 10.0 * kDeg;
  if (moment(lo) * moment(hi) < 0.0) {
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (moment(lo) * moment(mid) <= 0.0) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    alpha0 = 0.5 * (lo + hi);
  }
  Vec out(2);
  out << alpha0, delta0;
  return out;
}

Trajectory fixed_trim_guess(const ComponentModel& g_model, const Mesh& mesh, double unit,
                            const HypersonicConstants& hc) {
  const Vec trim = trimmed_attitude(g_model);
  OdeProblem guess;
  guess.n_x = 8;
  guess.n_g = 3;
  guess.t0 = 0.0;
  guess.tf = 550.0;
  guess.x0.resize(8);
  guess.x0 << 0.0, 80000.0 / unit, 5000.0 / unit, 0.0, trim(0), 0.0, trim(1), 0.0;
  guess.projection = alpha_delta_projection(8, 0, 0);
  guess.f = [hc, unit](double, const Vec& x, const Vec& g) {
    std::array<double, 8> xs;
    for (int i = 0; i < 8; ++i) xs[static_cast<std::size_t>(i)] = x(i);
    const double gv[3] = {g(0), g(1), g(2)};
    const double zero = 0.0;
    const auto dx = guess_rhs_t<double>(xs, gv, zero, hc, unit);
    Vec out(8);
    for (int i = 0; i < 8; ++i) out(i) = dx[static_cast<std::size_t>(i)];
    return out;
  };
  guess.f_jac = [hc, unit](double, const Vec& x, const Vec& g, Mat& fx, Mat& fg) {
    using ad::D1;
    const int n = 11;
    std::array<D1, 8> xs;
    for (int i = 0; i < 8; ++i) xs[static_cast<std::size_t>(i)] = D1::seed(x(i), n, i);
    D1 gv[3];
    for (int i = 0; i < 3; ++i) gv[i] = D1::seed(g(i), n, 8 + i);
    const D1 zero = D1::constant(0.0, n);
    const auto dx = guess_rhs_t<D1>(xs, gv, zero, hc, unit);
    fx.resize(8, 8);
    fg.resize(8, 3);
    for (int i = 0; i < 8; ++i) {
      fx.row(i) = dx[static_cast<std::size_t>(i)].grad().head(8).transpose();
      fg.row(i) = dx[static_cast<std::size_t>(i)].grad().tail(3).transpose();
    }
  };
  Mesh physical(0.0, 550.0, mesh.K, mesh.n);
  return solve_ivp(guess, &g_model, physical);
}

}  // namespace

Trajectory max_downrange_initial_guess(const ComponentModel& g_model, const Mesh& mesh,
                                       double unit) {
  return fixed_trim_guess(g_model, mesh, unit, HypersonicConstants{});
}

OcpSolution solve_max_downrange(const ComponentModel& g_model, const Mesh& mesh,
                                const OcpSolveOptions& opts, const OcpSolution* warm) {
  const HypersonicConstants hc;
  const OcpProblem prob = normalize_time(hypersonic_max_downrange_problem(opts.unit, hc));
  Nlp nlp = transcribe(prob, g_model, mesh);

  Vec z0;
  IpWarmStart ws;
  const IpWarmStart* wsp = nullptr;
  if (warm != nullptr) {
    z0 = warm->z;
    ws.y = warm->y;
    ws.w = warm->w;
    ws.s = warm->s;
    ws.zl = warm->zl;
    ws.zu = warm->zu;
    wsp = &ws;
  } else {
    Trajectory guess = fixed_trim_guess(g_model, mesh, opts.unit, hc);
    guess.controls = Mat::Zero(mesh.n_coll_nodes(), 1);
    guess.params = Vec::Constant(1, 550.0);
    z0 = nlp.pack(guess);
  }

  const IpResult r = interior_point_solve(nlp.problem, z0, opts.ip, wsp);
  OcpSolution sol;
  sol.trajectory = nlp.unpack(r.z);
  sol.trajectory.time_scale = sol.trajectory.params(0);
  sol.objective = r.objective;
  sol.z = r.z;
  sol.y = r.y;
  sol.w = r.w;
  sol.s = r.s;
  sol.zl = r.zl;
  sol.zu = r.zu;
  sol.costate = extract_costate(r.y, mesh, prob.n_x);
  sol.kkt_error = r.kkt_error;
  sol.iterations = r.iterations;
  return sol;
}

OcpProblem make_tracking_problem(const OcpSolution& reference, const TrackingWeights& weights,
                                 double unit) {
  const HypersonicConstants hc;
  OcpProblem prob = normalize_time(hypersonic_max_downrange_problem(unit, hc));

  // Tracking keeps the dynamics and initial conditions only; drop the path
  // constraints, terminal window and angle boxes. The speed floor stays as a
  // numerical guard against the v = 0 singularity.
  prob.n_c = 0;
  prob.c = nullptr;
  prob.c_jac = nullptr;
  prob.c_hess_vec = nullptr;
  prob.xf_lb = Vec::Constant(8, -kInf);
  prob.xf_ub = Vec::Constant(8, kInf);
  prob.x_lb = Vec::Constant(8, -kInf);
  prob.x_ub = Vec::Constant(8, kInf);
  prob.x_lb(2) = 50.0 / unit;

  auto ref = std::make_shared<Trajectory>(reference.trajectory);
  const double t_ref = reference.trajectory.params(0);
  const Vec q = weights.q_diag;
  const double r_u = weights.r_u;
  const double r_p = weights.r_p;

  prob.l = [ref, q, r_u](double tau, const Vec& x, const Vec& u, const Vec&, const Vec&) {
    const Vec dx = x - ref->state_at(tau);
    const Vec du = u - ref->control_at(tau);
    return dx.dot(q.asDiagonal() * dx) + r_u * du.squaredNorm();
  };
  prob.l_grad = [ref, q, r_u](double tau, const Vec& x, const Vec& u, const Vec&, const Vec&,
                              Vec& lx, Vec& lu, Vec& lp, Vec& lg) {
    lx = 2.0 * (q.asDiagonal() * (x - ref->state_at(tau)));
    lu = 2.0 * r_u * (u - ref->control_at(tau));
    lp = Vec::Zero(1);
    lg = Vec::Zero(3);
  };
  prob.l_hess = [q, r_u](double, const Vec&, const Vec&, const Vec&, const Vec&) {
    Mat h = Mat::Zero(13, 13);  // (x, u, T, g)
    for (int j = 0; j < 8; ++j) h(j, j) = 2.0 * q(j);
    h(8, 8) = 2.0 * r_u;
    return h;
  };

  prob.varphi = [t_ref, r_p](const Vec&, const Vec& p) {
    const double d = p(0) - t_ref;
    return r_p * d * d;
  };
  prob.varphi_grad = [t_ref, r_p](const Vec& xf, const Vec& p, Vec& vx, Vec& vp) {
    vx = Vec::Zero(xf.size());
    vp = Vec::Constant(1, 2.0 * r_p * (p(0) - t_ref));
  };
  prob.varphi_hess = [r_p](const Vec& xf, const Vec&) {
    Mat h = Mat::Zero(xf.size() + 1, xf.size() + 1);
    h(xf.size(), xf.size()) = 2.0 * r_p;
    return h;
  };
  return prob;
}

OcpSolution solve_tracking(const ComponentModel& g_model, const OcpSolution& reference,
                           const TrackingWeights& weights, const OcpSolveOptions& opts,
                           const OcpSolution* warm) {
  const OcpProblem prob = make_tracking_problem(reference, weights, opts.unit);
  const Mesh& mesh = reference.trajectory.mesh;
  Nlp nlp = transcribe(prob, g_model, mesh);

  Vec z0 = warm != nullptr ? warm->z : reference.z;
  IpWarmStart ws;
  const IpWarmStart* wsp = nullptr;
  if (warm != nullptr && warm->y.size() == nlp.problem.m_eq &&
      warm->w.size() == nlp.problem.m_ineq) {
    ws.y = warm->y;
    ws.w = warm->w;
    ws.s = warm->s;
    ws.zl = warm->zl;
    ws.zu = warm->zu;
    wsp = &ws;
  }

  const IpResult r = interior_point_solve(nlp.problem, z0, opts.ip, wsp);
  OcpSolution sol;
  sol.trajectory = nlp.unpack(r.z);
  sol.trajectory.time_scale = sol.trajectory.params(0);
  sol.objective = r.objective;
  sol.z = r.z;
  sol.y = r.y;
  sol.w = r.w;
  sol.s = r.s;
  sol.zl = r.zl;
  sol.zu = r.zu;
  sol.costate = extract_costate(r.y, mesh, prob.n_x);
  sol.kkt_error = r.kkt_error;
  sol.iterations = r.iterations;
  return sol;
}

}  // namespace sdr
