#include "sdr/sensitivity.hpp"

#include <Eigen/SparseLU>

namespace sdr {

namespace {

// Composite dynamics Jacobian A(t) = fx + fg * gx and source pieces along a
// solved trajectory, evaluated at arbitrary times via barycentric lookup.
struct OdeLinearization {
  const OdeProblem* prob;
  const ComponentModel* model;
  const Trajectory* traj;

  void eval(double t, Mat& a, Mat& b, Vec& lx, Vec& lg, Vec* x_out = nullptr) const {
    const Vec x = traj->state_at(t);
    Vec empty_u(0), empty_p(0);
    const GEval ge = eval_g_jacobians(*model, prob->projection, t, x, empty_u, empty_p);
    Mat fx, fg;
    prob->f_jac(t, x, ge.values, fx, fg);
    a = fx + fg * ge.jac_x;
    b = fg;
    if (prob->ell_grad) {
      prob->ell_grad(t, x, ge.values, lx, lg);
      lx += ge.jac_x.transpose() * lg;
    } else {
      lx = Vec::Zero(prob->n_x);
      lg = Vec::Zero(prob->n_g);
    }
    if (x_out) *x_out = x;
  }
};

}  // namespace

OdeAdjoint solve_ode_adjoint(const OdeProblem& prob, const ComponentModel& g_model,
                             const Trajectory& traj) {
  const Mesh& mesh = traj.mesh;
  OdeLinearization lin{&prob, &g_model, &traj};

  OdeAdjoint adj;
  adj.lambda_tf = prob.phi_grad(traj.states.bottomRows(1).transpose());

  // Reverse time s = t0 + tf - t turns the terminal-value adjoint equation
  // into an IVP handled by the forward collocation machinery.
  const double t_sum = mesh.t0 + mesh.tf;
  auto coeffs = [&](double s, Mat& a_rev, Vec& b_rev) {
    Mat a, b;
    Vec lx, lg;
    lin.eval(t_sum - s, a, b, lx, lg);
    a_rev = a.transpose();
    b_rev = lx;
  };
  Mesh rev_mesh(mesh.t0, mesh.tf, mesh.K, mesh.n);
  adj.lambda_reversed = solve_linear_ivp(rev_mesh, prob.n_x, coeffs, adj.lambda_tf);

  adj.lambda.resize(mesh.n_coll_nodes(), prob.n_x);
  adj.weights.resize(mesh.n_coll_nodes(), prob.n_g);
  for (int c = 0; c < mesh.n_coll_nodes(); ++c) {
    const double t = mesh.coll_time(c);
    const Vec lam = adj.lambda_reversed.state_at(t_sum - t);
    adj.lambda.row(c) = lam.transpose();
    Mat a, b;
    Vec lx, lg;
    lin.eval(t, a, b, lx, lg);
    adj.weights.row(c) = (b.transpose() * lam + lg).transpose();
  }
  return adj;
}

double apply_qoi_sensitivity_ode(const OdeAdjoint& adj, const Trajectory& traj,
                                 const std::function<Vec(double, const Vec&)>& delta_g) {
  const Mesh& mesh = traj.mesh;
  Vec vals(mesh.n_coll_nodes());
  for (int c = 0; c < mesh.n_coll_nodes(); ++c) {
    const double t = mesh.coll_time(c);
    vals(c) = adj.weights.row(c).dot(delta_g(t, traj.state_at_coll(c)));
  }
  return quadrature(mesh, vals);
}

Trajectory solve_forward_sensitivity(const OdeProblem& prob, const ComponentModel& g_model,
                                     const Trajectory& traj,
                                     const std::function<Vec(double, const Vec&)>& delta_g) {
  OdeLinearization lin{&prob, &g_model, &traj};
  auto coeffs = [&](double t, Mat& a, Vec& b) {
    Mat fg;
    Vec lx, lg, x;
    lin.eval(t, a, fg, lx, lg, &x);
    b = fg * delta_g(t, x);
  };
  return solve_linear_ivp(traj.mesh, prob.n_x, coeffs, Vec::Zero(prob.n_x));
}

double apply_qoi_sensitivity_forward(const OdeProblem& prob, const ComponentModel& g_model,
                                     const Trajectory& traj, const Trajectory& dx_traj,
                                     const std::function<Vec(double, const Vec&)>& delta_g) {
  const Vec xf = traj.states.bottomRows(1).transpose();
  const Vec dxf = dx_traj.states.bottomRows(1).transpose();
  double dq = prob.phi_grad(xf).dot(dxf);
  if (prob.ell_grad) {
    OdeLinearization lin{&prob, &g_model, &traj};
    const Mesh& mesh = traj.mesh;
    Vec vals(mesh.n_coll_nodes());
    for (int c = 0; c < mesh.n_coll_nodes(); ++c) {
      const double t = mesh.coll_time(c);
      Mat a, b;
      Vec lx, lg;
      lin.eval(t, a, b, lx, lg);
      vals(c) = lx.dot(dx_traj.state_at_coll(c)) + lg.dot(delta_g(t, traj.state_at_coll(c)));
    }
    dq += quadrature(mesh, vals);
  }
  return dq;
}

SecondOrderBlocks assemble_second_order(const OcpProblem& prob, const ComponentModel& g_model,
                                        const OcpSolution& sol) {
  const Mesh& mesh = sol.trajectory.mesh;
  const int nx = prob.n_x, nu = prob.n_u, np = prob.n_p, ng = prob.n_g;
  const Vec p = sol.trajectory.params;

  SecondOrderBlocks out;
  out.nodes.resize(static_cast<std::size_t>(mesh.n_coll_nodes()));
  for (int c = 0; c < mesh.n_coll_nodes(); ++c) {
    const double t = mesh.coll_time(c);
    const Vec x = sol.trajectory.state_at_coll(c);
    const Vec u = sol.trajectory.controls.row(c);
    const Vec lam = sol.costate.row(c);
    const GEval ge = eval_g_jacobians(g_model, prob.projection, t, x, u, p);

    Mat fx, fu, fp, fg;
    prob.f_jac(t, x, u, p, ge.values, fx, fu, fp, fg);

    Mat hfull = prob.f_hess_vec(t, x, u, p, ge.values, lam);
    if (prob.l_hess) hfull += prob.l_hess(t, x, u, p, ge.values);

    NodeBlocks& nb = out.nodes[static_cast<std::size_t>(c)];
    nb.A = fx + fg * ge.jac_x;
    nb.B = fu + fg * ge.jac_u;
    nb.C = fp + fg * ge.jac_p;
    nb.fg = fg;
    nb.d = fg.transpose() * lam;

    // Total Hamiltonian blocks with first-order model chain terms only:
    // H_ab = H_ab + H_ag g_b + (H_bg g_a)^T + g_a^T H_gg g_b.
    const Mat hgg = hfull.bottomRightCorner(ng, ng);
    auto block = [&](int off_a, int n_a, int off_b, int n_b, const Mat& ga, const Mat& gb) {
      Mat h = hfull.block(off_a, off_b, n_a, n_b);
      h += hfull.block(off_a, nx + nu + np, n_a, ng) * gb;
      h += (hfull.block(off_b, nx + nu + np, n_b, ng) * ga).transpose();
      h += ga.transpose() * hgg * gb;
      return h;
    };
    nb.hxx = block(0, nx, 0, nx, ge.jac_x, ge.jac_x);
    nb.hxu = block(0, nx, nx, nu, ge.jac_x, ge.jac_u);
    nb.hxp = block(0, nx, nx + nu, np, ge.jac_x, ge.jac_p);
    nb.huu = block(nx, nu, nx, nu, ge.jac_u, ge.jac_u);
    nb.hup = block(nx, nu, nx + nu, np, ge.jac_u, ge.jac_p);
    nb.hpp = block(nx + nu, np, nx + nu, np, ge.jac_p, ge.jac_p);
    nb.hxg = hfull.block(0, nx + nu + np, nx, ng) + ge.jac_x.transpose() * hgg;
    nb.hug = hfull.block(nx, nx + nu + np, nu, ng) + ge.jac_u.transpose() * hgg;
    nb.hpg = hfull.block(nx + nu, nx + nu + np, np, ng) + ge.jac_p.transpose() * hgg;
  }

  const Vec x_last = sol.trajectory.states.bottomRows(1).transpose();
  out.varphi_hess = prob.varphi_hess ? prob.varphi_hess(x_last, p) : Mat::Zero(nx + np, nx + np);
  return out;
}

OcpAdjoint solve_ocp_adjoint(const OcpProblem& prob, const ComponentModel& g_model,
                             const OcpSolution& sol, const OcpQoi& qoi) {
  const Mesh& mesh = sol.trajectory.mesh;
  const int nx = prob.n_x, nu = prob.n_u, np = prob.n_p, ng = prob.n_g;
  const SecondOrderBlocks blocks = assemble_second_order(prob, g_model, sol);

  for (int c = 0; c < mesh.n_coll_nodes(); ++c) {
    const auto& nb = blocks.nodes[static_cast<std::size_t>(c)];
    Eigen::FullPivLU<Mat> lu(nb.huu);
    if (!lu.isInvertible()) {
      throw Error(ErrorCode::AssumptionViolation,
                  "solve_ocp_adjoint: H_uu singular at collocation node " + std::to_string(c));
    }
  }

  TranscriptionLayout L{nx, nu, np, mesh.K, mesh.n};
  const Vec qw = mesh.coll_quad_weights();
  const Vec p = sol.trajectory.params;
  const Vec x_last = sol.trajectory.states.bottomRows(1).transpose();

  // Linear term of the LQOCP objective (Thm-level data: c from the QoI
  // integrand, sigma_f and gamma from the QoI terminal/parameter gradients).
  Vec b = Vec::Zero(L.n_var());
  Vec sigma_f, gamma_p;
  qoi.phi_grad(x_last, p, sigma_f, gamma_p);
  b.segment(L.var_state(L.n_state_nodes() - 1, 0), nx) += sigma_f;

  for (int c = 0; c < mesh.n_coll_nodes(); ++c) {
    const double t = mesh.coll_time(c);
    const Vec x = sol.trajectory.state_at_coll(c);
    const Vec u = sol.trajectory.controls.row(c);
    if (qoi.ell_grad) {
      const Vec g = eval_g(g_model, prob.projection, t, x, u, p);
      const GEval ge = eval_g_jacobians(g_model, prob.projection, t, x, u, p);
      Vec lx, lu, lp, lg;
      qoi.ell_grad(t, x, u, p, g, lx, lu, lp, lg);
      b.segment(L.var_state(c + 1, 0), nx) += qw(c) * (lx + ge.jac_x.transpose() * lg);
      if (nu > 0) b.segment(L.var_control(c, 0), nu) += qw(c) * (lu + ge.jac_u.transpose() * lg);
      if (np > 0) {
        const Vec gp = lp + ge.jac_p.transpose() * lg;
        for (int j = 0; j < np; ++j) b(L.var_param(j)) += qw(c) * gp(j);
      }
    }
  }
  for (int j = 0; j < np; ++j) b(L.var_param(j)) += gamma_p(j);

  // Quadratic term: quadrature of the total Hamiltonian blocks plus the
  // terminal contribution.
  std::vector<Eigen::Triplet<double>> trips;
  auto scatter_block = [&](int row0, int col0, const Mat& m, double scale) {
    for (int a = 0; a < m.rows(); ++a) {
      for (int bcol = 0; bcol < m.cols(); ++bcol) {
        const double v = scale * m(a, bcol);
        if (v != 0.0) trips.emplace_back(row0 + a, col0 + bcol, v);
      }
    }
  };
  for (int c = 0; c < mesh.n_coll_nodes(); ++c) {
    const auto& nb = blocks.nodes[static_cast<std::size_t>(c)];
    const int ix = L.var_state(c + 1, 0);
    const int iu = nu > 0 ? L.var_control(c, 0) : 0;
    const int ip = np > 0 ? L.var_param(0) : 0;
    scatter_block(ix, ix, nb.hxx, qw(c));
    if (nu > 0) {
      scatter_block(ix, iu, nb.hxu, qw(c));
      scatter_block(iu, ix, nb.hxu.transpose(), qw(c));
      scatter_block(iu, iu, nb.huu, qw(c));
    }
    if (np > 0) {
      scatter_block(ix, ip, nb.hxp, qw(c));
      scatter_block(ip, ix, nb.hxp.transpose(), qw(c));
      scatter_block(ip, ip, nb.hpp, qw(c));
      if (nu > 0) {
        scatter_block(iu, ip, nb.hup, qw(c));
        scatter_block(ip, iu, nb.hup.transpose(), qw(c));
      }
    }
  }
  {
    const int ilast = L.var_state(L.n_state_nodes() - 1, 0);
    const Mat& vh = blocks.varphi_hess;
    scatter_block(ilast, ilast, vh.topLeftCorner(nx, nx), 1.0);
    if (np > 0) {
      const int ip = L.var_param(0);
      scatter_block(ilast, ip, vh.topRightCorner(nx, np), 1.0);
      scatter_block(ip, ilast, vh.bottomLeftCorner(np, nx), 1.0);
      scatter_block(ip, ip, vh.bottomRightCorner(np, np), 1.0);
    }
  }

  // Constraints: initial condition and linearized collocation rows, which are
  // exactly the transcription's equality Jacobian at the solution.
  Nlp nlp = transcribe(prob, g_model, mesh);
  const SpMat je = nlp.problem.eq_jac(sol.z);

  const int dim = L.n_var() + L.m_eq();
  for (int k = 0; k < je.outerSize(); ++k) {
    for (SpMat::InnerIterator it(je, k); it; ++it) {
      trips.emplace_back(L.n_var() + static_cast<int>(it.row()), static_cast<int>(it.col()),
                         it.value());
      trips.emplace_back(static_cast<int>(it.col()), L.n_var() + static_cast<int>(it.row()),
                         it.value());
    }
  }
  SpMat kkt(dim, dim);
  kkt.setFromTriplets(trips.begin(), trips.end());
  kkt.makeCompressed();

  Vec rhs = Vec::Zero(dim);
  rhs.head(L.n_var()) = -b;
  Eigen::SparseLU<SpMat> lu(kkt);
  if (lu.info() != Eigen::Success) {
    throw Error(ErrorCode::SolverFailure, "solve_ocp_adjoint: LQOCP KKT factorization failed");
  }
  const Vec solvec = lu.solve(rhs);

  OcpAdjoint adj;
  adj.kkt_residual = (kkt * solvec - rhs).lpNorm<Eigen::Infinity>() /
                     std::max(1.0, b.lpNorm<Eigen::Infinity>());
  adj.dx.resize(L.n_state_nodes(), nx);
  for (int node = 0; node < L.n_state_nodes(); ++node) {
    adj.dx.row(node) = solvec.segment(L.var_state(node, 0), nx).transpose();
  }
  adj.du.resize(mesh.n_coll_nodes(), nu);
  for (int c = 0; c < mesh.n_coll_nodes() && nu > 0; ++c) {
    adj.du.row(c) = solvec.segment(L.var_control(c, 0), nu).transpose();
  }
  adj.dp.resize(np);
  for (int j = 0; j < np; ++j) adj.dp(j) = solvec(L.var_param(j));

  const Vec eta = solvec.tail(L.m_eq());
  adj.dlam = extract_costate(eta, mesh, nx);

  adj.w0.resize(mesh.n_coll_nodes(), ng);
  adj.d_abs.resize(mesh.n_coll_nodes(), ng);
  for (int c = 0; c < mesh.n_coll_nodes(); ++c) {
    const auto& nb = blocks.nodes[static_cast<std::size_t>(c)];
    Vec w0 = nb.hxg.transpose() * adj.dx.row(c + 1).transpose() +
             nb.fg.transpose() * adj.dlam.row(c).transpose();
    if (nu > 0) w0 += nb.hug.transpose() * adj.du.row(c).transpose();
    if (np > 0) w0 += nb.hpg.transpose() * adj.dp;
    if (qoi.ell_grad) {
      const double t = mesh.coll_time(c);
      const Vec x = sol.trajectory.state_at_coll(c);
      const Vec u = sol.trajectory.controls.row(c);
      const Vec g = eval_g(g_model, prob.projection, t, x, u, p);
      Vec lx, lu, lp, lg;
      qoi.ell_grad(t, x, u, p, g, lx, lu, lp, lg);
      w0 += lg;
    }
    adj.w0.row(c) = w0.transpose();
    adj.d_abs.row(c) = nb.d.cwiseAbs().transpose();
  }
  return adj;
}

double apply_qoi_sensitivity_ocp(const OcpProblem& prob, const OcpAdjoint& adj,
                                 const SecondOrderBlocks& blocks, const OcpSolution& sol,
                                 const ComponentModel& bump) {
  const Mesh& mesh = sol.trajectory.mesh;
  const Vec p = sol.trajectory.params;
  Vec vals(mesh.n_coll_nodes());
  for (int c = 0; c < mesh.n_coll_nodes(); ++c) {
    const double t = mesh.coll_time(c);
    const Vec x = sol.trajectory.state_at_coll(c);
    const Vec u = sol.trajectory.controls.row(c);
    const GEval bg = eval_g_jacobians(bump, prob.projection, t, x, u, p);
    const auto& nb = blocks.nodes[static_cast<std::size_t>(c)];
    double v = adj.w0.row(c).dot(bg.values);
    v += nb.d.dot(bg.jac_x * adj.dx.row(c + 1).transpose());
    if (prob.n_u > 0) v += nb.d.dot(bg.jac_u * adj.du.row(c).transpose());
    if (prob.n_p > 0) v += nb.d.dot(bg.jac_p * adj.dp);
    vals(c) = v;
  }
  return quadrature(mesh, vals);
}

}  // namespace sdr
