#include "sdr/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sdr {

namespace {

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

Mat latin_hypercube(int n, const Mat& ranges, std::mt19937_64& rng) {
  if (n < 1) throw Error(ErrorCode::InvalidRequest, "latin_hypercube: n >= 1 required");
  const int d = static_cast<int>(ranges.rows());
  Mat pts(n, d);
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int j = 0; j < d; ++j) {
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) {
      const int k = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(k)]);
    }
    const double lo = ranges(j, 0), hi = ranges(j, 1);
    for (int i = 0; i < n; ++i) {
      pts(i, j) = lo + (perm[static_cast<std::size_t>(i)] + uniform01(rng)) * (hi - lo) / n;
    }
  }
  return pts;
}

Mat latin_hypercube(int n, const Mat& ranges, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return latin_hypercube(n, ranges, rng);
}

Mat trajectory_candidates(const Trajectory& traj, int n, const DomainProjection& proj,
                          double t_skip, int* n_jittered) {
  const Mesh& mesh = traj.mesh;
  const double span = mesh.tf - (mesh.t0 + t_skip);
  if (span <= 0.0) {
    throw Error(ErrorCode::InvalidRequest, "trajectory_candidates: t_skip exceeds the horizon");
  }
  Mat pts(n, proj.dim());
  int jittered = 0;
  const Vec empty_u(0), empty_p(0);
  for (int i = 0; i < n; ++i) {
    const double t = mesh.t0 + t_skip + (i + 1) * span / (n + 1);
    const Vec x = traj.state_at(t);
    const Vec u = traj.n_u() > 0 ? traj.control_at(t) : empty_u;
    Vec y = proj.project(t, x, u, traj.params);
    for (int k = 0; k < i; ++k) {
      if ((pts.row(k).transpose() - y).norm() < 1e-12) {
        y(0) += 1e-9 * (i + 1);
        ++jittered;
        break;
      }
    }
    pts.row(i) = y.transpose();
  }
  if (n_jittered) *n_jittered = jittered;
  return pts;
}

CandidateSet hybrid_candidates(const Trajectory& traj, const DomainProjection& proj,
                               const Mat& ranges, int n_lh, int n_traj, std::uint64_t seed,
                               double t_skip) {
  CandidateSet set;
  set.seed = seed;
  const Mat lh = n_lh > 0 ? latin_hypercube(n_lh, ranges, seed) : Mat(0, ranges.rows());
  const Mat tr = n_traj > 0 ? trajectory_candidates(traj, n_traj, proj, t_skip, &set.jittered)
                            : Mat(0, ranges.rows());
  set.points.resize(n_lh + n_traj, ranges.rows());
  if (n_lh > 0) set.points.topRows(n_lh) = lh;
  if (n_traj > 0) set.points.bottomRows(n_traj) = tr;
  set.provenance.assign(static_cast<std::size_t>(n_lh), Provenance::LatinHypercube);
  set.provenance.insert(set.provenance.end(), static_cast<std::size_t>(n_traj),
                        Provenance::TrajectoryState);
  return set;
}

AcquisitionResult select(const Mat& candidates, const std::function<double(const Vec&)>& scorer,
                         SelectDirection direction) {
  const int m = static_cast<int>(candidates.rows());
  if (m < 1) throw Error(ErrorCode::InvalidRequest, "select: empty candidate set");
  AcquisitionResult res;
  res.scores.resize(m);
  for (int i = 0; i < m; ++i) res.scores(i) = scorer(candidates.row(i).transpose());
  res.chosen = 0;
  for (int i = 1; i < m; ++i) {
    const bool better = direction == SelectDirection::Minimize ? res.scores(i) < res.scores(res.chosen)
                                                               : res.scores(i) > res.scores(res.chosen);
    if (better) res.chosen = i;
  }
  res.y_plus = candidates.row(res.chosen).transpose();
  res.value = res.scores(res.chosen);
  return res;
}

void AcquisitionContext::build_common(const SurrogateModel& model, const Mat& points,
                                      const Vec& qw) {
  model_ = &model;
  points_ = points;
  qw_ = qw;
  const int d = model.input_dim();
  const int n_nodes = static_cast<int>(points.rows());

  // Group components by shared factorization.
  for (int i = 0; i < model.n_outputs(); ++i) {
    const auto& fact = model.interpolants[static_cast<std::size_t>(i)].factorization;
    bool found = false;
    for (auto& fc : facts_) {
      if (fc.fact == fact) {
        fc.components.push_back(i);
        found = true;
        break;
      }
    }
    if (!found) {
      FactCache fc;
      fc.fact = fact;
      fc.cfg = model.kernels[static_cast<std::size_t>(i)];
      fc.components.push_back(i);
      facts_.push_back(std::move(fc));
    }
  }

  const int n_alphas = with_derivatives_ ? 1 + d : 1;
  for (auto& fc : facts_) {
    fc.alphas.resize(static_cast<std::size_t>(n_alphas));
    for (int a = 0; a < n_alphas; ++a) {
      auto& ac = fc.alphas[static_cast<std::size_t>(a)];
      ac.alpha = a == 0 ? zero_index(d) : unit_index(d, a - 1);
      ac.v.resize(n_nodes, fc.fact->size());
      ac.base_sq.resize(n_nodes);
      const double diag = kernel_diag(fc.cfg, ac.alpha);
      for (int c = 0; c < n_nodes; ++c) {
        const Vec v = fc.fact->kernel_vector(points.row(c), ac.alpha);
        ac.v.row(c) = v.transpose();
        const double sq = diag - (fc.fact->size() > 0 ? v.dot(fc.fact->solve(v)) : 0.0);
        ac.base_sq(c) = std::max(0.0, sq);
      }
    }
  }
}

AcquisitionContext AcquisitionContext::for_ode(const SurrogateModel& model,
                                               const OdeAdjoint& adjoint, const Trajectory& traj) {
  AcquisitionContext ctx;
  ctx.with_derivatives_ = false;
  const Mesh& mesh = traj.mesh;
  Mat points(mesh.n_coll_nodes(), model.input_dim());
  const Vec empty_u(0), empty_p(0);
  for (int c = 0; c < mesh.n_coll_nodes(); ++c) {
    points.row(c) = model.projection
                        .project(mesh.coll_time(c), traj.state_at_coll(c), empty_u, empty_p)
                        .transpose();
  }
  ctx.abs_w_ = adjoint.weights.cwiseAbs();
  ctx.build_common(model, points, mesh.coll_quad_weights());
  return ctx;
}

AcquisitionContext AcquisitionContext::for_ocp(const SurrogateModel& model,
                                               const OcpAdjoint& adjoint, const OcpSolution& sol) {
  AcquisitionContext ctx;
  ctx.with_derivatives_ = true;
  const Mesh& mesh = sol.trajectory.mesh;
  const int d = model.input_dim();
  Mat points(mesh.n_coll_nodes(), d);
  Mat abs_delta(mesh.n_coll_nodes(), d);
  for (int c = 0; c < mesh.n_coll_nodes(); ++c) {
    const Vec x = sol.trajectory.state_at_coll(c);
    const Vec u = sol.trajectory.controls.row(c);
    points.row(c) =
        model.projection.project(mesh.coll_time(c), x, u, sol.trajectory.params).transpose();
    for (int m = 0; m < d; ++m) {
      const auto& e = model.projection.inputs[static_cast<std::size_t>(m)];
      double v = 0.0;
      switch (e.source) {
        case DomainProjection::Source::State: v = std::abs(adjoint.dx(c + 1, e.index)); break;
        case DomainProjection::Source::Control: v = std::abs(adjoint.du(c, e.index)); break;
        case DomainProjection::Source::Param: v = std::abs(adjoint.dp(e.index)); break;
        case DomainProjection::Source::Time: v = 0.0; break;
      }
      abs_delta(c, m) = v;
    }
  }
  ctx.abs_w_ = adjoint.w0.cwiseAbs();
  ctx.abs_d_ = adjoint.d_abs;
  ctx.abs_delta_ = abs_delta;
  ctx.build_common(model, points, mesh.coll_quad_weights());
  return ctx;
}

double AcquisitionContext::sd_score(const Vec& y_plus) const {
  const int n_nodes = static_cast<int>(points_.rows());
  double score = 0.0;
  for (const auto& fc : facts_) {
    const PowerUpdate upd = prepare_power_update(fc.cfg, *fc.fact, y_plus);
    for (int c = 0; c < n_nodes; ++c) {
      const Vec y = points_.row(c).transpose();
      for (std::size_t a = 0; a < fc.alphas.size(); ++a) {
        const auto& ac = fc.alphas[a];
        const double k_new = kernel_deriv1(fc.cfg, y, y_plus, ac.alpha);
        const double vdotc = fc.fact->size() > 0 ? ac.v.row(c).dot(upd.c) : 0.0;
        const double p = std::sqrt(updated_power_sq(upd, ac.base_sq(c), k_new, vdotc));
        if (a == 0) {
          for (int i : fc.components) {
            score += qw_(c) * abs_w_(c, i) * model_->gamma(i) * p;
          }
        } else {
          const double pairing = abs_delta_(c, static_cast<int>(a) - 1) * p;
          for (int i : fc.components) {
            score += qw_(c) * abs_d_(c, i) * model_->gamma(i) * pairing;
          }
        }
      }
    }
  }
  return score;
}

double AcquisitionContext::no_refinement_bound() const {
  const int n_nodes = static_cast<int>(points_.rows());
  double score = 0.0;
  for (const auto& fc : facts_) {
    for (int c = 0; c < n_nodes; ++c) {
      for (std::size_t a = 0; a < fc.alphas.size(); ++a) {
        const auto& ac = fc.alphas[a];
        const double p = std::sqrt(ac.base_sq(c));
        if (a == 0) {
          for (int i : fc.components) score += qw_(c) * abs_w_(c, i) * model_->gamma(i) * p;
        } else {
          const double pairing = abs_delta_(c, static_cast<int>(a) - 1) * p;
          for (int i : fc.components) score += qw_(c) * abs_d_(c, i) * model_->gamma(i) * pairing;
        }
      }
    }
  }
  return score;
}

double sd_score_ode(const SurrogateModel& model, const OdeAdjoint& adjoint, const Trajectory& traj,
                    const Vec& y_plus) {
  return AcquisitionContext::for_ode(model, adjoint, traj).sd_score(y_plus);
}

double sd_score_ocp(const SurrogateModel& model, const OcpAdjoint& adjoint, const OcpSolution& sol,
                    const Vec& y_plus) {
  return AcquisitionContext::for_ocp(model, adjoint, sol).sd_score(y_plus);
}

double meb_score(const SurrogateModel& model, const Vec& y) {
  double sq = 0.0;
  for (int i = 0; i < model.n_outputs(); ++i) {
    const auto& interp = model.interpolants[static_cast<std::size_t>(i)];
    const double p = power_function(model.kernels[static_cast<std::size_t>(i)],
                                    *interp.factorization, y, zero_index(model.input_dim()));
    sq += p * p;
  }
  return std::sqrt(sq);
}

double acquisition_lp_value(const Vec& qw, const Mat& w, const Mat& eps) {
  double v = 0.0;
  for (int c = 0; c < qw.size(); ++c) {
    v += qw(c) * w.row(c).cwiseAbs().dot(eps.row(c));
  }
  return v;
}

StateErrorBound state_error_heuristic(const OdeProblem& prob, const SurrogateModel& model,
                                      const Trajectory& traj, const std::optional<Vec>& trial,
                                      const Mat& q_weight, int max_sweeps) {
  const Mesh& mesh = traj.mesh;
  const int nc = mesh.n_coll_nodes();
  const int nx = prob.n_x;
  const int ng = prob.n_g;
  const Vec empty_u(0), empty_p(0);

  // Linearization and error box at the collocation nodes.
  std::vector<Mat> a_nodes(static_cast<std::size_t>(nc)), b_nodes(static_cast<std::size_t>(nc));
  Mat eps(nc, ng);
  for (int c = 0; c < nc; ++c) {
    const double t = mesh.coll_time(c);
    const Vec x = traj.state_at_coll(c);
    const GEval ge = eval_g_jacobians(model, prob.projection, t, x, empty_u, empty_p);
    Mat fx, fg;
    prob.f_jac(t, x, ge.values, fx, fg);
    a_nodes[static_cast<std::size_t>(c)] = fx + fg * ge.jac_x;
    b_nodes[static_cast<std::size_t>(c)] = fg;
    const Vec y = prob.projection.project(t, x, empty_u, empty_p);
    eps.row(c) = epsilon(model, y, trial, zero_index(model.input_dim())).transpose();
  }

  auto node_of_time = [&](double t) {
    int k = static_cast<int>(std::floor((t - mesh.t0) / mesh.dt()));
    k = std::min(std::max(k, 0), mesh.K - 1);
    int best = mesh.coll_index(k, 1);
    double dist = std::abs(mesh.node_time(k, 1) - t);
    for (int i = 2; i <= mesh.n; ++i) {
      const double di = std::abs(mesh.node_time(k, i) - t);
      if (di < dist) {
        dist = di;
        best = mesh.coll_index(k, i);
      }
    }
    return best;
  };

  Mat sign = Mat::Ones(nc, ng);
  const Vec x0 = Vec::Zero(nx);

  auto forward = [&](const Mat& sg) {
    auto coeffs = [&](double t, Mat& a, Vec& b) {
      const int c = node_of_time(t);
      a = a_nodes[static_cast<std::size_t>(c)];
      b = b_nodes[static_cast<std::size_t>(c)] *
          (sg.row(c).transpose().cwiseProduct(eps.row(c).transpose()));
    };
    return solve_linear_ivp(mesh, nx, coeffs, x0);
  };

  auto objective = [&](const Trajectory& dx) {
    Vec vals(nc);
    for (int c = 0; c < nc; ++c) {
      const Vec v = dx.state_at_coll(c);
      vals(c) = v.dot(q_weight * v);
    }
    return 0.5 * quadrature(mesh, vals);
  };

  StateErrorBound out;
  Trajectory dx = forward(sign);
  double best = objective(dx);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    // Gradient of the objective with respect to the box variable via the
    // adjoint of the linearized dynamics with source Q dx.
    const double t_sum = mesh.t0 + mesh.tf;
    auto adj_coeffs = [&](double s, Mat& a, Vec& b) {
      const int c = node_of_time(t_sum - s);
      a = a_nodes[static_cast<std::size_t>(c)].transpose();
      b = q_weight * dx.state_at(t_sum - s);
    };
    const Trajectory eta = solve_linear_ivp(mesh, nx, adj_coeffs, Vec::Zero(nx));

    Mat new_sign = sign;
    for (int c = 0; c < nc; ++c) {
      const Vec w = b_nodes[static_cast<std::size_t>(c)].transpose() *
                    eta.state_at(t_sum - mesh.coll_time(c));
      for (int i = 0; i < ng; ++i) {
        if (w(i) > 0.0) new_sign(c, i) = 1.0;
        else if (w(i) < 0.0) new_sign(c, i) = -1.0;
        // sgn(0) keeps the previous sign (any value is optimal).
      }
    }
    out.iterations = sweep + 1;
    if (new_sign == sign) break;
    const Trajectory dx_new = forward(new_sign);
    const double val = objective(dx_new);
    if (val <= best + 1e-15 * std::max(1.0, best)) break;
    sign = new_sign;
    dx = dx_new;
    best = val;
  }
  out.value = best;
  return out;
}

}  // namespace sdr
