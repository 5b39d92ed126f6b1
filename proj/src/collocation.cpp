#include "sdr/collocation.hpp"

#include <Eigen/LU>
#include <cmath>
#include <sstream>

namespace sdr {

namespace {

// Legendre P_n(x) by recurrence.
double legendre(int n, double x) {
  double p0 = 1.0, p1 = x;
  if (n == 0) return p0;
  for (int k = 2; k <= n; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

// q(x) = P_{n-1}(x) + P_n(x); its interior roots are the non-endpoint nodes
// of the left Legendre-Gauss-Radau rule.
double radau_poly(int n, double x) { return legendre(n - 1, x) + legendre(n, x); }

double radau_poly_deriv(int n, double x) {
  // (1-x^2) P_n'(x) = n (P_{n-1}(x) - x P_n(x))
  const double den = 1.0 - x * x;
  const double d1 = (n - 1) * (legendre(n - 2, x) - x * legendre(n - 1, x)) / den;
  const double dn = n * (legendre(n - 1, x) - x * legendre(n, x)) / den;
  return d1 + dn;
}

Vec barycentric_weights(const Vec& pts) {
  const int m = static_cast<int>(pts.size());
  Vec w = Vec::Ones(m);
  for (int j = 0; j < m; ++j) {
    for (int k = 0; k < m; ++k) {
      if (k != j) w(j) /= (pts(j) - pts(k));
    }
  }
  // Normalize for scale only; barycentric formulas are invariant to this.
  w /= w.cwiseAbs().maxCoeff();
  return w;
}

}  // namespace

RadauRule flipped_lgr(int degree) {
  if (degree < 1 || degree > 30) {
    throw Error(ErrorCode::InvalidRequest, "flipped_lgr: degree must be in [1, 30]");
  }
  const int n = degree;

  // Left-Radau nodes: -1 plus the interior roots of P_{n-1} + P_n.
  std::vector<double> left{-1.0};
  if (n > 1) {
    const int samples = 200 * n;
    double prev_x = -1.0 + 1e-12;
    double prev_q = radau_poly(n, prev_x);
    for (int s = 1; s <= samples; ++s) {
      const double x = -1.0 + 2.0 * (static_cast<double>(s) / samples) - 1e-12 * (s == samples);
      const double q = radau_poly(n, x);
      if (prev_q == 0.0) {
        left.push_back(prev_x);
      } else if (q != 0.0 && std::signbit(q) != std::signbit(prev_q)) {
        double a = prev_x, b = x;
        for (int it = 0; it < 200 && (b - a) > 1e-15; ++it) {
          const double mid = 0.5 * (a + b);
          const double qm = radau_poly(n, mid);
          if (qm == 0.0) {
            a = b = mid;
          } else if (std::signbit(qm) == std::signbit(radau_poly(n, a))) {
            a = mid;
          } else {
            b = mid;
          }
        }
        double root = 0.5 * (a + b);
        for (int it = 0; it < 3; ++it) {
          root -= radau_poly(n, root) / radau_poly_deriv(n, root);
        }
        left.push_back(root);
      }
      prev_x = x;
      prev_q = q;
    }
  }
  if (static_cast<int>(left.size()) != n) {
    throw Error(ErrorCode::SolverFailure, "flipped_lgr: root search found wrong node count");
  }

  Vec left_nodes = Eigen::Map<Vec>(left.data(), n);
  Vec left_weights(n);
  left_weights(0) = 2.0 / (n * n);
  for (int i = 1; i < n; ++i) {
    const double p = legendre(n - 1, left_nodes(i));
    left_weights(i) = (1.0 - left_nodes(i)) / (n * n * p * p);
  }

  RadauRule rule;
  rule.degree = n;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.nodes(i) = -left_nodes(n - 1 - i);
    rule.weights(i) = left_weights(n - 1 - i);
  }

  rule.support.resize(n + 1);
  rule.support(0) = -1.0;
  rule.support.tail(n) = rule.nodes;
  rule.barycentric = barycentric_weights(rule.support);

  // D_{ij} = L_j'(s_i) over the support points; keep the collocation rows.
  Mat full = Mat::Zero(n + 1, n + 1);
  for (int i = 0; i <= n; ++i) {
    double diag = 0.0;
    for (int j = 0; j <= n; ++j) {
      if (i == j) continue;
      full(i, j) = (rule.barycentric(j) / rule.barycentric(i)) / (rule.support(i) - rule.support(j));
      diag -= full(i, j);
    }
    full(i, i) = diag;
  }
  rule.diff = full.bottomRows(n);
  return rule;
}

Vec Mesh::coll_quad_weights() const {
  Vec w(n_coll_nodes());
  const double scale = 0.5 * dt();
  for (int k = 0; k < K; ++k) {
    for (int i = 1; i <= n; ++i) w(coll_index(k, i)) = scale * rule.weights(i - 1);
  }
  return w;
}

namespace {

Vec barycentric_eval(const RadauRule& rule, const Mat& values, double tau) {
  const int m = static_cast<int>(rule.support.size());
  double denom = 0.0;
  Vec num = Vec::Zero(values.cols());
  for (int j = 0; j < m; ++j) {
    const double diff = tau - rule.support(j);
    if (std::abs(diff) < 1e-14) return values.row(j);
    const double c = rule.barycentric(j) / diff;
    num += c * values.row(j).transpose();
    denom += c;
  }
  return num / denom;
}

}  // namespace

Vec Trajectory::state_at(double t) const {
  const Mesh& m = mesh;
  if (t < m.t0 - 1e-9 * (m.tf - m.t0) || t > m.tf + 1e-9 * (m.tf - m.t0)) {
    throw Error(ErrorCode::InvalidRequest, "Trajectory::state_at: time outside horizon");
  }
  int k = static_cast<int>(std::floor((t - m.t0) / m.dt()));
  k = std::min(std::max(k, 0), m.K - 1);
  const double tau = 2.0 * (t - m.start_time(k)) / m.dt() - 1.0;
  return barycentric_eval(m.rule, states.middleRows(m.state_index(k, 0), m.n + 1), tau);
}

Vec Trajectory::control_at(double t) const {
  if (n_u() == 0) return Vec();
  const Mesh& m = mesh;
  int k = static_cast<int>(std::floor((t - m.t0) / m.dt()));
  k = std::min(std::max(k, 0), m.K - 1);
  const double tau = 2.0 * (t - m.start_time(k)) / m.dt() - 1.0;
  // Controls live on the collocation nodes only (degree n-1 interpolation).
  const int mcount = m.n;
  double denom = 0.0;
  Vec num = Vec::Zero(n_u());
  Vec bw = Vec::Ones(mcount);
  for (int j = 0; j < mcount; ++j) {
    for (int i = 0; i < mcount; ++i) {
      if (i != j) bw(j) /= (m.rule.nodes(j) - m.rule.nodes(i));
    }
  }
  for (int j = 0; j < mcount; ++j) {
    const double diff = tau - m.rule.nodes(j);
    if (std::abs(diff) < 1e-14) return controls.row(m.coll_index(k, j + 1));
    const double c = bw(j) / diff;
    num += c * controls.row(m.coll_index(k, j + 1)).transpose();
    denom += c;
  }
  return num / denom;
}

Trajectory solve_ivp(const OdeProblem& prob, const ComponentModel* g_model, const Mesh& mesh) {
  const int nx = prob.n_x;
  const int n = mesh.n;
  Trajectory traj;
  traj.mesh = mesh;
  traj.states.resize(mesh.n_state_nodes(), nx);
  traj.states.row(0) = prob.x0.transpose();

  Vec empty_u(0), empty_p(0);
  auto g_at = [&](double t, const Vec& x) -> Vec {
    if (prob.n_g == 0 || g_model == nullptr) return Vec(0);
    return eval_g(*g_model, prob.projection, t, x, empty_u, empty_p);
  };

  const Mat& D = mesh.rule.diff;
  const double half_dt = 0.5 * mesh.dt();

  Mat fx, fg;
  for (int k = 0; k < mesh.K; ++k) {
    const Vec x_start = traj.states.row(mesh.state_index(k, 0));
    // Constant continuation initial guess.
    Mat X(n, nx);
    for (int i = 0; i < n; ++i) X.row(i) = x_start.transpose();

    Vec times(n);
    for (int i = 1; i <= n; ++i) times(i - 1) = mesh.node_time(k, i);

    auto residual = [&](const Mat& Xc) -> Vec {
      Vec r(n * nx);
      for (int i = 0; i < n; ++i) {
        Vec acc = D(i, 0) * x_start;
        for (int j = 0; j < n; ++j) acc += D(i, j + 1) * Xc.row(j).transpose();
        const Vec g = g_at(times(i), Xc.row(i));
        acc -= half_dt * prob.f(times(i), Xc.row(i), g);
        r.segment(i * nx, nx) = acc;
      }
      return r;
    };

    Vec r = residual(X);
    const double scale = std::max(1.0, X.cwiseAbs().maxCoeff());
    const double tol = 1e-10 * scale;
    bool converged = r.lpNorm<Eigen::Infinity>() <= tol;

    for (int iter = 0; iter < 50 && !converged; ++iter) {
      Mat J = Mat::Zero(n * nx, n * nx);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          J.block(i * nx, j * nx, nx, nx).diagonal().array() += D(i, j + 1);
        }
        const Vec xi = X.row(i);
        const Vec g = g_at(times(i), xi);
        prob.f_jac(times(i), xi, g, fx, fg);
        Mat A = fx;
        if (prob.n_g > 0 && g_model != nullptr) {
          const GEval ge = eval_g_jacobians(*g_model, prob.projection, times(i), xi, empty_u, empty_p);
          A += fg * ge.jac_x;
        }
        J.block(i * nx, i * nx, nx, nx) -= half_dt * A;
      }
      const Vec step = J.partialPivLu().solve(-r);

      const double r0 = r.lpNorm<Eigen::Infinity>();
      double alpha = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 30; ++ls) {
        Mat X_try = X;
        for (int i = 0; i < n; ++i) X_try.row(i) += alpha * step.segment(i * nx, nx).transpose();
        Vec r_try;
        try {
          r_try = residual(X_try);
        } catch (const Error&) {
          alpha *= 0.5;  // stepped outside the model's domain (e.g. v <= 0)
          continue;
        }
        if (r_try.lpNorm<Eigen::Infinity>() <= (1.0 - 1e-4 * alpha) * r0) {
          X = X_try;
          r = r_try;
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) break;
      converged = r.lpNorm<Eigen::Infinity>() <= tol;
    }
    if (!converged) {
      throw Error(ErrorCode::SolverFailure,
                  "solve_ivp: Newton failed to converge in interval " + std::to_string(k));
    }
    for (int i = 1; i <= n; ++i) traj.states.row(mesh.state_index(k, i)) = X.row(i - 1);
  }
  return traj;
}

Trajectory solve_linear_ivp(const Mesh& mesh, int n_x,
                            const std::function<void(double, Mat&, Vec&)>& coeffs, const Vec& x0) {
  const int n = mesh.n;
  Trajectory traj;
  traj.mesh = mesh;
  traj.states.resize(mesh.n_state_nodes(), n_x);
  traj.states.row(0) = x0.transpose();

  const Mat& D = mesh.rule.diff;
  const double half_dt = 0.5 * mesh.dt();

  Mat A(n_x, n_x);
  Vec b(n_x);
  for (int k = 0; k < mesh.K; ++k) {
    const Vec x_start = traj.states.row(mesh.state_index(k, 0));
    Mat J = Mat::Zero(n * n_x, n * n_x);
    Vec rhs(n * n_x);
    for (int i = 0; i < n; ++i) {
      const double t = mesh.node_time(k, i + 1);
      coeffs(t, A, b);
      for (int j = 0; j < n; ++j) {
        J.block(i * n_x, j * n_x, n_x, n_x).diagonal().array() += D(i, j + 1);
      }
      J.block(i * n_x, i * n_x, n_x, n_x) -= half_dt * A;
      rhs.segment(i * n_x, n_x) = half_dt * b - D(i, 0) * x_start;
    }
    const Vec sol = J.partialPivLu().solve(rhs);
    for (int i = 1; i <= n; ++i) {
      traj.states.row(mesh.state_index(k, i)) = sol.segment((i - 1) * n_x, n_x).transpose();
    }
  }
  return traj;
}

double quadrature(const Mesh& mesh, const Vec& coll_values) {
  if (coll_values.size() != mesh.n_coll_nodes()) {
    throw Error(ErrorCode::InvalidRequest, "quadrature: need one value per collocation node");
  }
  return mesh.coll_quad_weights().dot(coll_values);
}

double evaluate_qoi(const OdeProblem& prob, const ComponentModel* g_model, const Trajectory& traj) {
  double q = prob.phi ? prob.phi(traj.states.bottomRows(1).transpose()) : 0.0;
  if (prob.ell) {
    Vec vals(traj.mesh.n_coll_nodes());
    Vec empty_u(0), empty_p(0);
    for (int c = 0; c < traj.mesh.n_coll_nodes(); ++c) {
      const double t = traj.mesh.coll_time(c);
      const Vec x = traj.state_at_coll(c);
      const Vec g = (prob.n_g > 0 && g_model != nullptr)
                        ? eval_g(*g_model, prob.projection, t, x, empty_u, empty_p)
                        : Vec(0);
      vals(c) = prob.ell(t, x, g);
    }
    q += quadrature(traj.mesh, vals);
  }
  return q;
}

std::string trajectory_to_csv(const Trajectory& traj, const std::vector<std::string>& state_names,
                              bool include_control) {
  std::ostringstream os;
  os.precision(15);
  os << "t";
  for (const auto& name : state_names) os << "," << name;
  if (include_control && traj.n_u() > 0) os << ",u";
  os << "\n";
  const Mesh& m = traj.mesh;
  for (int idx = 0; idx < m.n_state_nodes(); ++idx) {
    const int k = idx == 0 ? 0 : (idx - 1) / m.n;
    const int i = idx == 0 ? 0 : (idx - 1) % m.n + 1;
    const double t = (i == 0 ? m.start_time(k) : m.node_time(k, i)) * traj.time_scale;
    os << t;
    for (int c = 0; c < traj.n_x(); ++c) os << "," << traj.states(idx, c);
    if (include_control && traj.n_u() > 0) {
      const int ci = idx == 0 ? 0 : std::min(m.coll_index(k, std::max(i, 1)), m.n_coll_nodes() - 1);
      os << "," << traj.controls(ci, 0);
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace sdr
