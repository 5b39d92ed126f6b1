#include "sdr/dynamics.hpp"

#include <limits>

namespace sdr {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDeg = M_PI / 180.0;

// The heat constant is quoted for W/cm^2 at km/s speeds; the 1e-5 factor
// converts C rho^0.5 v^3 to W/m^2 with v in m/s.
constexpr double kHeatToSI = 1e-5;

template <typename S>
std::array<S, 2> path_constraints_t(const std::array<S, 8>& x, const HypersonicConstants& c,
                                    double unit) {
  const S h_m = x[1] * unit;
  const S v_m = x[2] * unit;
  const S rho = c.rho0 * exp(-c.decay * h_m);
  const S qbar = 0.5 * rho * (v_m * v_m);
  const S qdot = (c.heat_C * kHeatToSI) * sqrt(rho) * (v_m * v_m * v_m);
  return {qbar / 40000.0 - 1.0, qdot / 6e6 - 1.0};
}

void check_speed(double v) {
  if (!(v > 0.0)) {
    throw Error(ErrorCode::SingularState, "hypersonic_rhs: speed must be positive");
  }
}

}  // namespace

Vec true_coefficients(double alpha, double delta) {
  Vec g(3);
  g(0) = -0.04 + 0.8 * alpha + 0.13 * delta;
  g(1) = 0.012 - 0.01 * alpha + 0.6 * alpha * alpha - 0.02 * delta + 0.12 * delta * delta;
  g(2) = 0.1745 - alpha - delta;
  return g;
}

Mat TruthCoefficients::jacobian(const Vec& y) const {
  Mat jac(3, 2);
  jac << 0.8, 0.13,                                      //
      -0.01 + 1.2 * y(0), -0.02 + 0.24 * y(1),           //
      -1.0, -1.0;
  return jac;
}

Mat TruthCoefficients::hessian(const Vec&, int component) const {
  Mat h = Mat::Zero(2, 2);
  if (component == 1) {
    h(0, 0) = 1.2;
    h(1, 1) = 0.24;
  }
  return h;
}

Atmosphere atmosphere_gravity(double x2_m, double v_ms, const HypersonicConstants& c) {
  Atmosphere a;
  a.rho = c.rho0 * std::exp(-c.decay * x2_m);
  a.gravity = c.mu / ((c.R_E + x2_m) * (c.R_E + x2_m));
  a.qbar = 0.5 * a.rho * v_ms * v_ms;
  a.qdot_stag = c.heat_C * kHeatToSI * std::sqrt(a.rho) * v_ms * v_ms * v_ms;
  return a;
}

double open_loop_input(double t) {
  const double z = std::max(t - 300.0, 0.0);
  return z * z * 1e-9;
}

Vec hypersonic_rhs(const Vec& x, double flap_accel, const Vec& g_coeffs,
                   const HypersonicConstants& c, double unit) {
  check_speed(x(2));
  std::array<double, 8> xs;
  for (int i = 0; i < 8; ++i) xs[static_cast<std::size_t>(i)] = x(i);
  const double g[3] = {g_coeffs(0), g_coeffs(1), g_coeffs(2)};
  const auto dx = hypersonic_rhs_t<double>(xs, flap_accel, g, c, unit);
  Vec out(8);
  for (int i = 0; i < 8; ++i) out(i) = dx[static_cast<std::size_t>(i)];
  return out;
}

void hypersonic_rhs_jacobians(const Vec& x, double flap_accel, const Vec& g_coeffs,
                              const HypersonicConstants& c, double unit, Mat* fx, Mat* fu,
                              Mat* fg) {
  check_speed(x(2));
  using ad::D1;
  const int n = 12;  // 8 states + 1 input + 3 coefficients
  std::array<D1, 8> xs;
  for (int i = 0; i < 8; ++i) xs[static_cast<std::size_t>(i)] = D1::seed(x(i), n, i);
  const D1 u = D1::seed(flap_accel, n, 8);
  D1 g[3];
  for (int i = 0; i < 3; ++i) g[i] = D1::seed(g_coeffs(i), n, 9 + i);
  const auto dx = hypersonic_rhs_t<D1>(xs, u, g, c, unit);
  if (fx) fx->resize(8, 8);
  if (fu) fu->resize(8, 1);
  if (fg) fg->resize(8, 3);
  for (int i = 0; i < 8; ++i) {
    const Vec& grad = dx[static_cast<std::size_t>(i)].grad();
    if (fx) fx->row(i) = grad.head(8).transpose();
    if (fu) (*fu)(i, 0) = grad(8);
    if (fg) fg->row(i) = grad.tail(3).transpose();
  }
}

OdeProblem hypersonic_simulation_problem(double unit, const HypersonicConstants& c) {
  OdeProblem prob;
  prob.n_x = 8;
  prob.n_g = 3;
  prob.t0 = 0.0;
  prob.tf = 550.0;
  prob.x0.resize(8);
  prob.x0 << 0.0, 80000.0 / unit, 5000.0 / unit, 0.0, 20.0 * kDeg, 0.0, -10.0 * kDeg, 0.0;
  prob.projection = alpha_delta_projection(8, 0, 0);

  prob.f = [c, unit](double t, const Vec& x, const Vec& g) {
    return hypersonic_rhs(x, open_loop_input(t), g, c, unit);
  };
  prob.f_jac = [c, unit](double t, const Vec& x, const Vec& g, Mat& fx, Mat& fg) {
    hypersonic_rhs_jacobians(x, open_loop_input(t), g, c, unit, &fx, nullptr, &fg);
  };
  prob.phi = [](const Vec& xf) { return xf(0); };
  prob.phi_grad = [](const Vec& xf) {
    Vec g = Vec::Zero(xf.size());
    g(0) = 1.0;
    return g;
  };
  return prob;
}

OcpProblem hypersonic_max_downrange_problem(double unit, const HypersonicConstants& c) {
  OcpProblem prob;
  prob.n_x = 8;
  prob.n_u = 1;
  prob.n_p = 0;
  prob.n_g = 3;
  prob.n_c = 2;
  prob.t0 = 0.0;
  prob.tf = 550.0;  // nominal duration; the horizon is free
  prob.free_final_time = true;
  prob.x0.resize(8);
  prob.x0 << 0.0, 80000.0 / unit, 5000.0 / unit, 0.0, 20.0 * kDeg, 0.0, -10.0 * kDeg, 0.0;
  prob.projection = alpha_delta_projection(8, 1, 0);

  prob.f = [c, unit](double, const Vec& x, const Vec& u, const Vec&, const Vec& g) {
    return hypersonic_rhs(x, u(0), g, c, unit);
  };
  prob.f_jac = [c, unit](double, const Vec& x, const Vec& u, const Vec&, const Vec& g, Mat& fx,
                         Mat& fu, Mat& fp, Mat& fg) {
    hypersonic_rhs_jacobians(x, u(0), g, c, unit, &fx, &fu, &fg);
    fp.resize(8, 0);
  };
  prob.f_hess_vec = [c, unit](double, const Vec& x, const Vec& u, const Vec&, const Vec& g,
                              const Vec& lam) {
    check_speed(x(2));
    using ad::D2;
    const int n = 12;
    std::array<D2, 8> xs;
    for (int i = 0; i < 8; ++i) xs[static_cast<std::size_t>(i)] = D2::seed(x(i), n, i);
    const D2 uu = D2::seed(u(0), n, 8);
    D2 gg[3];
    for (int i = 0; i < 3; ++i) gg[i] = D2::seed(g(i), n, 9 + i);
    const auto dx = hypersonic_rhs_t<D2>(xs, uu, gg, c, unit);
    Mat h = Mat::Zero(n, n);
    for (int i = 0; i < 8; ++i) {
      if (lam(i) != 0.0) h += lam(i) * dx[static_cast<std::size_t>(i)].hess();
    }
    return h;
  };

  // A small flap-acceleration penalty regularizes the otherwise singular
  // control: a smooth flap program costs ~1 km against a ~2500 km downrange,
  // while mesh-scale flap chatter along the zero-moment line costs ~1e5.
  const double r_reg = 1e6;
  prob.l = [r_reg](double, const Vec&, const Vec& u, const Vec&, const Vec&) {
    return r_reg * u(0) * u(0);
  };
  prob.l_grad = [r_reg](double, const Vec& x, const Vec& u, const Vec&, const Vec&, Vec& lx,
                        Vec& lu, Vec& lp, Vec& lg) {
    lx = Vec::Zero(x.size());
    lu = Vec::Constant(1, 2.0 * r_reg * u(0));
    lp = Vec::Zero(0);
    lg = Vec::Zero(3);
  };
  prob.l_hess = [r_reg](double, const Vec&, const Vec&, const Vec&, const Vec&) {
    Mat h = Mat::Zero(12, 12);
    h(8, 8) = 2.0 * r_reg;
    return h;
  };

  prob.varphi = [](const Vec& xf, const Vec&) { return -xf(0); };
  prob.varphi_grad = [](const Vec& xf, const Vec&, Vec& vx, Vec& vp) {
    vx = Vec::Zero(xf.size());
    vx(0) = -1.0;
    vp.resize(0);
  };
  prob.varphi_hess = [](const Vec& xf, const Vec&) {
    return Mat::Zero(xf.size(), xf.size());
  };

  prob.c = [c, unit](double, const Vec& x, const Vec&, const Vec&) {
    std::array<double, 8> xs;
    for (int i = 0; i < 8; ++i) xs[static_cast<std::size_t>(i)] = x(i);
    const auto cc = path_constraints_t<double>(xs, c, unit);
    Vec out(2);
    out << cc[0], cc[1];
    return out;
  };
  prob.c_jac = [c, unit](double, const Vec& x, const Vec&, const Vec&, Mat& cx, Mat& cu, Mat& cp) {
    using ad::D1;
    std::array<D1, 8> xs;
    for (int i = 0; i < 8; ++i) xs[static_cast<std::size_t>(i)] = D1::seed(x(i), 8, i);
    const auto cc = path_constraints_t<D1>(xs, c, unit);
    cx.resize(2, 8);
    cx.row(0) = cc[0].grad().transpose();
    cx.row(1) = cc[1].grad().transpose();
    cu = Mat::Zero(2, 1);
    cp.resize(2, 0);
  };
  prob.c_hess_vec = [c, unit](double, const Vec& x, const Vec&, const Vec&, const Vec& w) {
    using ad::D2;
    const int n = 9;  // (x, u); constraints do not see u but the block is shared
    std::array<D2, 8> xs;
    for (int i = 0; i < 8; ++i) xs[static_cast<std::size_t>(i)] = D2::seed(x(i), n, i);
    const auto cc = path_constraints_t<D2>(xs, c, unit);
    Mat h = Mat::Zero(n, n);
    h += w(0) * cc[0].hess();
    h += w(1) * cc[1].hess();
    return h;
  };

  prob.x_lb = Vec::Constant(8, -kInf);
  prob.x_ub = Vec::Constant(8, kInf);
  prob.x_lb(1) = 20000.0 / unit;              // altitude floor
  prob.x_lb(2) = 50.0 / unit;                 // keep speed away from the v=0 singularity
  prob.x_lb(3) = -30.0 * kDeg;
  prob.x_ub(3) = 30.0 * kDeg;
  prob.x_lb(4) = -5.0 * kDeg;
  prob.x_ub(4) = 20.0 * kDeg;
  prob.x_lb(6) = -10.0 * kDeg;
  prob.x_ub(6) = 15.0 * kDeg;
  prob.u_lb = Vec::Constant(1, -0.05);  // generous flap-acceleration box
  prob.u_ub = Vec::Constant(1, 0.05);
  prob.p_lb.resize(0);
  prob.p_ub.resize(0);
  prob.xf_lb = Vec::Constant(8, -kInf);
  prob.xf_ub = Vec::Constant(8, kInf);
  prob.xf_lb(1) = 20000.0 / unit;
  prob.xf_ub(1) = 21000.0 / unit;
  return prob;
}

OcpQoi downrange_qoi(int n_x, int n_u, int n_p, int n_g) {
  (void)n_u;
  (void)n_g;
  OcpQoi qoi;
  qoi.phi = [](const Vec& xf, const Vec&) { return xf(0); };
  qoi.phi_grad = [n_x, n_p](const Vec&, const Vec&, Vec& px, Vec& pp) {
    px = Vec::Zero(n_x);
    px(0) = 1.0;
    pp = Vec::Zero(n_p);
  };
  return qoi;
}

}  // namespace sdr
