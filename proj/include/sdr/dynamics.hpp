#pragma once

#include <array>
#include <cmath>
#include <functional>

#include "sdr/autodiff.hpp"
#include "sdr/surrogate.hpp"

namespace sdr {

struct HypersonicConstants {
  double mass = 1000.0;      // kg
  double I_z = 247.0;        // kg m^2
  double A_w = 4.4;          // m^2
  double L_w = 3.6;          // m
  double mu = 3.986e14;      // m^3/s^2
  double R_E = 6.371e6;      // m
  double rho0 = 1.225;       // kg/m^3
  double decay = 0.00014;    // 1/m
  double heat_C = 37.356;    // stagnation heat-rate constant
};

/// Truth aerodynamic coefficients (C_L, C_D, C_M), polynomial in (alpha, delta).
Vec true_coefficients(double alpha, double delta);

class TruthCoefficients : public ComponentModel {
 public:
  int input_dim() const override { return 2; }
  int n_outputs() const override { return 3; }
  Vec values(const Vec& y) const override { return true_coefficients(y(0), y(1)); }
  Mat jacobian(const Vec& y) const override;
  Mat hessian(const Vec& y, int component) const override;
};

struct Atmosphere {
  double rho;        // kg/m^3
  double gravity;    // m/s^2
  double qbar;       // Pa
  double qdot_stag;  // W/m^2 (heat constant quoted per W/cm^2 at km/s)
};

/// Density, gravity, dynamic pressure and stagnation heat rate at altitude
/// x2 [m] and speed v [m/s].
Atmosphere atmosphere_gravity(double x2_m, double v_ms,
                              const HypersonicConstants& c = HypersonicConstants{});

/// Open-loop flap acceleration input ((t-300)_+)^2 * 1e-9 [rad/s^2].
double open_loop_input(double t);

/// Longitudinal hypersonic dynamics, templated so forward-mode scalars can
/// differentiate through them. States, in order:
/// (x1, x2, v, gamma, alpha, q, delta, deltadot), with x1, x2 and v expressed
/// in `unit` meters (unit=1000 computes in kg/km/s). The aerodynamic formulas
/// are evaluated in base SI units at the boundary.
template <typename S>
std::array<S, 8> hypersonic_rhs_t(const std::array<S, 8>& x, const S& flap_accel,
                                  const S g_coeffs[3], const HypersonicConstants& c,
                                  double unit) {
  const S h_m = x[1] * unit;
  const S v_m = x[2] * unit;
  const S rho = c.rho0 * exp(-c.decay * h_m);
  const S grav = c.mu / ((c.R_E + h_m) * (c.R_E + h_m));
  const S qbar = 0.5 * rho * (v_m * v_m);
  const S lift = qbar * g_coeffs[0] * c.A_w;
  const S drag = qbar * g_coeffs[1] * c.A_w;
  const S moment = qbar * g_coeffs[2] * (c.A_w * c.L_w);
  const S sing = sin(x[3]);
  const S cosg = cos(x[3]);

  std::array<S, 8> dx;
  dx[0] = x[2] * cosg;
  dx[1] = x[2] * sing;
  dx[2] = (drag / (-c.mass) - grav * sing) / unit;
  dx[3] = lift / (c.mass * v_m) - grav * cosg / v_m + v_m * cosg / (c.R_E + h_m);
  dx[4] = x[5] - dx[3];
  dx[5] = moment / c.I_z;
  dx[6] = x[7];
  dx[7] = flap_accel;
  return dx;
}

/// Plain-double right-hand side. Throws singular-state for v <= 0.
Vec hypersonic_rhs(const Vec& x, double flap_accel, const Vec& g_coeffs,
                   const HypersonicConstants& c, double unit);

/// Exact partials of the right-hand side with respect to state, input and
/// coefficients, evaluated with forward-mode duals.
void hypersonic_rhs_jacobians(const Vec& x, double flap_accel, const Vec& g_coeffs,
                              const HypersonicConstants& c, double unit, Mat* fx, Mat* fu,
                              Mat* fg);

/// Simulation problem: dynamics with a component-function argument, a quantity
/// of interest and the projection feeding the coefficient model.
struct OdeProblem {
  int n_x = 0;
  int n_g = 0;
  double t0 = 0.0;
  double tf = 0.0;
  Vec x0;
  DomainProjection projection;

  std::function<Vec(double, const Vec&, const Vec&)> f;  // f(t, x, g)
  std::function<void(double, const Vec&, const Vec&, Mat&, Mat&)> f_jac;  // fx, fg

  // QoI: phi(x(tf)) + integral of ell(t, x, g).
  std::function<double(const Vec&)> phi;
  std::function<Vec(const Vec&)> phi_grad;
  std::function<double(double, const Vec&, const Vec&)> ell;                 // null => 0
  std::function<void(double, const Vec&, const Vec&, Vec&, Vec&)> ell_grad;  // lx, lg
};

/// Optimal control problem in Bolza form with component-function argument.
/// All Hessian callbacks return one symmetric matrix over the stacked
/// variables; `f_hess_vec` and `c_hess_vec` contract with a weight vector.
struct OcpProblem {
  int n_x = 0;
  int n_u = 0;
  int n_p = 0;
  int n_g = 0;
  int n_c = 0;
  double t0 = 0.0;
  double tf = 0.0;
  Vec x0;
  bool free_final_time = false;
  DomainProjection projection;

  std::function<Vec(double, const Vec&, const Vec&, const Vec&, const Vec&)> f;
  std::function<void(double, const Vec&, const Vec&, const Vec&, const Vec&, Mat&, Mat&, Mat&,
                     Mat&)>
      f_jac;  // fx, fu, fp, fg
  std::function<Mat(double, const Vec&, const Vec&, const Vec&, const Vec&, const Vec&)>
      f_hess_vec;  // Hess of lam^T f over (x,u,p,g)

  std::function<double(double, const Vec&, const Vec&, const Vec&, const Vec&)> l;  // null => 0
  std::function<void(double, const Vec&, const Vec&, const Vec&, const Vec&, Vec&, Vec&, Vec&,
                     Vec&)>
      l_grad;
  std::function<Mat(double, const Vec&, const Vec&, const Vec&, const Vec&)> l_hess;

  std::function<double(const Vec&, const Vec&)> varphi;  // null => 0
  std::function<void(const Vec&, const Vec&, Vec&, Vec&)> varphi_grad;
  std::function<Mat(const Vec&, const Vec&)> varphi_hess;  // over (xf, p)

  std::function<Vec(double, const Vec&, const Vec&, const Vec&)> c;  // c <= 0, null => none
  std::function<void(double, const Vec&, const Vec&, const Vec&, Mat&, Mat&, Mat&)> c_jac;
  std::function<Mat(double, const Vec&, const Vec&, const Vec&, const Vec&)> c_hess_vec;

  Vec xf_lb, xf_ub;          // terminal state bounds
  Vec x_lb, x_ub;            // nodal state boxes
  Vec u_lb, u_ub;
  Vec p_lb, p_ub;
};

/// QoI attached to an OCP solution: phi(x(tf), p) + integral ell(t,x,u,p,g).
struct OcpQoi {
  std::function<double(const Vec&, const Vec&)> phi;
  std::function<void(const Vec&, const Vec&, Vec&, Vec&)> phi_grad;
  std::function<double(double, const Vec&, const Vec&, const Vec&, const Vec&)> ell;  // null => 0
  std::function<void(double, const Vec&, const Vec&, const Vec&, const Vec&, Vec&, Vec&, Vec&,
                     Vec&)>
      ell_grad;
};

/// The T = 550 s open-loop simulation with downrange QoI. `unit` is meters per
/// internal length unit (1000 computes in kg/km/s, 1 in kg/m/s).
OdeProblem hypersonic_simulation_problem(double unit = 1000.0,
                                         const HypersonicConstants& c = HypersonicConstants{});

/// Free-final-time maximum-downrange problem (objective -x1(T)), control
/// u = flap acceleration, path constraints on dynamic pressure and heat rate,
/// boxes on altitude and angles. Meant to be passed through normalize_time.
OcpProblem hypersonic_max_downrange_problem(double unit = 1000.0,
                                            const HypersonicConstants& c = HypersonicConstants{});

/// Downrange QoI for the OCP setting: phi = x1 at the final time.
OcpQoi downrange_qoi(int n_x, int n_u, int n_p, int n_g);

}  // namespace sdr
