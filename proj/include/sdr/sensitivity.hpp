#pragma once

#include "sdr/collocation.hpp"
#include "sdr/ocp.hpp"

namespace sdr {

/// Costate of the simulation QoI and the acquisition integrand weights
/// w(t) = B^T lambda + grad_g ell along the solved trajectory.
struct OdeAdjoint {
  Mat lambda;   // n_coll x n_x, at the collocation nodes
  Mat weights;  // n_coll x n_g
  Vec lambda_tf;
  Trajectory lambda_reversed;  // adjoint solution in reversed time
};

OdeAdjoint solve_ode_adjoint(const OdeProblem& prob, const ComponentModel& g_model,
                             const Trajectory& traj);

/// Adjoint route of the QoI sensitivity: integral of w(t)^T delta_g(t, x(t)).
double apply_qoi_sensitivity_ode(const OdeAdjoint& adj, const Trajectory& traj,
                                 const std::function<Vec(double, const Vec&)>& delta_g);

/// Forward route: the linearized state response to a model perturbation.
Trajectory solve_forward_sensitivity(const OdeProblem& prob, const ComponentModel& g_model,
                                     const Trajectory& traj,
                                     const std::function<Vec(double, const Vec&)>& delta_g);

/// QoI derivative assembled from a forward sensitivity solve (chain rule
/// through phi and ell); the independent cross-check of the adjoint route.
double apply_qoi_sensitivity_forward(const OdeProblem& prob, const ComponentModel& g_model,
                                     const Trajectory& traj, const Trajectory& dx_traj,
                                     const std::function<Vec(double, const Vec&)>& delta_g);

/// Per-node data of the linear-quadratic sensitivity system: composite
/// dynamics blocks and total Hamiltonian second derivatives, assembled with
/// first-order chain terms of the component model only.
struct NodeBlocks {
  Mat A, B, C;  // d(f)/dx, /du, /dp including the model chain terms
  Mat fg;       // partial df/dg
  Vec d;        // fg^T lambda
  Mat hxx, hxu, hxp, huu, hup, hpp;
  Mat hxg, hug, hpg;
};

struct SecondOrderBlocks {
  std::vector<NodeBlocks> nodes;  // one per collocation node
  Mat varphi_hess;                // terminal-cost Hessian over (xf, p)
};

SecondOrderBlocks assemble_second_order(const OcpProblem& prob, const ComponentModel& g_model,
                                        const OcpSolution& sol);

/// Adjoint tuple of the OCP QoI (solution of the LQOCP optimality system) and
/// the assembled acquisition weights.
struct OcpAdjoint {
  Mat dx;    // (n_coll + 1) x n_x, at the state nodes
  Mat du;    // n_coll x n_u
  Vec dp;
  Mat dlam;  // n_coll x n_x
  Mat w0;    // n_coll x n_g: H_gx dx + H_gu du + H_gp dp + fg^T dlam + grad_g ell
  Mat d_abs; // n_coll x n_g: |fg^T lambda|
  double kkt_residual = 0.0;
};

OcpAdjoint solve_ocp_adjoint(const OcpProblem& prob, const ComponentModel& g_model,
                             const OcpSolution& sol, const OcpQoi& qoi);

/// QoI sensitivity in the direction of a perturbation model, from the
/// adjoint tuple (value and derivative pairing terms).
double apply_qoi_sensitivity_ocp(const OcpProblem& prob, const OcpAdjoint& adj,
                                 const SecondOrderBlocks& blocks, const OcpSolution& sol,
                                 const ComponentModel& bump);

}  // namespace sdr
