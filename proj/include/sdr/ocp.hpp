#pragma once

#include "sdr/collocation.hpp"
#include "sdr/nlp.hpp"

namespace sdr {

struct TrackingWeights {
  Vec q_diag;         // state deviation weights (diagonal PSD)
  double r_u = 1e8;   // control deviation weight
  double r_p = 1e-3;  // duration deviation weight
};

TrackingWeights benchmark_tracking_weights();

/// Converts a free-final-time problem to a fixed-horizon problem on (0, 1),
/// appending the duration T to the parameters with bounds [T_lb, T_ub].
/// Explicit time dependence of f/l/c is evaluated at t = T*tau but not
/// differentiated through T (the benchmark dynamics are autonomous).
OcpProblem normalize_time(const OcpProblem& prob, double T_lb = 100.0, double T_ub = 2000.0);

/// Decision vector layout of the direct transcription: all state nodes, then
/// controls at collocation nodes, then parameters.
struct TranscriptionLayout {
  int n_x = 0, n_u = 0, n_p = 0, K = 0, n = 0;
  int n_state_nodes() const { return K * n + 1; }
  int n_coll() const { return K * n; }
  int var_state(int node, int j) const { return node * n_x + j; }
  int var_control(int cnode, int j) const { return n_state_nodes() * n_x + cnode * n_u + j; }
  int var_param(int j) const { return n_state_nodes() * n_x + n_coll() * n_u + j; }
  int n_var() const { return n_state_nodes() * n_x + n_coll() * n_u + n_p; }
  int m_eq() const { return n_x * (1 + n_coll()); }
};

/// Transcribed NLP plus the layout that round-trips with Trajectory.
/// The problem, model, and mesh must outlive the returned object.
struct Nlp {
  NlpProblem problem;
  TranscriptionLayout layout;
  Mesh mesh;

  Vec pack(const Trajectory& traj) const;
  Trajectory unpack(const Vec& z) const;
};

Nlp transcribe(const OcpProblem& prob, const ComponentModel& g_model, const Mesh& mesh);

struct OcpSolution {
  Trajectory trajectory;
  double objective = 0.0;
  Vec z;                // raw decision vector
  Vec y, w, s, zl, zu;  // multipliers and slacks, for warm starts
  Mat costate;          // n_coll x n_x, from the collocation multipliers
  double kkt_error = 0.0;
  int iterations = 0;
};

struct OcpSolveOptions {
  IpOptions ip;
  double unit = 1000.0;  // meters per length unit of the hypersonic problems
};

OcpSolution solve_ocp(const OcpProblem& prob, const ComponentModel& g_model, const Mesh& mesh,
                      const Vec& z0, const IpOptions& opts, const IpWarmStart* warm = nullptr);

/// Maximum-downrange reference solve on the normalized horizon. The default
/// initial guess is a truth-free fixed-trim simulation with the current model
/// (alpha = 10 deg, delta = -5 deg, T = 550 s); pass `warm` to reuse a
/// previous round's solution.
OcpSolution solve_max_downrange(const ComponentModel& g_model, const Mesh& mesh,
                                const OcpSolveOptions& opts = {},
                                const OcpSolution* warm = nullptr);

/// Reference-tracking solve against a fixed reference trajectory, subject
/// only to the dynamics and initial conditions.
OcpSolution solve_tracking(const ComponentModel& g_model, const OcpSolution& reference,
                           const TrackingWeights& weights, const OcpSolveOptions& opts = {},
                           const OcpSolution* warm = nullptr);

/// Builds the tracking problem (normalized horizon) for a given reference.
OcpProblem make_tracking_problem(const OcpSolution& reference, const TrackingWeights& weights,
                                 double unit = 1000.0);

/// Costate at the collocation nodes from the collocation equality multipliers
/// (Radau mapping lambda = -y / w_i with the reference-interval weights).
Mat extract_costate(const Vec& eq_multipliers, const Mesh& mesh, int n_x);

/// The truth-free fixed-trim descent guess used by cold max-downrange solves
/// (moment-trimmed attitude, gamma leveled below ~55 km, physical time).
Trajectory max_downrange_initial_guess(const ComponentModel& g_model, const Mesh& mesh,
                                       double unit = 1000.0);

}  // namespace sdr
