#pragma once

#include <string>
#include <vector>

#include "sdr/dynamics.hpp"

namespace sdr {

/// Flipped Legendre-Gauss-Radau rule of degree n on the reference interval:
/// nodes in (-1, 1] (right endpoint included), positive weights summing to 2,
/// and the differentiation matrix D (n x (n+1)) acting on values at the
/// support points {-1, nodes...}.
struct RadauRule {
  int degree = 0;
  Vec nodes;        // n, strictly increasing, last = 1
  Vec weights;      // n
  Mat diff;         // n x (n+1)
  Vec support;      // n+1: {-1, nodes...}
  Vec barycentric;  // n+1 barycentric weights of the support points
};

RadauRule flipped_lgr(int degree);

/// Uniform mesh of K intervals, each carrying the same degree-n rule.
struct Mesh {
  double t0 = 0.0;
  double tf = 1.0;
  int K = 1;
  int n = 4;
  RadauRule rule;

  Mesh() = default;
  Mesh(double t0_, double tf_, int K_, int n_)
      : t0(t0_), tf(tf_), K(K_), n(n_), rule(flipped_lgr(n_)) {}

  double dt() const { return (tf - t0) / K; }
  double start_time(int k) const { return t0 + k * dt(); }
  /// Time of collocation node i (1-based) in interval k.
  double node_time(int k, int i) const {
    return start_time(k) + 0.5 * (rule.nodes(i - 1) + 1.0) * dt();
  }
  int n_state_nodes() const { return K * n + 1; }
  int n_coll_nodes() const { return K * n; }
  /// Flat state index of node i (0..n) of interval k; i=0 is the interval
  /// start, shared with the previous interval's endpoint.
  int state_index(int k, int i) const { return k * n + i; }
  int coll_index(int k, int i) const { return k * n + i - 1; }
  double coll_time(int flat) const { return node_time(flat / n, flat % n + 1); }
  /// Physical quadrature weight of each collocation node.
  Vec coll_quad_weights() const;
};

/// States at the mesh state nodes (interval starts + collocation nodes),
/// optional controls at the collocation nodes, and optional parameters.
/// Evaluation between nodes is barycentric Lagrange within each interval.
struct Trajectory {
  Mesh mesh;
  Mat states;    // (K n + 1) x n_x
  Mat controls;  // (K n) x n_u, may have zero columns
  Vec params;
  double time_scale = 1.0;  // physical seconds per mesh time unit

  int n_x() const { return static_cast<int>(states.cols()); }
  int n_u() const { return static_cast<int>(controls.cols()); }
  Vec state_at(double t) const;
  Vec control_at(double t) const;
  Vec state_at_coll(int flat) const { return states.row(flat + 1); }
};

/// Sequential per-interval Newton solve of the collocation system for the
/// initial value problem, with the component model supplying g. Pass a null
/// model only when the problem has n_g = 0.
Trajectory solve_ivp(const OdeProblem& prob, const ComponentModel* g_model, const Mesh& mesh);

/// Linear time-varying IVP x' = A(t) x + b(t); one linear solve per interval.
Trajectory solve_linear_ivp(const Mesh& mesh, int n_x,
                            const std::function<void(double, Mat&, Vec&)>& coeffs, const Vec& x0);

/// Integral over (t0, tf) of values given at the collocation nodes.
double quadrature(const Mesh& mesh, const Vec& coll_values);

/// QoI phi(x(tf)) + integral ell along a solved trajectory.
double evaluate_qoi(const OdeProblem& prob, const ComponentModel* g_model, const Trajectory& traj);

/// CSV export: one row per state node, columns t, <state names>[, u].
std::string trajectory_to_csv(const Trajectory& traj, const std::vector<std::string>& state_names,
                              bool include_control = false);

/// Constant component model (zero Jacobians); handy for tests and the
/// degenerate surrogate edge cases.
class ConstantModel : public ComponentModel {
 public:
  ConstantModel(int input_dim, Vec values) : d_(input_dim), values_(std::move(values)) {}
  int input_dim() const override { return d_; }
  int n_outputs() const override { return static_cast<int>(values_.size()); }
  Vec values(const Vec&) const override { return values_; }
  Mat jacobian(const Vec&) const override { return Mat::Zero(values_.size(), d_); }
  Mat hessian(const Vec&, int) const override { return Mat::Zero(d_, d_); }

 private:
  int d_;
  Vec values_;
};

}  // namespace sdr
