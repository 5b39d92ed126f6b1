#pragma once

#include <cstdint>
#include <random>

#include "sdr/sensitivity.hpp"

namespace sdr {

enum class Provenance { LatinHypercube, TrajectoryState };

struct CandidateSet {
  Mat points;  // one candidate per row, surrogate-input space
  std::vector<Provenance> provenance;
  std::uint64_t seed = 0;
  int jittered = 0;  // trajectory duplicates nudged apart
};

/// Latin hypercube samples in the box `ranges` (d x 2): one point per stratum
/// per dimension, uniform jitter within strata, independent pairing
/// permutations. Bit-reproducible for a given seed.
Mat latin_hypercube(int n, const Mat& ranges, std::uint64_t seed);
Mat latin_hypercube(int n, const Mat& ranges, std::mt19937_64& rng);

/// Surrogate-input points at n times equispaced in (t0 + t_skip, tf),
/// interpolated on the trajectory and projected. Exact duplicates are nudged
/// apart deterministically; `n_jittered` reports how many.
Mat trajectory_candidates(const Trajectory& traj, int n, const DomainProjection& proj,
                          double t_skip = 10.0, int* n_jittered = nullptr);

/// The benchmark's hybrid scheme: n_lh Latin hypercube points plus n_traj
/// trajectory states.
CandidateSet hybrid_candidates(const Trajectory& traj, const DomainProjection& proj,
                               const Mat& ranges, int n_lh, int n_traj, std::uint64_t seed,
                               double t_skip = 10.0);

enum class SelectDirection { Minimize, Maximize };

struct AcquisitionResult {
  Vec scores;
  int chosen = -1;
  Vec y_plus;
  double value = 0.0;
};

/// Argmin/argmax with lowest-index tie-break; all scores retained.
AcquisitionResult select(const Mat& candidates, const std::function<double(const Vec&)>& scorer,
                         SelectDirection direction);

/// Along-trajectory data cached so that scoring one candidate costs a single
/// rank-one power-function update per Gram factorization: projected points,
/// quadrature weights, adjoint integrand weights, and the base kernel vectors.
class AcquisitionContext {
 public:
  static AcquisitionContext for_ode(const SurrogateModel& model, const OdeAdjoint& adjoint,
                                    const Trajectory& traj);
  static AcquisitionContext for_ocp(const SurrogateModel& model, const OcpAdjoint& adjoint,
                                    const OcpSolution& sol);

  /// Post-refinement QoI error bound were the model refined at y_plus.
  double sd_score(const Vec& y_plus) const;

  /// The same bound without refinement (the trial-free value).
  double no_refinement_bound() const;

 private:
  const SurrogateModel* model_ = nullptr;
  Mat points_;     // n_nodes x d
  Vec qw_;         // quadrature weights
  Mat abs_w_;      // n_nodes x n_g
  bool with_derivatives_ = false;
  Mat abs_d_;      // n_nodes x n_g
  Mat abs_delta_;  // n_nodes x d, |d(x/u/p)| routed through the projection

  struct AlphaCache {
    MultiIndex alpha;
    Mat v;        // n_nodes x N
    Vec base_sq;  // n_nodes
  };
  struct FactCache {
    std::shared_ptr<const GramFactorization> fact;
    KernelConfig cfg;
    std::vector<int> components;
    std::vector<AlphaCache> alphas;  // [0] = value bound, then one per input axis
  };
  std::vector<FactCache> facts_;

  void build_common(const SurrogateModel& model, const Mat& points, const Vec& qw);
};

/// Convenience single-candidate forms of the two bounds.
double sd_score_ode(const SurrogateModel& model, const OdeAdjoint& adjoint, const Trajectory& traj,
                    const Vec& y_plus);
double sd_score_ocp(const SurrogateModel& model, const OcpAdjoint& adjoint, const OcpSolution& sol,
                    const Vec& y_plus);

/// Max-error-bound score: l2 norm of the per-component power functions at y
/// for the current sites.
double meb_score(const SurrogateModel& model, const Vec& y);

/// Analytic value of the box LP  max |sum_c qw_c w_c . delta_c|  subject to
/// |delta| <= eps elementwise: sum_c qw_c |w_c|^T eps_c.
double acquisition_lp_value(const Vec& qw, const Mat& w, const Mat& eps);

/// Approximate state-error bound: vertex ascent on the convex maximization of
/// the Q-weighted state deviation over the post-refinement error box. Always
/// a lower bound; flagged approximate.
struct StateErrorBound {
  double value = 0.0;
  int iterations = 0;
  bool approximate = true;
};

StateErrorBound state_error_heuristic(const OdeProblem& prob, const SurrogateModel& model,
                                      const Trajectory& traj, const std::optional<Vec>& trial,
                                      const Mat& q_weight, int max_sweeps = 20);

}  // namespace sdr
