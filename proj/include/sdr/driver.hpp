#pragma once

#include <optional>
#include <string>

#include "sdr/acquisition.hpp"

namespace sdr {

enum class Mode { Simulation, Ocp };
enum class Strategy { SD, MEB, LH };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

struct ExperimentConfig {
  Mode mode = Mode::Simulation;
  Strategy strategy = Strategy::SD;
  int rounds = 10;  // 10 for simulation, 5 for the OCP study
  std::uint64_t seed = 1;
  int initial_samples = 4;
  Mat ranges;  // d x 2; defaults to the benchmark (alpha, delta) box
  int mesh_k = 100;
  int mesh_n = 4;
  int ocp_mesh_k = 40;
  WendlandFamily kernel_family = WendlandFamily::C2;  // C4 for the OCP study
  double lengthscale = 3.0;
  TrackingWeights weights = benchmark_tracking_weights();
  int n_lh_candidates = 10;
  int n_traj_candidates = 10;
  double t_skip = 10.0;  // seconds of initial transient excluded from candidates
  double unit = 1000.0;
  std::string out_dir;

  static ExperimentConfig simulation_defaults();
  static ExperimentConfig ocp_defaults();
};

Mat benchmark_ranges();

/// One row per refinement level. Level r holds the model error after r
/// refinements; the acquisition fields hold the point and bound that produced
/// this level's model (empty at level 0).
struct RoundRecord {
  int round = 0;
  bool has_acquisition = false;
  double alpha_plus = 0.0;
  double delta_plus = 0.0;
  double dq_ub = 0.0;
  double q_c = 0.0;
  double q_star = 0.0;
  double rel_err = 0.0;
  int gstar_calls = 0;
  double wall_ms = 0.0;
};

struct RefinementReport {
  ExperimentConfig config;
  std::vector<RoundRecord> rounds;
  std::optional<SurrogateModel> final_model;
  std::vector<std::string> acquisition_tables;  // CSV, one per acquisition round
  bool aborted = false;
  std::string abort_reason;

  std::string csv() const;
  std::string json() const;
};

/// Counting wrapper around the expensive truth model; the refinement
/// protocols draw every surrogate-building sample through it.
class CountingOracle {
 public:
  explicit CountingOracle(const ComponentModel& truth) : truth_(&truth) {}
  Vec sample(const Vec& y) { ++count_; return truth_->values(y); }
  int count() const { return count_; }
  void reset() { count_ = 0; }

 private:
  const ComponentModel* truth_;
  int count_ = 0;
};

RefinementReport run_simulation_experiment(const ExperimentConfig& config);
RefinementReport run_ocp_experiment(const ExperimentConfig& config);

/// Spearman rank correlation with average ranks for ties; NaN when either
/// sequence is degenerate (constant).
double spearman_rank_correlation(const Vec& a, const Vec& b);

struct CompareResult {
  std::vector<Strategy> strategies;
  std::vector<std::uint64_t> seeds;
  // errors[strategy][seed] = per-round relative errors (rounds+1 entries)
  std::vector<std::vector<Vec>> errors;
  std::vector<Vec> median_by_round;  // per strategy
  double sd_spearman_median = 0.0;   // NaN when undefined
  std::vector<RefinementReport> reports;

  std::string csv() const;
  std::string json() const;
};

CompareResult compare_strategies(const ExperimentConfig& base, const std::vector<Strategy>& strategies,
                                 const std::vector<std::uint64_t>& seeds);

}  // namespace sdr
