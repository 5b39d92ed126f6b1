#include "sdr/driver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace sdr {

namespace {
constexpr double kDeg = M_PI / 180.0;

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

std::string csv_header() {
  return "round,alpha_plus,delta_plus,dq_ub,q_c,q_star,rel_err,gstar_calls,wall_ms";
}

void append_row(std::ostringstream& os, const RoundRecord& r) {
  os.precision(15);
  os << r.round << ",";
  if (r.has_acquisition) {
    os << r.alpha_plus << "," << r.delta_plus << "," << r.dq_ub << ",";
  } else {
    os << ",,,";
  }
  os << r.q_c << "," << r.q_star << "," << r.rel_err << "," << r.gstar_calls << "," << r.wall_ms
     << "\n";
}

std::string acquisition_csv(const CandidateSet& cands, const Vec& scores) {
  std::ostringstream os;
  os.precision(15);
  os << "index,alpha,delta,provenance,score\n";
  for (int i = 0; i < cands.points.rows(); ++i) {
    os << i << "," << cands.points(i, 0) << "," << cands.points(i, 1) << ","
       << (cands.provenance[static_cast<std::size_t>(i)] == Provenance::LatinHypercube
               ? "latin_hypercube"
               : "trajectory_state")
       << "," << scores(i) << "\n";
  }
  return os.str();
}

}  // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::SD: return "SD";
    case Strategy::MEB: return "MEB";
    case Strategy::LH: return "LH";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "SD" || s == "sd") return Strategy::SD;
  if (s == "MEB" || s == "meb") return Strategy::MEB;
  if (s == "LH" || s == "lh") return Strategy::LH;
  throw Error(ErrorCode::Config, "unknown strategy: " + s);
}

Mat benchmark_ranges() {
  Mat r(2, 2);
  r << -5.0 * kDeg, 25.0 * kDeg, -15.0 * kDeg, 10.0 * kDeg;
  return r;
}

ExperimentConfig ExperimentConfig::simulation_defaults() {
  ExperimentConfig c;
  c.mode = Mode::Simulation;
  c.rounds = 10;
  c.mesh_k = 100;
  c.mesh_n = 4;
  c.kernel_family = WendlandFamily::C2;
  c.ranges = benchmark_ranges();
  return c;
}

ExperimentConfig ExperimentConfig::ocp_defaults() {
  ExperimentConfig c;
  c.mode = Mode::Ocp;
  c.rounds = 5;
  c.mesh_k = 100;
  c.mesh_n = 4;
  c.ocp_mesh_k = 40;
  c.kernel_family = WendlandFamily::C4;
  c.ranges = benchmark_ranges();
  return c;
}

std::string RefinementReport::csv() const {
  std::ostringstream os;
  os << csv_header() << "\n";
  for (const auto& r : rounds) append_row(os, r);
  return os.str();
}

std::string RefinementReport::json() const {
  std::ostringstream os;
  os.precision(15);
  os << "{\"mode\":\"" << (config.mode == Mode::Simulation ? "simulation" : "ocp") << "\","
     << "\"strategy\":\"" << to_string(config.strategy) << "\",\"seed\":" << config.seed
     << ",\"rounds\":[";
  for (std::size_t i = 0; i < rounds.size(); ++i) {
    const auto& r = rounds[i];
    if (i) os << ",";
    os << "{\"round\":" << r.round;
    if (r.has_acquisition) {
      os << ",\"alpha_plus\":" << r.alpha_plus << ",\"delta_plus\":" << r.delta_plus
         << ",\"dq_ub\":" << r.dq_ub;
    }
    os << ",\"q_c\":" << r.q_c << ",\"q_star\":" << r.q_star << ",\"rel_err\":" << r.rel_err
       << ",\"gstar_calls\":" << r.gstar_calls << ",\"wall_ms\":" << r.wall_ms << "}";
  }
  os << "],\"aborted\":" << (aborted ? "true" : "false");
  if (aborted) os << ",\"abort_reason\":\"" << abort_reason << "\"";
  if (final_model) os << ",\"final_model\":" << surrogate_to_json(*final_model);
  os << "}";
  return os.str();
}

namespace {

SurrogateModel initial_model(const ExperimentConfig& cfg, CountingOracle& oracle,
                             std::mt19937_64& rng, const DomainProjection& proj) {
  const Mat sites = latin_hypercube(cfg.initial_samples, cfg.ranges, rng);
  Mat values(sites.rows(), 3);
  for (int i = 0; i < sites.rows(); ++i) {
    values.row(i) = oracle.sample(sites.row(i).transpose()).transpose();
  }
  KernelConfig kc{cfg.kernel_family, cfg.lengthscale, static_cast<int>(cfg.ranges.rows())};
  return freeze_gamma(fit_surrogate(sites, values, kc, proj));
}

SurrogateModel lh_rebuild(const ExperimentConfig& cfg, CountingOracle& oracle,
                          std::mt19937_64& rng, const DomainProjection& proj, int n_samples,
                          const Vec& frozen_gamma) {
  const Mat sites = latin_hypercube(n_samples, cfg.ranges, rng);
  Mat values(sites.rows(), 3);
  for (int i = 0; i < sites.rows(); ++i) {
    values.row(i) = oracle.sample(sites.row(i).transpose()).transpose();
  }
  KernelConfig kc{cfg.kernel_family, cfg.lengthscale, static_cast<int>(cfg.ranges.rows())};
  SurrogateModel m = fit_surrogate(sites, values, kc, proj);
  m.gamma = frozen_gamma;
  m.gamma_frozen = true;
  return m;
}

}  // namespace

RefinementReport run_simulation_experiment(const ExperimentConfig& cfg) {
  RefinementReport report;
  report.config = cfg;

  const TruthCoefficients truth;
  CountingOracle oracle(truth);
  const OdeProblem prob = hypersonic_simulation_problem(cfg.unit);
  const Mesh mesh(prob.t0, prob.tf, cfg.mesh_k, cfg.mesh_n);
  std::mt19937_64 rng(cfg.seed);

  // q_* comes from the truth-model run, computed once and reused.
  const Trajectory truth_traj = solve_ivp(prob, &truth, mesh);
  const double q_star = evaluate_qoi(prob, &truth, truth_traj);

  SurrogateModel model = initial_model(cfg, oracle, rng, prob.projection);

  int pending_calls = oracle.count();
  bool pending_acq = false;
  double pending_dq_ub = 0.0;
  Vec pending_y;

  try {
    for (int level = 0; level <= cfg.rounds; ++level) {
      const double t0 = now_ms();
      const Trajectory traj = solve_ivp(prob, &model, mesh);
      const double q_c = evaluate_qoi(prob, &model, traj);

      RoundRecord rec;
      rec.round = level;
      rec.q_c = q_c;
      rec.q_star = q_star;
      rec.rel_err = std::abs(q_c - q_star) / std::abs(q_star);
      rec.gstar_calls = pending_calls;
      if (pending_acq) {
        rec.has_acquisition = true;
        rec.alpha_plus = pending_y(0);
        rec.delta_plus = pending_y(1);
        rec.dq_ub = pending_dq_ub;
      }

      if (level < cfg.rounds) {
        const int before = oracle.count();
        if (cfg.strategy == Strategy::LH) {
          model = lh_rebuild(cfg, oracle, rng, prob.projection,
                             cfg.initial_samples + level + 1, model.gamma);
          pending_acq = false;
        } else {
          const CandidateSet cands =
              hybrid_candidates(traj, prob.projection, cfg.ranges, cfg.n_lh_candidates,
                                cfg.n_traj_candidates, rng(), cfg.t_skip);
          AcquisitionResult acq;
          if (cfg.strategy == Strategy::SD) {
            const OdeAdjoint adjoint = solve_ode_adjoint(prob, model, traj);
            const AcquisitionContext ctx = AcquisitionContext::for_ode(model, adjoint, traj);
            acq = select(cands.points, [&](const Vec& y) { return ctx.sd_score(y); },
                         SelectDirection::Minimize);
          } else {
            acq = select(cands.points, [&](const Vec& y) { return meb_score(model, y); },
                         SelectDirection::Maximize);
          }
          report.acquisition_tables.push_back(acquisition_csv(cands, acq.scores));
          const Vec g_vals = oracle.sample(acq.y_plus);
          model = refine(model, acq.y_plus, g_vals);
          pending_acq = true;
          pending_dq_ub = acq.value;
          pending_y = acq.y_plus;
        }
        pending_calls = oracle.count() - before;
      }
      rec.wall_ms = now_ms() - t0;
      report.rounds.push_back(rec);
    }
  } catch (const Error& err) {
    report.aborted = true;
    report.abort_reason = std::string(to_string(err.code())) + ": " + err.what();
  }
  report.final_model = model;
  return report;
}

RefinementReport run_ocp_experiment(const ExperimentConfig& cfg) {
  RefinementReport report;
  report.config = cfg;

  const TruthCoefficients truth;
  CountingOracle oracle(truth);
  const double unit = cfg.unit;
  OcpSolveOptions oopts;
  oopts.unit = unit;
  const Mesh mesh(0.0, 1.0, cfg.ocp_mesh_k, cfg.mesh_n);
  std::mt19937_64 rng(cfg.seed);

  DomainProjection proj = alpha_delta_projection(8, 1, 1);
  SurrogateModel model = initial_model(cfg, oracle, rng, proj);

  int pending_calls = oracle.count();
  bool pending_acq = false;
  double pending_dq_ub = 0.0;
  Vec pending_y;

  OcpSolution reference;
  bool have_reference = false;

  try {
    for (int level = 0; level <= cfg.rounds; ++level) {
      const double t0 = now_ms();
      reference = solve_max_downrange(model, mesh, oopts, have_reference ? &reference : nullptr);
      have_reference = true;
      const double q_c = reference.trajectory.states.bottomRows(1)(0, 0);

      const OcpSolution tracked = solve_tracking(model, reference, cfg.weights, oopts);
      const OcpSolution star = solve_tracking(truth, reference, cfg.weights, oopts);
      const double q_star = star.trajectory.states.bottomRows(1)(0, 0);

      RoundRecord rec;
      rec.round = level;
      rec.q_c = q_c;
      rec.q_star = q_star;
      rec.rel_err = std::abs(q_c - q_star) / std::abs(q_star);
      rec.gstar_calls = pending_calls;
      if (pending_acq) {
        rec.has_acquisition = true;
        rec.alpha_plus = pending_y(0);
        rec.delta_plus = pending_y(1);
        rec.dq_ub = pending_dq_ub;
      }

      if (level < cfg.rounds) {
        const int before = oracle.count();
        if (cfg.strategy == Strategy::LH) {
          model = lh_rebuild(cfg, oracle, rng, proj, cfg.initial_samples + level + 1, model.gamma);
          pending_acq = false;
        } else {
          const double tau_skip = cfg.t_skip / reference.trajectory.time_scale;
          const CandidateSet cands =
              hybrid_candidates(reference.trajectory, proj, cfg.ranges, cfg.n_lh_candidates,
                                cfg.n_traj_candidates, rng(), tau_skip);
          AcquisitionResult acq;
          if (cfg.strategy == Strategy::SD) {
            const OcpProblem tracking_prob = make_tracking_problem(reference, cfg.weights, unit);
            const OcpQoi qoi = downrange_qoi(8, 1, 1, 3);
            const OcpAdjoint adjoint = solve_ocp_adjoint(tracking_prob, model, tracked, qoi);
            const AcquisitionContext ctx = AcquisitionContext::for_ocp(model, adjoint, tracked);
            acq = select(cands.points, [&](const Vec& y) { return ctx.sd_score(y); },
                         SelectDirection::Minimize);
          } else {
            acq = select(cands.points, [&](const Vec& y) { return meb_score(model, y); },
                         SelectDirection::Maximize);
          }
          report.acquisition_tables.push_back(acquisition_csv(cands, acq.scores));
          const Vec g_vals = oracle.sample(acq.y_plus);
          model = refine(model, acq.y_plus, g_vals);
          pending_acq = true;
          pending_dq_ub = acq.value;
          pending_y = acq.y_plus;
        }
        pending_calls = oracle.count() - before;
      }
      rec.wall_ms = now_ms() - t0;
      report.rounds.push_back(rec);
    }
  } catch (const Error& err) {
    report.aborted = true;
    report.abort_reason = std::string(to_string(err.code())) + ": " + err.what();
  }
  report.final_model = model;
  return report;
}

double spearman_rank_correlation(const Vec& a, const Vec& b) {
  const int n = static_cast<int>(a.size());
  if (n != b.size() || n < 2) return std::numeric_limits<double>::quiet_NaN();
  auto ranks = [n](const Vec& v) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int i, int j) { return v(i) < v(j); });
    Vec r(n);
    int i = 0;
    while (i < n) {
      int j = i;
      while (j + 1 < n && v(idx[static_cast<std::size_t>(j + 1)]) == v(idx[static_cast<std::size_t>(i)])) ++j;
      const double avg = 0.5 * (i + j) + 1.0;
      for (int k = i; k <= j; ++k) r(idx[static_cast<std::size_t>(k)]) = avg;
      i = j + 1;
    }
    return r;
  };
  const Vec ra = ranks(a), rb = ranks(b);
  const double ma = ra.mean(), mb = rb.mean();
  const Vec da = ra.array() - ma, db = rb.array() - mb;
  const double denom = std::sqrt(da.squaredNorm() * db.squaredNorm());
  if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return da.dot(db) / denom;
}

CompareResult compare_strategies(const ExperimentConfig& base,
                                 const std::vector<Strategy>& strategies,
                                 const std::vector<std::uint64_t>& seeds) {
  if (strategies.empty() || seeds.empty()) {
    throw Error(ErrorCode::Config, "compare_strategies: need at least one strategy and seed");
  }
  CompareResult out;
  out.strategies = strategies;
  out.seeds = seeds;
  std::vector<double> sd_corrs;

  for (const Strategy strat : strategies) {
    std::vector<Vec> per_seed;
    for (const std::uint64_t seed : seeds) {
      ExperimentConfig cfg = base;
      cfg.strategy = strat;
      cfg.seed = seed;
      RefinementReport rep = base.mode == Mode::Simulation ? run_simulation_experiment(cfg)
                                                           : run_ocp_experiment(cfg);
      Vec errs(rep.rounds.size());
      for (std::size_t i = 0; i < rep.rounds.size(); ++i) errs(static_cast<int>(i)) = rep.rounds[i].rel_err;
      per_seed.push_back(errs);
      if (strat == Strategy::SD && !rep.aborted) {
        // Pair the bound chosen before refinement r with the error after it.
        std::vector<double> ub, err;
        for (const auto& r : rep.rounds) {
          if (r.has_acquisition) {
            ub.push_back(r.dq_ub);
            err.push_back(std::abs(r.q_c - r.q_star));
          }
        }
        if (ub.size() >= 2) {
          sd_corrs.push_back(spearman_rank_correlation(
              Eigen::Map<Vec>(ub.data(), static_cast<int>(ub.size())),
              Eigen::Map<Vec>(err.data(), static_cast<int>(err.size()))));
        }
      }
      out.reports.push_back(std::move(rep));
    }
    out.errors.push_back(per_seed);
  }

  // Per-round medians across seeds.
  for (const auto& per_seed : out.errors) {
    int max_rounds = 0;
    for (const auto& v : per_seed) max_rounds = std::max(max_rounds, static_cast<int>(v.size()));
    Vec med(max_rounds);
    for (int r = 0; r < max_rounds; ++r) {
      std::vector<double> vals;
      for (const auto& v : per_seed) {
        if (r < v.size()) vals.push_back(v(r));
      }
      std::sort(vals.begin(), vals.end());
      const std::size_t m = vals.size();
      med(r) = m % 2 == 1 ? vals[m / 2] : 0.5 * (vals[m / 2 - 1] + vals[m / 2]);
    }
    out.median_by_round.push_back(med);
  }

  if (!sd_corrs.empty()) {
    std::sort(sd_corrs.begin(), sd_corrs.end());
    const std::size_t m = sd_corrs.size();
    out.sd_spearman_median = m % 2 == 1 ? sd_corrs[m / 2] : 0.5 * (sd_corrs[m / 2 - 1] + sd_corrs[m / 2]);
  } else {
    out.sd_spearman_median = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

std::string CompareResult::csv() const {
  std::ostringstream os;
  os.precision(15);
  os << "round";
  for (std::size_t si = 0; si < strategies.size(); ++si) {
    for (std::size_t se = 0; se < seeds.size(); ++se) {
      os << "," << to_string(strategies[si]) << "_seed" << seeds[se];
    }
    os << "," << to_string(strategies[si]) << "_median";
  }
  os << "\n";
  int max_rounds = 0;
  for (const auto& med : median_by_round) max_rounds = std::max(max_rounds, static_cast<int>(med.size()));
  for (int r = 0; r < max_rounds; ++r) {
    os << r;
    for (std::size_t si = 0; si < strategies.size(); ++si) {
      for (std::size_t se = 0; se < seeds.size(); ++se) {
        os << ",";
        if (r < errors[si][se].size()) os << errors[si][se](r);
      }
      os << ",";
      if (r < median_by_round[si].size()) os << median_by_round[si](r);
    }
    os << "\n";
  }
  return os.str();
}

std::string CompareResult::json() const {
  std::ostringstream os;
  os.precision(15);
  os << "{\"strategies\":[";
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    if (i) os << ",";
    os << "\"" << to_string(strategies[i]) << "\"";
  }
  os << "],\"seeds\":[";
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i) os << ",";
    os << seeds[i];
  }
  os << "],\"median_final\":[";
  for (std::size_t i = 0; i < median_by_round.size(); ++i) {
    if (i) os << ",";
    os << (median_by_round[i].size() > 0 ? median_by_round[i](median_by_round[i].size() - 1) : 0.0);
  }
  os << "],\"sd_spearman_median\":";
  if (std::isnan(sd_spearman_median)) {
    os << "null";
  } else {
    os << sd_spearman_median;
  }
  os << "}";
  return os.str();
}

}  // namespace sdr
