#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "sdr/driver.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct CliOverrides {
  std::string config_path;
  std::string out_dir = "out";
  std::string model_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> rounds;
  std::optional<std::string> strategy;
  std::optional<int> mesh_k;
  std::optional<int> mesh_n;
};

sdr::ExperimentConfig load_config(const CliOverrides& cli, sdr::Mode default_mode) {
  sdr::ExperimentConfig cfg = default_mode == sdr::Mode::Simulation
                                  ? sdr::ExperimentConfig::simulation_defaults()
                                  : sdr::ExperimentConfig::ocp_defaults();
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> strategies;

  if (!cli.config_path.empty()) {
    std::ifstream in(cli.config_path);
    if (!in) throw sdr::Error(sdr::ErrorCode::Config, "cannot open config file " + cli.config_path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw sdr::Error(sdr::ErrorCode::Config, std::string("config parse error: ") + e.what());
    }
    static const std::set<std::string> known = {
        "mode",           "strategy",      "rounds",          "seed",        "seeds",
        "strategies",     "initial_samples", "alpha_range",   "delta_range", "mesh_k",
        "mesh_n",         "ocp_mesh_k",    "kernel_family",   "lengthscale", "tracking_q_diag",
        "tracking_r_u",   "tracking_r_p",  "candidates_lh",   "candidates_traj", "t_skip",
        "unit_m",         "out_dir"};
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!known.count(it.key())) {
        throw sdr::Error(sdr::ErrorCode::Config, "unknown config key: " + it.key());
      }
    }
    if (j.contains("mode")) {
      const std::string m = j["mode"].get<std::string>();
      if (m == "simulation") {
        cfg = sdr::ExperimentConfig::simulation_defaults();
      } else if (m == "ocp") {
        cfg = sdr::ExperimentConfig::ocp_defaults();
      } else {
        throw sdr::Error(sdr::ErrorCode::Config, "mode must be simulation or ocp");
      }
    }
    if (j.contains("strategy")) cfg.strategy = sdr::strategy_from_string(j["strategy"].get<std::string>());
    if (j.contains("rounds")) cfg.rounds = j["rounds"].get<int>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("initial_samples")) cfg.initial_samples = j["initial_samples"].get<int>();
    if (j.contains("alpha_range")) {
      const auto r = j["alpha_range"].get<std::vector<double>>();
      cfg.ranges(0, 0) = r.at(0);
      cfg.ranges(0, 1) = r.at(1);
    }
    if (j.contains("delta_range")) {
      const auto r = j["delta_range"].get<std::vector<double>>();
      cfg.ranges(1, 0) = r.at(0);
      cfg.ranges(1, 1) = r.at(1);
    }
    if (j.contains("mesh_k")) cfg.mesh_k = j["mesh_k"].get<int>();
    if (j.contains("mesh_n")) cfg.mesh_n = j["mesh_n"].get<int>();
    if (j.contains("ocp_mesh_k")) cfg.ocp_mesh_k = j["ocp_mesh_k"].get<int>();
    if (j.contains("kernel_family")) {
      const std::string f = j["kernel_family"].get<std::string>();
      if (f == "wendland_c2") {
        cfg.kernel_family = sdr::WendlandFamily::C2;
      } else if (f == "wendland_c4") {
        cfg.kernel_family = sdr::WendlandFamily::C4;
      } else {
        throw sdr::Error(sdr::ErrorCode::Config, "kernel_family must be wendland_c2 or wendland_c4");
      }
    }
    if (j.contains("lengthscale")) cfg.lengthscale = j["lengthscale"].get<double>();
    if (j.contains("tracking_q_diag")) {
      const auto q = j["tracking_q_diag"].get<std::vector<double>>();
      if (q.size() != 8) throw sdr::Error(sdr::ErrorCode::Config, "tracking_q_diag needs 8 entries");
      for (int i = 0; i < 8; ++i) cfg.weights.q_diag(i) = q[static_cast<std::size_t>(i)];
    }
    if (j.contains("tracking_r_u")) cfg.weights.r_u = j["tracking_r_u"].get<double>();
    if (j.contains("tracking_r_p")) cfg.weights.r_p = j["tracking_r_p"].get<double>();
    if (j.contains("candidates_lh")) cfg.n_lh_candidates = j["candidates_lh"].get<int>();
    if (j.contains("candidates_traj")) cfg.n_traj_candidates = j["candidates_traj"].get<int>();
    if (j.contains("t_skip")) cfg.t_skip = j["t_skip"].get<double>();
    if (j.contains("unit_m")) cfg.unit = j["unit_m"].get<double>();
    if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
  }

  if (cli.seed) cfg.seed = *cli.seed;
  if (cli.rounds) cfg.rounds = *cli.rounds;
  if (cli.strategy) cfg.strategy = sdr::strategy_from_string(*cli.strategy);
  if (cli.mesh_k) cfg.mesh_k = cfg.mode == sdr::Mode::Ocp ? (cfg.ocp_mesh_k = *cli.mesh_k) : *cli.mesh_k;
  if (cli.mesh_n) cfg.mesh_n = *cli.mesh_n;
  if (cfg.out_dir.empty()) cfg.out_dir = cli.out_dir;
  if (cfg.rounds < 0) throw sdr::Error(sdr::ErrorCode::Config, "rounds must be >= 0");
  return cfg;
}

std::vector<std::uint64_t> seeds_from_config(const CliOverrides& cli, std::uint64_t fallback) {
  if (!cli.config_path.empty()) {
    std::ifstream in(cli.config_path);
    json j;
    in >> j;
    if (j.contains("seeds")) return j["seeds"].get<std::vector<std::uint64_t>>();
  }
  return {fallback};
}

std::vector<sdr::Strategy> strategies_from_config(const CliOverrides& cli) {
  if (!cli.config_path.empty()) {
    std::ifstream in(cli.config_path);
    json j;
    in >> j;
    if (j.contains("strategies")) {
      std::vector<sdr::Strategy> out;
      for (const auto& s : j["strategies"]) out.push_back(sdr::strategy_from_string(s.get<std::string>()));
      if (out.empty()) throw sdr::Error(sdr::ErrorCode::Config, "strategies list is empty");
      return out;
    }
  }
  return {sdr::Strategy::SD, sdr::Strategy::MEB, sdr::Strategy::LH};
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path);
  if (!out) throw sdr::Error(sdr::ErrorCode::Config, "cannot write " + path.string());
  out << content;
}

const std::vector<std::string> kStateNames = {"x1", "x2", "v", "gamma", "alpha", "q", "delta", "deltadot"};

std::shared_ptr<const sdr::ComponentModel> load_model(const std::string& path,
                                                      const sdr::DomainProjection& proj) {
  if (path.empty()) return std::make_shared<sdr::TruthCoefficients>();
  std::ifstream in(path);
  if (!in) throw sdr::Error(sdr::ErrorCode::Config, "cannot open model file " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto model = std::make_shared<sdr::SurrogateModel>(sdr::surrogate_from_json(text, proj));
  // Interpolation conditions are re-verified at load.
  for (int i = 0; i < model->n_samples(); ++i) {
    const sdr::Vec pred = model->values(model->sites.row(i).transpose());
    const sdr::Vec stored = model->values_g.row(i).transpose();
    if ((pred - stored).lpNorm<Eigen::Infinity>() > 1e-8 * (1.0 + stored.lpNorm<Eigen::Infinity>())) {
      throw sdr::Error(sdr::ErrorCode::Config, "model file violates interpolation conditions");
    }
  }
  return model;
}

int cmd_simulate(const CliOverrides& cli) {
  const sdr::ExperimentConfig cfg = load_config(cli, sdr::Mode::Simulation);
  const sdr::OdeProblem prob = sdr::hypersonic_simulation_problem(cfg.unit);
  const auto model = load_model(cli.model_path, prob.projection);
  const sdr::Mesh mesh(prob.t0, prob.tf, cfg.mesh_k, cfg.mesh_n);
  const sdr::Trajectory traj = sdr::solve_ivp(prob, model.get(), mesh);
  const double qoi = sdr::evaluate_qoi(prob, model.get(), traj);

  write_file(fs::path(cfg.out_dir) / "trajectory.csv", sdr::trajectory_to_csv(traj, kStateNames));
  json summary;
  summary["qoi_km"] = qoi * cfg.unit / 1000.0;
  summary["mesh"] = {{"k", cfg.mesh_k}, {"n", cfg.mesh_n}};
  summary["model"] = cli.model_path.empty() ? "truth" : cli.model_path;
  write_file(fs::path(cfg.out_dir) / "summary.json", summary.dump(2));
  std::cout << "downrange " << qoi * cfg.unit / 1000.0 << " km -> " << cfg.out_dir << "\n";
  return 0;
}

int cmd_optimize(const CliOverrides& cli) {
  sdr::ExperimentConfig cfg = load_config(cli, sdr::Mode::Ocp);
  const sdr::DomainProjection proj = sdr::alpha_delta_projection(8, 1, 1);
  const auto model = load_model(cli.model_path, proj);
  const sdr::Mesh mesh(0.0, 1.0, cfg.ocp_mesh_k, cfg.mesh_n);
  sdr::OcpSolveOptions opts;
  opts.unit = cfg.unit;
  const sdr::OcpSolution sol = sdr::solve_max_downrange(*model, mesh, opts);

  write_file(fs::path(cfg.out_dir) / "trajectory.csv",
             sdr::trajectory_to_csv(sol.trajectory, kStateNames, true));
  json summary;
  summary["downrange_km"] = sol.trajectory.states.bottomRows(1)(0, 0) * cfg.unit / 1000.0;
  summary["final_time_s"] = sol.trajectory.params(0);
  summary["objective"] = sol.objective;
  summary["iterations"] = sol.iterations;
  summary["kkt_error"] = sol.kkt_error;
  write_file(fs::path(cfg.out_dir) / "summary.json", summary.dump(2));
  std::cout << "downrange " << summary["downrange_km"] << " km, T = " << sol.trajectory.params(0)
            << " s -> " << cfg.out_dir << "\n";
  return 0;
}

int cmd_refine(const CliOverrides& cli, sdr::Mode mode) {
  sdr::ExperimentConfig cfg = load_config(cli, mode);
  cfg.mode = mode;
  const sdr::RefinementReport report = mode == sdr::Mode::Simulation
                                           ? sdr::run_simulation_experiment(cfg)
                                           : sdr::run_ocp_experiment(cfg);
  const fs::path dir(cfg.out_dir);
  write_file(dir / "report.csv", report.csv());
  write_file(dir / "report.json", report.json());
  for (std::size_t i = 0; i < report.acquisition_tables.size(); ++i) {
    write_file(dir / ("acquisition_round_" + std::to_string(i + 1) + ".csv"),
               report.acquisition_tables[i]);
  }
  if (report.final_model) {
    write_file(dir / "model_final.json", sdr::surrogate_to_json(*report.final_model));
  }
  if (report.aborted) {
    std::cerr << "experiment aborted: " << report.abort_reason << "\n";
    return kExitNumerical;
  }
  std::cout << "final rel_err " << report.rounds.back().rel_err << " -> " << cfg.out_dir << "\n";
  return 0;
}

int cmd_compare(const CliOverrides& cli) {
  sdr::ExperimentConfig cfg = load_config(cli, sdr::Mode::Simulation);
  const auto strategies = strategies_from_config(cli);
  const auto seeds = seeds_from_config(cli, cfg.seed);
  const sdr::CompareResult result = sdr::compare_strategies(cfg, strategies, seeds);
  write_file(fs::path(cfg.out_dir) / "compare.csv", result.csv());
  write_file(fs::path(cfg.out_dir) / "compare.json", result.json());
  for (const auto& rep : result.reports) {
    if (rep.aborted) {
      std::cerr << "a run aborted: " << rep.abort_reason << "\n";
      return kExitNumerical;
    }
  }
  std::cout << result.json() << "\n";
  return 0;
}

int cmd_validate() {
  int failures = 0;
  auto check = [&](const std::string& name, bool ok) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << "\n";
    if (!ok) ++failures;
  };

  // Kernel values against the hand oracles.
  check("wendland values",
        std::abs(sdr::wendland_eval(sdr::WendlandFamily::C2, 0.5, 0) - 0.1875) < 1e-15 &&
            sdr::wendland_eval(sdr::WendlandFamily::C2, 1.3, 0) == 0.0 &&
            std::abs(sdr::wendland_eval(sdr::WendlandFamily::C4, 0.0, 0) - 3.0) < 1e-15);

  // Dynamics Jacobians against central differences at the initial state.
  {
    const sdr::OdeProblem prob = sdr::hypersonic_simulation_problem();
    const sdr::TruthCoefficients truth;
    const sdr::Vec x = prob.x0;
    const sdr::Vec g = truth.values(prob.projection.project(0.0, x, sdr::Vec(0), sdr::Vec(0)));
    sdr::Mat fx, fg;
    prob.f_jac(0.0, x, g, fx, fg);
    double err = 0.0;
    for (int j = 0; j < 8; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(x(j)));
      sdr::Vec xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      const sdr::Vec d = (prob.f(0.0, xp, g) - prob.f(0.0, xm, g)) / (2.0 * h);
      err = std::max(err, (d - fx.col(j)).lpNorm<Eigen::Infinity>() /
                              (1.0 + fx.col(j).lpNorm<Eigen::Infinity>()));
    }
    check("dynamics jacobian vs finite differences", err < 1e-5);
  }

  // Adjoint/forward duality on a short horizon.
  {
    sdr::OdeProblem prob = sdr::hypersonic_simulation_problem();
    prob.tf = 100.0;
    const sdr::TruthCoefficients truth;
    const sdr::Mesh mesh(prob.t0, prob.tf, 20, 4);
    const sdr::Trajectory traj = sdr::solve_ivp(prob, &truth, mesh);
    const sdr::OdeAdjoint adj = sdr::solve_ode_adjoint(prob, truth, traj);
    auto bump = [](double, const sdr::Vec& x) {
      sdr::Vec d(3);
      const double s = std::sin(x(4)) * std::cos(x(6));
      d << 0.01 * s, -0.005 * s, 0.002 * s;
      return d;
    };
    const double dq_adj = sdr::apply_qoi_sensitivity_ode(adj, traj, bump);
    const sdr::Trajectory dx = sdr::solve_forward_sensitivity(prob, truth, traj, bump);
    const double dq_fwd = sdr::apply_qoi_sensitivity_forward(prob, truth, traj, dx, bump);
    check("adjoint vs forward sensitivity", std::abs(dq_adj - dq_fwd) <= 1e-6 * std::abs(dq_fwd));
  }

  // Analytic LP value vs nodewise sign enumeration.
  {
    std::mt19937_64 rng(7);
    auto u = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0; };
    bool ok = true;
    for (int rep = 0; rep < 10 && ok; ++rep) {
      const int nodes = 6, ng = 3;
      sdr::Vec qw(nodes);
      sdr::Mat w(nodes, ng), eps(nodes, ng);
      for (int c = 0; c < nodes; ++c) {
        qw(c) = 0.5 + 0.5 * std::abs(u());
        for (int i = 0; i < ng; ++i) {
          w(c, i) = u();
          eps(c, i) = std::abs(u());
        }
      }
      double brute = 0.0;
      for (int c = 0; c < nodes; ++c) {
        double best = -1e300;
        for (int mask = 0; mask < (1 << ng); ++mask) {
          double v = 0.0;
          for (int i = 0; i < ng; ++i) v += ((mask >> i) & 1 ? 1.0 : -1.0) * w(c, i) * eps(c, i);
          best = std::max(best, v);
        }
        brute += qw(c) * best;
      }
      ok = std::abs(sdr::acquisition_lp_value(qw, w, eps) - brute) < 1e-12;
    }
    check("acquisition LP analytic vs enumeration", ok);
  }

  std::cout << (failures == 0 ? "validate: all checks passed\n" : "validate: failures detected\n");
  return failures == 0 ? 0 : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive surrogate refinement for hypersonic simulation and trajectory optimization"};
  app.require_subcommand(1);

  CliOverrides cli;
  auto add_common = [&](CLI::App* sub, bool with_model) {
    sub->add_option("--config", cli.config_path, "JSON config file");
    sub->add_option("--seed", cli.seed, "random seed");
    sub->add_option("--rounds", cli.rounds, "refinement rounds");
    sub->add_option("--strategy", cli.strategy, "SD, MEB or LH");
    sub->add_option("--mesh-k", cli.mesh_k, "collocation intervals");
    sub->add_option("--mesh-n", cli.mesh_n, "collocation degree per interval");
    sub->add_option("--out", cli.out_dir, "output directory");
    if (with_model) sub->add_option("--model", cli.model_path, "surrogate model JSON (default: truth)");
  };

  auto* sim = app.add_subcommand("simulate", "open-loop hypersonic simulation");
  add_common(sim, true);
  auto* opt = app.add_subcommand("optimize", "maximum-downrange trajectory optimization");
  add_common(opt, true);
  auto* rsim = app.add_subcommand("refine-sim", "simulation refinement experiment");
  add_common(rsim, false);
  auto* rocp = app.add_subcommand("refine-ocp", "trajectory-optimization refinement experiment");
  add_common(rocp, false);
  auto* cmp = app.add_subcommand("compare", "compare refinement strategies over seeds");
  add_common(cmp, false);
  app.add_subcommand("validate", "run the built-in numerical self-checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (app.got_subcommand("simulate")) return cmd_simulate(cli);
    if (app.got_subcommand("optimize")) return cmd_optimize(cli);
    if (app.got_subcommand("refine-sim")) return cmd_refine(cli, sdr::Mode::Simulation);
    if (app.got_subcommand("refine-ocp")) return cmd_refine(cli, sdr::Mode::Ocp);
    if (app.got_subcommand("compare")) return cmd_compare(cli);
    if (app.got_subcommand("validate")) return cmd_validate();
  } catch (const sdr::Error& e) {
    std::cerr << sdr::to_string(e.code()) << ": " << e.what() << "\n";
    return e.code() == sdr::ErrorCode::Config ? kExitConfig : kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitConfig;
}
