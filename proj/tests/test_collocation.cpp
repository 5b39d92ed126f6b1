#include <doctest.h>

#include <random>

#include "sdr/collocation.hpp"
#include "support/oracles.hpp"

using namespace sdr;

namespace {

OdeProblem scalar_decay() {
  OdeProblem p;
  p.n_x = 1;
  p.n_g = 0;
  p.t0 = 0.0;
  p.tf = 1.0;
  p.x0 = Vec::Constant(1, 1.0);
  p.f = [](double, const Vec& x, const Vec&) { return Vec(-x); };
  p.f_jac = [](double, const Vec&, const Vec&, Mat& fx, Mat& fg) {
    fx = Mat::Constant(1, 1, -1.0);
    fg.resize(1, 0);
  };
  p.phi = [](const Vec& xf) { return xf(0); };
  p.phi_grad = [](const Vec&) { return Vec::Ones(1); };
  return p;
}

}  // namespace

TEST_CASE("flipped LGR rules") {
  // n = 1: right endpoint only, weight 2 (implicit Euler)
  const RadauRule r1 = flipped_lgr(1);
  CHECK(r1.nodes(0) == doctest::Approx(1.0));
  CHECK(r1.weights(0) == doctest::Approx(2.0));
  CHECK(r1.diff(0, 0) == doctest::Approx(-0.5));
  CHECK(r1.diff(0, 1) == doctest::Approx(0.5));

  // n = 2: flipped nodes {-1/3, 1}, weights {1.5, 0.5}
  const RadauRule r2 = flipped_lgr(2);
  CHECK(r2.nodes(0) == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));
  CHECK(r2.nodes(1) == doctest::Approx(1.0));
  CHECK(r2.weights(0) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(r2.weights(1) == doctest::Approx(0.5).epsilon(1e-12));

  for (int n : {1, 2, 3, 5, 8, 13, 21, 30}) {
    const RadauRule r = flipped_lgr(n);
    CHECK(r.weights.sum() == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(r.weights.minCoeff() > 0.0);
    CHECK(r.nodes(n - 1) == doctest::Approx(1.0));
    for (int i = 1; i < n; ++i) CHECK(r.nodes(i) > r.nodes(i - 1));
    CHECK(r.nodes(0) > -1.0);  // left endpoint excluded

    // D reproduces derivatives of polynomials up to degree n
    if (n >= 2) {
      Mat vals(n + 1, 1);
      for (int i = 0; i <= n; ++i) vals(i, 0) = r.support(i) * r.support(i);
      const Mat d = r.diff * vals;
      for (int i = 0; i < n; ++i) CHECK(d(i, 0) == doctest::Approx(2.0 * r.nodes(i)).epsilon(1e-10));
    }
  }
  CHECK_THROWS_AS(flipped_lgr(0), Error);
  CHECK_THROWS_AS(flipped_lgr(31), Error);
}

TEST_CASE("quadrature rules") {
  // constant over (0, 550)
  Mesh m(0.0, 550.0, 10, 4);
  CHECK(quadrature(m, Vec::Ones(m.n_coll_nodes())) == doctest::Approx(550.0).epsilon(1e-12));

  // t over (0,1), K=1, n=3
  Mesh m2(0.0, 1.0, 1, 3);
  Vec tv(m2.n_coll_nodes());
  for (int c = 0; c < tv.size(); ++c) tv(c) = m2.coll_time(c);
  CHECK(quadrature(m2, tv) == doctest::Approx(0.5).epsilon(1e-13));

  // |sin| over (0, 2 pi) with interval boundaries at the kinks
  Mesh m3(0.0, 2.0 * M_PI, 8, 6);
  Vec sv(m3.n_coll_nodes());
  for (int c = 0; c < sv.size(); ++c) sv(c) = std::abs(std::sin(m3.coll_time(c)));
  CHECK(quadrature(m3, sv) == doctest::Approx(4.0).epsilon(1e-6));

  CHECK_THROWS_AS(quadrature(m3, Vec::Ones(3)), Error);
}

TEST_CASE("solve_ivp basics") {
  // f == 0 keeps the state constant
  OdeProblem zero;
  zero.n_x = 2;
  zero.n_g = 0;
  zero.t0 = 0.0;
  zero.tf = 3.0;
  zero.x0 = Vec::Constant(2, 4.5);
  zero.f = [](double, const Vec& x, const Vec&) { return Vec(Vec::Zero(x.size())); };
  zero.f_jac = [](double, const Vec& x, const Vec&, Mat& fx, Mat& fg) {
    fx = Mat::Zero(x.size(), x.size());
    fg.resize(x.size(), 0);
  };
  const Trajectory tz = solve_ivp(zero, nullptr, Mesh(0.0, 3.0, 4, 3));
  CHECK((tz.states.array() - 4.5).abs().maxCoeff() <= 1e-13);
  CHECK((tz.state_at(1.234).array() - 4.5).abs().maxCoeff() <= 1e-12);

  // x' = -x on [0,1], K=10, n=4: matches exp(-1) to 1e-10
  const OdeProblem dec = scalar_decay();
  const Trajectory td = solve_ivp(dec, nullptr, Mesh(0.0, 1.0, 10, 4));
  CHECK(std::abs(td.states.bottomRows(1)(0, 0) - std::exp(-1.0)) <= 1e-10);
  // mid-interval barycentric evaluation matches exp(-t) to 1e-9
  for (double t : {0.137, 0.55, 0.981}) {
    CHECK(td.state_at(t)(0) == doctest::Approx(std::exp(-t)).epsilon(1e-9));
  }
  CHECK_THROWS_AS(td.state_at(1.5), Error);

  // determinism: identical inputs give bit-identical trajectories
  const Trajectory td2 = solve_ivp(dec, nullptr, Mesh(0.0, 1.0, 10, 4));
  CHECK((td.states - td2.states).norm() == 0.0);
}

TEST_CASE("spectral convergence in the degree") {
  const OdeProblem dec = scalar_decay();
  double prev_err = 1.0;
  std::vector<double> errs;
  for (int n : {2, 4, 6}) {
    const Trajectory t = solve_ivp(dec, nullptr, Mesh(0.0, 1.0, 4, n));
    errs.push_back(std::abs(t.states.bottomRows(1)(0, 0) - std::exp(-1.0)));
  }
  CHECK(errs[1] <= 1e-2 * errs[0]);
  CHECK(errs[2] <= std::max(1e-2 * errs[1], 1e-15));
  (void)prev_err;
}

TEST_CASE("hypersonic truth run: envelope, oracle cross-check, mesh consistency") {
  const OdeProblem prob = hypersonic_simulation_problem(1000.0);
  const TruthCoefficients truth;
  const Mesh mesh(prob.t0, prob.tf, 100, 4);
  const Trajectory traj = solve_ivp(prob, &truth, mesh);
  const double downrange = traj.states.bottomRows(1)(0, 0);

  CHECK(downrange > 1000.0);
  CHECK(downrange < 2750.0);

  // independent adaptive Dormand-Prince oracle
  auto rhs = [&](double t, const Vec& x) {
    const Vec g = true_coefficients(x(4), x(6));
    return prob.f(t, x, g);
  };
  const Vec x_oracle = oracles::rk45(rhs, 0.0, prob.x0, 550.0, 1e-11, 1e-13);
  CHECK(std::abs(downrange - x_oracle(0)) <= 1e-6 * std::abs(x_oracle(0)));

  // doubling K changes the downrange by <= 1e-6 relative
  const Trajectory traj2 = solve_ivp(prob, &truth, Mesh(prob.t0, prob.tf, 200, 4));
  CHECK(std::abs(traj2.states.bottomRows(1)(0, 0) - downrange) <= 1e-6 * std::abs(downrange));
}

TEST_CASE("solve_linear_ivp reproduces the nonlinear solver on a linear problem") {
  auto coeffs = [](double t, Mat& a, Vec& b) {
    a = Mat::Constant(1, 1, -1.0);
    b = Vec::Constant(1, std::sin(t));
  };
  const Trajectory t = solve_linear_ivp(Mesh(0.0, 2.0, 8, 4), 1, coeffs, Vec::Ones(1));
  // closed form: x(t) = 1.5 e^{-t} + (sin t - cos t)/2
  auto exact = [](double tt) { return 1.5 * std::exp(-tt) + 0.5 * (std::sin(tt) - std::cos(tt)); };
  for (double tt : {0.5, 1.0, 2.0}) {
    CHECK(t.state_at(tt)(0) == doctest::Approx(exact(tt)).epsilon(1e-10));
  }
}

TEST_CASE("newton failure carries the interval index") {
  OdeProblem bad;
  bad.n_x = 1;
  bad.n_g = 0;
  bad.t0 = 0.0;
  bad.tf = 2.0;
  bad.x0 = Vec::Constant(1, 1.1);
  // finite-time blowup: x' = x^2, escapes at t = 1/x0 < tf
  bad.f = [](double, const Vec& x, const Vec&) { return Vec(x.array().square()); };
  bad.f_jac = [](double, const Vec& x, const Vec&, Mat& fx, Mat& fg) {
    fx = Mat::Constant(1, 1, 2.0 * x(0));
    fg.resize(1, 0);
  };
  try {
    solve_ivp(bad, nullptr, Mesh(0.0, 2.0, 4, 4));
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SolverFailure);
    CHECK(std::string(e.what()).find("interval") != std::string::npos);
  }
}

TEST_CASE("trajectory csv export") {
  const OdeProblem dec = scalar_decay();
  const Trajectory td = solve_ivp(dec, nullptr, Mesh(0.0, 1.0, 2, 2));
  const std::string csv = trajectory_to_csv(td, {"x1"});
  CHECK(csv.rfind("t,x1\n", 0) == 0);
  // header + one row per state node
  int lines = 0;
  for (char ch : csv) lines += ch == '\n';
  CHECK(lines == 1 + td.mesh.n_state_nodes());
}
