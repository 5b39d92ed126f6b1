#include <doctest.h>

#include <random>

#include "sdr/nlp.hpp"

using namespace sdr;

namespace {

SpMat dense_to_sparse(const Mat& m) {
  SpMat s(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      if (m(i, j) != 0.0) t.emplace_back(i, j, m(i, j));
    }
  }
  s.setFromTriplets(t.begin(), t.end());
  return s;
}

// min 1/2 z'Pz + q'z  s.t.  A z <= b  (and optionally E z = e)
NlpProblem make_qp(const Mat& p, const Vec& q, const Mat& a, const Vec& b, const Mat& e,
                   const Vec& ev) {
  NlpProblem nlp;
  nlp.n = static_cast<int>(p.rows());
  nlp.m_eq = static_cast<int>(e.rows());
  nlp.m_ineq = static_cast<int>(a.rows());
  nlp.objective = [p, q](const Vec& z) { return 0.5 * z.dot(p * z) + q.dot(z); };
  nlp.gradient = [p, q](const Vec& z) { return Vec(p * z + q); };
  nlp.eq = [e, ev](const Vec& z) { return Vec(e * z - ev); };
  nlp.eq_jac = [e](const Vec&) { return dense_to_sparse(e); };
  nlp.ineq = [a, b](const Vec& z) { return Vec(a * z - b); };
  nlp.ineq_jac = [a](const Vec&) { return dense_to_sparse(a); };
  nlp.lagrangian_hessian = [p](const Vec&, const Vec&, const Vec&) { return dense_to_sparse(p); };
  return nlp;
}

// Brute-force active-set enumeration for strictly convex inequality QPs.
bool qp_enumeration(const Mat& p, const Vec& q, const Mat& a, const Vec& b, Vec* z_out) {
  const int n = static_cast<int>(p.rows());
  const int m = static_cast<int>(a.rows());
  double best = 1e300;
  bool found = false;
  for (int mask = 0; mask < (1 << m); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < m; ++i) {
      if ((mask >> i) & 1) act.push_back(i);
    }
    const int k = static_cast<int>(act.size());
    Mat kkt = Mat::Zero(n + k, n + k);
    kkt.topLeftCorner(n, n) = p;
    for (int i = 0; i < k; ++i) {
      kkt.block(n + i, 0, 1, n) = a.row(act[static_cast<std::size_t>(i)]);
      kkt.block(0, n + i, n, 1) = a.row(act[static_cast<std::size_t>(i)]).transpose();
    }
    Vec rhs(n + k);
    rhs.head(n) = -q;
    for (int i = 0; i < k; ++i) rhs(n + i) = b(act[static_cast<std::size_t>(i)]);
    Eigen::FullPivLU<Mat> lu(kkt);
    if (!lu.isInvertible()) continue;
    const Vec sol = lu.solve(rhs);
    const Vec z = sol.head(n);
    const Vec mult = sol.tail(k);
    if (((a * z - b).array() > 1e-9).any()) continue;
    if (k > 0 && (mult.array() < -1e-9).any()) continue;
    const double val = 0.5 * z.dot(p * z) + q.dot(z);
    if (val < best) {
      best = val;
      *z_out = z;
      found = true;
    }
  }
  return found;
}

}  // namespace

TEST_CASE("box QP by hand: min (z-2)^2 s.t. z <= 1") {
  Mat p = Mat::Constant(1, 1, 2.0);
  Vec q = Vec::Constant(1, -4.0);
  Mat a = Mat::Constant(1, 1, 1.0);
  Vec b = Vec::Constant(1, 1.0);
  const NlpProblem nlp = make_qp(p, q, a, b, Mat(0, 1), Vec(0));
  const IpResult r = interior_point_solve(nlp, Vec::Zero(1));
  CHECK(r.converged);
  CHECK(r.z(0) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(r.w(0) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(r.w(0) >= 0.0);
  CHECK(r.s(0) * r.w(0) <= 1e-6);
}

TEST_CASE("equality-only QP converges in one Newton step") {
  Mat p(2, 2);
  p << 4.0, 1.0, 1.0, 3.0;
  Vec q(2);
  q << -1.0, 2.0;
  Mat e(1, 2);
  e << 1.0, 1.0;
  Vec ev = Vec::Constant(1, 1.0);
  const NlpProblem nlp = make_qp(p, q, Mat(0, 2), Vec(0), e, ev);
  const IpResult r = interior_point_solve(nlp, Vec::Zero(2));
  CHECK(r.converged);
  CHECK(r.iterations <= 1);
  Mat kkt(3, 3);
  kkt << 4, 1, 1, 1, 3, 1, 1, 1, 0;
  Vec rhs(3);
  rhs << 1, -2, 1;
  const Vec sol = kkt.fullPivLu().solve(rhs);
  CHECK((r.z - sol.head(2)).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("randomized convex QPs match active-set enumeration") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> gauss(0.0, 1.0);
  int solved = 0;
  for (int rep = 0; rep < 25; ++rep) {
    const int n = 2 + static_cast<int>(rng() % 3);
    const int m = 1 + static_cast<int>(rng() % 6);
    Mat g(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) g(i, j) = gauss(rng);
    }
    Mat p = g * g.transpose() + 0.5 * Mat::Identity(n, n);
    Vec q(n);
    for (int i = 0; i < n; ++i) q(i) = gauss(rng);
    Mat a(m, n);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) a(i, j) = gauss(rng);
    }
    Vec b(m);
    for (int i = 0; i < m; ++i) b(i) = std::abs(gauss(rng)) + 0.1;  // z = 0 strictly feasible

    Vec z_ref(n);
    if (!qp_enumeration(p, q, a, b, &z_ref)) continue;
    const NlpProblem nlp = make_qp(p, q, a, b, Mat(0, n), Vec(0));
    const IpResult r = interior_point_solve(nlp, Vec::Zero(n));
    CHECK(r.converged);
    CHECK((r.z - z_ref).lpNorm<Eigen::Infinity>() <= 1e-6 * (1.0 + z_ref.lpNorm<Eigen::Infinity>()));
    CHECK(r.w.minCoeff() >= 0.0);
    const Vec ci = a * r.z - b;
    for (int i = 0; i < m; ++i) CHECK(std::abs(ci(i) * r.w(i)) <= 1e-6);
    ++solved;
  }
  CHECK(solved >= 20);
}

TEST_CASE("warm start from a solution returns immediately") {
  Mat p(2, 2);
  p << 2.0, 0.0, 0.0, 2.0;
  Vec q(2);
  q << -2.0, -4.0;
  Mat a(2, 2);
  a << 1.0, 0.0, 0.0, 1.0;
  Vec b(2);
  b << 0.8, 5.0;
  const NlpProblem nlp = make_qp(p, q, a, b, Mat(0, 2), Vec(0));
  const IpResult cold = interior_point_solve(nlp, Vec::Zero(2));
  CHECK(cold.converged);
  IpWarmStart warm{cold.y, cold.w, cold.s};
  const IpResult hot = interior_point_solve(nlp, cold.z, {}, &warm);
  CHECK(hot.converged);
  CHECK(hot.iterations <= 3);
  CHECK((hot.z - cold.z).lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("iteration cap raises; a full budget solves Rosenbrock") {
  NlpProblem nlp;
  nlp.n = 2;
  nlp.m_eq = 0;
  nlp.m_ineq = 1;
  nlp.objective = [](const Vec& z) {
    const double a = 1.0 - z(0);
    const double b = z(1) - z(0) * z(0);
    return a * a + 100.0 * b * b;
  };
  nlp.gradient = [](const Vec& z) {
    Vec g(2);
    const double b = z(1) - z(0) * z(0);
    g << -2.0 * (1.0 - z(0)) - 400.0 * z(0) * b, 200.0 * b;
    return g;
  };
  nlp.ineq = [](const Vec& z) { return Vec(Vec::Constant(1, z(0) - 10.0)); };
  nlp.ineq_jac = [](const Vec&) {
    Mat a(1, 2);
    a << 1.0, 0.0;
    return dense_to_sparse(a);
  };
  nlp.lagrangian_hessian = [](const Vec& z, const Vec&, const Vec&) {
    Mat h(2, 2);
    h << 2.0 - 400.0 * (z(1) - 3.0 * z(0) * z(0)), -400.0 * z(0), -400.0 * z(0), 200.0;
    return dense_to_sparse(h);
  };
  IpOptions opts;
  opts.max_iter = 2;
  Vec z0(2);
  z0 << -1.2, 1.0;
  CHECK_THROWS_AS(interior_point_solve(nlp, z0, opts), Error);
  const IpResult r = interior_point_solve(nlp, z0, IpOptions{});
  CHECK(r.converged);
  CHECK(r.z(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.z(1) == doctest::Approx(1.0).epsilon(1e-6));
}
