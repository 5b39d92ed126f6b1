#include <doctest.h>

#include <random>

#include "sdr/kernel.hpp"

using namespace sdr;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Mat random_sites(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Mat sites(n, 2);
  for (int i = 0; i < n; ++i) {
    sites(i, 0) = u(rng);
    sites(i, 1) = u(rng);
  }
  return sites;
}

}  // namespace

TEST_CASE("wendland values at the hand-oracle radii") {
  CHECK(wendland_eval(WendlandFamily::C2, 0.0, 0) == 1.0);
  CHECK(wendland_eval(WendlandFamily::C2, 1.3, 0) == 0.0);
  CHECK(wendland_eval(WendlandFamily::C2, 0.5, 0) == doctest::Approx(0.1875).epsilon(1e-15));
  CHECK(wendland_eval(WendlandFamily::C4, 0.0, 0) == 3.0);
  CHECK(wendland_eval(WendlandFamily::C2, 1.0, 0) == 0.0);
  CHECK(wendland_eval(WendlandFamily::C2, 1.0, 1) == 0.0);
  CHECK(wendland_eval(WendlandFamily::C2, 1.0, 2) == 0.0);
  CHECK(wendland_eval(WendlandFamily::C2, 0.0, 1) == 0.0);
  CHECK(wendland_eval(WendlandFamily::C4, 0.0, 1) == 0.0);
  CHECK(wendland_eval(WendlandFamily::C2, 0.0, 2) == doctest::Approx(-20.0));
  CHECK(wendland_eval(WendlandFamily::C4, 0.0, 2) == doctest::Approx(-56.0));
  CHECK_THROWS_AS(wendland_eval(WendlandFamily::C2, 0.5, 3), Error);
  CHECK_THROWS_AS(wendland_eval(WendlandFamily::C2, -0.1, 0), Error);
}

TEST_CASE("wendland derivatives match finite differences") {
  for (const auto family : {WendlandFamily::C2, WendlandFamily::C4}) {
    for (double r : {0.1, 0.3, 0.55, 0.9}) {
      const double h = 1e-6;
      const double d1 = (wendland_eval(family, r + h, 0) - wendland_eval(family, r - h, 0)) / (2 * h);
      CHECK(wendland_eval(family, r, 1) == doctest::Approx(d1).epsilon(1e-8));
      const double d2 = (wendland_eval(family, r + h, 1) - wendland_eval(family, r - h, 1)) / (2 * h);
      CHECK(wendland_eval(family, r, 2) == doctest::Approx(d2).epsilon(1e-8));
      // phi(r) = psi'(r)/r and its derivative
      CHECK(wendland_phi(family, r) == doctest::Approx(wendland_eval(family, r, 1) / r).epsilon(1e-13));
      const double dphi = (wendland_phi(family, r + h) - wendland_phi(family, r - h)) / (2 * h);
      CHECK(wendland_phi_deriv(family, r) == doctest::Approx(dphi).epsilon(1e-8));
    }
  }
}

TEST_CASE("kernel_eval basics and symmetry") {
  KernelConfig cfg{WendlandFamily::C2, 3.0, 2};
  const MultiIndex a0 = zero_index(2);
  CHECK(kernel_eval(cfg, v2(0, 0), v2(0, 0), a0, a0) == 1.0);
  // distance 1.5, lengthscale 3 -> r = 0.5
  CHECK(kernel_eval(cfg, v2(0, 0), v2(1.5, 0), a0, a0) == doctest::Approx(0.1875).epsilon(1e-15));
  // first derivative at coincident points vanishes by radial symmetry
  CHECK(kernel_eval(cfg, v2(0.2, 0.1), v2(0.2, 0.1), unit_index(2, 0), a0) == 0.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    const Vec y = v2(u(rng), u(rng));
    const Vec z = v2(u(rng), u(rng));
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        const MultiIndex d1 = i == 0 ? a0 : unit_index(2, i - 1);
        const MultiIndex d2 = j == 0 ? a0 : unit_index(2, j - 1);
        CHECK(kernel_eval(cfg, y, z, d1, d2) == kernel_eval(cfg, z, y, d2, d1));
      }
    }
  }
}

TEST_CASE("kernel_eval derivatives match finite differences") {
  for (const auto family : {WendlandFamily::C2, WendlandFamily::C4}) {
    KernelConfig cfg{family, 2.0, 2};
    const Vec y = v2(0.3, -0.2);
    const Vec z = v2(-0.4, 0.5);
    const double h = 1e-6;
    const MultiIndex a0 = zero_index(2);
    for (int i = 0; i < 2; ++i) {
      Vec yp = y, ym = y;
      yp(i) += h;
      ym(i) -= h;
      const double fd = (kernel_eval(cfg, yp, z, a0, a0) - kernel_eval(cfg, ym, z, a0, a0)) / (2 * h);
      CHECK(kernel_eval(cfg, y, z, unit_index(2, i), a0) == doctest::Approx(fd).epsilon(1e-7));
      for (int j = 0; j < 2; ++j) {
        Vec zp = z, zm = z;
        zp(j) += h;
        zm(j) -= h;
        const double fd2 = (kernel_eval(cfg, y, zp, unit_index(2, i), a0) -
                            kernel_eval(cfg, y, zm, unit_index(2, i), a0)) /
                           (2 * h);
        CHECK(kernel_eval(cfg, y, z, unit_index(2, i), unit_index(2, j)) ==
              doctest::Approx(fd2).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("build_gram structure, duplicates, jitter record") {
  KernelConfig cfg{WendlandFamily::C2, 3.0, 2};

  Mat one(1, 2);
  one << 0.4, -0.2;
  const GramFactorization f1 = build_gram(cfg, one);
  CHECK(f1.size() == 1);
  CHECK(f1.gram(0, 0) == 1.0);
  CHECK(f1.jitter == 0.0);

  // two points at distance >= lengthscale: off-diagonal vanishes
  Mat far(2, 2);
  far << 0.0, 0.0, 3.5, 0.0;
  const GramFactorization f2 = build_gram(cfg, far);
  CHECK(f2.gram(0, 1) == 0.0);
  CHECK(f2.gram(1, 1) == 1.0);

  Mat near(2, 2);
  near << 0.0, 0.0, 1.5, 0.0;
  const GramFactorization f3 = build_gram(cfg, near);
  CHECK(f3.gram(0, 1) == doctest::Approx(0.1875).epsilon(1e-15));

  Mat dup(2, 2);
  dup << 0.1, 0.2, 0.1, 0.2;
  CHECK_THROWS_AS(build_gram(cfg, dup), Error);

  // factorization reconstructs the (jitter-adjusted) Gram matrix
  std::mt19937_64 rng(11);
  const Mat sites = random_sites(12, rng);
  const GramFactorization f4 = build_gram(cfg, sites);
  Mat shifted = f4.gram;
  shifted.diagonal().array() += f4.jitter;
  const Mat l = f4.llt.matrixL();
  CHECK(((l * l.transpose()) - shifted).norm() <= 1e-10 * shifted.norm());
}

TEST_CASE("fit examples") {
  KernelConfig cfg{WendlandFamily::C2, 3.0, 2};
  Mat near(2, 2);
  near << 0.0, 0.0, 1.5, 0.0;
  auto fact = std::make_shared<GramFactorization>(build_gram(cfg, near));

  Vec zero = Vec::Zero(2);
  CHECK(fit(fact, zero).coefficients.norm() == 0.0);

  Vec g(2);
  g << 1.0, 0.0;
  const Interpolant interp = fit(fact, g);
  // 2x2 solve oracle: [[1, .1875], [.1875, 1]] a = [1, 0]
  const double det = 1.0 - 0.1875 * 0.1875;
  CHECK(interp.coefficients(0) == doctest::Approx(1.0 / det).epsilon(1e-12));
  CHECK(interp.coefficients(1) == doctest::Approx(-0.1875 / det).epsilon(1e-12));

  Mat one(1, 2);
  one << 0.0, 0.0;
  auto f1 = std::make_shared<GramFactorization>(build_gram(cfg, one));
  Vec v = Vec::Constant(1, 5.0);
  CHECK(fit(f1, v).coefficients(0) == doctest::Approx(5.0));  // Psi(0) = 1

  CHECK_THROWS_AS(fit(fact, Vec::Zero(3)), Error);
}

TEST_CASE("interp_eval examples and interpolation exactness") {
  KernelConfig cfg{WendlandFamily::C2, 3.0, 2};
  Mat one(1, 2);
  one << 0.0, 0.0;
  auto f1 = std::make_shared<GramFactorization>(build_gram(cfg, one));
  const Interpolant interp = fit(f1, Vec::Constant(1, 2.0));
  // midpoint at r = 0.5 from the sample: 2 * 0.1875
  CHECK(interp_eval(interp, v2(1.5, 0.0)) == doctest::Approx(0.375).epsilon(1e-14));
  // outside the support
  CHECK(interp_eval(interp, v2(3.5, 0.0)) == 0.0);
  CHECK(interp_eval(interp, v2(3.5, 0.0), unit_index(2, 0)) == 0.0);

  std::mt19937_64 rng(5);
  for (int n : {3, 10, 30}) {
    const Mat sites = random_sites(n, rng);
    auto fact = std::make_shared<GramFactorization>(build_gram(cfg, sites));
    Vec g(n);
    for (int i = 0; i < n; ++i) g(i) = std::sin(3.0 * sites(i, 0)) + sites(i, 1);
    const Interpolant it = fit(fact, g);
    for (int i = 0; i < n; ++i) {
      CHECK(std::abs(interp_eval(it, sites.row(i).transpose()) - g(i)) <=
            1e-9 * (1.0 + g.lpNorm<Eigen::Infinity>()));
    }
  }
}

TEST_CASE("interpolant derivatives match finite differences away from the support edge") {
  std::mt19937_64 rng(17);
  for (const auto family : {WendlandFamily::C2, WendlandFamily::C4}) {
    KernelConfig cfg{family, 3.0, 2};
    const Mat sites = random_sites(8, rng);
    auto fact = std::make_shared<GramFactorization>(build_gram(cfg, sites));
    Vec g(8);
    for (int i = 0; i < 8; ++i) g(i) = std::cos(2.0 * sites(i, 0)) * sites(i, 1);
    const Interpolant it = fit(fact, g);
    const Vec y = v2(0.12, -0.07);
    const double h = 1e-5;
    for (int j = 0; j < 2; ++j) {
      Vec yp = y, ym = y;
      yp(j) += h;
      ym(j) -= h;
      const double fd = (interp_eval(it, yp) - interp_eval(it, ym)) / (2 * h);
      const double an = interp_eval(it, y, unit_index(2, j));
      CHECK(an == doctest::Approx(fd).epsilon(1e-4));
    }
  }
  // the C2 interpolant refuses second derivatives
  KernelConfig cfg{WendlandFamily::C2, 3.0, 2};
  const Mat sites = random_sites(4, rng);
  auto fact = std::make_shared<GramFactorization>(build_gram(cfg, sites));
  const Interpolant it = fit(fact, Vec::Ones(4));
  MultiIndex a2 = zero_index(2);
  a2[0] = 2;
  CHECK_THROWS_AS(interp_eval(it, v2(0, 0), a2), Error);
}

TEST_CASE("power function examples") {
  KernelConfig cfg{WendlandFamily::C2, 3.0, 2};
  const MultiIndex a0 = zero_index(2);

  // empty site set
  const GramFactorization empty = build_gram(cfg, Mat(0, 2));
  CHECK(power_function(cfg, empty, v2(0.3, 0.4), a0) == doctest::Approx(1.0));

  Mat one(1, 2);
  one << 0.0, 0.0;
  const GramFactorization f1 = build_gram(cfg, one);
  CHECK(power_function(cfg, f1, v2(0.0, 0.0), a0) <= 1e-7);
  CHECK(power_function(cfg, f1, v2(1.5, 0.0), a0) ==
        doctest::Approx(std::sqrt(1.0 - 0.1875 * 0.1875)).epsilon(1e-12));
}

TEST_CASE("power function monotone under refinement") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  KernelConfig cfg{WendlandFamily::C2, 3.0, 2};
  Mat sites = random_sites(5, rng);
  for (int round = 0; round < 6; ++round) {
    const GramFactorization fact = build_gram(cfg, sites);
    const Vec y_plus = v2(u(rng), u(rng));
    Mat bigger(sites.rows() + 1, 2);
    bigger.topRows(sites.rows()) = sites;
    bigger.bottomRows(1) = y_plus.transpose();
    const GramFactorization fact_plus = build_gram(cfg, bigger);
    for (int probe = 0; probe < 20; ++probe) {
      const Vec y = v2(u(rng), u(rng));
      for (int ai = 0; ai < 3; ++ai) {
        const MultiIndex a = ai == 0 ? zero_index(2) : unit_index(2, ai - 1);
        CHECK(power_function(cfg, fact_plus, y, a) <= power_function(cfg, fact, y, a) + 1e-10);
      }
    }
    sites = bigger;
  }
}

TEST_CASE("rkhs norm examples and projection growth") {
  Mat one(1, 2);
  one << 0.0, 0.0;
  {
    KernelConfig cfg{WendlandFamily::C2, 3.0, 2};
    auto f = std::make_shared<GramFactorization>(build_gram(cfg, one));
    CHECK(rkhs_norm(fit(f, Vec::Constant(1, -4.0))) == doctest::Approx(4.0));
    CHECK(rkhs_norm(fit(f, Vec::Zero(1))) == 0.0);
  }
  {
    KernelConfig cfg{WendlandFamily::C4, 3.0, 2};
    auto f = std::make_shared<GramFactorization>(build_gram(cfg, one));
    CHECK(rkhs_norm(fit(f, Vec::Constant(1, 2.0))) == doctest::Approx(2.0 / std::sqrt(3.0)));
  }

  // interpolating more samples of a fixed function cannot shrink the norm
  KernelConfig cfg{WendlandFamily::C2, 3.0, 2};
  std::mt19937_64 rng(31);
  auto target = [](const Vec& y) { return std::sin(2.0 * y(0)) + 0.3 * y(1) * y(1); };
  Mat sites = random_sites(6, rng);
  Mat bigger = random_sites(12, rng);
  bigger.topRows(6) = sites;
  auto norm_of = [&](const Mat& s) {
    auto f = std::make_shared<GramFactorization>(build_gram(cfg, s));
    Vec g(s.rows());
    for (int i = 0; i < s.rows(); ++i) g(i) = target(s.row(i).transpose());
    return rkhs_norm(fit(f, g));
  };
  CHECK(norm_of(sites) <= norm_of(bigger) + 1e-10);
}

TEST_CASE("rank-one power update matches refactorization") {
  KernelConfig cfg{WendlandFamily::C4, 3.0, 2};
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const Mat sites = random_sites(7, rng);
  const GramFactorization fact = build_gram(cfg, sites);
  const Vec y_plus = v2(u(rng), u(rng));
  Mat bigger(8, 2);
  bigger.topRows(7) = sites;
  bigger.bottomRows(1) = y_plus.transpose();
  const GramFactorization fact_plus = build_gram(cfg, bigger);

  const PowerUpdate upd = prepare_power_update(cfg, fact, y_plus);
  for (int rep = 0; rep < 25; ++rep) {
    const Vec y = v2(u(rng), u(rng));
    for (int ai = 0; ai < 3; ++ai) {
      const MultiIndex a = ai == 0 ? zero_index(2) : unit_index(2, ai - 1);
      const Vec v = fact.kernel_vector(y, a);
      const double base_sq = kernel_diag(cfg, a) - v.dot(fact.solve(v));
      const double upd_sq = updated_power_sq(upd, std::max(0.0, base_sq),
                                             kernel_deriv1(cfg, y, y_plus, a), v.dot(upd.c));
      CHECK(std::sqrt(upd_sq) == doctest::Approx(power_function(cfg, fact_plus, y, a)).epsilon(1e-8));
    }
  }

  // degenerate trial on an existing site leaves the power function unchanged
  const PowerUpdate dup = prepare_power_update(cfg, fact, sites.row(2).transpose());
  CHECK(dup.degenerate);
  CHECK(updated_power_sq(dup, 0.25, 0.1, 0.2) == 0.25);
}
