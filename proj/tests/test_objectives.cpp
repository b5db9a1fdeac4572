#include <cmath>
#include <vector>

#include "doctest.h"
#include "maternest/analysis.hpp"
#include "maternest/errors.hpp"
#include "maternest/objectives.hpp"
#include "oracles.hpp"

using namespace maternest;

namespace {

MaternParams matern(double nu, double sigma = 1.0, double lambda = 0.2) {
  MaternParams p;
  p.nu = nu;
  p.sigma = sigma;
  p.lambda = lambda;
  p.scaling = ScalingPolicy::clamped(1);
  return p;
}

Eigen::VectorXd normals(std::size_t n, std::uint64_t seed) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) y(static_cast<Eigen::Index>(i)) = standard_normal(seed, i);
  return y;
}

Design line(std::vector<double> xs) { return Design(Box::unit(1), std::move(xs)); }

}  // namespace

TEST_CASE("ell_ml examples") {
  const Design x = van_der_corput_sequence(Box::unit(1), 10);
  const MaternParams p = matern(1.5);
  const ObjectiveValue z = ell_ml(p, x, Eigen::VectorXd::Zero(10));
  CHECK(z.data_term == 0.0);
  CHECK(z.total == z.complexity_term);
  CHECK(z.complexity_term ==
        doctest::Approx(oracles::dense_log_det(kernel_matrix(Kernel::matern(p), x))).epsilon(1e-10));

  const MaternParams q = matern(2.5, 1.7);
  const double s2 = matern_eval(q, 0.0);
  const ObjectiveValue one = ell_ml(q, line({0.3}), Eigen::VectorXd::Constant(1, 0.8));
  CHECK(one.total == doctest::Approx(0.64 / s2 + std::log(s2)).epsilon(1e-14));

  const Eigen::VectorXd y = normals(10, 3);
  const Eigen::MatrixXd K = kernel_matrix(Kernel::matern(p), x);
  const ObjectiveValue v = ell_ml(p, x, y);
  CHECK(v.data_term == doctest::Approx(y.dot(oracles::dense_solve(K, y))).epsilon(1e-8));
  CHECK(v.complexity_term == doctest::Approx(oracles::dense_log_det(K)).epsilon(1e-8));
  CHECK(v.total == v.data_term + v.complexity_term);
}

TEST_CASE("ell_cv examples") {
  const Design x = van_der_corput_sequence(Box::unit(1), 12);
  const MaternParams p = matern(0.5);
  const Kernel k = Kernel::matern(p);
  const ObjectiveValue z = ell_cv(p, x, Eigen::VectorXd::Zero(12));
  const LooResult l = loo(condition(k, x, Eigen::VectorXd::Zero(12)));
  CHECK(z.data_term == 0.0);
  CHECK(z.total == doctest::Approx(l.variances.array().log().sum()).epsilon(1e-13));

  // Against naive refits.
  const Eigen::VectorXd y = normals(12, 9);
  double data = 0.0;
  double logv = 0.0;
  for (std::size_t i = 0; i < 12; ++i) {
    std::vector<double> rest;
    Eigen::VectorXd yr(11);
    Eigen::Index m = 0;
    for (std::size_t j = 0; j < 12; ++j) {
      if (j == i) continue;
      rest.push_back(x.point(j)[0]);
      yr(m++) = y(static_cast<Eigen::Index>(j));
    }
    const Posterior post = condition(k, line(rest), yr);
    const double r = y(static_cast<Eigen::Index>(i)) - posterior_mean(post, x.point(i));
    const double v = posterior_var(post, x.point(i));
    data += r * r / v;
    logv += std::log(v);
  }
  const ObjectiveValue cv = ell_cv(p, x, y);
  CHECK(std::abs(cv.total - (data + logv)) <= 1e-7 * std::max(1.0, std::abs(cv.total)));

  // Symmetric two-point design with symmetric data: both terms equal.
  const Posterior sym = condition(k, line({0.2, 0.8}), Eigen::Vector2d(0.5, 0.5));
  const LooResult s = loo(sym);
  CHECK(s.residuals(0) * s.residuals(0) / s.variances(0) ==
        doctest::Approx(s.residuals(1) * s.residuals(1) / s.variances(1)).epsilon(1e-14));
  CHECK_THROWS_AS(ell_cv(p, line({0.5}), Eigen::VectorXd::Ones(1)), DomainError);
}

TEST_CASE("scaling y rescales only the data term") {
  const Design x = van_der_corput_sequence(Box::unit(1), 16);
  const MaternParams p = matern(1.5);
  const Eigen::VectorXd y = normals(16, 12);
  const ObjectiveValue base = ell_ml(p, x, y);
  const ObjectiveValue base_cv = ell_cv(p, x, y);
  for (double c : {0.0, 2.0, -1.0}) {
    const ObjectiveValue v = ell_ml(p, x, (c * y).eval());
    CHECK(v.complexity_term == base.complexity_term);
    CHECK(std::abs(v.data_term - c * c * base.data_term) <= 1e-10 * base.data_term);
    const ObjectiveValue w = ell_cv(p, x, (c * y).eval());
    CHECK(w.complexity_term == base_cv.complexity_term);
    CHECK(std::abs(w.data_term - c * c * base_cv.data_term) <= 1e-10 * base_cv.data_term);
  }
}

TEST_CASE("conditioning failures carry the cell") {
  std::vector<double> xs;
  for (int i = 0; i < 50; ++i) xs.push_back(i / 49.0);
  const MaternParams p = matern(14.0, 1.0, 3.0);
  try {
    (void)ell_ml(p, line(xs), Eigen::VectorXd::Zero(50));
    FAIL("expected ConditioningError");
  } catch (const ConditioningError& e) {
    const std::string what = e.what();
    CHECK(what.find("nu=") != std::string::npos);
    CHECK(what.find("n=50") != std::string::npos);
  }
}

TEST_CASE("evaluate_objective dispatches") {
  const Design x = van_der_corput_sequence(Box::unit(1), 8);
  const Kernel k = Kernel::matern(matern(1.0));
  const Eigen::VectorXd y = normals(8, 4);
  CHECK(evaluate_objective(Objective::ML, k, x, y).total == ell_ml(k, x, y).total);
  CHECK(evaluate_objective(Objective::CV, k, x, y).total == ell_cv(k, x, y).total);
  CHECK(std::string(to_string(Objective::ML)) == "ML");
  CHECK(std::string(to_string(Objective::CV)) == "CV");
}

TEST_CASE("variance ratio profile") {
  const Design x = van_der_corput_sequence(Box::unit(1), 64);
  const MaternParams base = matern(1.0, 1.0, 0.2);
  const auto prof = variance_ratio_profile(1.5, {0.5, 1.0, 1.5}, x, VarianceProbe::LOO, base, {1, 16, 32, 64});
  REQUIRE(prof.ratios.rows() == 3);
  REQUIRE(prof.ratios.cols() == 4);
  // nu = nu0 gives exactly 1.
  for (Eigen::Index b = 0; b < 4; ++b) CHECK(prof.ratios(2, b) == doctest::Approx(1.0).epsilon(1e-12));
  // n = 1: prior variances.
  MaternParams p0 = base;
  p0.nu = 1.5;
  MaternParams p1 = base;
  p1.nu = 0.5;
  CHECK(prof.ratios(0, 0) == doctest::Approx(matern_eval(p0, 0.0) / matern_eval(p1, 0.0)).epsilon(1e-12));
  // nu < nu0: the ratio falls with n.
  for (Eigen::Index b = 2; b < 4; ++b) CHECK(prof.ratios(0, b) < prof.ratios(0, b - 1));

  const auto seq = variance_ratio_profile(1.5, {0.5, 1.5}, x, VarianceProbe::Sequential, base, {8, 64});
  CHECK(seq.ratios(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
  // Sequential prefixes are nested, so the maximum can only grow with n.
  CHECK(seq.ratios(0, 1) >= seq.ratios(0, 0));
}

TEST_CASE("likelihood inequality with a computable norm") {
  // l_ML(nu0) <= l_ML(nu) + ||f||^2_{nu0} + sum_i ln[V_{nu0}(x_i|X_{i-1}) / V_nu(x_i|X_{i-1})]
  const TestFunction f = gauss_bump();
  const Design x = van_der_corput_sequence(Box::unit(1), 24);
  Eigen::VectorXd y(24);
  for (std::size_t i = 0; i < 24; ++i) y(static_cast<Eigen::Index>(i)) = f(x.point(i));
  for (double nu0 : {0.5, 1.5, 2.5}) {
    const MaternParams p0 = matern(nu0, 1.0, 0.5);
    const double norm_sq = matern_rkhs_norm_sq(f, p0);
    const Eigen::VectorXd v0 = incremental_variances(Kernel::matern(p0), x);
    const double l0 = ell_ml(p0, x, y).total;
    for (double nu : {0.3, 1.0, 2.0, 4.0}) {
      const MaternParams p = matern(nu, 1.0, 0.5);
      const Eigen::VectorXd v = incremental_variances(Kernel::matern(p), x);
      const double rhs = ell_ml(p, x, y).total + norm_sq + (v0.array() / v.array()).log().sum();
      CHECK(l0 <= rhs + 1e-5 * std::max(1.0, std::abs(rhs)));
    }
  }
}
