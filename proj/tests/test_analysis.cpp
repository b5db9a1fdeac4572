#include <cmath>
#include <fstream>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "maternest/analysis.hpp"
#include "maternest/errors.hpp"

using namespace maternest;

namespace {

constexpr double kPi = std::numbers::pi;

MaternParams standard(double nu, double lambda = std::sqrt(2.0)) {
  MaternParams p;
  p.nu = nu;
  p.lambda = lambda;
  p.scaling = ScalingPolicy::standard();
  return p;
}

// The weighted integral with C_nu in front and no (2 pi)^{-2}.
double unnormalised_norm(const TestFunction& f, const MaternParams& p) {
  return 4.0 * kPi * kPi * matern_rkhs_norm_sq(f, p);
}

TestFunction zero() { return test_function_by_label("zero"); }

}  // namespace

TEST_CASE("catalog values") {
  CHECK(cauchy_like()(0.0) == 4.0);
  CHECK(gauss_bump()(0.0) == doctest::Approx(0.28209479177).epsilon(1e-10));
  const auto cat = builtin_test_functions();
  REQUIRE(cat.size() == 3);
  CHECK(cat[0].label == "cauchy_like");
  CHECK(cat[1].label == "gauss_bump");
  CHECK(cat[2].label == "bump");
  CHECK_THROWS_AS(test_function_by_label("nope"), DomainError);
  CHECK_THROWS_AS(test_function_by_label("gauss_bump", 2), DomainError);
  CHECK(test_function_by_label("bump", 2)(std::vector<double>{0.0, 0.0}) == 1.0);
}

TEST_CASE("transforms invert to the evaluators") {
  for (const TestFunction& f : {cauchy_like(), gauss_bump()}) {
    for (int i = 0; i < 10; ++i) {
      const double x = -3.0 + 0.6 * i;
      CHECK(std::abs(inverse_fourier(f, x) - f(x)) <= 1e-6);
    }
  }
}

TEST_CASE("bump values") {
  const TestFunction b = bump_function({0.3}, 0.5);
  CHECK(b(0.3) == 1.0);
  CHECK(b(0.8) == 0.0);
  CHECK(b(-0.2) == 0.0);
  CHECK(b(0.55) == doctest::Approx(std::exp(-1.0 / 3.0)).epsilon(1e-14));
  CHECK(b(0.55) == doctest::Approx(0.7165).epsilon(1e-4));
  CHECK(std::isinf(*b.smoothness));
  CHECK_THROWS_AS(bump_function({0.0}, 0.0), DomainError);
  const TestFunction b2 = bump_function({0.0, 0.0}, 1.0);
  CHECK(b2(std::vector<double>{0.5, 0.0}) == doctest::Approx(std::exp(-1.0 / 3.0)));
  CHECK_THROWS_AS(b2(0.1), DomainError);
}

TEST_CASE("cauchy_like norms exceed the closed-form lower bound") {
  for (double nu : {1.0, 2.0, 4.0}) {
    const double bound = 2.0 * std::sqrt(kPi) * std::tgamma(nu) * std::tgamma(2.0 * nu + 2.0) /
                         std::tgamma(nu + 0.5) * std::pow(nu, -nu);
    CHECK(unnormalised_norm(cauchy_like(), standard(nu)) >= bound);
  }
}

TEST_CASE("gauss_bump norms stay bounded as the order grows") {
  for (double nu : {20.0, 50.0, 100.0}) {
    const double v = matern_rkhs_norm_sq(gauss_bump(), standard(nu));
    CHECK(unnormalised_norm(gauss_bump(), standard(nu)) <= kPi * 1.05);
    CHECK(v <= 1.05 / (4.0 * kPi));
  }
  // The limit is approached from above.
  CHECK(unnormalised_norm(gauss_bump(), standard(100.0)) == doctest::Approx(kPi).epsilon(0.01));
}

TEST_CASE("Gaussian RKHS membership") {
  const GaussianNorm g = gaussian_rkhs_norm_sq(gauss_bump(), std::sqrt(2.0));
  CHECK_FALSE(g.diverged);
  CHECK(std::abs(g.membership_integral - std::sqrt(kPi)) <= 1e-6);
  CHECK(g.norm_sq == doctest::Approx(std::sqrt(kPi) / (2.0 * kPi * std::sqrt(4.0 * kPi))).epsilon(1e-9));
  const GaussianNorm c = gaussian_rkhs_norm_sq(cauchy_like(), std::sqrt(2.0));
  CHECK(c.diverged);
  CHECK(std::isinf(c.norm_sq));
  const GaussianNorm z = gaussian_rkhs_norm_sq(zero(), 1.0);
  CHECK_FALSE(z.diverged);
  CHECK(z.norm_sq == 0.0);
}

TEST_CASE("zero function has zero norms") {
  CHECK(matern_rkhs_norm_sq(zero(), standard(1.5)) == 0.0);
  CHECK(sobolev_norm_sq(zero(), 2.0) == 0.0);
}

TEST_CASE("norm argument errors") {
  CHECK_THROWS_AS(matern_rkhs_norm_sq(bump_function({0.0}, 1.0), standard(1.0)), DomainError);
  QuadratureConfig q;
  q.truncation = 5.0;
  // cauchy_like still carries visible mass at |xi| = 5.
  CHECK_THROWS_AS(matern_rkhs_norm_sq(cauchy_like(), standard(1.0), q), AccuracyError);
  q.truncation = 200.0;
  q.nodes = 0;
  CHECK_THROWS_AS(matern_rkhs_norm_sq(cauchy_like(), standard(1.0), q), DomainError);
}

TEST_CASE("doubling nodes does not move the norm") {
  QuadratureConfig fine;
  fine.nodes *= 2;
  for (const TestFunction& f : {cauchy_like(), gauss_bump()}) {
    for (double nu : {0.5, 1.5, 4.0}) {
      const MaternParams p = standard(nu, 0.5);
      const double a = matern_rkhs_norm_sq(f, p);
      const double b = matern_rkhs_norm_sq(f, p, fine);
      CHECK(std::abs(a - b) <= 1e-6 * a);
    }
  }
}

TEST_CASE("cauchy_like norm increases with the order") {
  double prev = 0.0;
  for (double nu : {1.0, 2.0, 4.0, 8.0}) {
    const double v = matern_rkhs_norm_sq(cauchy_like(), standard(nu, 1.0));
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("Matérn norm sits between the Sobolev bounds") {
  for (double lambda : {0.3, 1.0, 3.0}) {
    for (double nu : {0.5, 1.5}) {
      const MaternParams p = standard(nu, lambda);
      const double norm = matern_rkhs_norm_sq(gauss_bump(), p);
      const double c_nu = norm / (matern_norm_integral(gauss_bump(), p) / (4.0 * kPi * kPi));
      const double sob = sobolev_norm_sq(gauss_bump(), nu + 0.5);
      const double c = std::pow(2.0 * nu / (lambda * lambda), nu + 0.5);
      CHECK(c_nu * sob * std::min(1.0, c) <= norm * (1.0 + 1e-12));
      CHECK(norm <= c_nu * sob * std::max(1.0, c) * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("sample paths: Monte Carlo moments") {
  MaternParams p;
  p.nu = 1.5;
  p.sigma = 1.3;
  p.lambda = 0.4;
  p.scaling = ScalingPolicy::standard();
  const Design x(Box::unit(1), {0.2, 0.5});
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 10000; ++s) seeds.push_back(s);
  const Eigen::MatrixXd Y = sample_gp_paths(p, x, seeds);
  const double var = Y.row(0).squaredNorm() / 10000.0;
  const double cov = Y.row(0).dot(Y.row(1)) / 10000.0;
  CHECK(var == doctest::Approx(1.69).epsilon(0.05));
  CHECK(cov == doctest::Approx(matern_eval(p, 0.3)).epsilon(0.05));
}

TEST_CASE("sample paths are nested and deterministic") {
  MaternParams p;
  p.nu = 2.5;
  p.lambda = 0.2;
  p.scaling = ScalingPolicy::clamped(2);
  const Design g = uniform_grid(Box::unit(2), 9);
  const Eigen::VectorXd full = sample_gp_path(p, g, 11);
  for (std::size_t m : {1u, 4u, 25u, 60u}) {
    const Eigen::VectorXd part = sample_gp_path(p, g.prefix(m), 11);
    CHECK((part - full.head(static_cast<Eigen::Index>(m))).cwiseAbs().maxCoeff() <= 1e-12);
  }
  CHECK(sample_gp_path(p, g, 11) == full);
  CHECK(sample_gp_path(p, g, 12) != full);
  CHECK(standard_normal(5, 9) == standard_normal(5, 9));
  CHECK(standard_normal(5, 9) != standard_normal(9, 5));
}

TEST_CASE("frozen path matches the shipped file") {
  MaternParams p;
  p.nu = 1.5;
  p.lambda = 0.2;
  p.scaling = ScalingPolicy::clamped(1);
  const FrozenPath fp = frozen_matern_path(p, van_der_corput_sequence(Box::unit(1), 64), 1);
  CHECK(fp.checksum == 17065765991488394773ULL);
  std::ifstream in(std::string(MATERNEST_TEST_DATA) + "/frozen_path_nu1.5_seed1.txt");
  REQUIRE(in.good());
  const DesignFile file = read_design(in, Box::unit(1));
  REQUIRE(file.values.has_value());
  CHECK(file.design.coords() == fp.design.coords());
  const Eigen::VectorXd shipped = Eigen::Map<const Eigen::VectorXd>(file.values->data(), 64);
  CHECK(checksum(shipped) == fp.checksum);
  CHECK(fp.function(fp.design.point(3)) == fp.values(3));
  CHECK(*fp.function.smoothness == 1.5);
  CHECK_THROWS_AS(fp.function(0.123), DomainError);
}

TEST_CASE("fit_rate examples") {
  const std::vector<double> ns{16, 32, 64, 128, 256};
  std::vector<double> sq;
  std::vector<double> flat;
  std::vector<double> noisy;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    sq.push_back(1.0 / (ns[i] * ns[i]));
    flat.push_back(0.7);
    noisy.push_back(3.0 * std::pow(ns[i], -1.5) * (1.0 + 0.01 * standard_normal(3, i)));
  }
  CHECK(std::abs(fit_rate(ns, sq).slope + 2.0) <= 1e-12);
  CHECK(fit_rate(ns, sq).r_squared == doctest::Approx(1.0));
  CHECK(std::abs(fit_rate(ns, flat).slope) <= 1e-14);
  const RateFit r = fit_rate(ns, noisy);
  CHECK(std::abs(r.slope + 1.5) <= 0.05);
  CHECK(std::exp(r.intercept) == doctest::Approx(3.0).epsilon(0.1));
  CHECK_THROWS_AS(fit_rate({1, 2}, {1, 2}), DomainError);
  CHECK_THROWS_AS(fit_rate({1, 2, 3}, {1, 0, 2}), DomainError);
  CHECK_THROWS_AS(fit_rate({4, 4, 4}, {1, 2, 3}), DomainError);
}
