#pragma once

// Test functions, Fourier-side norms, GP sample paths and rate fitting.
//
// Fourier convention: F(xi) = int f(x) e^{-i x xi} dx, hence
// f(x) = (2 pi)^{-1} int F(xi) e^{i xi x} dxi. All catalog transforms are
// real and even, and the quadratures below rely on that.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "maternest/designs.hpp"
#include "maternest/kernels.hpp"

namespace maternest {

struct TestFunction {
  std::function<double(std::span<const double>)> evaluator;
  /// Real, even transform; empty when no closed form is known (d = 1 only).
  std::function<double(double)> fourier;
  /// ln |F(xi)|, used by the norm quadratures where F itself underflows.
  std::function<double(double)> log_abs_fourier;
  /// Declared smoothness; +inf for infinitely smooth functions.
  std::optional<double> smoothness;
  std::string label;

  double operator()(std::span<const double> x) const { return evaluator(x); }
  double operator()(double x) const { return evaluator(std::span<const double>(&x, 1)); }
  bool has_fourier() const { return static_cast<bool>(fourier); }
};

/// Composite Gauss-Legendre on [0, truncation] (integrands are even).
struct QuadratureConfig {
  double truncation = 200.0;
  /// Nodes per unit interval, rounded up to whole 16-point panels.
  int nodes = 32;
  /// Allowed size of the outermost unit strip relative to the total.
  double tail_bound = 1e-10;
};

/// ||f||^2 in the Matérn RKHS (d = 1):
///   C_nu (2 pi)^{-2} int |F|^2 (2 nu / lambda^2 + xi^2)^{nu + 1/2} dxi
///   C_nu = pi^{1/2} (lambda^2 / 2 nu)^nu / (sigma^2 c(nu) 2^{nu-1} Gamma(nu + 1/2))
/// Throws AccuracyError when the tail strip exceeds the bound.
double matern_rkhs_norm_sq(const TestFunction& tf, const MaternParams& p,
                           const QuadratureConfig& q = {});

/// The same weight without C_nu and the (2 pi)^{-2}: int |F|^2 (2 nu / lambda^2 + xi^2)^{nu+1/2}.
double matern_norm_integral(const TestFunction& tf, const MaternParams& p,
                            const QuadratureConfig& q = {});

/// Sobolev norm of order alpha with the normalisation of matern_rkhs_norm_sq:
///   (2 pi)^{-2} int |F|^2 (1 + xi^2)^alpha dxi
double sobolev_norm_sq(const TestFunction& tf, double alpha, const QuadratureConfig& q = {});

struct GaussianNorm {
  /// (2 pi)^{-1} (2 pi lambda^2)^{-1/2} int |F|^2 exp(lambda^2 xi^2 / 2), the
  /// squared norm in the RKHS of the unit-amplitude Gaussian kernel.
  double norm_sq = 0.0;
  /// The bare integral int |F|^2 exp(lambda^2 xi^2 / 2) dxi.
  double membership_integral = 0.0;
  /// The integrand tail grows with the truncation: f is not in the RKHS.
  bool diverged = false;
};

GaussianNorm gaussian_rkhs_norm_sq(const TestFunction& tf, double lambda,
                                   const QuadratureConfig& q = {});

/// (2 pi)^{-1} int F(xi) cos(xi x) dxi over [-truncation, truncation].
double inverse_fourier(const TestFunction& tf, double x, const QuadratureConfig& q = {});

/// e * exp(-1 / (1 - |(x - c)/h|^2)) inside the ball of radius h, 0 outside;
/// equals 1 at the centre.
TestFunction bump_function(std::vector<double> center, double h);

/// 1 / (1/4 + x^2), F = 2 pi e^{-|xi|/2}.
TestFunction cauchy_like();
/// (2 sqrt(pi))^{-1} e^{-x^2/4}, F = e^{-xi^2}.
TestFunction gauss_bump();

/// cauchy_like, gauss_bump and the unit bump centred at 0.
std::vector<TestFunction> builtin_test_functions();
/// Catalog lookup; "bump" is the unit bump at the origin of R^d.
TestFunction test_function_by_label(const std::string& label, std::size_t d = 1);

/// Standard normal number depending only on (seed, index).
double standard_normal(std::uint64_t seed, std::uint64_t index);

/// y = L z on the design, z_i = standard_normal(seed, i). Because L of a
/// prefix is the leading block of L, the first m values do not depend on
/// points after m.
Eigen::VectorXd sample_gp_path(const MaternParams& p, const Design& design, std::uint64_t seed);
/// One column per seed, sharing the factorization.
Eigen::MatrixXd sample_gp_paths(const MaternParams& p, const Design& design,
                                const std::vector<std::uint64_t>& seeds);

/// A frozen draw usable as a test function on its own design points.
struct FrozenPath {
  Design design;
  Eigen::VectorXd values;
  std::uint64_t checksum = 0;  // FNV-1a over the value bytes
  TestFunction function;       // throws DomainError off the design
};
FrozenPath frozen_matern_path(const MaternParams& p, const Design& design, std::uint64_t seed);
std::uint64_t checksum(const Eigen::VectorXd& values);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Least-squares line through (ln n, ln value).
RateFit fit_rate(const std::vector<double>& ns, const std::vector<double>& values);

}  // namespace maternest
