#pragma once

// Matérn and Gaussian covariance kernels and kernel-matrix assembly.
//
//   Phi_nu(r) = sigma^2 c(nu) z^nu K_nu(z),   z = sqrt(2 nu) r / lambda
//
// evaluated in log space so orders in the hundreds stay finite.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "maternest/designs.hpp"

namespace maternest {

/// Normalisation c(nu) of the Matérn family.
///   Standard:    c = 2^{1-nu} / Gamma(nu)  (so Phi(0) = sigma^2)
///   Clamped(d):  Standard for nu >= d/2, frozen at its nu = d/2 value below,
///                which keeps c bounded away from 0 as nu -> 0.
struct ScalingPolicy {
  enum class Kind { Standard, Clamped };
  Kind kind = Kind::Clamped;
  std::size_t d = 1;

  static ScalingPolicy standard() { return {Kind::Standard, 1}; }
  static ScalingPolicy clamped(std::size_t dim) { return {Kind::Clamped, dim}; }
};

struct MaternParams {
  double nu = 1.5;
  double sigma = 1.0;
  double lambda = 1.0;
  ScalingPolicy scaling{};

  void validate() const;
};

struct GaussParams {
  double sigma = 1.0;
  double lambda = 1.0;

  void validate() const;
};

double c_scaling(const ScalingPolicy& policy, double nu);
double log_c_scaling(const ScalingPolicy& policy, double nu);

/// Phi_nu(r); r = 0 returns the analytic limit sigma^2 c 2^{nu-1} Gamma(nu).
double matern_eval(const MaternParams& p, double r);
double log_matern_eval(const MaternParams& p, double r);

/// Scaled Gaussian sigma^2 (lambda^2 / 2 pi)^{d/2} exp(-r^2 / 2 lambda^2).
double gaussian_eval(const GaussParams& p, double r, std::size_t d);
/// sigma^2 exp(-r^2 / 2 lambda^2).
double gaussian_unit_eval(const GaussParams& p, double r);

/// A stationary isotropic kernel r -> k(r) with a label for reports.
class Kernel {
 public:
  using Radial = std::function<double(double)>;

  Kernel() = default;
  Kernel(Radial radial, std::string label)
      : radial_(std::make_shared<Radial>(std::move(radial))), label_(std::move(label)) {}

  static Kernel matern(const MaternParams& p);
  static Kernel gaussian(const GaussParams& p, std::size_t d);
  static Kernel gaussian_unit(const GaussParams& p);

  double operator()(double r) const { return (*radial_)(r); }
  double operator()(std::span<const double> x, std::span<const double> y) const {
    return (*radial_)(distance(x, y));
  }
  const std::string& label() const { return label_; }
  bool valid() const { return static_cast<bool>(radial_); }

 private:
  std::shared_ptr<const Radial> radial_;
  std::string label_;
};

/// n x n matrix K(x_i, x_j). The upper triangle is computed and mirrored,
/// and values are shared between equal distances (grids and dyadic
/// sequences repeat distances heavily). Throws DegenerateDesignError when
/// two points coincide.
Eigen::MatrixXd kernel_matrix(const Kernel& k, const Design& points);

/// m x n matrix K(a_i, b_j).
Eigen::MatrixXd cross_kernel_matrix(const Kernel& k, const Design& a, const Design& b);

/// Column K(X, x).
Eigen::VectorXd kernel_vector(const Kernel& k, const Design& points, std::span<const double> x);

}  // namespace maternest
