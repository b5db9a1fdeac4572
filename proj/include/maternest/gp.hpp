#pragma once

// Noiseless GP conditioning on a single Cholesky factor.
//
// Everything here is exact linear algebra on K = K_theta(X_n): no nugget,
// no jitter. A pivot that is not positive surfaces as ConditioningError.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "maternest/designs.hpp"
#include "maternest/errors.hpp"
#include "maternest/kernels.hpp"

namespace maternest {

/// Lower factor L with L L^T = K. Throws ConditioningError naming the
/// first pivot that is not positive.
Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& K);

/// Factor of the largest leading block of K that factorizes. The factor of
/// any leading block of K is the matching block of the full factor, so
/// L here serves every prefix n <= valid.
struct PartialCholesky {
  Eigen::MatrixXd L;  // valid x valid
  std::size_t valid = 0;
  double failed_pivot = 0.0;  // meaningful when valid < K.rows()
};
PartialCholesky partial_cholesky(const Eigen::MatrixXd& K);

class Posterior {
 public:
  /// Conditions on (design, y). An empty design is allowed and gives the
  /// prior.
  Posterior(Kernel kernel, Design design, Eigen::VectorXd y);

  const Kernel& kernel() const { return kernel_; }
  const Design& design() const { return design_; }
  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::MatrixXd& chol() const { return L_; }
  const Eigen::VectorXd& weights() const { return w_; }
  std::size_t size() const { return design_.size(); }

  /// K^{-1} b through the factor.
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  /// Explicit K^{-1}.
  Eigen::MatrixXd inverse() const;

 private:
  Kernel kernel_;
  Design design_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd L_;
  Eigen::VectorXd w_;
};

Posterior condition(const Kernel& kernel, const Design& design, const Eigen::VectorXd& y);

double posterior_mean(const Posterior& post, std::span<const double> x);
/// K(x,x) - |L^{-1} K(X,x)|^2. Negative values within 1e-12 K(x,x) are
/// rounding and return 0; anything below that throws ConditioningError.
double posterior_var(const Posterior& post, std::span<const double> x);

/// Batched over the rows of a probe design.
Eigen::VectorXd posterior_mean(const Posterior& post, const Design& probes);
Eigen::VectorXd posterior_var(const Posterior& post, const Design& probes);

/// V(x_i | X_{i-1}) for i = 1..n, grown one point at a time by bordering
/// the factor: each step solves against the current factor and appends a
/// row, O(n^3) overall.
Eigen::VectorXd incremental_variances(const Kernel& kernel, const Design& design);

struct LooResult {
  Eigen::VectorXd residuals;  // y_i - mu(x_i | X without x_i)
  Eigen::VectorXd variances;  // V(x_i | X without x_i)
};

/// Closed forms residual_i = (K^{-1}y)_i / (K^{-1})_ii and
/// variance_i = 1 / (K^{-1})_ii. Needs n >= 2.
LooResult loo(const Posterior& post);

double log_det(const Posterior& post);
/// y^T K^{-1} y.
double quadratic_form(const Posterior& post);

struct SequentialExpansion {
  Eigen::VectorXd residuals;  // y_i - mu(x_i | X_{i-1})
  Eigen::VectorXd variances;  // V(x_i | X_{i-1})
};
SequentialExpansion sequential_expansion(const Kernel& kernel, const Design& design,
                                         const Eigen::VectorXd& y);

/// (1/n) tr[K0 K1^{-1}].
double trace_ratio(const Kernel& k0, const Kernel& k1, const Design& design);

/// Likelihood and LOO quantities for every prefix of a design from one
/// factorization of the longest prefix. Columns of Y are independent data
/// vectors on the same design (e.g. several seeds).
struct PrefixStats {
  std::size_t n = 0;
  double log_det = 0.0;
  Eigen::VectorXd quad;     // y^T K_n^{-1} y per column
  Eigen::VectorXd cv_data;  // sum_i r_i^2 / v_i per column (LOO)
  double cv_log_var = 0.0;  // sum_i ln v_i (LOO)
  double max_loo_var = 0.0;
  double last_incremental_var = 0.0;  // V(x_n | X_{n-1})
};

class PrefixFactorization {
 public:
  PrefixFactorization(const Kernel& kernel, const Design& design, std::size_t n_max);

  /// Longest prefix that factorized.
  std::size_t valid() const { return part_.valid; }
  std::size_t requested() const { return n_max_; }
  double failed_pivot() const { return part_.failed_pivot; }

  /// One entry per schedule size; empty where n exceeds valid().
  /// Y has at least max(schedule) rows.
  std::vector<std::optional<PrefixStats>> evaluate(const Eigen::MatrixXd& Y,
                                                   const std::vector<std::size_t>& schedule) const;

 private:
  std::size_t n_max_;
  PartialCholesky part_;
};

}  // namespace maternest
