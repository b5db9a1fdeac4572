#pragma once

// Derivative-free minimisation of l_ML / l_CV over a scalar kernel parameter
// (the Matérn smoothness, or a length-scale) on a bounded bracket.
//
// Search: a log-spaced coarse grid, then golden-section refinement on the
// bracketing triple around the best cell. Ties go to the larger parameter.
// If large parameters fail to factorize, the bracket is cut at the
// conditioning boundary (located by bisection) and the cut is reported.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "maternest/designs.hpp"
#include "maternest/kernels.hpp"
#include "maternest/objectives.hpp"

namespace maternest {

enum class SigmaMode { Fixed, ProfiledPerNu };

struct EstimatorConfig {
  double nu_min = 0.05;
  double nu_max = 15.0;
  int coarse_grid = 60;
  double refine_tol = 1e-3;
  Objective objective = Objective::ML;
  SigmaMode sigma_mode = SigmaMode::Fixed;
  double sigma_fixed = 1.0;
  double lambda_fixed = 1.0;
  /// Unset means Clamped(d) with d taken from the design.
  std::optional<ScalingPolicy> scaling;
  int threads = 1;

  void validate() const;
};

struct EstimateFailure {
  double theta = 0.0;
  std::string reason;
};

struct NuEstimate {
  double nu_hat = 0.0;
  double objective_at_min = 0.0;
  ObjectiveValue decomposition;
  /// nu_hat within refine_tol of the effective upper end of the bracket.
  bool hit_upper_bracket = false;
  std::size_t evaluations = 0;
  std::vector<EstimateFailure> failures;
  /// nu_max, or the largest value found to factorize when large values fail.
  double effective_nu_max = 0.0;
  bool bracket_truncated = false;
  /// Golden-section refinement ended above the coarse minimum.
  bool non_unimodal = false;
  /// y is identically zero.
  bool degenerate = false;
  /// Profiled sigma^2 at nu_hat (sigma_fixed^2 in Fixed mode).
  double sigma_sq = 0.0;
};

/// Search settings for a generic scalar family theta -> kernel.
struct ScalarSearch {
  double lo = 0.05;
  double hi = 15.0;
  int coarse_grid = 60;
  double refine_tol = 1e-3;
  Objective objective = Objective::ML;
  /// The family returns unit-magnitude kernels and sigma^2 is profiled out.
  bool profile_sigma = false;
  int threads = 1;
};

using KernelFamily = std::function<Kernel(double theta)>;

/// lo == hi is allowed and evaluates that single value.
NuEstimate estimate_parameter(const KernelFamily& family, const Design& design,
                              const Eigen::VectorXd& y, const ScalarSearch& search);

NuEstimate estimate_nu(const Design& design, const Eigen::VectorXd& y,
                       const EstimatorConfig& config);

struct SigmaProfile {
  double sigma_sq = 0.0;
  bool degenerate = false;
};

/// sigma^2 = y^T Kt^{-1} y / n with Kt the unit-sigma kernel matrix.
SigmaProfile profile_sigma(double nu, double lambda, const Design& design,
                           const Eigen::VectorXd& y,
                           std::optional<ScalingPolicy> scaling = std::nullopt);

/// ML and CV estimates on every prefix of the schedule. CV is absent for
/// n < 2; an estimate that cannot be formed leaves the slot empty and the
/// reason in notes.
struct PrefixEstimate {
  std::size_t n = 0;
  double fill = 0.0;
  std::optional<NuEstimate> ml;
  std::optional<NuEstimate> cv;
  std::string notes;
};

/// One column of Y per data vector (seed); returns [column][schedule index].
/// Only the listed objectives are estimated.
/// The coarse grid is factorized once per nu for all prefixes and columns.
std::vector<std::vector<PrefixEstimate>> sweep_prefixes(const Design& design,
                                                        const Eigen::MatrixXd& Y,
                                                        const std::vector<std::size_t>& n_schedule,
                                                        const EstimatorConfig& config,
                                                        const std::vector<Objective>& objectives = {
                                                            Objective::ML, Objective::CV});

std::vector<PrefixEstimate> sweep_prefixes(const Design& design, const Eigen::VectorXd& y,
                                           const std::vector<std::size_t>& n_schedule,
                                           const EstimatorConfig& config,
                                           const std::vector<Objective>& objectives = {
                                               Objective::ML, Objective::CV});

/// Log-spaced grid of count points on [lo, hi].
std::vector<double> log_grid(double lo, double hi, int count);

}  // namespace maternest
