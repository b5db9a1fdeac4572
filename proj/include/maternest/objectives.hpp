#pragma once

// Marginal-likelihood and leave-one-out objectives in the smoothness, plus
// the variance-ratio diagnostic.
//
//   l_ML = y^T K^{-1} y + log det K
//   l_CV = sum_i r_i^2 / v_i + sum_i log v_i     (r_i, v_i from LOO)

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "maternest/designs.hpp"
#include "maternest/gp.hpp"
#include "maternest/kernels.hpp"

namespace maternest {

struct ObjectiveValue {
  double total = 0.0;
  double data_term = 0.0;
  double complexity_term = 0.0;

  static ObjectiveValue from_terms(double data, double complexity) {
    return {data + complexity, data, complexity};
  }
};

enum class Objective { ML, CV };

const char* to_string(Objective o);

ObjectiveValue ell_ml(const Posterior& post);
ObjectiveValue ell_cv(const Posterior& post);

ObjectiveValue ell_ml(const Kernel& k, const Design& design, const Eigen::VectorXd& y);
ObjectiveValue ell_cv(const Kernel& k, const Design& design, const Eigen::VectorXd& y);

/// Matérn overloads; conditioning failures are rethrown with the (nu, n)
/// cell in the message.
ObjectiveValue ell_ml(const MaternParams& p, const Design& design, const Eigen::VectorXd& y);
ObjectiveValue ell_cv(const MaternParams& p, const Design& design, const Eigen::VectorXd& y);

ObjectiveValue evaluate_objective(Objective o, const Kernel& k, const Design& design,
                                  const Eigen::VectorXd& y);

enum class VarianceProbe { LOO, Sequential };

/// ratios(a, b) = max_i V_{nu0}(x_i | .) / V_{nu_grid[a]}(x_i | .) on the
/// prefix of size ns[b], where "." is X without x_i (LOO) or X_{i-1}
/// (Sequential). Cells that fail to condition hold NaN and a note.
struct VarianceRatioProfile {
  std::vector<double> nu_grid;
  std::vector<std::size_t> ns;
  Eigen::MatrixXd ratios;
  std::vector<std::string> notes;
};

/// base supplies sigma, lambda and the scaling policy; its nu is ignored.
/// An empty ns means the full design only.
VarianceRatioProfile variance_ratio_profile(double nu0, const std::vector<double>& nu_grid,
                                            const Design& design, VarianceProbe probe,
                                            const MaternParams& base,
                                            std::vector<std::size_t> ns = {});

}  // namespace maternest
