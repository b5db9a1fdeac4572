#include "maternest/objectives.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace maternest {

namespace {

template <typename F>
ObjectiveValue with_context(const MaternParams& p, std::size_t n, F&& f) {
  try {
    return f();
  } catch (const ConditioningError& e) {
    std::ostringstream msg;
    msg.precision(6);
    msg << e.what() << " [nu=" << p.nu << ", n=" << n << "]";
    throw ConditioningError(msg.str(), e.pivot_index(), e.pivot_value());
  }
}

}  // namespace

const char* to_string(Objective o) { return o == Objective::ML ? "ML" : "CV"; }

ObjectiveValue ell_ml(const Posterior& post) {
  return ObjectiveValue::from_terms(quadratic_form(post), log_det(post));
}

ObjectiveValue ell_cv(const Posterior& post) {
  if (post.size() < 2) throw DomainError("ell_cv: the CV objective needs n >= 2");
  const LooResult r = loo(post);
  const double data = (r.residuals.array().square() / r.variances.array()).sum();
  const double complexity = r.variances.array().log().sum();
  return ObjectiveValue::from_terms(data, complexity);
}

ObjectiveValue ell_ml(const Kernel& k, const Design& design, const Eigen::VectorXd& y) {
  return ell_ml(condition(k, design, y));
}

ObjectiveValue ell_cv(const Kernel& k, const Design& design, const Eigen::VectorXd& y) {
  if (design.size() < 2) throw DomainError("ell_cv: the CV objective needs n >= 2");
  return ell_cv(condition(k, design, y));
}

ObjectiveValue ell_ml(const MaternParams& p, const Design& design, const Eigen::VectorXd& y) {
  return with_context(p, design.size(), [&] { return ell_ml(Kernel::matern(p), design, y); });
}

ObjectiveValue ell_cv(const MaternParams& p, const Design& design, const Eigen::VectorXd& y) {
  return with_context(p, design.size(), [&] { return ell_cv(Kernel::matern(p), design, y); });
}

ObjectiveValue evaluate_objective(Objective o, const Kernel& k, const Design& design,
                                  const Eigen::VectorXd& y) {
  return o == Objective::ML ? ell_ml(k, design, y) : ell_cv(k, design, y);
}

VarianceRatioProfile variance_ratio_profile(double nu0, const std::vector<double>& nu_grid,
                                            const Design& design, VarianceProbe probe,
                                            const MaternParams& base,
                                            std::vector<std::size_t> ns) {
  if (ns.empty()) ns.push_back(design.size());
  for (double nu : nu_grid) {
    if (!(nu > 0.0)) throw DomainError("variance_ratio_profile: grid must be positive");
  }
  for (std::size_t n : ns) {
    if (n == 0 || n > design.size()) throw DomainError("variance_ratio_profile: prefix size out of range");
  }
  VarianceRatioProfile out;
  out.nu_grid = nu_grid;
  out.ns = ns;
  out.ratios = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(nu_grid.size()),
                                         static_cast<Eigen::Index>(ns.size()),
                                         std::numeric_limits<double>::quiet_NaN());

  auto variances = [&](double nu, std::size_t n) -> Eigen::VectorXd {
    MaternParams p = base;
    p.nu = nu;
    const Design x = design.prefix(n);
    if (probe == VarianceProbe::Sequential) return incremental_variances(Kernel::matern(p), x);
    // Leaving out the only point leaves the prior.
    if (n == 1) return Eigen::VectorXd::Constant(1, matern_eval(p, 0.0));
    return loo(condition(Kernel::matern(p), x, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))))
        .variances;
  };

  for (std::size_t b = 0; b < ns.size(); ++b) {
    Eigen::VectorXd v0;
    try {
      v0 = variances(nu0, ns[b]);
    } catch (const ConditioningError& e) {
      out.notes.push_back("nu0=" + std::to_string(nu0) + " n=" + std::to_string(ns[b]) +
                          ": " + e.what());
      continue;
    }
    for (std::size_t a = 0; a < nu_grid.size(); ++a) {
      const auto ia = static_cast<Eigen::Index>(a);
      const auto ib = static_cast<Eigen::Index>(b);
      try {
        const Eigen::VectorXd v = variances(nu_grid[a], ns[b]);
        out.ratios(ia, ib) = v0.cwiseQuotient(v).maxCoeff();
      } catch (const ConditioningError& e) {
        out.notes.push_back("nu=" + std::to_string(nu_grid[a]) + " n=" + std::to_string(ns[b]) +
                            ": " + e.what());
      }
    }
  }
  return out;
}

}  // namespace maternest
