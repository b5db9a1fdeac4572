#include "maternest/kernels.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "maternest/errors.hpp"
#include "maternest/specfun.hpp"

namespace maternest {

namespace {

void require_positive(double v, const char* what) {
  if (!std::isfinite(v) || v <= 0.0) {
    throw DomainError(std::string(what) + " must be finite and positive, got " +
                      std::to_string(v));
  }
}

void require_distance(double r) {
  if (!std::isfinite(r) || r < 0.0) {
    throw DomainError("kernel: distance must be finite and non-negative, got " +
                      std::to_string(r));
  }
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

}  // namespace

void MaternParams::validate() const {
  require_positive(nu, "matern: nu");
  require_positive(sigma, "matern: sigma");
  require_positive(lambda, "matern: lambda");
  if (scaling.kind == ScalingPolicy::Kind::Clamped && scaling.d == 0) {
    throw DomainError("matern: clamped scaling needs a positive dimension");
  }
}

void GaussParams::validate() const {
  require_positive(sigma, "gaussian: sigma");
  require_positive(lambda, "gaussian: lambda");
}

double log_c_scaling(const ScalingPolicy& policy, double nu) {
  require_positive(nu, "c_scaling: nu");
  double eff = nu;
  if (policy.kind == ScalingPolicy::Kind::Clamped) {
    if (policy.d == 0) throw DomainError("c_scaling: clamped scaling needs a positive dimension");
    eff = std::max(nu, 0.5 * static_cast<double>(policy.d));
  }
  return (1.0 - eff) * std::numbers::ln2 - specfun::log_gamma(eff);
}

double c_scaling(const ScalingPolicy& policy, double nu) {
  return std::exp(log_c_scaling(policy, nu));
}

double log_matern_eval(const MaternParams& p, double r) {
  p.validate();
  require_distance(r);
  const double base = 2.0 * std::log(p.sigma) + log_c_scaling(p.scaling, p.nu);
  const double z = std::sqrt(2.0 * p.nu) * r / p.lambda;
  // Below this z the relative gap to the r = 0 limit is under z^{2 min(nu,1)}
  // times a modest constant, well below rounding for any nu >= 0.05.
  if (z < 1e-280) {
    return base + (p.nu - 1.0) * std::numbers::ln2 + specfun::log_gamma(p.nu);
  }
  return base + p.nu * std::log(z) + specfun::log_bessel_k(p.nu, z);
}

double matern_eval(const MaternParams& p, double r) { return std::exp(log_matern_eval(p, r)); }

double gaussian_eval(const GaussParams& p, double r, std::size_t d) {
  p.validate();
  require_distance(r);
  if (d == 0) throw DomainError("gaussian: dimension must be positive");
  const double pref = std::pow(p.lambda * p.lambda / (2.0 * std::numbers::pi),
                               0.5 * static_cast<double>(d));
  return p.sigma * p.sigma * pref * std::exp(-r * r / (2.0 * p.lambda * p.lambda));
}

double gaussian_unit_eval(const GaussParams& p, double r) {
  p.validate();
  require_distance(r);
  return p.sigma * p.sigma * std::exp(-r * r / (2.0 * p.lambda * p.lambda));
}

Kernel Kernel::matern(const MaternParams& p) {
  p.validate();
  const std::string scale =
      p.scaling.kind == ScalingPolicy::Kind::Standard ? "standard" : "clamped";
  return Kernel([p](double r) { return matern_eval(p, r); },
                "matern(nu=" + fmt(p.nu) + ",sigma=" + fmt(p.sigma) + ",lambda=" +
                    fmt(p.lambda) + "," + scale + ")");
}

Kernel Kernel::gaussian(const GaussParams& p, std::size_t d) {
  p.validate();
  return Kernel([p, d](double r) { return gaussian_eval(p, r, d); },
                "gaussian(sigma=" + fmt(p.sigma) + ",lambda=" + fmt(p.lambda) + ")");
}

Kernel Kernel::gaussian_unit(const GaussParams& p) {
  p.validate();
  return Kernel([p](double r) { return gaussian_unit_eval(p, r); },
                "gaussian_unit(sigma=" + fmt(p.sigma) + ",lambda=" + fmt(p.lambda) + ")");
}

Eigen::MatrixXd kernel_matrix(const Kernel& k, const Design& points) {
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd K(n, n);
  std::unordered_map<double, double> memo;
  auto value = [&](double r) {
    auto [it, inserted] = memo.try_emplace(r, 0.0);
    if (inserted) it->second = k(r);
    return it->second;
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    K(i, i) = value(0.0);
    const auto xi = points.point(static_cast<std::size_t>(i));
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double r = distance(xi, points.point(static_cast<std::size_t>(j)));
      if (r == 0.0) {
        throw DegenerateDesignError("kernel_matrix: points " + std::to_string(i) + " and " +
                                    std::to_string(j) + " coincide");
      }
      K(i, j) = value(r);
      K(j, i) = K(i, j);
    }
  }
  return K;
}

Eigen::MatrixXd cross_kernel_matrix(const Kernel& k, const Design& a, const Design& b) {
  const auto m = static_cast<Eigen::Index>(a.size());
  const auto n = static_cast<Eigen::Index>(b.size());
  Eigen::MatrixXd out(m, n);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto x = a.point(static_cast<std::size_t>(i));
    for (Eigen::Index j = 0; j < n; ++j) {
      out(i, j) = k(distance(x, b.point(static_cast<std::size_t>(j))));
    }
  }
  return out;
}

Eigen::VectorXd kernel_vector(const Kernel& k, const Design& points, std::span<const double> x) {
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::VectorXd out(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    out(j) = k(distance(x, points.point(static_cast<std::size_t>(j))));
  }
  return out;
}

}  // namespace maternest
