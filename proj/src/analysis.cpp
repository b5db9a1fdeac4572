#include "maternest/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <numbers>

#include <boost/math/quadrature/gauss.hpp>

#include "maternest/errors.hpp"
#include "maternest/gp.hpp"
#include "maternest/specfun.hpp"

namespace maternest {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// 16-point Gauss-Legendre rule on [-1, 1], both halves.
struct Rule {
  std::vector<double> x;
  std::vector<double> w;
};

const Rule& legendre16() {
  static const Rule rule = [] {
    using G = boost::math::quadrature::gauss<double, 16>;
    Rule r;
    const auto& a = G::abscissa();
    const auto& wt = G::weights();
    for (std::size_t i = 0; i < a.size(); ++i) {
      r.x.push_back(a[i]);
      r.w.push_back(wt[i]);
      if (a[i] != 0.0) {
        r.x.push_back(-a[i]);
        r.w.push_back(wt[i]);
      }
    }
    return r;
  }();
  return rule;
}

void check_quadrature(const QuadratureConfig& q) {
  if (!(q.truncation >= 2.0) || !std::isfinite(q.truncation)) {
    throw DomainError("quadrature: truncation must be finite and at least 2");
  }
  if (q.nodes < 1) throw DomainError("quadrature: nodes must be positive");
  if (!(q.tail_bound > 0.0)) throw DomainError("quadrature: tail_bound must be positive");
}

// Integral over [0, truncation] of exp(log_g(xi)) computed per unit strip
// with a common scale so huge or tiny integrands do not overflow. Returns
// ln of each strip's contribution.
std::vector<double> log_strips(const std::function<double(double)>& log_g,
                               const QuadratureConfig& q) {
  check_quadrature(q);
  const Rule& rule = legendre16();
  const int panels_per_unit = std::max(1, (q.nodes + 15) / 16);
  const auto units = static_cast<int>(std::ceil(q.truncation));
  std::vector<double> out(static_cast<std::size_t>(units), kNegInf);
  std::vector<double> vals;
  for (int u = 0; u < units; ++u) {
    const double a = u;
    const double b = std::min<double>(u + 1, q.truncation);
    const double hp = (b - a) / panels_per_unit;
    vals.clear();
    double m = kNegInf;
    for (int p = 0; p < panels_per_unit; ++p) {
      const double lo = a + p * hp;
      for (std::size_t i = 0; i < rule.x.size(); ++i) {
        const double xi = lo + 0.5 * hp * (rule.x[i] + 1.0);
        const double lv = log_g(xi) + std::log(0.5 * hp * rule.w[i]);
        vals.push_back(lv);
        m = std::max(m, lv);
      }
    }
    if (m == kNegInf) continue;
    if (!std::isfinite(m)) {
      out[static_cast<std::size_t>(u)] = m;
      continue;
    }
    double s = 0.0;
    for (double lv : vals) s += std::exp(lv - m);
    out[static_cast<std::size_t>(u)] = m + std::log(s);
  }
  return out;
}

double log_sum(const std::vector<double>& logs) {
  double m = kNegInf;
  for (double v : logs) m = std::max(m, v);
  if (m == kNegInf || !std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : logs) s += std::exp(v - m);
  return m + std::log(s);
}

std::function<double(double)> log_abs_f(const TestFunction& tf) {
  if (!tf.has_fourier()) {
    throw DomainError("norm: test function '" + tf.label + "' has no closed-form transform");
  }
  if (tf.log_abs_fourier) return tf.log_abs_fourier;
  return [f = tf.fourier](double xi) { return std::log(std::abs(f(xi))); };
}

// ln of 2 int_0^T |F|^2 w, with the tail check of the outermost strip.
double log_even_integral(const TestFunction& tf, const std::function<double(double)>& log_w,
                         const QuadratureConfig& q, const char* what) {
  const auto lf = log_abs_f(tf);
  const auto strips = log_strips([&](double xi) { return 2.0 * lf(xi) + log_w(xi); }, q);
  const double total = log_sum(strips);
  if (total == kNegInf) return total;
  if (!std::isfinite(total)) {
    throw AccuracyError(std::string(what) + ": integrand is not finite", 1.0);
  }
  const double tail = std::exp(strips.back() - total);
  if (tail > q.tail_bound) {
    throw AccuracyError(std::string(what) + ": tail strip holds relative mass " +
                            std::to_string(tail) + " above the bound",
                        tail);
  }
  return total + std::numbers::ln2;
}

double log_matern_constant(const MaternParams& p) {
  // C_nu = pi^{1/2} (lambda^2 / 2 nu)^nu / (sigma^2 c(nu) 2^{nu-1} Gamma(nu + 1/2))
  return 0.5 * std::log(kPi) + p.nu * std::log(p.lambda * p.lambda / (2.0 * p.nu)) -
         2.0 * std::log(p.sigma) - log_c_scaling(p.scaling, p.nu) -
         (p.nu - 1.0) * std::numbers::ln2 - specfun::log_gamma(p.nu + 0.5);
}

}  // namespace

double matern_norm_integral(const TestFunction& tf, const MaternParams& p,
                            const QuadratureConfig& q) {
  p.validate();
  const double a = 2.0 * p.nu / (p.lambda * p.lambda);
  const double e = p.nu + 0.5;
  return std::exp(log_even_integral(
      tf, [&](double xi) { return e * std::log(a + xi * xi); }, q, "matern_rkhs_norm_sq"));
}

double matern_rkhs_norm_sq(const TestFunction& tf, const MaternParams& p,
                           const QuadratureConfig& q) {
  p.validate();
  const double a = 2.0 * p.nu / (p.lambda * p.lambda);
  const double e = p.nu + 0.5;
  const double li = log_even_integral(
      tf, [&](double xi) { return e * std::log(a + xi * xi); }, q, "matern_rkhs_norm_sq");
  return std::exp(log_matern_constant(p) - 2.0 * std::log(2.0 * kPi) + li);
}

double sobolev_norm_sq(const TestFunction& tf, double alpha, const QuadratureConfig& q) {
  if (!std::isfinite(alpha) || alpha < 0.0) throw DomainError("sobolev_norm_sq: bad order");
  const double li = log_even_integral(
      tf, [&](double xi) { return alpha * std::log1p(xi * xi); }, q, "sobolev_norm_sq");
  return std::exp(li - 2.0 * std::log(2.0 * kPi));
}

GaussianNorm gaussian_rkhs_norm_sq(const TestFunction& tf, double lambda,
                                   const QuadratureConfig& q) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw DomainError("gaussian_rkhs_norm_sq: lambda must be positive");
  }
  const auto lf = log_abs_f(tf);
  const double c = 0.5 * lambda * lambda;
  const auto strips =
      log_strips([&](double xi) { return 2.0 * lf(xi) + c * xi * xi; }, q);
  GaussianNorm g;
  const std::size_t m = strips.size();
  const double last = strips[m - 1];
  const double prev = strips[m - 2];
  if (!std::isfinite(last) && last != kNegInf) {
    g.diverged = true;
  } else if (last != kNegInf && last >= prev) {
    g.diverged = true;
  }
  if (g.diverged) {
    g.norm_sq = std::numeric_limits<double>::infinity();
    g.membership_integral = std::numeric_limits<double>::infinity();
    return g;
  }
  const double total = log_sum(strips);
  if (total == kNegInf) return g;
  const double tail = std::exp(last - total);
  if (tail > q.tail_bound) {
    throw AccuracyError("gaussian_rkhs_norm_sq: tail strip above the bound", tail);
  }
  g.membership_integral = std::exp(total + std::numbers::ln2);
  g.norm_sq = g.membership_integral / (2.0 * kPi * std::sqrt(2.0 * kPi) * lambda);
  return g;
}

double inverse_fourier(const TestFunction& tf, double x, const QuadratureConfig& q) {
  if (!tf.has_fourier()) throw DomainError("inverse_fourier: no transform");
  check_quadrature(q);
  const Rule& rule = legendre16();
  const int panels_per_unit = std::max(1, (q.nodes + 15) / 16);
  const auto panels = static_cast<int>(std::ceil(q.truncation)) * panels_per_unit;
  const double hp = q.truncation / panels;
  double s = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double lo = p * hp;
    for (std::size_t i = 0; i < rule.x.size(); ++i) {
      const double xi = lo + 0.5 * hp * (rule.x[i] + 1.0);
      s += 0.5 * hp * rule.w[i] * tf.fourier(xi) * std::cos(xi * x);
    }
  }
  return s / kPi;  // 2 / (2 pi) from the even extension
}

TestFunction bump_function(std::vector<double> center, double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw DomainError("bump_function: h must be positive");
  if (center.empty()) throw DomainError("bump_function: empty centre");
  TestFunction tf;
  tf.label = "bump";
  tf.smoothness = std::numeric_limits<double>::infinity();
  tf.evaluator = [c = std::move(center), h](std::span<const double> x) {
    if (x.size() != c.size()) throw DomainError("bump_function: dimension mismatch");
    double r2 = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) {
      const double t = (x[k] - c[k]) / h;
      r2 += t * t;
    }
    if (r2 >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - r2));
  };
  return tf;
}

TestFunction cauchy_like() {
  TestFunction tf;
  tf.label = "cauchy_like";
  tf.smoothness = std::numeric_limits<double>::infinity();
  tf.evaluator = [](std::span<const double> x) { return 1.0 / (0.25 + x[0] * x[0]); };
  tf.fourier = [](double xi) { return 2.0 * kPi * std::exp(-0.5 * std::abs(xi)); };
  tf.log_abs_fourier = [](double xi) { return std::log(2.0 * kPi) - 0.5 * std::abs(xi); };
  return tf;
}

TestFunction gauss_bump() {
  TestFunction tf;
  tf.label = "gauss_bump";
  tf.smoothness = std::numeric_limits<double>::infinity();
  tf.evaluator = [](std::span<const double> x) {
    return std::exp(-0.25 * x[0] * x[0]) / (2.0 * std::sqrt(kPi));
  };
  tf.fourier = [](double xi) { return std::exp(-xi * xi); };
  tf.log_abs_fourier = [](double xi) { return -xi * xi; };
  return tf;
}

std::vector<TestFunction> builtin_test_functions() {
  return {cauchy_like(), gauss_bump(), bump_function({0.0}, 1.0)};
}

TestFunction test_function_by_label(const std::string& label, std::size_t d) {
  if (label == "cauchy_like" && d == 1) return cauchy_like();
  if (label == "gauss_bump" && d == 1) return gauss_bump();
  if (label == "bump") return bump_function(std::vector<double>(d, 0.0), 1.0);
  if (label == "zero") {
    TestFunction tf;
    tf.label = "zero";
    tf.smoothness = std::numeric_limits<double>::infinity();
    tf.evaluator = [](std::span<const double>) { return 0.0; };
    tf.fourier = [](double) { return 0.0; };
    return tf;
  }
  throw DomainError("unknown test function '" + label + "' in dimension " + std::to_string(d));
}

double standard_normal(std::uint64_t seed, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  const std::uint64_t key = mix(seed ^ mix(index));
  const std::uint64_t a = mix(key);
  const std::uint64_t b = mix(key + 0x632be59bd9b4e019ULL);
  // 53-bit uniforms; u1 in (0, 1] keeps the logarithm finite.
  const double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

Eigen::MatrixXd sample_gp_paths(const MaternParams& p, const Design& design,
                                const std::vector<std::uint64_t>& seeds) {
  const auto n = static_cast<Eigen::Index>(design.size());
  const auto s = static_cast<Eigen::Index>(seeds.size());
  Eigen::MatrixXd Z(n, s);
  for (Eigen::Index j = 0; j < s; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      Z(i, j) = standard_normal(seeds[static_cast<std::size_t>(j)], static_cast<std::uint64_t>(i));
    }
  }
  if (n == 0) return Z;
  const Eigen::MatrixXd L = cholesky_factor(kernel_matrix(Kernel::matern(p), design));
  return L.triangularView<Eigen::Lower>() * Z;
}

Eigen::VectorXd sample_gp_path(const MaternParams& p, const Design& design, std::uint64_t seed) {
  return sample_gp_paths(p, design, {seed}).col(0);
}

std::uint64_t checksum(const Eigen::VectorXd& values) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    unsigned char bytes[sizeof(double)];
    const double v = values(i);
    std::memcpy(bytes, &v, sizeof v);
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

FrozenPath frozen_matern_path(const MaternParams& p, const Design& design, std::uint64_t seed) {
  FrozenPath fp;
  fp.design = design;
  fp.values = sample_gp_path(p, design, seed);
  fp.checksum = checksum(fp.values);
  std::map<std::vector<double>, double> table;
  for (std::size_t i = 0; i < design.size(); ++i) {
    const auto x = design.point(i);
    table.emplace(std::vector<double>(x.begin(), x.end()), fp.values(static_cast<Eigen::Index>(i)));
  }
  fp.function.label = "matern_path(nu0=" + std::to_string(p.nu) + ",seed=" + std::to_string(seed) + ")";
  fp.function.smoothness = p.nu;
  fp.function.evaluator = [t = std::move(table)](std::span<const double> x) {
    const auto it = t.find(std::vector<double>(x.begin(), x.end()));
    if (it == t.end()) throw DomainError("frozen path: point is not on the frozen design");
    return it->second;
  };
  return fp;
}

RateFit fit_rate(const std::vector<double>& ns, const std::vector<double>& values) {
  if (ns.size() != values.size() || ns.size() < 3) {
    throw DomainError("fit_rate: need at least 3 matching points");
  }
  const std::size_t m = ns.size();
  std::vector<double> lx(m);
  std::vector<double> ly(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (!(ns[i] > 0.0) || !(values[i] > 0.0) || !std::isfinite(values[i])) {
      throw DomainError("fit_rate: counts and values must be positive");
    }
    lx[i] = std::log(ns[i]);
    ly[i] = std::log(values[i]);
  }
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(m);
  my /= static_cast<double>(m);
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw DomainError("fit_rate: counts must not all be equal");
  RateFit r;
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  r.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return r;
}

}  // namespace maternest
