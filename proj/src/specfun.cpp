#include "maternest/specfun.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "maternest/errors.hpp"

namespace maternest::specfun {
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kPi = std::numbers::pi;
constexpr double kDebyeOrder = 50.0;

// Taylor coefficients of 1/Gamma(z) about 0: 1/Gamma(z) = sum_k c[k] z^k.
constexpr std::array<double, 31> kRecipGamma = {
    0.0,
    1.0,
    0.57721566490153286061,
    -0.65587807152025388108,
    -0.042002635034095235529,
    0.1665386113822914895,
    -0.042197734555544336748,
    -0.0096219715278769735621,
    0.0072189432466630995424,
    -0.0011651675918590651121,
    -0.00021524167411495097282,
    0.00012805028238811618615,
    -0.000020134854780788238656,
    -1.2504934821426706573e-6,
    1.1330272319816958824e-6,
    -2.0563384169776071035e-7,
    6.1160951044814158179e-9,
    5.0020076444692229301e-9,
    -1.1812745704870201446e-9,
    1.0434267116911005105e-10,
    7.782263439905071254e-12,
    -3.6968056186422057082e-12,
    5.100370287454475979e-13,
    -2.0583260535665067832e-14,
    -5.3481225394230179824e-15,
    1.2267786282382607902e-15,
    -1.1812593016974587695e-16,
    1.1866922547516003326e-18,
    1.4123806553180317816e-18,
    -2.2987456844353702066e-19,
    1.7144063219273374334e-20,
};

struct TemmeGammas {
  double gam1;   // (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu)
  double gam2;   // (1/Gamma(1-mu) + 1/Gamma(1+mu)) / 2
  double gampl;  // 1/Gamma(1+mu)
  double gammi;  // 1/Gamma(1-mu)
};

// 1/Gamma(1+mu) = sum_{k>=1} c[k] mu^{k-1}. The odd and even parts give
// gam1 and gam2 directly, so mu -> 0 needs no special casing.
TemmeGammas temme_gammas(double mu) {
  const double mu2 = mu * mu;
  double even = 0.0;  // sum over k odd of c[k] mu^{k-1}
  double odd = 0.0;   // sum over k even of c[k] mu^{k-2}
  for (int k = static_cast<int>(kRecipGamma.size()) - 1; k >= 1; --k) {
    if (k % 2 == 1) {
      even = even * mu2 + kRecipGamma[k];
    } else {
      odd = odd * mu2 + kRecipGamma[k];
    }
  }
  TemmeGammas g;
  g.gam2 = even;
  g.gam1 = -odd;
  g.gampl = even + mu * odd;
  g.gammi = even - mu * odd;
  return g;
}

// sinh(e)/e and (pi mu)/sin(pi mu) with their removable singularities.
double sinhc(double e) {
  if (std::abs(e) < 1e-4) {
    const double e2 = e * e;
    return 1.0 + e2 / 6.0 * (1.0 + e2 / 20.0);
  }
  return std::sinh(e) / e;
}

double pix_over_sin(double mu) {
  const double a = kPi * mu;
  if (std::abs(a) < 1e-4) {
    const double a2 = a * a;
    return 1.0 + a2 / 6.0 * (1.0 + 7.0 * a2 / 60.0);
  }
  return a / std::sin(a);
}

[[noreturn]] void fail_accuracy(const char* where, double achieved) {
  throw AccuracyError(std::string("bessel_k: ") + where +
                          " did not converge (last relative term " +
                          std::to_string(achieved) + ")",
                      achieved);
}

// Pair (K_mu, K_{mu+1}) represented as mantissas times exp(log_scale).
struct BesselPair {
  double k0;
  double k1;
  double log_scale;
};

BesselPair temme_series(double mu, double x, const BesselAccuracy& acc) {
  const double x2 = 0.5 * x;
  const double d = -std::log(x2);
  const double e = mu * d;
  const TemmeGammas g = temme_gammas(mu);
  double ff = pix_over_sin(mu) * (g.gam1 * std::cosh(e) + g.gam2 * sinhc(e) * d);
  double sum = ff;
  const double ee = std::exp(e);
  double p = 0.5 * ee / g.gampl;
  double q = 0.5 / (ee * g.gammi);
  double c = 1.0;
  const double dd = x2 * x2;
  double sum1 = p;
  double last = 1.0;
  int i = 1;
  for (; i <= acc.max_terms; ++i) {
    const double fi = static_cast<double>(i);
    ff = (fi * ff + p + q) / (fi * fi - mu * mu);
    c *= dd / fi;
    p /= (fi - mu);
    q /= (fi + mu);
    const double del = c * ff;
    sum += del;
    const double del1 = c * (p - fi * ff);
    sum1 += del1;
    last = std::abs(del) / std::abs(sum);
    if (last < kEps) break;
  }
  if (i > acc.max_terms && last > acc.target_relative_error) {
    fail_accuracy("Temme series", last);
  }
  return {sum, sum1 / x2, 0.0};
}

BesselPair steed_cf2(double mu, double x, const BesselAccuracy& acc) {
  double b = 2.0 * (1.0 + x);
  double d = 1.0 / b;
  double h = d;
  double delh = d;
  double q1 = 0.0;
  double q2 = 1.0;
  const double a1 = 0.25 - mu * mu;
  double q = a1;
  double c = a1;
  double a = -a1;
  double s = 1.0 + q * delh;
  double last = 1.0;
  int i = 1;
  for (; i <= acc.max_terms; ++i) {
    const double fi = static_cast<double>(i);
    a -= 2.0 * fi;
    c = -a * c / (fi + 1.0);
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    last = std::abs(dels / s);
    if (last < kEps) break;
  }
  if (i > acc.max_terms && last > acc.target_relative_error) {
    fail_accuracy("continued fraction", last);
  }
  h = a1 * h;
  const double k0 = std::sqrt(kPi / (2.0 * x)) / s;
  const double k1 = k0 * (mu + x + 0.5 - h) / x;
  return {k0, k1, -x};
}

// Hankel expansion: K_nu(x) ~ sqrt(pi/2x) e^{-x} sum_k a_k(nu) / x^k.
// Returns the log of the scaled sum and whether the terms reached eps.
bool hankel_log_scaled(double nu, double x, int max_terms, double& log_sum) {
  const double four_nu2 = 4.0 * nu * nu;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k <= max_terms; ++k) {
    const double odd = 2.0 * k - 1.0;
    const double next = term * (four_nu2 - odd * odd) / (8.0 * k * x);
    if (std::abs(next) > std::abs(term)) return false;
    term = next;
    sum += term;
    if (std::abs(term) < kEps * std::abs(sum)) {
      log_sum = std::log(sum);
      return true;
    }
  }
  return false;
}

// Polynomials u_k(t) of the uniform large-order expansion, built from
// u_{k+1}(t) = t^2 (1 - t^2) u_k'(t) / 2 + (1/8) int_0^t (1 - 5 s^2) u_k(s) ds.
const std::vector<std::vector<double>>& debye_polynomials() {
  static const std::vector<std::vector<double>> polys = [] {
    constexpr int kOrders = 10;
    std::vector<std::vector<double>> u(kOrders);
    u[0] = {1.0};
    for (int k = 0; k + 1 < kOrders; ++k) {
      const auto& p = u[k];
      std::vector<double> next(p.size() + 3, 0.0);
      // t^2 (1 - t^2)/2 * p'(t)
      for (std::size_t j = 1; j < p.size(); ++j) {
        const double dj = static_cast<double>(j) * p[j];  // coeff of t^{j-1}
        next[j + 1] += 0.5 * dj;
        next[j + 3] -= 0.5 * dj;
      }
      // (1/8) int_0^t (1 - 5 s^2) p(s) ds
      for (std::size_t j = 0; j < p.size(); ++j) {
        next[j + 1] += p[j] / (8.0 * static_cast<double>(j + 1));
        next[j + 3] -= 5.0 * p[j] / (8.0 * static_cast<double>(j + 3));
      }
      u[k + 1] = std::move(next);
    }
    return u;
  }();
  return polys;
}

double log_bessel_k_debye(double nu, double x) {
  const double z = x / nu;
  const double w = std::sqrt(1.0 + z * z);
  const double t = 1.0 / w;
  // eta = w + ln(z / (1 + w))
  const double eta = w + std::log(z) - std::log1p(w);
  const auto& u = debye_polynomials();
  double series = 0.0;
  double scale = 1.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    double poly = 0.0;
    for (std::size_t j = u[k].size(); j-- > 0;) poly = poly * t + u[k][j];
    series += ((k % 2 == 0) ? 1.0 : -1.0) * poly * scale;
    scale /= nu;
  }
  return 0.5 * std::log(kPi / (2.0 * nu)) - nu * eta - 0.5 * std::log(w) +
         std::log(series);
}

void check_args(double nu, double x) {
  if (!std::isfinite(nu) || nu < 0.0) {
    throw DomainError("bessel_k: order must be finite and non-negative, got " +
                      std::to_string(nu));
  }
  if (!std::isfinite(x) || x <= 0.0) {
    throw DomainError("bessel_k: argument must be finite and positive, got " +
                      std::to_string(x));
  }
}

// K_mu, K_{mu+1} then forward recurrence to K_nu. Returns the pair
// (mantissa, log offset) with K_nu = mantissa * exp(offset).
BesselPair evaluate_low_order(double nu, double x, const BesselAccuracy& acc) {
  const int nl = static_cast<int>(nu + 0.5);
  const double mu = nu - nl;

  double log_hankel = 0.0;
  if (x >= 30.0 && x >= nu * nu &&
      hankel_log_scaled(nu, x, acc.max_terms, log_hankel)) {
    return {1.0, 0.0, 0.5 * std::log(kPi / (2.0 * x)) - x + log_hankel};
  }

  BesselPair p = (x <= 2.0) ? temme_series(mu, x, acc) : steed_cf2(mu, x, acc);
  double kmu = p.k0;
  double kmu1 = p.k1;
  double offset = p.log_scale;
  if (nl == 0) return {kmu, 0.0, offset};
  const double two_over_x = 2.0 / x;
  for (int i = 1; i < nl; ++i) {
    const double next = (mu + i) * two_over_x * kmu1 + kmu;
    kmu = kmu1;
    kmu1 = next;
    if (kmu1 > 1e150) {
      kmu *= 1e-150;
      kmu1 *= 1e-150;
      offset += 150.0 * std::numbers::ln10;
    }
  }
  return {kmu1, 0.0, offset};
}

}  // namespace

double log_gamma(double x) {
  if (!std::isfinite(x) || x <= 0.0) {
    throw DomainError("log_gamma: argument must be finite and positive, got " +
                      std::to_string(x));
  }
#if defined(__GLIBC__)
  int sign = 0;
  return ::lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

double log_bessel_k(double nu, double x, const BesselAccuracy& acc) {
  check_args(nu, x);
  if (nu > kDebyeOrder) return log_bessel_k_debye(nu, x);
  const BesselPair p = evaluate_low_order(nu, x, acc);
  return std::log(p.k0) + p.log_scale;
}

double bessel_k(double nu, double x, const BesselAccuracy& acc) {
  check_args(nu, x);
  if (nu > kDebyeOrder) return std::exp(log_bessel_k_debye(nu, x));
  const BesselPair p = evaluate_low_order(nu, x, acc);
  if (p.log_scale == 0.0) return p.k0;
  return p.k0 * std::exp(p.log_scale);
}

}  // namespace maternest::specfun
