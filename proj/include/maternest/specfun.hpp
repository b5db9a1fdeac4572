#pragma once

// Real-order modified Bessel function of the second kind and log-Gamma.
//
// bessel_k / log_bessel_k pick one of four evaluation regimes:
//   * order > 50               uniform (Debye) large-order expansion
//   * x <= 2                   Temme series for K_mu, K_{mu+1}, |mu| <= 1/2
//   * x >= max(30, nu^2)       exponentially scaled Hankel expansion
//   * otherwise                Steed's continued fraction (CF2)
// followed, in the last three cases, by forward recurrence in the order.
// The Temme coefficients are evaluated through the Taylor series of
// 1/Gamma(1+mu), so orders at or near an integer take the same path as
// any other order without cancellation.
//
// All functions are pure and thread-safe.

namespace maternest::specfun {

struct BesselAccuracy {
  /// Accepted relative size of the last series/fraction term when an
  /// expansion runs out of terms.
  double target_relative_error = 1e-10;
  int max_terms = 10000;
};

/// ln Gamma(x) for x > 0.
double log_gamma(double x);

/// K_nu(x) for nu >= 0, x > 0. Returns +inf when the value overflows a
/// double (use log_bessel_k there).
double bessel_k(double nu, double x, const BesselAccuracy& acc = {});

/// ln K_nu(x); finite wherever K_nu(x) is, including orders in the hundreds.
double log_bessel_k(double nu, double x, const BesselAccuracy& acc = {});

}  // namespace maternest::specfun
