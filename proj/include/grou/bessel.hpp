#pragma once

#include "grou/core.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace grou {

namespace detail {

/// Steed's continued fraction (Temme's CF2) for |mu| <= 1/2 and x >= 2.
/// Returns log K_mu(x) and writes K_{mu+1}(x) / K_mu(x) into ratio.
inline double log_bessel_k_cf2(double mu, double x, double& ratio) {
  constexpr double eps = 1e-16;
  constexpr int max_iter = 100000;
  const double a1 = 0.25 - mu * mu;
  double b = 2.0 * (1.0 + x);
  double d = 1.0 / b;
  double h = d;
  double delh = d;
  double q1 = 0.0;
  double q2 = 1.0;
  double q = a1;
  double c = a1;
  double a = -a1;
  double s = 1.0 + q * delh;
  for (int i = 1; i < max_iter; ++i) {
    a -= 2.0 * i;
    c = -a * c / (i + 1.0);
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
    if (std::abs(dels / s) < eps) break;
  }
  h *= a1;
  ratio = (mu + x + 0.5 - h) / x;
  return 0.5 * std::log(std::numbers::pi / (2.0 * x)) - x - std::log(s);
}

}  // namespace detail

/// log K_nu(x) for real nu and x > 0. Small arguments use the standard
/// library; x >= 2 uses the continued fraction plus upward ratio recurrence,
/// which stays finite where K itself under- or overflows.
inline double log_bessel_k(double nu, double x) {
  if (!(x > 0.0)) throw Error(ErrorCode::ConfigError, "log_bessel_k needs x > 0");
  nu = std::abs(nu);
  if (x < 2.0) {
    const double k = std::cyl_bessel_k(nu, x);
    if (std::isfinite(k) && k > 0.0) return std::log(k);
    // Leading small-argument term K_nu(x) ~ Gamma(nu)/2 (2/x)^nu.
    return std::lgamma(nu) - std::log(2.0) + nu * std::log(2.0 / x);
  }
  const double n = std::floor(nu + 0.5);
  const double mu = nu - n;
  double ratio = 0.0;
  double logk = detail::log_bessel_k_cf2(mu, x, ratio);
  // ratio holds K_{mu+k+1} / K_{mu+k}; walk k up to n.
  for (int k = 0; k < static_cast<int>(n); ++k) {
    logk += std::log(ratio);
    ratio = 1.0 / ratio + 2.0 * (mu + k + 1.0) / x;
  }
  return logk;
}

/// K_{nu+1}(x) / K_nu(x).
inline double bessel_k_ratio(double nu, double x) {
  return std::exp(log_bessel_k(nu + 1.0, x) - log_bessel_k(nu, x));
}

}  // namespace grou
