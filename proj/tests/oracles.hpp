#pragma once

// Reference implementations used only by tests. Each is built on a formula
// independent of the production code path (series, finite closed forms,
// polynomial expansions) and evaluated in extended precision.

#include <cmath>
#include <complex>
#include <vector>

namespace oracle {

using ld = long double;

/// j_l(x) from the ascending series, `terms` terms.
inline ld bessel_j_series(int l, ld x, int terms = 200) {
  ld pref = 1.0L;
  for (int k = 1; k <= l; ++k) pref *= x / (2.0L * k + 1.0L);
  ld term = 1.0L, sum = 1.0L;
  const ld q = -x * x / 2.0L;
  for (int k = 1; k < terms; ++k) {
    term *= q / (k * (2.0L * l + 2.0L * k + 1.0L));
    sum += term;
    if (std::abs(term) < 1e-30L * std::abs(sum)) break;
  }
  return pref * sum;
}

/// h_l^(1)(x) from the terminating sum
///   (-i)^{l+1} e^{ix}/x sum_k i^k (l+k)! / (k! (l-k)! (2x)^k).
inline std::complex<ld> hankel1_finite(int l, ld x) {
  const std::complex<ld> i(0.0L, 1.0L);
  std::complex<ld> sum = 0.0L;
  std::complex<ld> ik = 1.0L;
  for (int k = 0; k <= l; ++k) {
    ld c = 1.0L;
    for (int m = l - k + 1; m <= l + k; ++m) c *= m;
    for (int m = 2; m <= k; ++m) c /= m;
    sum += ik * (c / std::pow(2.0L * x, static_cast<ld>(k)));
    ik *= i;
  }
  std::complex<ld> pre = 1.0L;
  for (int k = 0; k <= l; ++k) pre *= -i;
  return pre * std::exp(i * x) / x * sum;
}

/// j_l for real x: series where it is accurate, the finite Hankel sum
/// otherwise.
inline ld bessel_j(int l, ld x) {
  if (x < 15.0L || x < l) return bessel_j_series(l, x);
  return hankel1_finite(l, x).real();
}

inline ld bessel_y(int l, ld x) { return hankel1_finite(l, x).imag(); }

inline std::complex<double> hankel2(int l, double x) {
  return {static_cast<double>(bessel_j(l, x)), -static_cast<double>(bessel_y(l, x))};
}

/// Unnormalized P_l^m(x) without the Condon-Shortley phase, from the
/// expanded Rodrigues polynomial differentiated m times.
inline ld legendre(int l, int m, ld x) {
  // P_l(x) = 2^-l sum_k (-1)^k C(l,k) C(2l-2k, l) x^{l-2k}
  auto binom = [](int n, int k) {
    ld c = 1.0L;
    for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
    return c;
  };
  ld sum = 0.0L;
  for (int k = 0; 2 * k <= l; ++k) {
    const int p = l - 2 * k;
    if (p < m) continue;
    ld coef = ((k % 2) ? -1.0L : 1.0L) * binom(l, k) * binom(2 * l - 2 * k, l);
    for (int d = 0; d < m; ++d) coef *= (p - d);
    sum += coef * std::pow(x, static_cast<ld>(p - m));
  }
  sum /= std::pow(2.0L, static_cast<ld>(l));
  return sum * std::pow(1.0L - x * x, m / 2.0L);
}

/// Composite trapezoid rule on [a, b] with n panels.
template <class F>
double trapezoid(F&& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = 0.5 * (f(a) + f(b));
  for (int i = 1; i < n; ++i) s += f(a + i * h);
  return s * h;
}

}  // namespace oracle
