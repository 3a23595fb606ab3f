#include "cavscat/specfun.hpp"

#include <cmath>
#include <string>

#include "cavscat/errors.hpp"

namespace cavscat::specfun {
namespace {

void check_order(int l, int l_cap) {
  if (l < 0) throw DomainError("specfun", "negative order " + std::to_string(l));
  if (l > l_cap)
    throw CapabilityError("specfun", "order " + std::to_string(l) + " exceeds l_cap " + std::to_string(l_cap));
}

constexpr double kSeriesThreshold = 1e-2;

// Ascending series; only used for tiny |x| where a handful of terms suffice.
Complex j_series(int l, Complex x) {
  Complex lead = 1.0;
  for (int i = 1; i <= l; ++i) lead *= x / static_cast<double>(2 * i + 1);
  const Complex q = -0.5 * x * x;
  Complex term = 1.0, sum = 1.0;
  for (int k = 1; k < 30; ++k) {
    term *= q / (static_cast<double>(k) * static_cast<double>(2 * l + 2 * k + 1));
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum)) break;
  }
  return lead * sum;
}

}  // namespace

std::vector<Complex> spherical_bessel_j_array(int lmax, Complex x, int l_cap) {
  check_order(lmax, l_cap);
  std::vector<Complex> out(static_cast<std::size_t>(lmax) + 1);
  const double ax = std::abs(x);
  if (ax < kSeriesThreshold) {
    for (int l = 0; l <= lmax; ++l) out[l] = (ax == 0.0) ? Complex(l == 0 ? 1.0 : 0.0) : j_series(l, x);
    return out;
  }

  const Complex s = std::sin(x), c = std::cos(x);
  const Complex j0 = s / x;
  const Complex j1 = s / (x * x) - c / x;

  // Upward recurrence is accurate while l <= |x|.
  const int l_up = std::min(lmax, std::max(1, static_cast<int>(std::floor(ax))));
  std::vector<Complex> up(static_cast<std::size_t>(l_up) + 1);
  up[0] = j0;
  if (l_up >= 1) up[1] = j1;
  for (int l = 1; l < l_up; ++l) up[l + 1] = static_cast<double>(2 * l + 1) / x * up[l] - up[l - 1];

  const int switch_l = static_cast<int>(std::floor(ax));
  if (lmax <= switch_l) {
    for (int l = 0; l <= lmax; ++l) out[l] = up[l];
    return out;
  }

  // Miller: start well above max(lmax, |x|) with (f_{n+1}, f_n) = (0, tiny).
  const int n_start =
      std::max(lmax, static_cast<int>(std::ceil(ax))) + 30 + static_cast<int>(std::ceil(3.0 * std::sqrt(ax)));
  std::vector<Complex> down(static_cast<std::size_t>(lmax) + 1);
  Complex f_next = 0.0, f = 1e-30;
  for (int n = n_start; n >= 1; --n) {
    const Complex f_prev = static_cast<double>(2 * n + 1) / x * f - f_next;
    f_next = f;
    f = f_prev;
    if (n - 1 <= lmax) down[n - 1] = f;
    if (std::abs(f) > 1e100) {
      f *= 1e-100;
      f_next *= 1e-100;
      for (int k = std::max(0, n - 1); k <= lmax; ++k) down[k] *= 1e-100;
    }
  }

  // Normalize against the exact low orders (least squares on two orders so a
  // zero of one of them cannot spoil the scale).
  const int a = std::max(0, std::min(switch_l, l_up) - 1);
  const int b = std::min(switch_l, l_up);
  Complex num = up[a] * std::conj(down[a]);
  double den = std::norm(down[a]);
  if (b != a) {
    num += up[b] * std::conj(down[b]);
    den += std::norm(down[b]);
  }
  const Complex scale = num / den;
  for (int l = 0; l <= lmax; ++l) out[l] = (l <= switch_l && l <= l_up) ? up[l] : scale * down[l];
  return out;
}

std::vector<Complex> spherical_bessel_y_array(int lmax, Complex x, int l_cap) {
  check_order(lmax, l_cap);
  if (x == Complex(0.0)) throw DomainError("specfun", "y_l is singular at x = 0");
  std::vector<Complex> out(static_cast<std::size_t>(lmax) + 1);
  const Complex s = std::sin(x), c = std::cos(x);
  out[0] = -c / x;
  if (lmax >= 1) out[1] = -c / (x * x) - s / x;
  for (int l = 1; l < lmax; ++l) out[l + 1] = static_cast<double>(2 * l + 1) / x * out[l] - out[l - 1];
  return out;
}

Complex spherical_bessel_j(int l, Complex x, int l_cap) { return spherical_bessel_j_array(l, x, l_cap)[l]; }

Complex spherical_bessel_y(int l, Complex x, int l_cap) { return spherical_bessel_y_array(l, x, l_cap)[l]; }

Complex spherical_hankel1(int l, Complex x, int l_cap) {
  if (x == Complex(0.0)) throw DomainError("specfun", "h_l is singular at x = 0");
  const Complex i(0.0, 1.0);
  return spherical_bessel_j(l, x, l_cap) + i * spherical_bessel_y(l, x, l_cap);
}

Complex spherical_hankel2(int l, Complex x, int l_cap) {
  if (x == Complex(0.0)) throw DomainError("specfun", "h_l is singular at x = 0");
  const Complex i(0.0, 1.0);
  return spherical_bessel_j(l, x, l_cap) - i * spherical_bessel_y(l, x, l_cap);
}

double legendre_p(int l, int m, double x) {
  if (std::abs(x) > 1.0) throw DomainError("specfun", "legendre_p requires |x| <= 1");
  if (m < 0 || m > l) throw DomainError("specfun", "legendre_p requires 0 <= m <= l");
  double pmm = 1.0;
  if (m > 0) {
    const double s = std::sqrt((1.0 - x) * (1.0 + x));
    double fact = 1.0;
    for (int i = 1; i <= m; ++i) {
      pmm *= fact * s;
      fact += 2.0;
    }
  }
  if (l == m) return pmm;
  double pm1 = x * (2 * m + 1) * pmm;
  if (l == m + 1) return pm1;
  double p = 0.0;
  for (int ll = m + 1; ll < l; ++ll) {
    p = ((2 * ll + 1) * x * pm1 - (ll + m) * pmm) / static_cast<double>(ll - m + 1);
    pmm = pm1;
    pm1 = p;
  }
  return p;
}

LegendreTable legendre_table(int lmax, double theta) {
  LegendreTable t;
  t.p.assign(static_cast<std::size_t>(lmax) + 1, 0.0);
  t.dp_dtheta.assign(static_cast<std::size_t>(lmax) + 1, 0.0);
  const double x = std::cos(theta), st = std::sin(theta);
  std::vector<double> dp(static_cast<std::size_t>(lmax) + 2, 0.0);
  t.p[0] = 1.0;
  if (lmax >= 1) t.p[1] = x;
  for (int l = 1; l < lmax; ++l) t.p[l + 1] = ((2 * l + 1) * x * t.p[l] - l * t.p[l - 1]) / (l + 1);
  // P'_0 = 0, P'_1 = 1, P'_{l+1} = P'_{l-1} + (2l+1) P_l
  if (lmax >= 1) dp[1] = 1.0;
  for (int l = 1; l < lmax; ++l) dp[l + 1] = dp[l - 1] + (2 * l + 1) * t.p[l];
  for (int l = 0; l <= lmax; ++l) t.dp_dtheta[l] = -st * dp[l];
  return t;
}

CVec3 petrashen_vector(const VectorSphericalHarmonic& v, const SphericalPoint& point) {
  if (v.l < 0 || std::abs(v.m) > v.l) throw DomainError("specfun", "invalid harmonic indices");
  if (v.m != 0) throw CapabilityError("specfun", "petrashen_vector supports m = 0 only");
  if (point.theta < 0.0 || point.theta > M_PI) throw DomainError("specfun", "theta outside [0, pi]");
  const LegendreTable t = legendre_table(v.l, point.theta);
  const double p = t.p[v.l], dp = t.dp_dtheta[v.l];
  const double l = v.l;
  switch (v.kind) {
    case VshKind::Y0:
      return {0.0, 0.0, dp};
    case VshKind::Yplus:
      return {(l + 1.0) * p, -dp, 0.0};
    case VshKind::Yminus:
      return {l * p, dp, 0.0};
  }
  return {};
}

}  // namespace cavscat::specfun
