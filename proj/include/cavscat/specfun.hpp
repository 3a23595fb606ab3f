#pragma once

#include <vector>

#include "cavscat/vec.hpp"

/// Special functions for the modal solution of sphere scattering: spherical
/// Bessel/Hankel functions of complex argument, unnormalized associated
/// Legendre functions and the Petrashen vector spherical harmonics.
///
/// All functions are pure and reentrant.
namespace cavscat::specfun {

inline constexpr int kDefaultLCap = 64;

/// j_l(x). Exact at x = 0 (series form below |x| < 1e-2). Orders l <= |x|
/// come from upward recurrence, higher orders from Miller's downward
/// recurrence normalized against the upward values.
Complex spherical_bessel_j(int l, Complex x, int l_cap = kDefaultLCap);

/// y_l(x) by upward recurrence. Throws DomainError at x = 0.
Complex spherical_bessel_y(int l, Complex x, int l_cap = kDefaultLCap);

/// h_l^(1)(x) = j_l(x) + i y_l(x).
Complex spherical_hankel1(int l, Complex x, int l_cap = kDefaultLCap);

/// h_l^(2)(x) = j_l(x) - i y_l(x).
Complex spherical_hankel2(int l, Complex x, int l_cap = kDefaultLCap);

/// j_0..j_lmax in one pass.
std::vector<Complex> spherical_bessel_j_array(int lmax, Complex x, int l_cap = kDefaultLCap);

/// y_0..y_lmax in one pass.
std::vector<Complex> spherical_bessel_y_array(int lmax, Complex x, int l_cap = kDefaultLCap);

/// Unnormalized associated Legendre function P_l^m(x), 0 <= m <= l, without
/// the Condon-Shortley phase. Throws DomainError for |x| > 1.
double legendre_p(int l, int m, double x);

/// P_l(cos theta) and dP_l(cos theta)/dtheta for l = 0..lmax (m = 0).
/// The derivative uses -sin(theta) P_l'(cos theta) with the pole-free
/// recurrence P'_{l+1} = P'_{l-1} + (2l+1) P_l.
struct LegendreTable {
  std::vector<double> p;
  std::vector<double> dp_dtheta;
};
LegendreTable legendre_table(int lmax, double theta);

enum class VshKind { Y0, Yplus, Yminus };

struct VectorSphericalHarmonic {
  VshKind kind = VshKind::Yplus;
  int l = 0;
  int m = 0;
};

/// Petrashen vector in the local basis {r̂, θ̂, φ̂}. Only m = 0 is supported.
///   Y0 = r x grad Y,  Y+ = (l+1) r̂ Y - r grad Y,  Y- = l r̂ Y + r grad Y
CVec3 petrashen_vector(const VectorSphericalHarmonic& v, const SphericalPoint& point);

}  // namespace cavscat::specfun
