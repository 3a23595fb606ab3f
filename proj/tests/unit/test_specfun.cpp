#include <cmath>
#include <numbers>

#include "../oracles.hpp"
#include "cavscat/errors.hpp"
#include "cavscat/specfun.hpp"
#include "doctest.h"

using namespace cavscat;
using namespace cavscat::specfun;
using std::numbers::pi;

namespace {

double rel(Complex a, Complex b) { return std::abs(a - b) / std::abs(b); }

Complex dj(int l, double x) {
  return spherical_bessel_j(l - 1, x) - (l + 1.0) / x * spherical_bessel_j(l, x);
}
Complex dy(int l, double x) {
  return spherical_bessel_y(l - 1, x) - (l + 1.0) / x * spherical_bessel_y(l, x);
}

}  // namespace

TEST_CASE("j_l limits at the origin") {
  CHECK(spherical_bessel_j(0, 0.0) == Complex(1.0));
  CHECK(spherical_bessel_j(1, 0.0) == Complex(0.0));
  CHECK(std::abs(spherical_bessel_j(0, pi)) < 1e-14);
}

TEST_CASE("j_5(2) against the ascending series") {
  const double ref = static_cast<double>(oracle::bessel_j_series(5, 2.0L));
  CHECK(rel(spherical_bessel_j(5, 2.0), ref) < 1e-12);
}

TEST_CASE("h_l^(2) closed forms") {
  const Complex h = spherical_hankel2(0, 1.0);
  CHECK(std::abs(h - Complex(std::sin(1.0), std::cos(1.0))) < 1e-14);
  // independent closed form i e^{-ix}/x
  CHECK(std::abs(h - Complex(0, 1) * std::exp(Complex(0, -1.0))) < 1e-14);
  CHECK(std::abs(std::abs(spherical_hankel2(0, 10.0)) - 0.1) < 1e-15);
  CHECK(rel(spherical_hankel2(3, 2.5), oracle::hankel2(3, 2.5)) < 1e-10);
  CHECK_THROWS_AS(spherical_hankel2(0, 0.0), DomainError);
}

TEST_CASE("order cap") {
  CHECK_THROWS_AS(spherical_bessel_j(65, 1.0), CapabilityError);
  CHECK_NOTHROW(spherical_bessel_j(64, 1.0));
  CHECK_NOTHROW(spherical_bessel_j(80, 1.0, 100));
}

TEST_CASE("j_l and h_l^(2) against oracles over l <= 20, x in [0.1, 50]") {
  double worst_j = 0.0, worst_h = 0.0;
  for (int l = 0; l <= 20; ++l) {
    for (double x = 0.1; x <= 50.0; x *= 1.07) {
      const double jr = static_cast<double>(oracle::bessel_j(l, x));
      worst_j = std::max(worst_j, rel(spherical_bessel_j(l, x), jr));
      worst_h = std::max(worst_h, rel(spherical_hankel2(l, x), oracle::hankel2(l, x)));
    }
  }
  CHECK(worst_j < 1e-10);
  CHECK(worst_h < 1e-10);
}

TEST_CASE("j_l for complex argument matches sin z / z") {
  const Complex z(3.0, 0.7);
  CHECK(std::abs(spherical_bessel_j(0, z) - std::sin(z) / z) < 1e-14);
  const Complex j1 = std::sin(z) / (z * z) - std::cos(z) / z;
  CHECK(std::abs(spherical_bessel_j(1, z) - j1) < 1e-14);
}

TEST_CASE("Wronskian j_l y_l' - j_l' y_l = 1/x^2") {
  double worst = 0.0;
  for (int l = 1; l <= 20; ++l) {
    for (double x = 0.5; x <= 50.0; x += 0.37) {
      const Complex w = spherical_bessel_j(l, x) * dy(l, x) - dj(l, x) * spherical_bessel_y(l, x);
      worst = std::max(worst, std::abs(w * (x * x) - 1.0));
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("three-term recurrence consistency") {
  double worst = 0.0;
  for (int l = 1; l < 20; ++l) {
    for (double x : {0.3, 1.0, 2.7, 7.5, 19.0, 42.0}) {
      auto check = [&](auto f) {
        const Complex lhs = (2.0 * l + 1.0) * f(l, x) / x;
        const Complex rhs = f(l - 1, x) + f(l + 1, x);
        worst = std::max(worst, std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs)));
      };
      check([](int n, double t) { return spherical_bessel_j(n, t); });
      check([](int n, double t) { return spherical_hankel2(n, t); });
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("legendre_p") {
  for (int l = 0; l <= 64; ++l) CHECK(legendre_p(l, 0, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(legendre_p(1, 0, 0.5) == 0.5);
  CHECK(std::abs(legendre_p(6, 0, 0.3) - static_cast<double>(oracle::legendre(6, 0, 0.3L))) < 1e-13);
  CHECK_THROWS_AS(legendre_p(2, 0, 1.0001), DomainError);

  double worst = 0.0;
  for (int l = 0; l <= 20; ++l) {
    for (int m = 0; m <= std::min(l, 3); ++m) {
      double scale = 0.0;
      std::vector<double> diff;
      for (double x = -1.0; x <= 1.0 + 1e-12; x += 0.01) {
        const double xx = std::clamp(x, -1.0, 1.0);
        const double ref = static_cast<double>(oracle::legendre(l, m, xx));
        scale = std::max(scale, std::abs(ref));
        diff.push_back(std::abs(legendre_p(l, m, xx) - ref));
      }
      for (double d : diff) worst = std::max(worst, d / scale);
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("P_l has l sign changes on (-1, 1)") {
  for (int l = 0; l <= 10; ++l) {
    int changes = 0;
    double prev = legendre_p(l, 0, -1.0 + 1e-4);
    for (int i = 1; i < 10000; ++i) {
      const double x = -1.0 + 2.0 * (i + 0.5) / 10000.0;
      if (x >= 1.0) break;
      const double v = legendre_p(l, 0, x);
      if ((v < 0) != (prev < 0)) ++changes;
      prev = v;
    }
    CHECK(changes == l);
  }
}

TEST_CASE("dP/dtheta table is pole-free and matches finite differences") {
  for (double theta : {0.0, 1e-9, 0.4, pi / 3, 2.0, pi - 1e-9, pi}) {
    const LegendreTable t = legendre_table(12, theta);
    for (int l = 0; l <= 12; ++l) {
      CHECK(std::isfinite(t.dp_dtheta[l]));
      if (theta > 1e-3 && theta < pi - 1e-3) {
        const double h = 1e-5;
        const double fd = (legendre_p(l, 0, std::cos(theta + h)) - legendre_p(l, 0, std::cos(theta - h))) / (2 * h);
        CHECK(std::abs(t.dp_dtheta[l] - fd) < 1e-7 * std::max(1.0, std::abs(fd)));
      } else {
        CHECK(std::abs(t.dp_dtheta[l]) < 1e-6);
      }
    }
  }
}

TEST_CASE("Petrashen vectors") {
  const SphericalPoint p{2.0, 0.7, 1.3};
  const CVec3 y0p = petrashen_vector({VshKind::Yplus, 0, 0}, p);
  CHECK(std::abs(y0p[0] - 1.0) < 1e-15);
  CHECK(std::abs(y0p[1]) < 1e-15);
  CHECK(std::abs(y0p[2]) < 1e-15);
  const CVec3 y0m = petrashen_vector({VshKind::Yminus, 0, 0}, p);
  for (int c = 0; c < 3; ++c) CHECK(std::abs(y0m[c]) == 0.0);

  // r grad Y_20 has theta component dP_2/dtheta; oracle by central difference
  const double th = pi / 3, h = 1e-5;
  const double fd = (legendre_p(2, 0, std::cos(th + h)) - legendre_p(2, 0, std::cos(th - h))) / (2 * h);
  const CVec3 y2 = petrashen_vector({VshKind::Yplus, 2, 0}, {1.0, th, 0.0});
  CHECK(std::abs(y2[0] - 3.0 * legendre_p(2, 0, std::cos(th))) < 1e-14);
  CHECK(std::abs(y2[1] + fd) < 1e-8);

  CHECK_THROWS_AS(petrashen_vector({VshKind::Yplus, 2, 1}, p), CapabilityError);
}

TEST_CASE("Y+ and Y- have no phi component") {
  for (int l = 0; l <= 10; ++l) {
    for (double th = 0.0; th <= pi; th += pi / 17) {
      for (double ph : {0.0, 1.0, 4.0}) {
        CHECK(petrashen_vector({VshKind::Yplus, l, 0}, {1.0, th, ph})[2] == Complex(0.0));
        CHECK(petrashen_vector({VshKind::Yminus, l, 0}, {1.0, th, ph})[2] == Complex(0.0));
      }
    }
  }
}
