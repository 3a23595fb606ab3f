#include "cavscat/vec.hpp"

#include <algorithm>

namespace cavscat {

SphericalPoint to_spherical(const Vec3& x) {
  SphericalPoint p;
  p.r = norm(x);
  if (p.r == 0.0) return p;
  p.theta = std::acos(std::clamp(x[2] / p.r, -1.0, 1.0));
  p.phi = std::atan2(x[1], x[0]);
  if (p.phi < 0.0) p.phi += 2.0 * M_PI;
  return p;
}

Vec3 to_cartesian(const SphericalPoint& p) {
  const double st = std::sin(p.theta);
  return {p.r * st * std::cos(p.phi), p.r * st * std::sin(p.phi), p.r * std::cos(p.theta)};
}

CVec3 spherical_to_cartesian_components(const CVec3& v, const SphericalPoint& p) {
  const double st = std::sin(p.theta), ct = std::cos(p.theta);
  const double sp = std::sin(p.phi), cp = std::cos(p.phi);
  // r̂ = (st cp, st sp, ct), θ̂ = (ct cp, ct sp, -st), φ̂ = (-sp, cp, 0)
  return {v[0] * (st * cp) + v[1] * (ct * cp) - v[2] * sp,
          v[0] * (st * sp) + v[1] * (ct * sp) + v[2] * cp,
          v[0] * ct - v[1] * st};
}

}  // namespace cavscat
