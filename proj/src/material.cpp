#include "cavscat/material.hpp"

#include "cavscat/errors.hpp"

namespace cavscat {

void Material::validate(const std::string& what) const {
  if (!(rho > 0.0)) throw ConfigError("material", what + ": density must be positive");
  if (!(vp > 0.0)) throw ConfigError("material", what + ": vp must be positive");
  if (!(vs >= 0.0)) throw ConfigError("material", what + ": vs must be non-negative");
  if (!(lambda() > 0.0)) throw ConfigError("material", what + ": lambda must be positive (vp/vs > sqrt 2)");
}

double normal_reflection_coefficient(const Material& from, const Material& to) {
  const double z1 = from.p_impedance(), z2 = to.p_impedance();
  return (z1 - z2) / (z1 + z2);
}

}  // namespace cavscat
