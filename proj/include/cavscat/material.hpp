#pragma once

#include <string>

namespace cavscat {

/// Isotropic medium. vs = 0 denotes an acoustic (fluid) medium.
struct Material {
  double rho = 0.0;  ///< density [kg/m^3]
  double vp = 0.0;   ///< P velocity [m/s]
  double vs = 0.0;   ///< S velocity [m/s]

  double mu() const { return rho * vs * vs; }
  double lambda() const { return rho * (vp * vp - 2.0 * vs * vs); }
  double p_modulus() const { return rho * vp * vp; }
  double p_impedance() const { return rho * vp; }
  bool acoustic() const { return vs == 0.0; }

  /// Throws ConfigError when rho, vp <= 0, vs < 0 or lambda <= 0.
  void validate(const std::string& what) const;

  bool operator==(const Material&) const = default;
};

/// Reference media: water-filled cavity in crystalline rock.
inline constexpr Material kWater{1000.0, 1500.0, 0.0};
inline constexpr Material kRock{2700.0, 4000.0, 2310.0};

/// Displacement reflection coefficient for normal incidence from `from`
/// onto `to`: (Z_from - Z_to) / (Z_from + Z_to).
double normal_reflection_coefficient(const Material& from, const Material& to);

}  // namespace cavscat
