#pragma once

#include <optional>
#include <vector>

#include "cavscat/material.hpp"
#include "cavscat/vec.hpp"

/// Frequency-domain modal solution for a plane P wave scattered by a sphere.
///
/// Time convention e^{-i omega t}. The incident wave is z e^{i k z}; it and
/// the fields it excites are expanded over Petrashen vectors with phase
/// factor i^{l+1}:
///
///   P mode:  f_{l+1}(k_p r) Y+ - f_{l-1}(k_p r) Y-
///   S mode:  l f_{l+1}(k_s r) Y+ + (l+1) f_{l-1}(k_s r) Y-
///
/// with f = j_l inside the sphere and f = h_l^(1) (outgoing) outside.
namespace cavscat::analytic {

enum class InteriorModel {
  Acoustic,  ///< mu = 0 inside; unknowns a1, a2, b2
  Elastic,   ///< general 4x4 system with b1; used by control experiments
};

struct SphereConfig {
  double radius = 30.0;
  Material interior = kWater;
  Material exterior = kRock;
  InteriorModel model = InteriorModel::Acoustic;

  void validate() const;
  bool operator==(const SphereConfig&) const = default;
};

struct FrequencyContext {
  double omega = 0.0;
  double kp_e = 0.0, ks_e = 0.0, kp_a = 0.0, ks_a = 0.0;

  static FrequencyContext make(const SphereConfig& cfg, double omega);

  /// Largest wavenumber in either medium; sets the series truncation.
  double k_max() const;
};

struct ModalCoefficients {
  int l = 0;
  Complex a1, b1, a2, b2;
  double residual = 0.0;   ///< relative residual of the equilibrated interface system
  double condition = 0.0;  ///< 1-norm condition estimate of the equilibrated system
  bool singular = false;
};

enum class Side { Interior, Exterior };

/// Coefficients for all orders 0..l_max at one frequency.
struct ModalSolution {
  SphereConfig cfg;
  FrequencyContext ctx;
  std::vector<ModalCoefficients> coeffs;

  int l_max() const { return static_cast<int>(coeffs.size()) - 1; }
  double max_residual() const;
  bool any_singular() const;
};

/// ceil(k_max R) + 12.
int default_l_max(const SphereConfig& cfg, const FrequencyContext& ctx);

/// Truncated modal series of the unit incident plane P wave, Cartesian.
CVec3 incident_plane_p(const FrequencyContext& ctx, const SphericalPoint& point, int l_max);

/// Closed form z e^{i kp_e z}.
CVec3 incident_plane_p_exact(const FrequencyContext& ctx, const Vec3& x);

ModalCoefficients solve_modal_coefficients(const SphereConfig& cfg, const FrequencyContext& ctx, int l);

ModalSolution solve(const SphereConfig& cfg, const FrequencyContext& ctx, int l_max);
ModalSolution solve(const SphereConfig& cfg, double omega);

/// Scattered displacement (U_1 inside, U_2 outside), Cartesian. Without an
/// explicit side the point must lie farther than 1e-9 R from the interface.
CVec3 scattered_field(const ModalSolution& sol, const Vec3& x, std::optional<Side> side = std::nullopt);

/// Total displacement: U_1 inside, closed-form incident + U_2 outside.
CVec3 total_field(const ModalSolution& sol, const Vec3& x, std::optional<Side> side = std::nullopt);

/// Traction sigma(U) r̂ of the total field on the sphere through x (normal
/// r̂), evaluated with the material of `side` from closed-form radial
/// derivatives. Exterior side includes the incident series.
CVec3 traction_of_series(const ModalSolution& sol, const Vec3& x, Side side);

/// Time-averaged outward energy flux of the total field through the sphere
/// r = radius, by Gauss quadrature in theta (n_theta) and the trapezoid rule
/// in phi (n_phi).
double energy_flux(const ModalSolution& sol, double radius, int n_theta = 32, int n_phi = 64);

}  // namespace cavscat::analytic
