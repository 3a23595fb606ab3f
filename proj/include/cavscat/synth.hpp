#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cavscat/analytic.hpp"
#include "cavscat/material.hpp"
#include "cavscat/vec.hpp"

/// Time-domain synthesis from the modal solver and the closed-form incident
/// plane wave. Fourier transforms use F(omega) = int f(t) e^{i omega t} dt so
/// that a time-harmonic field U e^{-i omega t} is recovered by the inverse
/// f(t) = (1/2pi) int F(omega) e^{-i omega t} d omega.
namespace cavscat::synth {

/// R(t) = A (1 - 2 beta (t - t0)^2) exp(-beta (t - t0)^2), beta = (pi f_peak)^2.
struct RickerParams {
  double f_peak = 20.0;
  double t0 = 0.0;
  double amplitude = 1.0;

  double beta() const;
  static RickerParams from_beta(double beta, double t0);
  void validate() const;
};

double ricker(const RickerParams& p, double t);

/// dR/dt.
double ricker_derivative(const RickerParams& p, double t);

/// int_0^s R(t) dt in closed form.
double ricker_integral(const RickerParams& p, double s);

/// Smallest s at which |int_0^s R| reaches `fraction` of its maximum: the
/// threshold onset of the radiated displacement relative to the source time.
double displacement_onset(const RickerParams& p, double fraction = 0.05);

/// Closed-form F[R](f) including the delay phase e^{i omega t0}. |F[R]|
/// peaks at f_peak.
Complex ricker_spectrum(const RickerParams& p, double f);

struct TimeGrid {
  double dt = 1e-3;
  int n_steps = 1024;
  double t_start = 0.0;

  double time(int i) const { return t_start + i * dt; }
  double duration() const { return n_steps * dt; }
  void validate() const;
};

enum class Component { X, Y, Z };

char component_name(Component c);
Component parse_component(const std::string& s);

/// Plane P wave radiated by a uniform body-force layer R(t) z-hat at z = z0 in
/// a homogeneous medium. Only the z component is nonzero:
///   u_z = 1/(2 rho vp) H(s) int_0^s R,  s = t - |z - z0| / vp.
struct PlaneWave {
  Material medium;
  double z0 = 0.0;
  RickerParams ricker;

  double amplitude() const { return 1.0 / (2.0 * medium.p_impedance()); }
  double retarded_time(double z, double t) const;
  double displacement(double z, double t) const;
  /// du_z/dz
  double strain(double z, double t) const;
  double velocity(double z, double t) const;
  double acceleration(double z, double t) const;
};

/// u_z of the plane wave radiated by an arbitrary source profile, with the
/// time integral evaluated by adaptive Gauss-Kronrod quadrature to `rel_tol`.
double incident_time_domain(const Material& exterior, double z0, const std::function<double(double)>& profile,
                            const Vec3& point, double t, double rel_tol = 1e-10);

/// Same for the Ricker profile.
double incident_time_domain(const Material& exterior, double z0, const RickerParams& profile, const Vec3& point,
                            double t, double rel_tol = 1e-10);

/// Frequency samples f_k = k df for k = 1..k_max, df = 1 / (n_steps dt).
struct FrequencyPlan {
  double df = 0.0;
  int k_max = 0;

  double frequency(int k) const { return k * df; }
  /// Covers (0, f_max] = (0, 3 f_peak] for the grid's window.
  static FrequencyPlan make(const TimeGrid& grid, const RickerParams& p, double f_max_factor = 3.0);
};

enum class SpectrumMode {
  Magnitude,        ///< multiply by |F[R]|; wavelet phase and delay dropped
  PhasePreserving,  ///< multiply by F[R] including the e^{i omega t0} delay
  PlaneSource,      ///< spectrum of the plane wave radiated from z0, matching the DG source
};

enum class Field { Total, Scattered };

struct Receiver {
  std::string id;
  Vec3 position{};
  /// Required when the receiver lies on the interface.
  std::optional<analytic::Side> side;
};

struct SynthesisOptions {
  SpectrumMode mode = SpectrumMode::PhasePreserving;
  Field field = Field::Total;
  double z0 = 0.0;  ///< source plane, PlaneSource mode only
  int threads = 1;
};

struct Seismogram {
  std::string id;
  Vec3 receiver{};
  Component component = Component::Z;
  TimeGrid grid;
  std::vector<double> values;
  /// Largest imaginary part left after the inverse transform.
  double imag_residue = 0.0;
};

/// Weight W(omega) multiplying the unit-amplitude harmonic field.
Complex spectral_weight(const RickerParams& p, const Material& exterior, const SynthesisOptions& opt, double f);

/// Harmonic field at one receiver for a unit incident plane wave. Interior
/// scattered field is U_1 minus the incident plane wave.
CVec3 harmonic_field(const analytic::ModalSolution& sol, const Receiver& r, Field field);

/// Spectra X_k (k = 0..k_max, X_0 = 0) per receiver and component, already
/// weighted and shifted by e^{-i omega_k t_start}. Layout [receiver][component][k].
std::vector<std::vector<std::vector<Complex>>> synthesize_spectra(const analytic::SphereConfig& cfg,
                                                                  const std::vector<Receiver>& receivers,
                                                                  const std::vector<Component>& components,
                                                                  const RickerParams& p, const TimeGrid& grid,
                                                                  const FrequencyPlan& plan,
                                                                  const SynthesisOptions& opt);

/// s_n = df sum_{|k| <= k_max} X_k e^{-2 pi i k n / N}, with X_{-k} = conj(X_k).
/// n_steps must be a power of two. Returns the real part and stores the
/// largest imaginary part in `imag_residue`.
std::vector<double> inverse_synthesis(const std::vector<Complex>& spectrum, const TimeGrid& grid, double df,
                                      double* imag_residue = nullptr);

std::vector<Seismogram> synthesize(const analytic::SphereConfig& cfg, const std::vector<Receiver>& receivers,
                                   const std::vector<Component>& components, const RickerParams& p,
                                   const TimeGrid& grid, const FrequencyPlan& plan, const SynthesisOptions& opt);

Seismogram synthesize_seismogram(const analytic::SphereConfig& cfg, const Receiver& receiver, Component component,
                                 const RickerParams& p, const TimeGrid& grid, const FrequencyPlan& plan,
                                 const SynthesisOptions& opt);

/// Seismogram CSV: header `t,<id>,...`, one row per step, 9 significant
/// digits. All traces must share one grid.
void write_csv(const std::string& path, const std::vector<Seismogram>& traces);

/// Reads a CSV written by write_csv. Component and position are not stored
/// and are left at defaults.
std::vector<Seismogram> read_csv(const std::string& path);

}  // namespace cavscat::synth
