#include "cavscat/synth.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "cavscat/errors.hpp"
#include "cavscat/fft.hpp"
#include "cavscat/parallel.hpp"

namespace cavscat::synth {

using std::numbers::pi;

double RickerParams::beta() const { return pi * pi * f_peak * f_peak; }

RickerParams RickerParams::from_beta(double beta, double t0) {
  RickerParams p;
  p.f_peak = std::sqrt(beta) / pi;
  p.t0 = t0;
  return p;
}

void RickerParams::validate() const {
  if (!(f_peak > 0.0)) throw ConfigError("synth", "ricker f_peak must be positive");
  if (!std::isfinite(t0) || !std::isfinite(amplitude)) throw ConfigError("synth", "ricker t0/amplitude not finite");
}

double ricker(const RickerParams& p, double t) {
  const double b = p.beta();
  const double tau = t - p.t0;
  return p.amplitude * (1.0 - 2.0 * b * tau * tau) * std::exp(-b * tau * tau);
}

double ricker_derivative(const RickerParams& p, double t) {
  const double b = p.beta();
  const double tau = t - p.t0;
  return p.amplitude * 2.0 * b * tau * (2.0 * b * tau * tau - 3.0) * std::exp(-b * tau * tau);
}

double ricker_integral(const RickerParams& p, double s) {
  // d/dtau [tau e^{-beta tau^2}] = (1 - 2 beta tau^2) e^{-beta tau^2}
  const double b = p.beta();
  const double tau = s - p.t0;
  return p.amplitude * (tau * std::exp(-b * tau * tau) + p.t0 * std::exp(-b * p.t0 * p.t0));
}

double displacement_onset(const RickerParams& p, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("synth", "onset fraction must lie in (0, 1)");
  // The leading lobe of tau e^{-beta tau^2} has its extremum at tau = -1/sqrt(2 beta).
  const double b = p.beta();
  const double tau_peak = -1.0 / std::sqrt(2.0 * b);
  const double target = fraction * std::abs(tau_peak) * std::exp(-0.5);
  auto g = [b](double tau) { return std::abs(tau) * std::exp(-b * tau * tau); };
  double lo = tau_peak * 20.0, hi = tau_peak;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) < target ? lo : hi) = mid;
  }
  return p.t0 + 0.5 * (lo + hi);
}

Complex ricker_spectrum(const RickerParams& p, double f) {
  const double b = p.beta();
  const double w = 2.0 * pi * f;
  const double mag = w * w / (2.0 * b) * std::sqrt(pi / b) * std::exp(-w * w / (4.0 * b));
  return p.amplitude * mag * std::polar(1.0, w * p.t0);
}

void TimeGrid::validate() const {
  if (!(dt > 0.0)) throw ConfigError("synth", "time step must be positive");
  if (n_steps <= 0) throw ConfigError("synth", "n_steps must be positive");
}

char component_name(Component c) {
  switch (c) {
    case Component::X:
      return 'x';
    case Component::Y:
      return 'y';
    default:
      return 'z';
  }
}

Component parse_component(const std::string& s) {
  if (s == "x" || s == "X") return Component::X;
  if (s == "y" || s == "Y") return Component::Y;
  if (s == "z" || s == "Z") return Component::Z;
  throw ConfigError("synth", "unknown component '" + s + "'");
}

double PlaneWave::retarded_time(double z, double t) const { return t - std::abs(z - z0) / medium.vp; }

double PlaneWave::displacement(double z, double t) const {
  const double s = retarded_time(z, t);
  return s > 0.0 ? amplitude() * ricker_integral(ricker, s) : 0.0;
}

double PlaneWave::strain(double z, double t) const {
  const double s = retarded_time(z, t);
  if (s <= 0.0) return 0.0;
  const double sign = z >= z0 ? 1.0 : -1.0;
  return -sign / medium.vp * amplitude() * synth::ricker(ricker, s);
}

double PlaneWave::velocity(double z, double t) const {
  const double s = retarded_time(z, t);
  return s > 0.0 ? amplitude() * synth::ricker(ricker, s) : 0.0;
}

double PlaneWave::acceleration(double z, double t) const {
  const double s = retarded_time(z, t);
  return s > 0.0 ? amplitude() * ricker_derivative(ricker, s) : 0.0;
}

double incident_time_domain(const Material& exterior, double z0, const std::function<double(double)>& profile,
                            const Vec3& point, double t, double rel_tol) {
  const double s = t - std::abs(point[2] - z0) / exterior.vp;
  if (s <= 0.0) return 0.0;
  double err = 0.0;
  const double integral =
      boost::math::quadrature::gauss_kronrod<double, 15>::integrate(profile, 0.0, s, 30, rel_tol, &err);
  return integral / (2.0 * exterior.p_impedance());
}

double incident_time_domain(const Material& exterior, double z0, const RickerParams& profile, const Vec3& point,
                            double t, double rel_tol) {
  return incident_time_domain(
      exterior, z0, [&](double tau) { return ricker(profile, tau); }, point, t, rel_tol);
}

FrequencyPlan FrequencyPlan::make(const TimeGrid& grid, const RickerParams& p, double f_max_factor) {
  grid.validate();
  FrequencyPlan plan;
  plan.df = 1.0 / grid.duration();
  const double f_max = f_max_factor * p.f_peak;
  plan.k_max = static_cast<int>(std::ceil(f_max / plan.df));
  if (plan.k_max >= grid.n_steps / 2)
    throw ConfigError("synth", "time step too coarse: Nyquist frequency below f_max");
  return plan;
}

Complex spectral_weight(const RickerParams& p, const Material& exterior, const SynthesisOptions& opt, double f) {
  const Complex r = ricker_spectrum(p, f);
  switch (opt.mode) {
    case SpectrumMode::Magnitude:
      return std::abs(r);
    case SpectrumMode::PhasePreserving:
      return r;
    case SpectrumMode::PlaneSource: {
      // u = 1/(2 rho v) G(t - (z - z0)/v), G' = R  =>  U = R^/(-i w) e^{-i w z0/v} e^{ikz} / (2 rho v)
      const double w = 2.0 * pi * f;
      const double tau0 = -opt.z0 / exterior.vp;
      return r / Complex(0.0, -w) * std::polar(1.0, w * tau0) / (2.0 * exterior.p_impedance());
    }
  }
  return r;
}

CVec3 harmonic_field(const analytic::ModalSolution& sol, const Receiver& r, Field field) {
  const SphericalPoint sp = to_spherical(r.position);
  analytic::Side side;
  if (r.side) {
    side = *r.side;
  } else {
    const double R = sol.cfg.radius;
    if (std::abs(sp.r - R) <= 1e-9 * R)
      throw DomainError("synth", "receiver '" + r.id + "' lies on the interface; a side must be given");
    side = sp.r < R ? analytic::Side::Interior : analytic::Side::Exterior;
  }
  if (field == Field::Total) return analytic::total_field(sol, r.position, side);
  CVec3 u = analytic::scattered_field(sol, r.position, side);
  if (side == analytic::Side::Interior) u = u - analytic::incident_plane_p_exact(sol.ctx, r.position);
  return u;
}

std::vector<std::vector<std::vector<Complex>>> synthesize_spectra(const analytic::SphereConfig& cfg,
                                                                  const std::vector<Receiver>& receivers,
                                                                  const std::vector<Component>& components,
                                                                  const RickerParams& p, const TimeGrid& grid,
                                                                  const FrequencyPlan& plan,
                                                                  const SynthesisOptions& opt) {
  cfg.validate();
  p.validate();
  grid.validate();
  const std::size_t k_count = static_cast<std::size_t>(plan.k_max) + 1;
  std::vector<std::vector<std::vector<Complex>>> out(
      receivers.size(), std::vector<std::vector<Complex>>(components.size(), std::vector<Complex>(k_count)));
  parallel_for(plan.k_max, opt.threads, [&](int i) {
    const int k = i + 1;
    const double f = plan.frequency(k);
    const double omega = 2.0 * pi * f;
    const Complex w = spectral_weight(p, cfg.exterior, opt, f) * std::polar(1.0, -omega * grid.t_start);
    if (w == Complex(0.0)) return;
    const analytic::ModalSolution sol = analytic::solve(cfg, omega);
    for (std::size_t r = 0; r < receivers.size(); ++r) {
      const CVec3 u = harmonic_field(sol, receivers[r], opt.field);
      for (std::size_t c = 0; c < components.size(); ++c)
        out[r][c][k] = w * u[static_cast<int>(components[c])];
    }
  });
  return out;
}

std::vector<double> inverse_synthesis(const std::vector<Complex>& spectrum, const TimeGrid& grid, double df,
                                      double* imag_residue) {
  const std::size_t n = static_cast<std::size_t>(grid.n_steps);
  if (!fft::is_power_of_two(n)) throw ConfigError("synth", "n_steps must be a power of two");
  if (spectrum.size() * 2 > n) throw ConfigError("synth", "spectrum exceeds the Nyquist frequency");
  std::vector<Complex> a(n, 0.0);
  for (std::size_t k = 1; k < spectrum.size(); ++k) {
    a[k] = spectrum[k];
    a[n - k] = std::conj(spectrum[k]);
  }
  fft::transform(a, false);
  std::vector<double> s(n);
  double imag = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = df * a[i].real();
    imag = std::max(imag, std::abs(df * a[i].imag()));
  }
  if (imag_residue) *imag_residue = imag;
  return s;
}

std::vector<Seismogram> synthesize(const analytic::SphereConfig& cfg, const std::vector<Receiver>& receivers,
                                   const std::vector<Component>& components, const RickerParams& p,
                                   const TimeGrid& grid, const FrequencyPlan& plan, const SynthesisOptions& opt) {
  const auto spectra = synthesize_spectra(cfg, receivers, components, p, grid, plan, opt);
  std::vector<Seismogram> out;
  out.reserve(receivers.size() * components.size());
  for (std::size_t r = 0; r < receivers.size(); ++r) {
    for (std::size_t c = 0; c < components.size(); ++c) {
      Seismogram s;
      s.id = receivers[r].id;
      s.receiver = receivers[r].position;
      s.component = components[c];
      s.grid = grid;
      s.values = inverse_synthesis(spectra[r][c], grid, plan.df, &s.imag_residue);
      out.push_back(std::move(s));
    }
  }
  return out;
}

Seismogram synthesize_seismogram(const analytic::SphereConfig& cfg, const Receiver& receiver, Component component,
                                 const RickerParams& p, const TimeGrid& grid, const FrequencyPlan& plan,
                                 const SynthesisOptions& opt) {
  return synthesize(cfg, {receiver}, {component}, p, grid, plan, opt).front();
}

void write_csv(const std::string& path, const std::vector<Seismogram>& traces) {
  std::ofstream os(path);
  if (!os) throw ConfigError("synth", "cannot open '" + path + "' for writing");
  if (traces.empty()) {
    os << "t\n";
    return;
  }
  const TimeGrid& g = traces.front().grid;
  for (const auto& tr : traces)
    if (tr.values.size() != static_cast<std::size_t>(g.n_steps))
      throw ConfigError("synth", "traces in one CSV must share a time grid");
  os << "t";
  for (const auto& tr : traces) os << ',' << tr.id;
  os << '\n' << std::setprecision(9);
  for (int i = 0; i < g.n_steps; ++i) {
    os << g.time(i);
    for (const auto& tr : traces) os << ',' << tr.values[i];
    os << '\n';
  }
}

std::vector<Seismogram> read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("synth", "cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("synth", "empty CSV '" + path + "'");
  std::vector<Seismogram> traces;
  {
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    if (cell != "t") throw ConfigError("synth", "CSV header must start with 't'");
    while (std::getline(ss, cell, ',')) {
      Seismogram s;
      s.id = cell;
      traces.push_back(std::move(s));
    }
  }
  std::vector<double> times;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    times.push_back(std::stod(cell));
    for (auto& tr : traces) {
      if (!std::getline(ss, cell, ',')) throw ConfigError("synth", "short CSV row in '" + path + "'");
      tr.values.push_back(std::stod(cell));
    }
  }
  TimeGrid g;
  g.n_steps = static_cast<int>(times.size());
  g.t_start = times.empty() ? 0.0 : times.front();
  g.dt = times.size() > 1 ? (times.back() - times.front()) / static_cast<double>(times.size() - 1) : 1.0;
  for (auto& tr : traces) tr.grid = g;
  return traces;
}

}  // namespace cavscat::synth
