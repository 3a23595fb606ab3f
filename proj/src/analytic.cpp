#include "cavscat/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cavscat/errors.hpp"
#include "cavscat/linalg.hpp"
#include "cavscat/quadrature.hpp"
#include "cavscat/specfun.hpp"

namespace cavscat::analytic {
namespace {

constexpr Complex kI{0.0, 1.0};

enum class Radial { Bessel, Outgoing };
enum class Mode { P, S };

// i^{l+1}
Complex phase(int l) {
  switch ((l + 1) % 4) {
    case 0:
      return 1.0;
    case 1:
      return kI;
    case 2:
      return -1.0;
    default:
      return -kI;
  }
}

// f_0..f_{lmax+1} at x.
std::vector<Complex> radial_array(Radial kind, int lmax, double x) {
  const int cap = std::max(specfun::kDefaultLCap, lmax + 1);
  std::vector<Complex> j = specfun::spherical_bessel_j_array(lmax + 1, x, cap);
  if (kind == Radial::Bessel) return j;
  const std::vector<Complex> y = specfun::spherical_bessel_y_array(lmax + 1, x, cap);
  for (std::size_t n = 0; n < j.size(); ++n) j[n] += kI * y[n];
  return j;
}

// Radial profile of one mode: u_r = fr P_l, u_theta = ft dP_l/dtheta, and
// their r-derivatives.
struct ModeRadial {
  Complex fr, ft, dfr, dft;
};

ModeRadial mode_radial(Mode mode, int l, double k, double r, const std::vector<Complex>& f) {
  const double x = k * r;
  const double ll = l * (l + 1.0);
  const double c = 2.0 * l + 1.0;
  const Complex fl = f[l];
  const Complex d1 = static_cast<double>(l) / x * fl - f[l + 1];
  const Complex d2 = -2.0 / x * d1 - (1.0 - ll / (x * x)) * fl;
  ModeRadial m;
  if (mode == Mode::P) {
    m.fr = -c * d1;
    m.ft = -c * fl / x;
    m.dfr = -c * d2 * k;
    m.dft = -c * (d1 / x - fl / (x * x)) * k;
  } else {
    m.fr = ll * c * fl / x;
    m.ft = c * (d1 + fl / x);
    m.dfr = ll * c * (d1 / x - fl / (x * x)) * k;
    m.dft = c * (d2 + d1 / x - fl / (x * x)) * k;
  }
  return m;
}

struct Traction {
  Complex rr, rt;
};

Traction traction(const ModeRadial& m, int l, double r, const Material& mat) {
  const double lam = mat.lambda(), mu = mat.mu();
  const double ll = l * (l + 1.0);
  const Complex div = m.dfr + 2.0 * m.fr / r - ll * m.ft / r;
  return {lam * div + 2.0 * mu * m.dfr, mu * (m.fr / r + m.dft - m.ft / r)};
}

struct Equilibrated {
  linalg::CMatrix a;
  std::vector<Complex> b;
  std::vector<double> col_scale;
};

// Row and column scaling so that every row and column has unit max entry.
Equilibrated equilibrate(linalg::CMatrix a, std::vector<Complex> b) {
  const int n = a.n;
  for (int i = 0; i < n; ++i) {
    double m = 0.0;
    for (int j = 0; j < n; ++j) m = std::max(m, std::abs(a(i, j)));
    if (m > 0.0) {
      for (int j = 0; j < n; ++j) a(i, j) /= m;
      b[i] /= m;
    }
  }
  std::vector<double> cs(static_cast<std::size_t>(n), 1.0);
  for (int j = 0; j < n; ++j) {
    double m = 0.0;
    for (int i = 0; i < n; ++i) m = std::max(m, std::abs(a(i, j)));
    if (m > 0.0) {
      cs[j] = 1.0 / m;
      for (int i = 0; i < n; ++i) a(i, j) *= cs[j];
    }
  }
  return {std::move(a), std::move(b), std::move(cs)};
}

struct OrderRadials {
  std::vector<Complex> jpa, jsa, jpe, hpe, hse;
};

}  // namespace

void SphereConfig::validate() const {
  if (!(radius > 0.0)) throw ConfigError("analytic", "sphere radius must be positive");
  interior.validate("interior");
  exterior.validate("exterior");
  if (exterior.vs <= 0.0) throw ConfigError("analytic", "exterior medium must be elastic (vs > 0)");
  if (model == InteriorModel::Acoustic && interior.vs != 0.0)
    throw ConfigError("analytic", "acoustic interior requires vs = 0");
  if (model == InteriorModel::Elastic && interior.vs <= 0.0)
    throw ConfigError("analytic", "elastic interior requires vs > 0");
}

FrequencyContext FrequencyContext::make(const SphereConfig& cfg, double omega) {
  if (!(omega > 0.0)) throw DomainError("analytic", "omega must be positive");
  FrequencyContext c;
  c.omega = omega;
  c.kp_e = omega / cfg.exterior.vp;
  c.ks_e = omega / cfg.exterior.vs;
  c.kp_a = omega / cfg.interior.vp;
  c.ks_a = cfg.interior.vs > 0.0 ? omega / cfg.interior.vs : 0.0;
  return c;
}

double FrequencyContext::k_max() const { return std::max({kp_e, ks_e, kp_a, ks_a}); }

double ModalSolution::max_residual() const {
  double m = 0.0;
  for (const auto& c : coeffs) m = std::max(m, c.residual);
  return m;
}

bool ModalSolution::any_singular() const {
  return std::any_of(coeffs.begin(), coeffs.end(), [](const ModalCoefficients& c) { return c.singular; });
}

int default_l_max(const SphereConfig& cfg, const FrequencyContext& ctx) {
  return static_cast<int>(std::ceil(ctx.k_max() * cfg.radius)) + 12;
}

CVec3 incident_plane_p(const FrequencyContext& ctx, const SphericalPoint& point, int l_max) {
  if (l_max > specfun::kDefaultLCap)
    throw CapabilityError("analytic", "l_max " + std::to_string(l_max) + " exceeds l_cap");
  const std::vector<Complex> j = specfun::spherical_bessel_j_array(l_max + 1, ctx.kp_e * point.r,
                                                                   std::max(specfun::kDefaultLCap, l_max + 1));
  const specfun::LegendreTable t = specfun::legendre_table(l_max, point.theta);
  CVec3 s{0.0, 0.0, 0.0};
  for (int l = 0; l <= l_max; ++l) {
    const double p = t.p[l], dp = t.dp_dtheta[l];
    // j_{l+1} Y+ - j_{l-1} Y-; the Y- term vanishes for l = 0.
    Complex ur = j[l + 1] * ((l + 1.0) * p);
    Complex ut = -j[l + 1] * dp;
    if (l > 0) {
      ur -= j[l - 1] * (l * p);
      ut -= j[l - 1] * dp;
    }
    const Complex ph = phase(l);
    s[0] += ph * ur;
    s[1] += ph * ut;
  }
  return spherical_to_cartesian_components(s, point);
}

CVec3 incident_plane_p_exact(const FrequencyContext& ctx, const Vec3& x) {
  return {0.0, 0.0, std::exp(kI * (ctx.kp_e * x[2]))};
}

ModalCoefficients solve_modal_coefficients(const SphereConfig& cfg, const FrequencyContext& ctx, int l) {
  if (l < 0) throw DomainError("analytic", "negative order");
  const double R = cfg.radius;
  const int n = l + 1;
  const auto jpa = radial_array(Radial::Bessel, n, ctx.kp_a * R);
  const auto jpe = radial_array(Radial::Bessel, n, ctx.kp_e * R);
  const auto hpe = radial_array(Radial::Outgoing, n, ctx.kp_e * R);
  const auto hse = radial_array(Radial::Outgoing, n, ctx.ks_e * R);

  const ModeRadial inc = mode_radial(Mode::P, l, ctx.kp_e, R, jpe);
  const ModeRadial p1 = mode_radial(Mode::P, l, ctx.kp_a, R, jpa);
  const ModeRadial p2 = mode_radial(Mode::P, l, ctx.kp_e, R, hpe);
  const ModeRadial s2 = mode_radial(Mode::S, l, ctx.ks_e, R, hse);
  const Traction t_inc = traction(inc, l, R, cfg.exterior);
  const Traction t_p1 = traction(p1, l, R, cfg.interior);
  const Traction t_p2 = traction(p2, l, R, cfg.exterior);
  const Traction t_s2 = traction(s2, l, R, cfg.exterior);

  ModalCoefficients out;
  out.l = l;
  linalg::CMatrix a(0);
  std::vector<Complex> b;
  // Unknown ordering (acoustic): a1, a2, b2 ; (elastic): a1, b1, a2, b2.
  if (cfg.model == InteriorModel::Acoustic) {
    if (l == 0) {
      a = linalg::CMatrix(2);
      a(0, 0) = p1.fr, a(0, 1) = -p2.fr;
      a(1, 0) = t_p1.rr, a(1, 1) = -t_p2.rr;
      b = {inc.fr, t_inc.rr};
    } else {
      a = linalg::CMatrix(3);
      a(0, 0) = p1.fr, a(0, 1) = -p2.fr, a(0, 2) = -s2.fr;
      a(1, 0) = t_p1.rr, a(1, 1) = -t_p2.rr, a(1, 2) = -t_s2.rr;
      a(2, 0) = 0.0, a(2, 1) = -t_p2.rt, a(2, 2) = -t_s2.rt;
      b = {inc.fr, t_inc.rr, t_inc.rt};
    }
  } else {
    const auto jsa = radial_array(Radial::Bessel, n, ctx.ks_a * R);
    const ModeRadial s1 = mode_radial(Mode::S, l, ctx.ks_a, R, jsa);
    const Traction t_s1 = traction(s1, l, R, cfg.interior);
    if (l == 0) {
      a = linalg::CMatrix(2);
      a(0, 0) = p1.fr, a(0, 1) = -p2.fr;
      a(1, 0) = t_p1.rr, a(1, 1) = -t_p2.rr;
      b = {inc.fr, t_inc.rr};
    } else {
      a = linalg::CMatrix(4);
      const ModeRadial* cols[4] = {&p1, &s1, &p2, &s2};
      const Traction* tcols[4] = {&t_p1, &t_s1, &t_p2, &t_s2};
      for (int j = 0; j < 4; ++j) {
        const double sgn = j < 2 ? 1.0 : -1.0;
        a(0, j) = sgn * cols[j]->fr;
        a(1, j) = sgn * cols[j]->ft;
        a(2, j) = sgn * tcols[j]->rr;
        a(3, j) = sgn * tcols[j]->rt;
      }
      b = {inc.fr, inc.ft, t_inc.rr, t_inc.rt};
    }
  }

  const Equilibrated eq = equilibrate(a, b);
  const linalg::SolveResult res = linalg::solve(eq.a, eq.b);
  std::vector<Complex> x = res.x;
  for (std::size_t j = 0; j < x.size(); ++j) x[j] *= eq.col_scale[j];
  out.residual = res.relative_residual;
  out.condition = res.condition_estimate;
  out.singular = res.singular;
  if (cfg.model == InteriorModel::Acoustic) {
    out.a1 = x[0];
    out.a2 = x[1];
    if (l > 0) out.b2 = x[2];
  } else if (l == 0) {
    out.a1 = x[0];
    out.a2 = x[1];
  } else {
    out.a1 = x[0];
    out.b1 = x[1];
    out.a2 = x[2];
    out.b2 = x[3];
  }
  return out;
}

ModalSolution solve(const SphereConfig& cfg, const FrequencyContext& ctx, int l_max) {
  cfg.validate();
  if (l_max > specfun::kDefaultLCap)
    throw CapabilityError("analytic", "l_max " + std::to_string(l_max) + " exceeds l_cap");
  ModalSolution sol{cfg, ctx, {}};
  sol.coeffs.reserve(static_cast<std::size_t>(l_max) + 1);
  for (int l = 0; l <= l_max; ++l) sol.coeffs.push_back(solve_modal_coefficients(cfg, ctx, l));
  return sol;
}

ModalSolution solve(const SphereConfig& cfg, double omega) {
  const FrequencyContext ctx = FrequencyContext::make(cfg, omega);
  return solve(cfg, ctx, default_l_max(cfg, ctx));
}

namespace {

Side resolve_side(const ModalSolution& sol, double r, std::optional<Side> side) {
  if (side) return *side;
  const double R = sol.cfg.radius;
  if (std::abs(r - R) <= 1e-9 * R)
    throw DomainError("analytic", "point within 1e-9 R of the interface; pass an explicit side");
  return r < R ? Side::Interior : Side::Exterior;
}

// Sum of a P and S mode series in Petrashen form; returns components in the
// spherical basis.
CVec3 series_field(Radial kind, double kp, double ks, const ModalSolution& sol, const SphericalPoint& sp,
                   bool interior) {
  const int lmax = sol.l_max();
  const auto fp = radial_array(kind, lmax, kp * sp.r);
  const bool shear = ks > 0.0;
  const auto fs = shear ? radial_array(kind, lmax, ks * sp.r) : std::vector<Complex>();
  const specfun::LegendreTable t = specfun::legendre_table(lmax, sp.theta);
  CVec3 s{0.0, 0.0, 0.0};
  for (int l = 0; l <= lmax; ++l) {
    const ModalCoefficients& c = sol.coeffs[l];
    const Complex a = interior ? c.a1 : c.a2;
    const Complex b = interior ? c.b1 : c.b2;
    const double p = t.p[l], dp = t.dp_dtheta[l];
    // Y+ = ((l+1) P, -dP, 0), Y- = (l P, dP, 0)
    Complex cplus = a * fp[l + 1];
    Complex cminus = 0.0;
    if (l > 0) cminus = -a * fp[l - 1];
    if (shear && l > 0 && b != Complex(0.0)) {
      cplus += b * (static_cast<double>(l) * fs[l + 1]);
      cminus += b * ((l + 1.0) * fs[l - 1]);
    }
    const Complex ph = phase(l);
    s[0] += ph * (cplus * ((l + 1.0) * p) + cminus * (l * p));
    s[1] += ph * (-cplus * dp + cminus * dp);
  }
  return s;
}

}  // namespace

CVec3 scattered_field(const ModalSolution& sol, const Vec3& x, std::optional<Side> side) {
  const SphericalPoint sp = to_spherical(x);
  const Side s = resolve_side(sol, sp.r, side);
  if (sp.r == 0.0 && s == Side::Exterior) throw DomainError("analytic", "exterior field undefined at r = 0");
  CVec3 local;
  if (s == Side::Interior) {
    local = series_field(Radial::Bessel, sol.ctx.kp_a, sol.ctx.ks_a, sol, sp, true);
  } else {
    local = series_field(Radial::Outgoing, sol.ctx.kp_e, sol.ctx.ks_e, sol, sp, false);
  }
  return spherical_to_cartesian_components(local, sp);
}

CVec3 total_field(const ModalSolution& sol, const Vec3& x, std::optional<Side> side) {
  const SphericalPoint sp = to_spherical(x);
  const Side s = resolve_side(sol, sp.r, side);
  const CVec3 u = scattered_field(sol, x, s);
  if (s == Side::Interior) return u;
  return u + incident_plane_p_exact(sol.ctx, x);
}

CVec3 traction_of_series(const ModalSolution& sol, const Vec3& x, Side side) {
  const SphericalPoint sp = to_spherical(x);
  if (sp.r == 0.0) throw DomainError("analytic", "traction undefined at r = 0");
  const int lmax = sol.l_max();
  const double r = sp.r;
  const specfun::LegendreTable t = specfun::legendre_table(lmax, sp.theta);
  CVec3 local{0.0, 0.0, 0.0};
  const FrequencyContext& ctx = sol.ctx;
  if (side == Side::Interior) {
    const auto fp = radial_array(Radial::Bessel, lmax + 1, ctx.kp_a * r);
    const bool shear = ctx.ks_a > 0.0;
    const auto fs = shear ? radial_array(Radial::Bessel, lmax + 1, ctx.ks_a * r) : std::vector<Complex>();
    for (int l = 0; l <= lmax; ++l) {
      const ModalCoefficients& c = sol.coeffs[l];
      const Traction tp = traction(mode_radial(Mode::P, l, ctx.kp_a, r, fp), l, r, sol.cfg.interior);
      Complex rr = c.a1 * tp.rr, rt = c.a1 * tp.rt;
      if (shear && l > 0) {
        const Traction ts = traction(mode_radial(Mode::S, l, ctx.ks_a, r, fs), l, r, sol.cfg.interior);
        rr += c.b1 * ts.rr;
        rt += c.b1 * ts.rt;
      }
      const Complex ph = phase(l);
      local[0] += ph * rr * t.p[l];
      local[1] += ph * rt * t.dp_dtheta[l];
    }
    return spherical_to_cartesian_components(local, sp);
  }
  const auto fp = radial_array(Radial::Outgoing, lmax + 1, ctx.kp_e * r);
  const auto fs = radial_array(Radial::Outgoing, lmax + 1, ctx.ks_e * r);
  for (int l = 0; l <= lmax; ++l) {
    const ModalCoefficients& c = sol.coeffs[l];
    const Traction tp = traction(mode_radial(Mode::P, l, ctx.kp_e, r, fp), l, r, sol.cfg.exterior);
    Complex rr = c.a2 * tp.rr, rt = c.a2 * tp.rt;
    if (l > 0) {
      const Traction ts = traction(mode_radial(Mode::S, l, ctx.ks_e, r, fs), l, r, sol.cfg.exterior);
      rr += c.b2 * ts.rr;
      rt += c.b2 * ts.rt;
    }
    const Complex ph = phase(l);
    local[0] += ph * rr * t.p[l];
    local[1] += ph * rt * t.dp_dtheta[l];
  }
  CVec3 out = spherical_to_cartesian_components(local, sp);
  // Incident z e^{ikz}: sigma = i k e^{ikz} (lambda I + 2 mu z z^T).
  const Vec3 n = normalized(x);
  const Complex g = kI * ctx.kp_e * std::exp(kI * (ctx.kp_e * x[2]));
  const double lam = sol.cfg.exterior.lambda(), mu = sol.cfg.exterior.mu();
  for (int i = 0; i < 3; ++i) out[i] += g * (lam * n[i]);
  out[2] += g * (2.0 * mu * n[2]);
  return out;
}

double energy_flux(const ModalSolution& sol, double radius, int n_theta, int n_phi) {
  const quadrature::Rule gl = quadrature::gauss_legendre(n_theta);
  double flux = 0.0;
  const double omega = sol.ctx.omega;
  const Side side = radius < sol.cfg.radius ? Side::Interior : Side::Exterior;
  for (int i = 0; i < n_theta; ++i) {
    const double ct = gl.nodes[i];
    const double theta = std::acos(ct);
    for (int k = 0; k < n_phi; ++k) {
      const double phi = 2.0 * M_PI * k / n_phi;
      const Vec3 x = to_cartesian({radius, theta, phi});
      const CVec3 u = total_field(sol, x, side);
      const CVec3 tr = traction_of_series(sol, x, side);
      // outward power = -<t . v>, v = -i omega u
      Complex tv = 0.0;
      for (int c = 0; c < 3; ++c) tv += tr[c] * std::conj(-kI * omega * u[c]);
      flux += -0.5 * std::real(tv) * gl.weights[i] * (2.0 * M_PI / n_phi) * radius * radius;
    }
  }
  return flux;
}

}  // namespace cavscat::analytic
