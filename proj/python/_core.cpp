// Python bindings: special functions, wavelet, frequency-domain fields,
// configuration, profiles, trace metrics and the file-producing pipelines.

#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <complex>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "cavscat/analytic.hpp"
#include "cavscat/dgsolver.hpp"
#include "cavscat/errors.hpp"
#include "cavscat/harness.hpp"
#include "cavscat/specfun.hpp"
#include "cavscat/synth.hpp"

namespace py = pybind11;
using namespace cavscat;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const Array& a) {
  const auto buf = a.unchecked<1>();
  std::vector<double> v(static_cast<std::size_t>(buf.shape(0)));
  for (py::ssize_t i = 0; i < buf.shape(0); ++i) v[static_cast<std::size_t>(i)] = buf(i);
  return v;
}

Vec3 to_vec3(const std::array<double, 3>& p) { return {p[0], p[1], p[2]}; }

analytic::SphereConfig sphere(double radius) {
  analytic::SphereConfig cfg;
  cfg.radius = radius;
  cfg.validate();
  return cfg;
}

std::optional<analytic::Side> parse_side(const std::optional<std::string>& side) {
  if (!side) return std::nullopt;
  if (*side == "interior") return analytic::Side::Interior;
  if (*side == "exterior") return analytic::Side::Exterior;
  throw ConfigError("python", "side must be 'interior' or 'exterior', got '" + *side + "'");
}

py::array_t<std::complex<double>> to_numpy(const CVec3& v) {
  py::array_t<std::complex<double>> out(3);
  auto w = out.mutable_unchecked<1>();
  for (int i = 0; i < 3; ++i) w(i) = v[i];
  return out;
}

synth::RickerParams ricker_params(double f_peak, std::optional<double> t0, double amplitude) {
  synth::RickerParams p;
  p.f_peak = f_peak;
  p.t0 = t0 ? *t0 : 6.0 / (std::numbers::pi * f_peak);
  p.amplitude = amplitude;
  p.validate();
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Seismic scattering by a fluid-filled spherical cavity";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  static py::exception<ConfigError> config_error(m, "ConfigError", error.ptr());
  static py::exception<NumericalError> numerical_error(m, "NumericalError", error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const NumericalError& e) {
      py::set_error(numerical_error, e.what());
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  m.def("spherical_jn", [](int l, std::complex<double> x) { return specfun::spherical_bessel_j(l, x); }, py::arg("l"),
        py::arg("x"));
  m.def("spherical_yn", [](int l, std::complex<double> x) { return specfun::spherical_bessel_y(l, x); }, py::arg("l"),
        py::arg("x"));
  m.def("spherical_h2", [](int l, std::complex<double> x) { return specfun::spherical_hankel2(l, x); }, py::arg("l"),
        py::arg("x"));
  m.def("legendre_p", &specfun::legendre_p, py::arg("l"), py::arg("m"), py::arg("x"));

  m.def(
      "ricker",
      [](const Array& t, double f_peak, std::optional<double> t0, double amplitude) {
        const auto p = ricker_params(f_peak, t0, amplitude);
        const auto in = t.unchecked<1>();
        Array out(in.shape(0));
        auto w = out.mutable_unchecked<1>();
        for (py::ssize_t i = 0; i < in.shape(0); ++i) w(i) = synth::ricker(p, in(i));
        return out;
      },
      py::arg("t"), py::arg("f_peak") = 20.0, py::arg("t0") = py::none(), py::arg("amplitude") = 1.0);
  m.def(
      "ricker_spectrum",
      [](double f, double f_peak, std::optional<double> t0, double amplitude) {
        return synth::ricker_spectrum(ricker_params(f_peak, t0, amplitude), f);
      },
      py::arg("f"), py::arg("f_peak") = 20.0, py::arg("t0") = py::none(), py::arg("amplitude") = 1.0);

  m.def(
      "cfl_dt",
      [](double h_min, double vp_max, double cfl_safety, double cfl_const) {
        dg::TimeIntegrationConfig cfg;
        cfg.cfl_safety = cfl_safety;
        cfg.cfl_const = cfl_const;
        return dg::cfl_dt(h_min, vp_max, cfg);
      },
      py::arg("h_min"), py::arg("vp_max"), py::arg("cfl_safety") = 0.2, py::arg("cfl_const") = 0.175);

  m.def(
      "scattered_field",
      [](double frequency, const std::array<double, 3>& x, double radius, std::optional<std::string> side) {
        const auto sol = analytic::solve(sphere(radius), 2.0 * std::numbers::pi * frequency);
        return to_numpy(analytic::scattered_field(sol, to_vec3(x), parse_side(side)));
      },
      py::arg("frequency"), py::arg("x"), py::arg("radius") = 30.0, py::arg("side") = py::none(),
      "Scattered displacement for a unit incident plane P wave along +z.");
  m.def(
      "total_field",
      [](double frequency, const std::array<double, 3>& x, double radius, std::optional<std::string> side) {
        const auto sol = analytic::solve(sphere(radius), 2.0 * std::numbers::pi * frequency);
        return to_numpy(analytic::total_field(sol, to_vec3(x), parse_side(side)));
      },
      py::arg("frequency"), py::arg("x"), py::arg("radius") = 30.0, py::arg("side") = py::none());

  py::class_<harness::RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def("validate", &harness::RunConfig::validate)
      .def("__getitem__",
           [](const harness::RunConfig& c, const std::string& k) { return harness::get_config_value(c, k); })
      .def("__setitem__", [](harness::RunConfig& c, const std::string& k, const std::string& v) {
        harness::set_config_value(c, k, v);
      })
      .def("serialize", [](const harness::RunConfig& c) { return harness::serialize_config(c); })
      .def("__eq__", [](const harness::RunConfig& a, const harness::RunConfig& b) { return a == b; })
      .def("__str__", [](const harness::RunConfig& c) { return harness::serialize_config(c); });
  m.def("preset", &harness::preset, py::arg("tier"));
  m.def("parse_config", &harness::parse_config, py::arg("text"));
  m.def("load_config", &harness::load_config, py::arg("path"));
  m.def("config_keys", &harness::config_keys);

  m.def(
      "make_profile",
      [](const std::string& name, double radius) {
        py::list out;
        for (const auto& r : harness::make_profile(name, radius).receivers) {
          py::dict d;
          d["id"] = r.id;
          d["position"] = py::make_tuple(r.position[0], r.position[1], r.position[2]);
          d["interior"] = r.interior;
          out.append(d);
        }
        return out;
      },
      py::arg("name"), py::arg("radius") = 30.0);

  m.def(
      "compare_traces",
      [](const Array& ref, const Array& test, double dt, std::optional<double> test_dt, double t_start, double t_end) {
        const auto r = to_vector(ref);
        const auto t = to_vector(test);
        const synth::TimeGrid rg{dt, static_cast<int>(r.size()), 0.0};
        const synth::TimeGrid tg{test_dt.value_or(dt), static_cast<int>(t.size()), 0.0};
        const auto mf = harness::compare_traces("trace", rg, r, tg, t, t_start, t_end);
        py::dict d;
        d["misfit"] = mf.misfit;
        d["amplitude_ratio"] = mf.amplitude_ratio;
        d["lag"] = mf.lag;
        return d;
      },
      py::arg("ref"), py::arg("test"), py::arg("dt"), py::arg("test_dt") = py::none(), py::arg("t_start") = 0.0,
      py::arg("t_end") = 0.0,
      "Relative L2 misfit, amplitude ratio and lag of test against ref; t_end 0 means the full trace.");
  m.def(
      "arrival_time",
      [](const Array& trace, double dt, double fraction) {
        const auto v = to_vector(trace);
        return harness::arrival_time({dt, static_cast<int>(v.size()), 0.0}, v, fraction);
      },
      py::arg("trace"), py::arg("dt"), py::arg("fraction") = 0.05);
  m.def(
      "reverberation_period",
      [](const Array& trace, double dt) {
        const auto v = to_vector(trace);
        return harness::reverberation_period({dt, static_cast<int>(v.size()), 0.0}, v);
      },
      py::arg("trace"), py::arg("dt"));

  m.def("run_analytic", [](const harness::RunConfig& c) { return harness::run_analytic(c).files; }, py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
  m.def("run_ricker", [](const harness::RunConfig& c) { return harness::run_ricker(c); }, py::arg("config"));
  m.def("run_mesh", [](const harness::RunConfig& c) { return harness::run_mesh(c); }, py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
}
