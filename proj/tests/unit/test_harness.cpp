#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "cavscat/errors.hpp"
#include "cavscat/harness.hpp"
#include "doctest.h"

using namespace cavscat;
using namespace cavscat::harness;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("cavscat_harness_" + name);
  fs::remove_all(p);
  return p;
}

// Bipolar pulse of width ~w centred at c.
double pulse(double t, double c, double w) {
  const double s = (t - c) / w;
  return s * std::exp(-s * s);
}

// Small sphere-in-box run that finishes in seconds: higher frequency so the
// source plane fits below the sphere within a short window.
RunConfig tiny_config(const std::string& out) {
  RunConfig c;
  c.tier = "custom";
  c.f_peak = 60.0;
  c.arrival_time = 0.04;
  c.box = {300.0, 300.0, 300.0};
  c.duration = 0.05;
  c.output_dt = 2.5e-4;
  c.analytic_samples = 2048;
  c.profiles = {"A"};
  c.snapshot_times = {0.03, 0.045, 0.2};
  c.snapshot_spacing = 20.0;
  c.snapshot_half_width = 60.0;
  c.output_dir = out;
  return c;
}

}  // namespace

TEST_CASE("profiles") {
  const auto a = make_profile("A"), b = make_profile("B"), c = make_profile("C"), d = make_profile("D");
  CHECK(a.receivers.size() == 101);
  CHECK(b.receivers.size() == 101);
  CHECK(c.receivers.size() == 61);
  CHECK(d.receivers.size() == 61);

  for (std::size_t i = 0; i < a.receivers.size(); ++i) {
    const auto& r = a.receivers[i];
    const double z = -100.0 + 2.0 * static_cast<double>(i);
    CHECK(r.position[0] == 0.0);
    CHECK(r.position[1] == 0.0);
    CHECK(r.position[2] == z);
    CHECK(r.interior == (std::abs(z) < 30.0));
  }
  int interior = 0;
  for (const auto& r : a.receivers) interior += r.interior;
  CHECK(interior == 29);  // z = -28 ... 28
  for (const auto& r : b.receivers) {
    CHECK(r.position[1] == 0.0);
    CHECK(r.position[2] == 0.0);
    CHECK(r.interior == (std::abs(r.position[0]) < 30.0));
  }
  CHECK(c.receivers.front().position[0] == -300.0);
  CHECK(c.receivers.back().position[0] == 300.0);
  CHECK(c.receivers[1].position[0] - c.receivers[0].position[0] == 10.0);
  for (const auto& r : c.receivers) {
    CHECK(r.position[2] == 300.0);
    CHECK_FALSE(r.interior);
  }
  for (const auto& r : d.receivers) CHECK(r.position[2] == -300.0);

  // Ids are unique.
  std::set<std::string> ids;
  for (const auto* p : {&a, &b, &c, &d})
    for (const auto& r : p->receivers) ids.insert(r.id);
  CHECK(ids.size() == 324);

  const auto custom = make_profile("custom", {{0, 0, 10}, {0, 0, 30}, {40, 0, 0}});
  CHECK(custom.receivers[0].interior);
  CHECK_FALSE(custom.receivers[1].interior);
  CHECK_FALSE(custom.receivers[2].interior);
  CHECK_THROWS_AS(make_profile("E"), ConfigError);
}

TEST_CASE("config round trip") {
  for (const auto* tier : {"desk", "workstation"}) {
    const auto cfg = preset(tier);
    CHECK_NOTHROW(cfg.validate());
    const auto text = serialize_config(cfg);
    const auto back = parse_config(text);
    CHECK(back == cfg);
    CHECK(serialize_config(back) == text);
  }

  RunConfig c;
  c.f_peak = 17.3;
  c.t0 = 0.1 / 3.0;
  c.z0 = -201.123456789;
  c.h_inner = 1.0 / 7.0;
  c.sphere.exterior.vs = 2000.0;
  c.absorbing_tangential = true;
  c.profiles = {"C", "A"};
  c.snapshot_times = {0.1 / 3.0, 0.2};
  c.tier = "custom";
  const auto back = parse_config(serialize_config(c));
  CHECK(back == c);
  CHECK(*back.t0 == 0.1 / 3.0);  // bit-exact doubles

  // Desk defaults reproduce the documented tier.
  const RunConfig d;
  CHECK(d.f_peak == 20.0);
  CHECK(d.box == Vec3{800.0, 800.0, 800.0});
  CHECK(d.sphere.radius == 30.0);
  CHECK(d.sphere.interior == kWater);
  CHECK(d.sphere.exterior == kRock);
  CHECK(preset("workstation").f_peak == 66.7);
  CHECK(preset("workstation").box == Vec3{1200.0, 1200.0, 1200.0});

  CHECK(config_keys().size() > 40);
  CHECK(get_config_value(d, "material.elastic.vp") == "4000");
}

TEST_CASE("config parsing errors") {
  CHECK(parse_config("").f_peak == 20.0);
  CHECK(parse_config("run.tier = workstation\n").f_peak == 66.7);
  // The tier sets the base, explicit keys win regardless of order.
  CHECK(parse_config("ricker.f_peak = 50\nrun.tier = workstation\n").f_peak == 50.0);
  CHECK(parse_config("# comment\n  material.elastic.vp = 4100  # inline\n").sphere.exterior.vp == 4100.0);

  CHECK_THROWS_AS(parse_config("no.such.key = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("config.version = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("ricker.f_peak = 1\nricker.f_peak = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("ricker.f_peak\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("ricker.f_peak = abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("ricker.f_peak = 20x\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("dg.degree = 4.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("dg.absorbing_tangential = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("domain.box = 800, 800\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("run.tier = huge\n"), ConfigError);

  // Validation against module preconditions.
  CHECK_THROWS_AS(parse_config("analytic.samples = 1000\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("material.elastic.vp = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("mesh.inner_box_half = 20\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("domain.box = 90, 800, 800\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("receivers.profiles = A, Q\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("domain.box = 500, 500, 500\n"), ConfigError);  // C/D outside
  CHECK_THROWS_AS(parse_config("time.dt_crit_safety = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("source.z0 = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("output.dt = 0.01\n"), ConfigError);  // Nyquist below f_max
  CHECK_THROWS_AS(load_config("/nonexistent/cavscat.cfg"), ConfigError);
}

TEST_CASE("source placement") {
  const RunConfig c;
  const auto pw = c.incident();
  // Incident pulse reaches the sphere bottom at 0.1 s (5% threshold crossing).
  const synth::TimeGrid g{1e-5, 30000, 0.0};
  std::vector<double> u(g.n_steps);
  for (int i = 0; i < g.n_steps; ++i) u[i] = pw.displacement(-c.sphere.radius, g.time(i));
  CHECK(arrival_time(g, u) == doctest::Approx(0.1).epsilon(1e-4));
  CHECK(pw.z0 == doctest::Approx(-184.657).epsilon(1e-5));
  CHECK(c.ricker().t0 == doctest::Approx(6.0 / (std::numbers::pi * 20.0)));

  RunConfig fixed = c;
  fixed.z0 = -250.0;
  CHECK(fixed.source_z0() == -250.0);
}

TEST_CASE("plane impedance oracle") {
  // Independent arithmetic from the tabulated media.
  const double za = 1000.0 * 1500.0, ze = 2700.0 * 4000.0;
  const double r = (ze - za) / (ze + za);
  CHECK(r == doctest::Approx(0.756).epsilon(1e-3));
  CHECK(std::abs(normal_reflection_coefficient(kWater, kRock)) == doctest::Approx(r));
}

TEST_CASE("compare metrics") {
  const synth::TimeGrid g{1e-3, 400, 0.0};
  std::vector<double> a(g.n_steps);
  for (int i = 0; i < g.n_steps; ++i) a[i] = pulse(g.time(i), 0.15, 0.01);

  auto m = compare_traces("x", g, a, g, a, 0.0, 0.0);
  CHECK(m.misfit == 0.0);
  CHECK(m.amplitude_ratio == 1.0);
  CHECK(m.lag == 0.0);

  for (int k : {1, 7, -5, 23}) {
    std::vector<double> b(g.n_steps, 0.0);
    for (int i = 0; i < g.n_steps; ++i)
      if (i - k >= 0 && i - k < g.n_steps) b[i] = a[i - k];
    m = compare_traces("x", g, a, g, b, 0.0, 0.0);
    CHECK(m.lag == k * g.dt);
    CHECK(m.misfit > 0.0);
  }

  // Scaled copy.
  std::vector<double> s(a);
  for (auto& v : s) v *= 0.75;
  m = compare_traces("x", g, a, g, s, 0.0, 0.0);
  CHECK(m.amplitude_ratio == doctest::Approx(0.75));
  CHECK(m.misfit == doctest::Approx(0.25));

  // Resampling: a linear ramp is reproduced exactly on a finer test grid.
  const synth::TimeGrid fine{2.5e-4, 1601, 0.0};
  std::vector<double> ramp_ref(g.n_steps), ramp_test(fine.n_steps);
  for (int i = 0; i < g.n_steps; ++i) ramp_ref[i] = 2.0 * g.time(i) + 1.0;
  for (int i = 0; i < fine.n_steps; ++i) ramp_test[i] = 2.0 * fine.time(i) + 1.0;
  m = compare_traces("r", g, ramp_ref, fine, ramp_test, 0.05, 0.3);
  CHECK(m.misfit < 1e-14);

  // Lag stays within half the window.
  std::vector<double> noise(g.n_steps);
  for (int i = 0; i < g.n_steps; ++i) noise[i] = std::sin(0.37 * i * i);
  m = compare_traces("n", g, a, g, noise, 0.1, 0.2);
  CHECK(std::abs(m.lag) <= 0.05 + 1e-12);
  CHECK(m.misfit >= 0.0);

  CHECK_THROWS_AS(compare_traces("x", g, a, g, a, 0.5, 0.6), ConfigError);

  // Report over several traces, pooled summary.
  std::vector<synth::Seismogram> ref(2), test(2);
  for (int i = 0; i < 2; ++i) {
    ref[i].id = test[i].id = "r" + std::to_string(i);
    ref[i].grid = test[i].grid = g;
    ref[i].values = a;
    test[i].values = i == 0 ? a : s;
  }
  const auto rep = compare(ref, test, 0.0, 0.0);
  CHECK(rep.receivers.size() == 2);
  CHECK(rep.summary.misfit == doctest::Approx(0.25 / std::sqrt(2.0)));
  test.pop_back();
  CHECK_THROWS_AS(compare(ref, test, 0.0, 0.0), ConfigError);
}

TEST_CASE("arrival and reverberation period") {
  const synth::TimeGrid g{5e-4, 2000, 0.0};
  // Closed-form onset of a Ricker integral trace.
  synth::RickerParams p{20.0, 0.12, 1.0};
  std::vector<double> u(g.n_steps);
  for (int i = 0; i < g.n_steps; ++i) u[i] = synth::ricker_integral(p, g.time(i));
  CHECK(arrival_time(g, u) == doctest::Approx(synth::displacement_onset(p)).epsilon(1e-4));
  CHECK(std::isnan(arrival_time(g, std::vector<double>(10, 0.0))));

  // Echo train with alternating polarity every 0.04 s and decay 0.75: one
  // period spans two passes.
  for (double half : {0.04, 0.031}) {
    std::vector<double> v(g.n_steps, 0.0);
    for (int i = 0; i < g.n_steps; ++i) {
      double amp = 1.0;
      for (int n = 0; n < 20; ++n, amp *= -0.75) v[i] += amp * pulse(g.time(i), 0.12 + n * half, 0.008);
    }
    CHECK(reverberation_period(g, v) == doctest::Approx(2.0 * half).epsilon(0.02));
  }
}

TEST_CASE("vector misfit tolerates vanishing components") {
  const synth::TimeGrid g{1e-3, 300, 0.0};
  const auto prof = make_profile("axis", {{0, 0, 50}, {0, 0, 0}});
  std::vector<synth::Seismogram> ref, test;
  for (const auto& r : prof.receivers)
    for (auto c : {synth::Component::X, synth::Component::Z}) {
      synth::Seismogram s;
      s.id = r.id;
      s.component = c;
      s.grid = g;
      s.values.assign(g.n_steps, 0.0);
      if (c == synth::Component::Z)
        for (int i = 0; i < g.n_steps; ++i) s.values[i] = pulse(g.time(i), 0.1, 0.01);
      ref.push_back(s);
      // Test trace: tiny x residue (ratio alone would be infinite).
      if (c == synth::Component::X)
        for (int i = 0; i < g.n_steps; ++i) s.values[i] = 1e-3 * pulse(g.time(i), 0.1, 0.01);
      test.push_back(s);
    }
  const auto v = vector_misfits(prof, ref, test, ref, test, 0.0, 0.0);
  REQUIRE(v.size() == 2);
  CHECK(v[0].misfit == doctest::Approx(1e-3));
  CHECK(v[0].arrival_error == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(v[1].interior);
  CHECK(std::isnan(v[1].arrival_error));
}

TEST_CASE("ricker and mesh commands") {
  auto dir = scratch("ricker");
  RunConfig c;
  c.output_dir = dir.string();
  const auto files = run_ricker(c);
  REQUIRE(files.size() == 2);
  const auto first = slurp(files[0]) + slurp(files[1]);
  run_ricker(c);
  CHECK(slurp(files[0]) + slurp(files[1]) == first);  // deterministic

  // Spectrum peaks at f_peak.
  std::ifstream is(files[1]);
  std::string line;
  std::getline(is, line);
  double best_f = 0.0, best = -1.0;
  while (std::getline(is, line)) {
    const auto comma = line.find(',');
    const double f = std::stod(line.substr(0, comma)), a = std::stod(line.substr(comma + 1));
    if (a > best) {
      best = a;
      best_f = f;
    }
  }
  CHECK(best_f == doctest::Approx(20.0).epsilon(0.01));

  auto m = tiny_config(scratch("mesh").string());
  const auto mf = run_mesh(m);
  REQUIRE(mf.size() == 2);
  CHECK(fs::exists(mf[0]));
  CHECK(slurp(mf[1]).rfind("# vtk DataFile", 0) == 0);
  fs::remove_all(dir);
}

TEST_CASE("analytic pipeline on profile A") {
  RunConfig c;
  c.profiles = {"A"};
  c.output_dir = scratch("analytic").string();
  const auto res = run_analytic(c);
  const auto& tr = res.total.at("A");
  REQUIRE(tr.size() == 202);

  // On the symmetry axis there is no shear contribution: x vanishes.
  double zpeak = 0.0, xpeak = 0.0;
  for (const auto& s : tr) {
    double& peak = s.component == synth::Component::Z ? zpeak : xpeak;
    for (double v : s.values) peak = std::max(peak, std::abs(v));
  }
  CHECK(zpeak > 0.0);
  CHECK(xpeak < 1e-6 * zpeak);

  // Metadata carries the interior flag.
  const auto meta = slurp(c.output_dir + "/receivers_A.csv");
  CHECK(meta.find("A_z0,0,0,0,1") != std::string::npos);
  CHECK(meta.find("A_z30,0,0,30,0") != std::string::npos);
  CHECK(meta.find("A_z-28,0,0,-28,1") != std::string::npos);

  // CSVs read back to the same traces (9 significant digits).
  const auto back = load_outputs(c, "analytic");
  const auto& bt = back.total.at("A");
  REQUIRE(bt.size() == tr.size());
  for (std::size_t i = 0; i < tr.size(); i += 37) {
    CHECK(bt[i].id == tr[i].id);
    CHECK(bt[i].component == tr[i].component);
    for (std::size_t k = 0; k < tr[i].values.size(); k += 50)
      CHECK(std::abs(bt[i].values[k] - tr[i].values[k]) <= 1e-8 * zpeak);
  }
  fs::remove_all(c.output_dir);
}

TEST_CASE("dg pipeline plumbing and manifest re-run") {
  const auto dir = scratch("dg");
  const auto c = tiny_config(dir.string());
  std::vector<std::string> log_lines;
  const auto res = run_dg(c, [&](const std::string& s) { log_lines.push_back(s); });
  CHECK(res.dt > 0.0);
  CHECK_FALSE(log_lines.empty());
  const auto& tr = res.total.at("A");
  REQUIRE(tr.size() == 202);
  CHECK(tr[0].grid.dt == c.output_dt);

  // Snapshots inside the window only, written with the incident field added.
  int snaps = 0;
  for (const auto& f : res.files)
    if (f.find("snapshots") != std::string::npos) ++snaps;
  CHECK(snaps == 2);

  const auto manifest = (dir / "manifest.txt").string();
  REQUIRE(fs::exists(manifest));
  CHECK(std::stod(*manifest_value(manifest, "dt")) == doctest::Approx(res.dt));
  CHECK(manifest_value(manifest, "z0").has_value());
  CHECK_FALSE(manifest_value(manifest, "nonexistent").has_value());

  // Re-run from the manifest into a second directory: bit-identical CSVs.
  auto again = load_config(manifest);
  CHECK(again.output_dir == c.output_dir);
  again.output_dir = scratch("dg2").string();
  run_dg(again);
  for (const auto* name : {"dg_A_x.csv", "dg_A_z.csv", "dg_scattered_A_z.csv"})
    CHECK(slurp((dir / name).string()) == slurp(again.output_dir + "/" + name));

  // Before the incident wave reaches the sphere the scattered field is zero.
  const auto& sc = res.scattered.at("A");
  double early = 0.0, late = 0.0;
  for (const auto& s : sc)
    for (int i = 0; i < s.grid.n_steps; ++i) {
      double& peak = s.grid.time(i) < 0.02 ? early : late;
      peak = std::max(peak, std::abs(s.values[i]));
    }
  CHECK(late > 0.0);
  CHECK(early < 1e-6 * late);
  fs::remove_all(dir);
  fs::remove_all(again.output_dir);
}
