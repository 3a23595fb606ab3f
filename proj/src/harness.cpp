#include "cavscat/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "cavscat/errors.hpp"

namespace cavscat::harness {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

[[noreturn]] void bad(const std::string& what) { throw ConfigError("harness", what); }

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

// Shortest representation that parses back to the same double.
std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double to_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto t = trim(s);
  auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size() || !std::isfinite(v))
    bad(key + ": expected a number, got '" + s + "'");
  return v;
}

int to_int(const std::string& key, const std::string& s) {
  int v = 0;
  const auto t = trim(s);
  auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size()) bad(key + ": expected an integer, got '" + s + "'");
  return v;
}

bool to_bool(const std::string& key, const std::string& s) {
  const auto t = trim(s);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  bad(key + ": expected true/false, got '" + s + "'");
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + v[i];
  return out;
}

std::string join(const std::vector<double>& v) {
  std::vector<std::string> s;
  for (double x : v) s.push_back(fmt(x));
  return join(s);
}

std::vector<double> to_doubles(const std::string& key, const std::string& s) {
  std::vector<double> out;
  if (trim(s).empty()) return out;
  for (const auto& item : split(s, ',')) out.push_back(to_double(key, item));
  return out;
}

struct KeyDef {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class T>
KeyDef real(const std::string& key, T RunConfig::*m) {
  return {key, [m](const RunConfig& c) { return fmt(c.*m); },
          [m, key](RunConfig& c, const std::string& v) { c.*m = to_double(key, v); }};
}

KeyDef integer(const std::string& key, int RunConfig::*m) {
  return {key, [m](const RunConfig& c) { return std::to_string(c.*m); },
          [m, key](RunConfig& c, const std::string& v) { c.*m = to_int(key, v); }};
}

KeyDef optional_real(const std::string& key, std::optional<double> RunConfig::*m) {
  return {key, [m](const RunConfig& c) { return (c.*m) ? fmt(*(c.*m)) : std::string("auto"); },
          [m, key](RunConfig& c, const std::string& v) {
            if (trim(v) == "auto")
              c.*m = std::nullopt;
            else
              c.*m = to_double(key, v);
          }};
}

KeyDef material(const std::string& key, Material analytic::SphereConfig::*medium, double Material::*field) {
  return {key, [=](const RunConfig& c) { return fmt(c.sphere.*medium.*field); },
          [=](RunConfig& c, const std::string& v) { c.sphere.*medium.*field = to_double(key, v); }};
}

const std::vector<KeyDef>& key_table() {
  using SC = analytic::SphereConfig;
  static const std::vector<KeyDef> table = [] {
    std::vector<KeyDef> t;
    t.push_back({"config.version", [](const RunConfig&) { return std::to_string(kConfigVersion); },
                 [](RunConfig&, const std::string& v) {
                   if (to_int("config.version", v) != kConfigVersion)
                     bad("unsupported config.version " + trim(v) + " (this build reads " +
                         std::to_string(kConfigVersion) + ")");
                 }});
    t.push_back({"run.tier", [](const RunConfig& c) { return c.tier; },
                 [](RunConfig& c, const std::string& v) { c.tier = trim(v); }});
    t.push_back(integer("run.threads", &RunConfig::threads));
    t.push_back({"output.dir", [](const RunConfig& c) { return c.output_dir; },
                 [](RunConfig& c, const std::string& v) { c.output_dir = trim(v); }});

    t.push_back({"sphere.radius", [](const RunConfig& c) { return fmt(c.sphere.radius); },
                 [](RunConfig& c, const std::string& v) { c.sphere.radius = to_double("sphere.radius", v); }});
    t.push_back({"sphere.interior_model",
                 [](const RunConfig& c) {
                   return std::string(c.sphere.model == analytic::InteriorModel::Acoustic ? "acoustic" : "elastic");
                 },
                 [](RunConfig& c, const std::string& v) {
                   const auto s = trim(v);
                   if (s == "acoustic")
                     c.sphere.model = analytic::InteriorModel::Acoustic;
                   else if (s == "elastic")
                     c.sphere.model = analytic::InteriorModel::Elastic;
                   else
                     bad("sphere.interior_model: expected acoustic or elastic, got '" + s + "'");
                 }});
    t.push_back(material("material.acoustic.rho", &SC::interior, &Material::rho));
    t.push_back(material("material.acoustic.vp", &SC::interior, &Material::vp));
    t.push_back(material("material.acoustic.vs", &SC::interior, &Material::vs));
    t.push_back(material("material.elastic.rho", &SC::exterior, &Material::rho));
    t.push_back(material("material.elastic.vp", &SC::exterior, &Material::vp));
    t.push_back(material("material.elastic.vs", &SC::exterior, &Material::vs));

    t.push_back(real("ricker.f_peak", &RunConfig::f_peak));
    t.push_back(optional_real("ricker.t0", &RunConfig::t0));
    t.push_back(real("ricker.amplitude", &RunConfig::amplitude));

    t.push_back({"domain.box", [](const RunConfig& c) { return join(std::vector<double>(c.box.begin(), c.box.end())); },
                 [](RunConfig& c, const std::string& v) {
                   const auto d = to_doubles("domain.box", v);
                   if (d.size() != 3) bad("domain.box: expected three lengths");
                   c.box = {d[0], d[1], d[2]};
                 }});
    t.push_back(real("mesh.inner_box_half", &RunConfig::inner_box_half));
    t.push_back(real("mesh.h_inner", &RunConfig::h_inner));
    t.push_back(real("mesh.h_outer", &RunConfig::h_outer));
    t.push_back(integer("mesh.radial_layers", &RunConfig::radial_layers));
    t.push_back(real("mesh.core_fraction", &RunConfig::core_fraction));

    t.push_back(integer("dg.degree", &RunConfig::degree));
    t.push_back(integer("dg.acoustic_degree", &RunConfig::acoustic_degree));
    t.push_back(real("dg.penalty_alpha", &RunConfig::penalty_alpha));
    t.push_back(real("dg.nonconforming_factor", &RunConfig::nonconforming_factor));
    t.push_back({"dg.absorbing_tangential",
                 [](const RunConfig& c) { return std::string(c.absorbing_tangential ? "true" : "false"); },
                 [](RunConfig& c, const std::string& v) {
                   c.absorbing_tangential = to_bool("dg.absorbing_tangential", v);
                 }});

    t.push_back(real("time.duration", &RunConfig::duration));
    t.push_back(real("time.dt", &RunConfig::dt));
    t.push_back(real("time.cfl_safety", &RunConfig::cfl_safety));
    t.push_back(real("time.cfl_const", &RunConfig::cfl_const));
    t.push_back(real("time.dt_crit_safety", &RunConfig::dt_crit_safety));

    t.push_back(optional_real("source.z0", &RunConfig::z0));
    t.push_back(real("source.arrival_time", &RunConfig::arrival_time));

    t.push_back(real("output.dt", &RunConfig::output_dt));
    t.push_back(integer("analytic.samples", &RunConfig::analytic_samples));
    t.push_back(real("analytic.f_max_factor", &RunConfig::f_max_factor));

    t.push_back({"receivers.profiles", [](const RunConfig& c) { return join(c.profiles); },
                 [](RunConfig& c, const std::string& v) {
                   c.profiles.clear();
                   for (auto& p : split(v, ','))
                     if (!p.empty()) c.profiles.push_back(p);
                 }});

    t.push_back({"snapshot.times", [](const RunConfig& c) { return join(c.snapshot_times); },
                 [](RunConfig& c, const std::string& v) { c.snapshot_times = to_doubles("snapshot.times", v); }});
    t.push_back(real("snapshot.spacing", &RunConfig::snapshot_spacing));
    t.push_back(real("snapshot.half_width", &RunConfig::snapshot_half_width));

    t.push_back(real("compare.t_start", &RunConfig::compare_t_start));
    t.push_back(real("compare.t_end", &RunConfig::compare_t_end));
    t.push_back(real("compare.max_misfit_elastic", &RunConfig::max_misfit_elastic));
    t.push_back(real("compare.max_misfit_interior", &RunConfig::max_misfit_interior));
    t.push_back(real("compare.arrival_steps", &RunConfig::arrival_steps));
    return t;
  }();
  return table;
}

const KeyDef& find_key(const std::string& key) {
  for (const auto& k : key_table())
    if (k.key == key) return k;
  bad("unknown config key '" + key + "'");
}

bool power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

bool on_sphere(const Vec3& x, double radius) { return std::abs(norm(x) - radius) <= 1e-9 * radius; }

std::string profile_csv(const RunConfig& cfg, const std::string& prefix, const std::string& profile,
                        synth::Component c) {
  return (fs::path(cfg.output_dir) / (prefix + "_" + profile + "_" + synth::component_name(c) + ".csv")).string();
}

constexpr synth::Component kComponents[] = {synth::Component::X, synth::Component::Z};

void log_line(const Log& log, const std::string& s) {
  if (log) log(s);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int output_samples(const RunConfig& cfg) {
  return static_cast<int>(std::floor(cfg.duration / cfg.output_dt + 1e-9)) + 1;
}

void write_receivers(const Profile& p, const std::string& path) {
  std::ofstream os(path);
  if (!os) bad("cannot write " + path);
  os << "id,x,y,z,interior\n" << std::setprecision(12);
  for (const auto& r : p.receivers)
    os << r.id << ',' << r.position[0] << ',' << r.position[1] << ',' << r.position[2] << ',' << (r.interior ? 1 : 0)
       << '\n';
}

// Splits traces by profile and writes one CSV per profile and component.
void write_profiles(const RunConfig& cfg, const std::string& prefix,
                    const std::map<std::string, std::vector<synth::Seismogram>>& traces,
                    std::vector<std::string>& files) {
  for (const auto& [name, list] : traces)
    for (auto c : kComponents) {
      std::vector<synth::Seismogram> sel;
      for (const auto& s : list)
        if (s.component == c) sel.push_back(s);
      const auto path = profile_csv(cfg, prefix, name, c);
      synth::write_csv(path, sel);
      files.push_back(path);
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

synth::RickerParams RunConfig::ricker() const {
  synth::RickerParams p;
  p.f_peak = f_peak;
  p.t0 = t0 ? *t0 : 6.0 / (std::numbers::pi * f_peak);
  p.amplitude = amplitude;
  return p;
}

mesh::SphereInBoxParams RunConfig::mesh_params() const {
  mesh::SphereInBoxParams p;
  p.radius = sphere.radius;
  p.inner_box_half = inner_box_half;
  p.outer_box_dims = box;
  p.h_inner = h_inner;
  p.h_outer = h_outer;
  p.n_radial_layers = radial_layers;
  p.core_fraction = core_fraction;
  return p;
}

dg::AssemblyOptions RunConfig::assembly_options() const {
  dg::AssemblyOptions o;
  o.degree = degree;
  o.acoustic_degree = acoustic_degree;
  o.penalty.alpha = penalty_alpha;
  o.penalty.nonconforming_factor = nonconforming_factor;
  o.absorbing_tangential = absorbing_tangential;
  o.threads = threads;
  return o;
}

dg::BlockMaterials RunConfig::materials() const {
  return {sphere.interior, sphere.exterior, sphere.exterior};
}

synth::TimeGrid RunConfig::analytic_grid() const { return {output_dt, analytic_samples, 0.0}; }

double RunConfig::source_z0() const {
  if (z0) return *z0;
  const double onset = synth::displacement_onset(ricker());
  return -sphere.radius - sphere.exterior.vp * (arrival_time - onset);
}

synth::PlaneWave RunConfig::incident() const { return {sphere.exterior, source_z0(), ricker()}; }

void RunConfig::validate() const {
  if (tier != "desk" && tier != "workstation" && tier != "custom") bad("run.tier must be desk, workstation or custom");
  if (threads < 1) bad("run.threads must be >= 1");
  if (output_dir.empty()) bad("output.dir is empty");
  sphere.validate();
  ricker().validate();
  if (!(amplitude != 0.0)) bad("ricker.amplitude must be nonzero");
  for (double d : box)
    if (!(d > 2.0 * inner_box_half)) bad("domain.box must exceed the inner box on every axis");
  if (!(inner_box_half > sphere.radius)) bad("mesh.inner_box_half must exceed sphere.radius");
  if (!(h_inner > 0.0) || !(h_outer > 0.0)) bad("mesh spacings must be positive");
  if (radial_layers < 1) bad("mesh.radial_layers must be >= 1");
  if (!(core_fraction > 0.0 && core_fraction < 1.0)) bad("mesh.core_fraction must be in (0, 1)");
  if (degree < 1 || degree > 12) bad("dg.degree must be in [1, 12]");
  if (acoustic_degree < 0 || acoustic_degree > 12) bad("dg.acoustic_degree must be in [0, 12]");
  if (!(penalty_alpha > 0.0)) bad("dg.penalty_alpha must be positive");
  if (!(nonconforming_factor >= 1.0)) bad("dg.nonconforming_factor must be >= 1");
  if (!(cfl_safety > 0.0) || !(cfl_const > 0.0)) bad("time.cfl_safety and time.cfl_const must be positive");
  if (!(dt_crit_safety > 0.0 && dt_crit_safety <= 1.0)) bad("time.dt_crit_safety must be in (0, 1]");
  if (dt < 0.0) bad("time.dt must be >= 0 (0 selects it automatically)");
  if (!(duration > 0.0)) bad("time.duration must be positive");
  if (!(output_dt > 0.0)) bad("output.dt must be positive");
  if (!power_of_two(analytic_samples)) bad("analytic.samples must be a power of two");
  if (analytic_samples * output_dt < duration) bad("analytic window (samples * output.dt) shorter than time.duration");
  if (!(f_max_factor > 0.0)) bad("analytic.f_max_factor must be positive");
  if (f_max_factor * f_peak >= 0.5 / output_dt) bad("output.dt does not resolve f_max_factor * f_peak");
  if (!(arrival_time > 0.0)) bad("source.arrival_time must be positive");
  if (!(source_z0() < -sphere.radius))
    bad("source plane must lie below the sphere (increase source.arrival_time or set source.z0)");
  if (profiles.empty()) bad("receivers.profiles is empty");
  for (const auto& p : profiles) {
    if (p != "A" && p != "B" && p != "C" && p != "D") bad("unknown profile '" + p + "'");
    for (const auto& r : make_profile(p, sphere.radius).receivers)
      for (int d = 0; d < 3; ++d)
        if (std::abs(r.position[d]) > 0.5 * box[d]) bad("receiver " + r.id + " lies outside domain.box");
  }
  for (double t : snapshot_times)
    if (!(t >= 0.0)) bad("snapshot.times must be >= 0");
  if (!(snapshot_spacing > 0.0) || !(snapshot_half_width > 0.0)) bad("snapshot window must be positive");
  if (compare_t_start < 0.0 || compare_t_end < 0.0 || (compare_t_end > 0.0 && compare_t_end <= compare_t_start))
    bad("invalid compare window");
  if (!(max_misfit_elastic > 0.0) || !(max_misfit_interior > 0.0) || !(arrival_steps > 0.0))
    bad("compare thresholds must be positive");
}

RunConfig preset(const std::string& tier) {
  RunConfig c;
  if (tier == "desk") return c;
  if (tier == "workstation") {
    c.tier = "workstation";
    c.f_peak = 66.7;
    c.box = {1200.0, 1200.0, 1200.0};
    c.inner_box_half = 60.0;
    c.h_inner = 10.0;
    c.h_outer = 20.0;
    c.radial_layers = 2;
    c.duration = 0.45;
    c.output_dt = 2e-4;
    c.analytic_samples = 16384;
    c.output_dir = "out_workstation";
    return c;
  }
  if (tier == "custom") {
    c.tier = "custom";
    return c;
  }
  bad("unknown tier '" + tier + "' (desk, workstation or custom)");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> k;
  for (const auto& d : key_table()) k.push_back(d.key);
  return k;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  find_key(trim(key)).set(cfg, value);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) { return find_key(trim(key)).get(cfg); }

RunConfig parse_config(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::set<std::string> seen;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) bad("line " + std::to_string(lineno) + ": expected 'key = value'");
    auto key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) bad("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    entries.emplace_back(key, line.substr(eq + 1));
  }
  RunConfig cfg;
  for (const auto& [k, v] : entries)
    if (k == "run.tier") cfg = preset(trim(v));
  for (const auto& [k, v] : entries) set_config_value(cfg, k, v);
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) bad("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << "# cavscat run configuration\n";
  for (const auto& k : key_table()) os << k.key << " = " << k.get(cfg) << '\n';
  return os.str();
}

void save_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream os(path);
  if (!os) bad("cannot write '" + path + "'");
  os << serialize_config(cfg);
}

// ---------------------------------------------------------------------------
// Profiles

Profile make_profile(const std::string& name, const std::vector<Vec3>& points, double radius) {
  Profile p{name, {}};
  int i = 0;
  for (const auto& x : points) {
    std::ostringstream id;
    id << name << '_' << i++;
    p.receivers.push_back({id.str(), x, norm(x) < radius && !on_sphere(x, radius)});
  }
  return p;
}

Profile make_profile(const std::string& name, double radius) {
  Profile p{name, {}};
  auto add = [&](char axis, double v, const Vec3& x) {
    std::ostringstream id;
    id << name << '_' << axis << v;
    p.receivers.push_back({id.str(), x, norm(x) < radius && !on_sphere(x, radius)});
  };
  if (name == "A" || name == "B") {
    for (int i = -50; i <= 50; ++i) {
      const double s = 2.0 * i;
      if (name == "A")
        add('z', s, {0.0, 0.0, s});
      else
        add('x', s, {s, 0.0, 0.0});
    }
  } else if (name == "C" || name == "D") {
    const double z = name == "C" ? 300.0 : -300.0;
    for (int i = -30; i <= 30; ++i) add('x', 10.0 * i, {10.0 * i, 0.0, z});
  } else {
    bad("unknown profile '" + name + "'");
  }
  return p;
}

// ---------------------------------------------------------------------------
// Metrics

double sample(const synth::TimeGrid& grid, const std::vector<double>& trace, double t) {
  if (trace.empty()) return 0.0;
  const double f = (t - grid.t_start) / grid.dt;
  const double n = static_cast<double>(trace.size()) - 1.0;
  if (f < -1e-9 || f > n + 1e-9) return 0.0;
  const double fc = std::clamp(f, 0.0, n);
  const auto j = static_cast<std::size_t>(std::min(std::floor(fc), std::max(n - 1.0, 0.0)));
  if (j + 1 >= trace.size()) return trace[j];
  const double w = fc - static_cast<double>(j);
  return trace[j] + w * (trace[j + 1] - trace[j]);
}

namespace {

struct Window {
  int first = 0, last = -1;  // inclusive sample range on the reference grid
};

Window window_of(const synth::TimeGrid& g, std::size_t n, double t_start, double t_end) {
  Window w;
  w.first = std::max(0, static_cast<int>(std::ceil((t_start - g.t_start) / g.dt - 1e-9)));
  w.last = static_cast<int>(n) - 1;
  if (t_end > 0.0) w.last = std::min(w.last, static_cast<int>(std::floor((t_end - g.t_start) / g.dt + 1e-9)));
  return w;
}

}  // namespace

Misfit compare_traces(const std::string& id, const synth::TimeGrid& ref_grid, const std::vector<double>& ref,
                      const synth::TimeGrid& test_grid, const std::vector<double>& test, double t_start,
                      double t_end) {
  Misfit m;
  m.id = id;
  const Window w = window_of(ref_grid, ref.size(), t_start, t_end);
  if (w.last < w.first) bad("comparison window of '" + id + "' is empty");
  const int n = w.last - w.first + 1;
  std::vector<double> a(n), b(n);
  for (int i = 0; i < n; ++i) {
    a[i] = ref[w.first + i];
    b[i] = sample(test_grid, test, ref_grid.time(w.first + i));
  }
  double err = 0.0, nrm = 0.0, pa = 0.0, pb = 0.0;
  for (int i = 0; i < n; ++i) {
    err += (b[i] - a[i]) * (b[i] - a[i]);
    nrm += a[i] * a[i];
    pa = std::max(pa, std::abs(a[i]));
    pb = std::max(pb, std::abs(b[i]));
  }
  m.ref_norm = std::sqrt(nrm);
  m.misfit = nrm > 0.0 ? std::sqrt(err / nrm) : (err > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  m.amplitude_ratio = pa > 0.0 ? pb / pa : (pb > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);

  // c(k) = sum_i a_i b_{i+k}; a delay of the test trace gives k > 0.
  const int kmax = n / 2;
  double best = -std::numeric_limits<double>::infinity();
  int best_k = 0;
  for (int k = -kmax; k <= kmax; ++k) {
    double c = 0.0;
    for (int i = std::max(0, -k); i < std::min(n, n - k); ++i) c += a[i] * b[i + k];
    if (c > best || (c == best && std::abs(k) < std::abs(best_k))) {
      best = c;
      best_k = k;
    }
  }
  m.lag = best_k * ref_grid.dt;
  return m;
}

MisfitReport compare(const std::vector<synth::Seismogram>& reference, const std::vector<synth::Seismogram>& test,
                     double t_start, double t_end) {
  MisfitReport rep;
  double err = 0.0, nrm = 0.0, pa = 0.0, pb = 0.0;
  for (const auto& r : reference) {
    auto it = std::find_if(test.begin(), test.end(),
                           [&](const synth::Seismogram& s) { return s.id == r.id && s.component == r.component; });
    if (it == test.end()) bad("trace '" + r.id + "' missing from the test set");
    auto m = compare_traces(r.id, r.grid, r.values, it->grid, it->values, t_start, t_end);
    const Window w = window_of(r.grid, r.values.size(), t_start, t_end);
    for (int i = w.first; i <= w.last; ++i) {
      const double a = r.values[i], b = sample(it->grid, it->values, r.grid.time(i));
      err += (b - a) * (b - a);
      nrm += a * a;
      pa = std::max(pa, std::abs(a));
      pb = std::max(pb, std::abs(b));
    }
    if (std::abs(m.lag) > std::abs(rep.summary.lag)) rep.summary.lag = m.lag;
    rep.receivers.push_back(std::move(m));
  }
  rep.summary.id = "ALL";
  rep.summary.ref_norm = std::sqrt(nrm);
  rep.summary.misfit = nrm > 0.0 ? std::sqrt(err / nrm) : 0.0;
  rep.summary.amplitude_ratio = pa > 0.0 ? pb / pa : 1.0;
  return rep;
}

void MisfitReport::write_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) bad("cannot write '" + path + "'");
  os << "id,misfit,amplitude_ratio,lag,ref_norm\n" << std::setprecision(9);
  for (const auto* m : {&summary})
    os << m->id << ',' << m->misfit << ',' << m->amplitude_ratio << ',' << m->lag << ',' << m->ref_norm << '\n';
  for (const auto& m : receivers)
    os << m.id << ',' << m.misfit << ',' << m.amplitude_ratio << ',' << m.lag << ',' << m.ref_norm << '\n';
}

double arrival_time(const synth::TimeGrid& grid, const std::vector<double>& trace, double fraction) {
  double peak = 0.0;
  for (double v : trace) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) return kNaN;
  const double thr = fraction * peak;
  for (std::size_t i = 0; i < trace.size(); ++i)
    if (std::abs(trace[i]) >= thr) {
      if (i == 0) return grid.time(0);
      // Linear interpolation of the crossing.
      const double a = std::abs(trace[i - 1]), b = std::abs(trace[i]);
      return grid.time(static_cast<int>(i) - 1) + grid.dt * (thr - a) / (b - a);
    }
  return kNaN;
}

double reverberation_period(const synth::TimeGrid& grid, const std::vector<double>& trace) {
  const double t_on = arrival_time(grid, trace);
  if (std::isnan(t_on)) return kNaN;
  const auto first = static_cast<std::size_t>(std::max(0.0, std::floor((t_on - grid.t_start) / grid.dt)));
  const std::vector<double> s(trace.begin() + static_cast<std::ptrdiff_t>(first), trace.end());
  const int n = static_cast<int>(s.size());
  auto corr = [&](int k) {
    double c = 0.0;
    for (int i = 0; i + k < n; ++i) c += s[i] * s[i + k];
    return c;
  };
  // Skip the main lobe: advance to the first negative autocorrelation.
  int k = 1;
  while (k < n / 2 && corr(k) > 0.0) ++k;
  double best = 0.0;
  int best_k = -1;
  for (; k < n / 2; ++k) {
    const double c = corr(k);
    if (c > best) {
      best = c;
      best_k = k;
    }
  }
  if (best_k < 0) return kNaN;
  // Parabolic refinement of the peak.
  const double cm = corr(best_k - 1), cp = corr(best_k + 1);
  const double den = cm - 2.0 * best + cp;
  const double shift = den < 0.0 ? 0.5 * (cm - cp) / den : 0.0;
  return (best_k + shift) * grid.dt;
}

namespace {

const synth::Seismogram* find_trace(const std::vector<synth::Seismogram>& v, const std::string& id,
                                    synth::Component c) {
  for (const auto& s : v)
    if (s.id == id && s.component == c) return &s;
  return nullptr;
}

}  // namespace

std::vector<VectorMisfit> vector_misfits(const Profile& profile, const std::vector<synth::Seismogram>& ref_total,
                                         const std::vector<synth::Seismogram>& test_total,
                                         const std::vector<synth::Seismogram>& ref_scattered,
                                         const std::vector<synth::Seismogram>& test_scattered, double t_start,
                                         double t_end) {
  std::vector<VectorMisfit> out;
  for (const auto& r : profile.receivers) {
    VectorMisfit vm;
    vm.id = r.id;
    vm.interior = r.interior;
    double err = 0.0, nrm = 0.0;
    for (auto c : kComponents) {
      const auto* a = find_trace(ref_total, r.id, c);
      const auto* b = find_trace(test_total, r.id, c);
      if (!a || !b) bad("receiver '" + r.id + "' missing a " + synth::component_name(c) + " trace");
      const Window w = window_of(a->grid, a->values.size(), t_start, t_end);
      for (int i = w.first; i <= w.last; ++i) {
        const double d = sample(b->grid, b->values, a->grid.time(i)) - a->values[i];
        err += d * d;
        nrm += a->values[i] * a->values[i];
      }
    }
    vm.misfit = nrm > 0.0 ? std::sqrt(err / nrm) : 0.0;

    vm.arrival_error = kNaN;
    if (!r.interior && !ref_scattered.empty() && !test_scattered.empty()) {
      auto magnitude = [&](const std::vector<synth::Seismogram>& set, synth::TimeGrid& g) {
        const auto* x = find_trace(set, r.id, synth::Component::X);
        const auto* z = find_trace(set, r.id, synth::Component::Z);
        if (!x || !z) bad("receiver '" + r.id + "' missing scattered traces");
        g = z->grid;
        const Window w = window_of(g, z->values.size(), t_start, t_end);
        std::vector<double> m(z->values.size(), 0.0);
        for (int i = w.first; i <= w.last; ++i) m[i] = std::hypot(x->values[i], z->values[i]);
        return m;
      };
      synth::TimeGrid ga, gb;
      const auto ma = magnitude(ref_scattered, ga);
      const auto mb = magnitude(test_scattered, gb);
      vm.arrival_error = std::abs(arrival_time(gb, mb) - arrival_time(ga, ma));
    }
    out.push_back(vm);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pipelines

namespace {

std::vector<Profile> profiles_of(const RunConfig& cfg) {
  std::vector<Profile> p;
  for (const auto& name : cfg.profiles) p.push_back(make_profile(name, cfg.sphere.radius));
  return p;
}

// Adds the closed-form incident wave to scattered traces.
std::vector<synth::Seismogram> add_incident(const RunConfig& cfg, std::vector<synth::Seismogram> traces) {
  const auto pw = cfg.incident();
  for (auto& s : traces)
    if (s.component == synth::Component::Z)
      for (int i = 0; i < static_cast<int>(s.values.size()); ++i)
        s.values[i] += pw.displacement(s.receiver[2], s.grid.time(i));
  return traces;
}

void ensure_dir(const std::string& d) {
  std::error_code ec;
  fs::create_directories(d, ec);
  if (ec) bad("cannot create output directory '" + d + "': " + ec.message());
}

}  // namespace

PipelineResult run_analytic(const RunConfig& cfg, const Log& log) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  ensure_dir(cfg.output_dir);
  const auto p = cfg.ricker();
  const auto grid = cfg.analytic_grid();
  const auto plan = synth::FrequencyPlan::make(grid, p, cfg.f_max_factor);
  synth::SynthesisOptions so;
  so.mode = synth::SpectrumMode::PlaneSource;
  so.field = synth::Field::Scattered;
  so.z0 = cfg.source_z0();
  so.threads = cfg.threads;
  const int n_out = output_samples(cfg);

  PipelineResult res;
  for (const auto& prof : profiles_of(cfg)) {
    std::vector<synth::Receiver> rx;
    for (const auto& r : prof.receivers) {
      std::optional<analytic::Side> side;
      if (r.interior) side = analytic::Side::Interior;
      if (on_sphere(r.position, cfg.sphere.radius)) side = analytic::Side::Exterior;
      rx.push_back({r.id, r.position, side});
    }
    log_line(log, "analytic: profile " + prof.name + ", " + std::to_string(rx.size()) + " receivers, " +
                      std::to_string(plan.k_max) + " frequencies");
    auto traces = synth::synthesize(cfg.sphere, rx, {kComponents[0], kComponents[1]}, p, grid, plan, so);
    for (auto& s : traces) {
      s.values.resize(n_out);
      s.grid.n_steps = n_out;
    }
    res.total[prof.name] = add_incident(cfg, traces);
    res.scattered[prof.name] = std::move(traces);
    const auto meta = (fs::path(cfg.output_dir) / ("receivers_" + prof.name + ".csv")).string();
    write_receivers(prof, meta);
    res.files.push_back(meta);
  }
  write_profiles(cfg, "analytic", res.total, res.files);
  write_profiles(cfg, "analytic_scattered", res.scattered, res.files);
  res.seconds = seconds_since(start);
  log_line(log, "analytic: done in " + fmt(std::round(res.seconds * 10) / 10) + " s");
  return res;
}

PipelineResult run_dg(const RunConfig& cfg, const Log& log) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  ensure_dir(cfg.output_dir);

  const auto mesh = mesh::build_sphere_in_box(cfg.mesh_params());
  const auto mat = cfg.materials();
  auto sys = dg::SemiDiscreteSystem::build(mesh, mat, cfg.assembly_options());
  log_line(log, "dg: " + std::to_string(mesh.elements.size()) + " elements, " + std::to_string(sys->n_dofs()) +
                    " dofs");

  dg::TimeIntegrationConfig tc;
  tc.cfl_safety = cfg.cfl_safety;
  tc.cfl_const = cfg.cfl_const;
  const double dt_cfl = dg::cfl_dt(mesh, mat, tc);
  const double dt_crit = dg::critical_dt(*sys, 100);
  tc.dt = cfg.dt > 0.0 ? cfg.dt : std::min(dt_cfl, cfg.dt_crit_safety * dt_crit);
  tc.n_steps = static_cast<int>(std::ceil(cfg.duration / tc.dt)) + 2;
  log_line(log, "dg: dt = " + fmt(tc.dt) + " s (cfl " + fmt(dt_cfl) + ", stability limit " + fmt(dt_crit) + "), " +
                    std::to_string(tc.n_steps) + " steps");

  PipelineResult res;
  res.warnings = sys->warnings();
  if (tc.dt > dt_crit) res.warnings.push_back("time step exceeds the estimated stability limit");
  for (const auto& w : res.warnings) log_line(log, "dg: warning: " + w);

  const auto profiles = profiles_of(cfg);
  std::vector<dg::ReceiverSpec> rx;
  for (const auto& prof : profiles)
    for (const auto& r : prof.receivers) {
      std::optional<mesh::Block> prefer;
      if (r.interior) prefer = mesh::Block::Acoustic;
      if (on_sphere(r.position, cfg.sphere.radius)) prefer = mesh::Block::ElasticInner;
      rx.push_back({r.id, r.position, prefer});
    }

  const auto pw = cfg.incident();
  dg::ScatteredFieldSource source(*sys, pw);

  dg::RunOptions ro;
  ro.components = {kComponents[0], kComponents[1]};
  dg::SnapshotSpec snap;
  for (double t : cfg.snapshot_times)
    if (t <= cfg.duration) snap.times.push_back(t);
  if (!snap.times.empty()) {
    snap.directory = (fs::path(cfg.output_dir) / "snapshots").string();
    ensure_dir(snap.directory);
    snap.x_min = snap.z_min = -cfg.snapshot_half_width;
    snap.x_max = snap.z_max = cfg.snapshot_half_width;
    snap.spacing = cfg.snapshot_spacing;
    snap.background = [pw](const Vec3& x, double t) { return Vec3{0.0, 0.0, pw.displacement(x[2], t)}; };
    ro.snapshots = snap;
  }
  const auto t_run = std::chrono::steady_clock::now();
  ro.progress = [&](int step) {
    const double el = seconds_since(t_run);
    log_line(log, "dg: step " + std::to_string(step) + "/" + std::to_string(tc.n_steps) + ", " +
                      fmt(std::round(el)) + " s elapsed");
  };
  ro.progress_interval = 1000;
  auto run = dg::leapfrog_run(*sys, &source, tc, rx, ro);

  // Resample onto the output grid.
  const int n_out = output_samples(cfg);
  const synth::TimeGrid out_grid{cfg.output_dt, n_out, 0.0};
  const synth::TimeGrid dg_grid{tc.dt, tc.n_steps, 0.0};
  std::size_t k = 0;
  for (const auto& prof : profiles) {
    std::vector<synth::Seismogram> traces;
    for (std::size_t r = 0; r < prof.receivers.size(); ++r)
      for (std::size_t c = 0; c < 2; ++c) {
        const auto& s = run.seismograms[k++];
        synth::Seismogram o;
        o.id = s.id;
        o.receiver = prof.receivers[r].position;
        o.component = s.component;
        o.grid = out_grid;
        o.values.resize(n_out);
        for (int i = 0; i < n_out; ++i) o.values[i] = sample(dg_grid, s.values, out_grid.time(i));
        traces.push_back(std::move(o));
      }
    res.total[prof.name] = add_incident(cfg, traces);
    res.scattered[prof.name] = std::move(traces);
  }
  write_profiles(cfg, "dg", res.total, res.files);
  write_profiles(cfg, "dg_scattered", res.scattered, res.files);
  for (const auto& f : run.snapshot_files) res.files.push_back(f);
  res.dt = tc.dt;
  res.seconds = seconds_since(start);

  const auto manifest = (fs::path(cfg.output_dir) / "manifest.txt").string();
  std::ofstream os(manifest);
  if (!os) bad("cannot write '" + manifest + "'");
  os << serialize_config(cfg);
  os << "# Resolved values. Re-run with: cavscat dg --config manifest.txt\n";
  os << "# resolved.z0 = " << fmt(pw.z0) << '\n';
  os << "# resolved.t0 = " << fmt(pw.ricker.t0) << '\n';
  os << "# resolved.dt = " << fmt(tc.dt) << '\n';
  os << "# resolved.dt_cfl = " << fmt(dt_cfl) << '\n';
  os << "# resolved.dt_stability = " << fmt(dt_crit) << '\n';
  os << "# resolved.n_steps = " << tc.n_steps << '\n';
  os << "# resolved.elements = " << mesh.elements.size() << '\n';
  os << "# resolved.dofs = " << sys->n_dofs() << '\n';
  os << "# resolved.formulation = scattered-field (total = u_S + closed-form incident)\n";
  os << "# resolved.runtime_s = " << fmt(std::round(res.seconds * 10) / 10) << '\n';
  for (const auto& w : res.warnings) os << "# warning: " << w << '\n';
  for (const auto& f : res.files) os << "# output: " << f << '\n';
  res.files.push_back(manifest);
  log_line(log, "dg: done in " + fmt(std::round(res.seconds * 10) / 10) + " s");
  return res;
}

std::vector<std::string> run_ricker(const RunConfig& cfg, const Log& log) {
  cfg.validate();
  ensure_dir(cfg.output_dir);
  const auto p = cfg.ricker();
  std::vector<std::string> files;
  const auto wpath = (fs::path(cfg.output_dir) / "ricker.csv").string();
  {
    std::ofstream os(wpath);
    if (!os) bad("cannot write '" + wpath + "'");
    os << "t,R\n" << std::setprecision(9);
    for (int i = 0, n = output_samples(cfg); i < n; ++i) {
      const double t = i * cfg.output_dt;
      os << t << ',' << synth::ricker(p, t) << '\n';
    }
  }
  files.push_back(wpath);
  const auto spath = (fs::path(cfg.output_dir) / "ricker_spectrum.csv").string();
  {
    std::ofstream os(spath);
    if (!os) bad("cannot write '" + spath + "'");
    os << "f,amplitude\n" << std::setprecision(9);
    const double f_max = cfg.f_max_factor * p.f_peak;
    const int n = 400;
    for (int i = 0; i <= n; ++i) {
      const double f = f_max * i / n;
      os << f << ',' << std::abs(synth::ricker_spectrum(p, f)) << '\n';
    }
  }
  files.push_back(spath);
  log_line(log, "ricker: wrote " + wpath + " and " + spath);
  return files;
}

std::vector<std::string> run_mesh(const RunConfig& cfg, const Log& log) {
  cfg.validate();
  ensure_dir(cfg.output_dir);
  const auto m = mesh::build_sphere_in_box(cfg.mesh_params());
  const auto txt = (fs::path(cfg.output_dir) / "mesh.txt").string();
  const auto vtk = (fs::path(cfg.output_dir) / "mesh.vtk").string();
  mesh::write_text(m, txt);
  mesh::write_vtk(m, vtk);
  log_line(log, "mesh: " + std::to_string(m.elements.size()) + " elements, min edge " + fmt(mesh::min_edge_length(m)) +
                    " m");
  return {txt, vtk};
}

std::vector<synth::Seismogram> read_profile_csv(const std::string& path, synth::Component component) {
  auto traces = synth::read_csv(path);
  for (auto& s : traces) s.component = component;
  return traces;
}

PipelineResult load_outputs(const RunConfig& cfg, const std::string& prefix) {
  PipelineResult res;
  for (const auto& prof : profiles_of(cfg)) {
    for (const std::string kind : {"", "_scattered"}) {
      // Receiver-major, x before z, as produced by the pipelines.
      auto xs = read_profile_csv(profile_csv(cfg, prefix + kind, prof.name, kComponents[0]), kComponents[0]);
      auto zs = read_profile_csv(profile_csv(cfg, prefix + kind, prof.name, kComponents[1]), kComponents[1]);
      if (xs.size() != prof.receivers.size() || zs.size() != prof.receivers.size())
        bad("receiver count of " + prefix + kind + " profile " + prof.name + " does not match the configuration");
      std::vector<synth::Seismogram> all;
      for (std::size_t r = 0; r < prof.receivers.size(); ++r) {
        if (xs[r].id != prof.receivers[r].id || zs[r].id != prof.receivers[r].id)
          bad("unexpected receiver '" + xs[r].id + "' in " + prefix + kind + " profile " + prof.name);
        xs[r].receiver = zs[r].receiver = prof.receivers[r].position;
        all.push_back(std::move(xs[r]));
        all.push_back(std::move(zs[r]));
      }
      (kind.empty() ? res.total : res.scattered)[prof.name] = std::move(all);
    }
  }
  return res;
}

std::optional<std::string> manifest_value(const std::string& path, const std::string& key) {
  std::ifstream is(path);
  if (!is) return std::nullopt;
  const std::string tag = "# resolved." + key + " = ";
  std::string line;
  while (std::getline(is, line))
    if (line.rfind(tag, 0) == 0) return trim(line.substr(tag.size()));
  return std::nullopt;
}

EndToEndReport evaluate_end_to_end(const RunConfig& cfg, const PipelineResult& analytic, const PipelineResult& dg,
                                   double dg_dt) {
  EndToEndReport rep;
  rep.max_elastic = cfg.max_misfit_elastic;
  rep.max_interior = cfg.max_misfit_interior;
  rep.max_arrival = cfg.arrival_steps * dg_dt;
  for (const auto& prof : profiles_of(cfg)) {
    auto get = [&](const std::map<std::string, std::vector<synth::Seismogram>>& m) -> const auto& {
      auto it = m.find(prof.name);
      if (it == m.end()) bad("profile " + prof.name + " missing from the results");
      return it->second;
    };
    const std::vector<synth::Seismogram> none;
    auto scat = [&](const PipelineResult& r) -> const std::vector<synth::Seismogram>& {
      auto it = r.scattered.find(prof.name);
      return it == r.scattered.end() ? none : it->second;
    };
    for (auto vm : vector_misfits(prof, get(analytic.total), get(dg.total), scat(analytic), scat(dg),
                                  cfg.compare_t_start, cfg.compare_t_end)) {
      if (vm.interior) {
        if (vm.misfit > rep.worst_interior || rep.worst_interior_id.empty()) {
          rep.worst_interior = std::max(rep.worst_interior, vm.misfit);
          if (vm.misfit >= rep.worst_interior) rep.worst_interior_id = vm.id;
        }
      } else {
        if (vm.misfit >= rep.worst_elastic) {
          rep.worst_elastic = vm.misfit;
          rep.worst_elastic_id = vm.id;
        }
        if (!std::isnan(vm.arrival_error) && vm.arrival_error >= rep.worst_arrival) {
          rep.worst_arrival = vm.arrival_error;
          rep.worst_arrival_id = vm.id;
        }
      }
      rep.receivers.push_back(vm);
    }
  }
  return rep;
}

std::string EndToEndReport::summary() const {
  std::ostringstream os;
  os << std::setprecision(3) << "elastic misfit max " << worst_elastic << " (" << worst_elastic_id << ", limit "
     << max_elastic << "); interior misfit max " << worst_interior << " (" << worst_interior_id << ", limit "
     << max_interior << "); scattered arrival error max " << worst_arrival << " s (" << worst_arrival_id
     << ", limit " << max_arrival << " s)";
  return os.str();
}

void EndToEndReport::write_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) bad("cannot write '" + path + "'");
  os << "id,interior,misfit,arrival_error\n" << std::setprecision(9);
  for (const auto& r : receivers)
    os << r.id << ',' << (r.interior ? 1 : 0) << ',' << r.misfit << ',' << r.arrival_error << '\n';
}

}  // namespace cavscat::harness
