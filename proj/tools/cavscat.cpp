// Command-line front end: analytic, dg, compare, ricker, mesh, config.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "cavscat/errors.hpp"
#include "cavscat/harness.hpp"

namespace fs = std::filesystem;
using namespace cavscat;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kNumerical = 3, kAcceptance = 4 };

struct Globals {
  std::string config;
  std::string tier;
  std::string out;
  int threads = 0;
  bool verbose = false;
  std::vector<std::string> overrides;
};

harness::RunConfig resolve(const Globals& g) {
  harness::RunConfig cfg = g.config.empty() ? harness::preset(g.tier.empty() ? "desk" : g.tier)
                                            : harness::load_config(g.config);
  if (!g.config.empty() && !g.tier.empty()) throw ConfigError("cli", "--tier and --config are exclusive");
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("cli", "--set expects key=value, got '" + kv + "'");
    harness::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!g.out.empty()) cfg.output_dir = g.out;
  if (g.threads > 0) cfg.threads = g.threads;
  cfg.validate();
  return cfg;
}

harness::Log logger(const Globals& g) {
  if (!g.verbose) return {};
  return [](const std::string& s) { std::cerr << s << '\n'; };
}

void print_files(const std::vector<std::string>& files) {
  for (const auto& f : files) std::cout << "wrote " << f << '\n';
}

// Profile-by-profile comparison of the analytic and DG outputs in cfg.output_dir.
int compare_outputs(const harness::RunConfig& cfg, bool assert_mode) {
  const auto analytic = harness::load_outputs(cfg, "analytic");
  const auto dg = harness::load_outputs(cfg, "dg");
  const auto manifest = (fs::path(cfg.output_dir) / "manifest.txt").string();
  double dt = cfg.dt;
  if (auto v = harness::manifest_value(manifest, "dt")) dt = std::stod(*v);
  if (!(dt > 0.0)) throw ConfigError("cli", "DG time step unknown: no manifest in " + cfg.output_dir + " and time.dt = 0");

  for (const auto& [name, ref] : analytic.total) {
    const auto rep = harness::compare(ref, dg.total.at(name), cfg.compare_t_start, cfg.compare_t_end);
    for (const auto* c : {"x", "z"}) {
      std::vector<synth::Seismogram> r, t;
      const auto comp = synth::parse_component(c);
      for (const auto& s : ref)
        if (s.component == comp) r.push_back(s);
      for (const auto& s : dg.total.at(name))
        if (s.component == comp) t.push_back(s);
      const auto path = (fs::path(cfg.output_dir) / ("misfit_" + name + "_" + c + ".csv")).string();
      harness::compare(r, t, cfg.compare_t_start, cfg.compare_t_end).write_csv(path);
      std::cout << "wrote " << path << '\n';
    }
    std::cout << "profile " << name << ": pooled misfit " << rep.summary.misfit << ", amplitude ratio "
              << rep.summary.amplitude_ratio << ", largest lag " << rep.summary.lag << " s\n";
  }
  const auto e2e = harness::evaluate_end_to_end(cfg, analytic, dg, dt);
  const auto path = (fs::path(cfg.output_dir) / "misfit_receivers.csv").string();
  e2e.write_csv(path);
  std::cout << "wrote " << path << '\n' << e2e.summary() << '\n';
  if (assert_mode && !e2e.passed()) {
    std::cerr << "acceptance thresholds exceeded\n";
    return kAcceptance;
  }
  return kOk;
}

int compare_files(const harness::RunConfig& cfg, const std::string& ref, const std::string& test, bool assert_mode) {
  const auto a = harness::read_profile_csv(ref, synth::Component::Z);
  const auto b = harness::read_profile_csv(test, synth::Component::Z);
  const auto rep = harness::compare(a, b, cfg.compare_t_start, cfg.compare_t_end);
  fs::create_directories(cfg.output_dir);
  const auto path = (fs::path(cfg.output_dir) / "misfit.csv").string();
  rep.write_csv(path);
  std::cout << "wrote " << path << "\npooled misfit " << rep.summary.misfit << ", amplitude ratio "
            << rep.summary.amplitude_ratio << ", largest lag " << rep.summary.lag << " s\n";
  if (assert_mode && !(rep.summary.misfit <= cfg.max_misfit_elastic)) {
    std::cerr << "misfit above compare.max_misfit_elastic = " << cfg.max_misfit_elastic << '\n';
    return kAcceptance;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Seismic scattering by a fluid-filled cavity: analytic and DG pipelines"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Configuration file (dotted key = value)");
  app.add_option("--tier", g.tier, "Preset when no config is given: desk or workstation");
  app.add_option("--out", g.out, "Output directory (overrides output.dir)");
  app.add_option("--threads", g.threads, "Thread budget (overrides run.threads)")->check(CLI::PositiveNumber);
  app.add_flag("--verbose,-v", g.verbose, "Progress on stderr");
  app.add_option("--set", g.overrides, "Override a config key: --set key=value (repeatable)");

  auto* analytic = app.add_subcommand("analytic", "Synthesize analytic seismograms for the receiver profiles");
  auto* dg = app.add_subcommand("dg", "Run the DG solver: seismograms, snapshots and manifest");
  auto* cmp = app.add_subcommand("compare", "Compare DG against analytic seismograms");
  std::vector<std::string> files;
  bool assert_mode = false;
  cmp->add_option("files", files, "Reference and test CSV (default: the run outputs in the output directory)")
      ->expected(0, 2);
  cmp->add_flag("--assert", assert_mode, "Exit with status 4 when thresholds are exceeded");
  auto* ricker = app.add_subcommand("ricker", "Write the source wavelet and its spectrum");
  auto* mesh = app.add_subcommand("mesh", "Export the mesh (text and VTK)");
  auto* config = app.add_subcommand("config", "Print the resolved configuration");
  bool list_keys = false;
  config->add_flag("--keys", list_keys, "List the configuration keys");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (config->parsed()) {
      if (list_keys) {
        for (const auto& k : harness::config_keys()) std::cout << k << '\n';
      } else {
        std::cout << harness::serialize_config(resolve(g));
      }
      return kOk;
    }
    const auto cfg = resolve(g);
    const auto log = logger(g);
    if (analytic->parsed()) {
      print_files(harness::run_analytic(cfg, log).files);
    } else if (dg->parsed()) {
      const auto r = harness::run_dg(cfg, log);
      print_files(r.files);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
    } else if (cmp->parsed()) {
      if (files.size() == 1) throw ConfigError("cli", "compare takes zero or two CSV files");
      return files.empty() ? compare_outputs(cfg, assert_mode) : compare_files(cfg, files[0], files[1], assert_mode);
    } else if (ricker->parsed()) {
      print_files(harness::run_ricker(cfg, log));
    } else if (mesh->parsed()) {
      print_files(harness::run_mesh(cfg, log));
    }
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
