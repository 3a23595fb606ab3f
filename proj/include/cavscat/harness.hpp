#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cavscat/analytic.hpp"
#include "cavscat/dgsolver.hpp"
#include "cavscat/mesh.hpp"
#include "cavscat/synth.hpp"

/// Run configuration, receiver profiles, comparison metrics and the
/// analytic / DG pipelines behind the command-line tool.
namespace cavscat::harness {

inline constexpr int kConfigVersion = 1;

/// Everything needed to reproduce one run. Serialized as flat `key = value`
/// lines with dotted keys; see `config_keys()` for the full list.
struct RunConfig {
  std::string tier = "desk";

  analytic::SphereConfig sphere;
  double f_peak = 20.0;
  std::optional<double> t0;  ///< unset: 6 / (pi f_peak)
  double amplitude = 1.0;

  // Domain and mesh.
  Vec3 box{800.0, 800.0, 800.0};
  double inner_box_half = 50.0;
  double h_inner = 25.0;
  double h_outer = 50.0;
  int radial_layers = 1;
  double core_fraction = 0.45;

  // Discretization.
  int degree = 4;
  int acoustic_degree = 0;  ///< 0: same as `degree`
  double penalty_alpha = 10.0;
  double nonconforming_factor = 2.0;
  bool absorbing_tangential = false;
  double cfl_safety = 0.2;
  double cfl_const = 0.175;
  /// Fraction of the Lanczos stability limit the step may not exceed.
  double dt_crit_safety = 0.9;
  /// Explicit step; 0 selects min(cfl_dt, dt_crit_safety * dt_crit).
  double dt = 0.0;

  // Source.
  std::optional<double> z0;        ///< unset: place so the pulse reaches the sphere at `arrival_time`
  double arrival_time = 0.1;

  // Time window and analytic synthesis grid.
  double duration = 0.35;
  double output_dt = 5e-4;
  int analytic_samples = 8192;
  double f_max_factor = 4.0;

  std::vector<std::string> profiles{"A", "B", "C", "D"};
  std::vector<double> snapshot_times{0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45};
  double snapshot_spacing = 5.0;
  double snapshot_half_width = 150.0;

  double compare_t_start = 0.0;
  double compare_t_end = 0.0;  ///< 0: end of the shorter trace

  // compare --assert thresholds.
  double max_misfit_elastic = 0.10;
  double max_misfit_interior = 0.25;
  /// Allowed scattered-arrival error in units of the DG step.
  double arrival_steps = 100.0;

  std::string output_dir = "out";
  int threads = 1;

  /// Throws ConfigError on any inconsistency.
  void validate() const;

  synth::RickerParams ricker() const;
  mesh::SphereInBoxParams mesh_params() const;
  dg::AssemblyOptions assembly_options() const;
  dg::BlockMaterials materials() const;
  synth::TimeGrid analytic_grid() const;
  /// Resolved source plane.
  double source_z0() const;
  synth::PlaneWave incident() const;

  bool operator==(const RunConfig&) const = default;
};

/// The two documented tiers: "desk" (20 Hz, 800 m box, CI scale) and
/// "workstation" (66.7 Hz, 1200 m box, workstation scale).
RunConfig preset(const std::string& tier);

std::vector<std::string> config_keys();

/// Parses `key = value` text. `#` starts a comment. Unknown keys, malformed
/// values and unsupported `config.version` raise ConfigError. Keys absent
/// from the text keep the preset of `tier` (if given first) or the defaults.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& cfg);
void save_config(const RunConfig& cfg, const std::string& path);

/// Applies one `key=value` override.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

struct ProfileReceiver {
  std::string id;
  Vec3 position{};
  bool interior = false;
};

struct Profile {
  std::string name;  ///< A, B, C, D or custom
  std::vector<ProfileReceiver> receivers;
};

/// A: x = y = 0, z in [-100, 100] step 2. B: y = z = 0, x in [-100, 100]
/// step 2. C/D: z = +-300, x in [-300, 300] step 10. A receiver is interior
/// when it lies strictly inside the sphere.
Profile make_profile(const std::string& name, double radius = 30.0);

/// Custom profile from explicit points.
Profile make_profile(const std::string& name, const std::vector<Vec3>& points, double radius = 30.0);

/// Metrics of `test` against `reference` on the reference grid, over
/// [t_start, t_end]. The test trace is resampled by linear interpolation.
struct Misfit {
  std::string id;
  double misfit = 0.0;           ///< ||test - ref|| / ||ref||
  double amplitude_ratio = 0.0;  ///< max|test| / max|ref|
  double lag = 0.0;              ///< cross-correlation lag of test relative to ref [s]
  double ref_norm = 0.0;
};

struct MisfitReport {
  std::vector<Misfit> receivers;
  /// Pooled misfit and amplitude ratio over all receivers; the lag of
  /// largest magnitude.
  Misfit summary;

  void write_csv(const std::string& path) const;
};

/// Linear interpolation of `trace` (on `grid`) at time t; zero outside.
double sample(const synth::TimeGrid& grid, const std::vector<double>& trace, double t);

Misfit compare_traces(const std::string& id, const synth::TimeGrid& ref_grid, const std::vector<double>& ref,
                      const synth::TimeGrid& test_grid, const std::vector<double>& test, double t_start,
                      double t_end);

/// Matches traces by id. Traces missing from `test` raise ConfigError.
MisfitReport compare(const std::vector<synth::Seismogram>& reference, const std::vector<synth::Seismogram>& test,
                     double t_start, double t_end);

/// First time |trace| reaches `fraction` of its peak; NaN for a zero trace.
double arrival_time(const synth::TimeGrid& grid, const std::vector<double>& trace, double fraction = 0.05);

/// Period of a reverberating trace: the lag of the largest positive
/// autocorrelation beyond the main lobe, using the part of the trace after
/// its first arrival. Polarity-alternating echoes thus count as one period
/// per two passes. NaN if no such peak exists.
double reverberation_period(const synth::TimeGrid& grid, const std::vector<double>& trace);

/// Per-receiver combined x/z metrics used by the end-to-end check: the
/// vector misfit pools both components, so traces that vanish by symmetry
/// do not divide by zero.
struct VectorMisfit {
  std::string id;
  bool interior = false;
  double misfit = 0.0;
  double arrival_error = 0.0;  ///< |t_dg - t_ref| of the scattered onset; NaN if not measured
};

/// Scattered traces may be empty, in which case arrival errors are NaN. The
/// onset is picked on |u_S| of exterior receivers.
std::vector<VectorMisfit> vector_misfits(const Profile& profile, const std::vector<synth::Seismogram>& ref_total,
                                         const std::vector<synth::Seismogram>& test_total,
                                         const std::vector<synth::Seismogram>& ref_scattered,
                                         const std::vector<synth::Seismogram>& test_scattered, double t_start,
                                         double t_end);

/// Output of the pipelines. Seismograms hold the total displacement on the
/// analytic output grid; the scattered part is kept for arrival picking.
struct PipelineResult {
  std::map<std::string, std::vector<synth::Seismogram>> total;      ///< by profile
  std::map<std::string, std::vector<synth::Seismogram>> scattered;  ///< by profile
  std::vector<std::string> files;
  std::vector<std::string> warnings;
  double dt = 0.0;  ///< DG step (0 for analytic)
  double seconds = 0.0;
};

using Log = std::function<void(const std::string&)>;

/// Synthesizes every profile and writes `analytic_<P>_<c>.csv` and
/// `receivers_<P>.csv` (with the interior flag) to the output directory.
PipelineResult run_analytic(const RunConfig& cfg, const Log& log = {});

/// Builds the mesh, assembles, integrates and writes `dg_<P>_<c>.csv`,
/// snapshots and `manifest.txt`.
PipelineResult run_dg(const RunConfig& cfg, const Log& log = {});

/// Writes the sampled wavelet `ricker.csv` (t, R) and its magnitude
/// spectrum `ricker_spectrum.csv` (f, |F[R]|).
std::vector<std::string> run_ricker(const RunConfig& cfg, const Log& log = {});

/// Exports the mesh as text and legacy VTK.
std::vector<std::string> run_mesh(const RunConfig& cfg, const Log& log = {});

/// Seismograms of one profile and component, read back from a CSV.
std::vector<synth::Seismogram> read_profile_csv(const std::string& path, synth::Component component);

/// Reads the CSVs written by run_analytic (`prefix` "analytic") or run_dg
/// ("dg") back from the output directory.
PipelineResult load_outputs(const RunConfig& cfg, const std::string& prefix);

/// `# resolved.<key> = value` line of a manifest; nullopt if absent.
std::optional<std::string> manifest_value(const std::string& path, const std::string& key);

/// Threshold check of DG against analytic seismograms over all profiles.
struct EndToEndReport {
  std::vector<VectorMisfit> receivers;  ///< ids carry the profile prefix
  double worst_elastic = 0.0, worst_interior = 0.0, worst_arrival = 0.0;
  std::string worst_elastic_id, worst_interior_id, worst_arrival_id;
  double max_elastic = 0.0, max_interior = 0.0, max_arrival = 0.0;

  bool elastic_ok() const { return worst_elastic <= max_elastic; }
  bool interior_ok() const { return worst_interior <= max_interior; }
  bool arrival_ok() const { return worst_arrival <= max_arrival; }
  bool passed() const { return elastic_ok() && interior_ok() && arrival_ok(); }
  std::string summary() const;
  void write_csv(const std::string& path) const;
};

/// `dg_dt` converts `arrival_steps` into seconds.
EndToEndReport evaluate_end_to_end(const RunConfig& cfg, const PipelineResult& analytic, const PipelineResult& dg,
                                   double dg_dt);

}  // namespace cavscat::harness
