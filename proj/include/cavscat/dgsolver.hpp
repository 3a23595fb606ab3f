#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cavscat/material.hpp"
#include "cavscat/mesh.hpp"
#include "cavscat/quadrature.hpp"
#include "cavscat/synth.hpp"
#include "cavscat/vec.hpp"

/// Discontinuous Galerkin spectral-element discretization of linear
/// elastodynamics on hexahedral meshes.
///
/// Displacements live on Gauss-Lobatto-Legendre nodes of each element and
/// are continuous inside a continuity group (acoustic, inner elastic, outer
/// elastic). Groups are coupled weakly by symmetric interior penalty fluxes.
/// The outer boundary carries paraxial absorbing tractions, rollers or free
/// surfaces. Vectors are stored node-major: u[3 * node + component].
namespace cavscat::dg {

struct SpectralBasis {
  int degree = 0;
  std::vector<double> nodes, weights;
  std::vector<double> D;  ///< D[i * (N + 1) + j] = l_j'(x_i)

  static SpectralBasis make(int degree);
  int n1() const { return degree + 1; }
  int n3() const { return n1() * n1() * n1(); }
};

struct BlockMaterials {
  Material acoustic = kWater;
  Material elastic_inner = kRock;
  Material elastic_outer = kRock;

  const Material& of(mesh::Block b) const;
  double vp_max() const;
};

/// Symmetric outer product v (.) n = (v n^T + n v^T) / 2 and the trace
/// operators of a face: [[v]] = v1 (.) n1 + v2 (.) n2, {v} = (v1 + v2) / 2.
struct JumpAverage {
  Mat3 jump{};
  Vec3 average{};
};
JumpAverage trace_jump_average(const Vec3& v1, const Vec3& n1, const Vec3& v2, const Vec3& n2);
/// Boundary form: [[v]] = v (.) n, {v} = v.
JumpAverage trace_jump_average(const Vec3& v, const Vec3& n);

/// Right-handed unit frame (tau1, tau2) of the plane normal to n:
/// tau1 x tau2 = n.
std::array<Vec3, 2> tangent_frame(const Vec3& n);

struct PenaltyParams {
  double alpha = 10.0;
  double nonconforming_factor = 2.0;
};

struct AssemblyOptions {
  int degree = 4;
  /// Degree for the acoustic block; 0 uses `degree`.
  int acoustic_degree = 0;
  PenaltyParams penalty;
  /// Include the tangential-derivative absorbing terms (M2).
  bool absorbing_tangential = false;
  /// Treat every element as its own continuity group (all faces DG).
  bool discontinuous_everywhere = false;
  int threads = 1;
};

/// Global node numbering. Nodes of elements in one continuity group that
/// coincide are merged; across groups they never are.
struct DofMap {
  std::vector<int> elem_degree;
  std::vector<std::size_t> elem_offset;  ///< into elem_nodes
  std::vector<int> elem_nodes;           ///< global node per local GLL node
  std::vector<int> elem_group;
  std::vector<Vec3> coords;
  std::vector<int> node_group;

  int n_nodes() const { return static_cast<int>(coords.size()); }
  std::size_t n_dofs() const { return 3 * coords.size(); }
  const int* nodes_of(int elem) const { return elem_nodes.data() + elem_offset[elem]; }
};

/// One quadrature point of a DG face or absorbing boundary face.
struct FacePoint {
  double weight = 0.0;  ///< quadrature weight times area element
  Vec3 normal{};        ///< outward from side 1
  int local1 = 0;       ///< GLL node of side 1 carrying the point
  int local2 = -1;      ///< GLL node of side 2 at the point, or -1
  Vec3 xi2{};           ///< reference coordinates in side 2
  Vec3 x{};
  Mat3 jinv1{}, jinv2{};
  Vec3 tau1{}, tau2{};  ///< tangent frame on absorbing faces
};

/// Interior-penalty face: quadrature lives on side 1 (the acoustic side of
/// Gamma_I, the fine side of a non-conforming pairing).
struct DGFace {
  int e1 = -1, f1 = -1, e2 = -1;
  bool nonconforming = false;
  bool acoustic_elastic = false;
  double eta = 0.0;
  double h = 0.0;
  std::vector<FacePoint> points;
  /// Side-2 1D basis values then derivatives along each axis, 6 (N2 + 1)
  /// numbers per point; empty entries for points on side-2 nodes.
  std::vector<double> basis2;
};

struct AbsorbingFace {
  int elem = -1, face = -1;
  std::vector<FacePoint> points;  ///< xi2 unused
};

/// M0 U'' + M1 U' + (A + M2) U = F over a DofMap.
class SemiDiscreteSystem {
 public:
  static std::shared_ptr<SemiDiscreteSystem> build(const mesh::HexMesh& mesh, const BlockMaterials& mat,
                                                   const AssemblyOptions& opt = {});

  const mesh::HexMesh& mesh() const { return mesh_; }
  const DofMap& dofs() const { return dofs_; }
  const BlockMaterials& materials() const { return mat_; }
  const AssemblyOptions& options() const { return opt_; }
  const SpectralBasis& basis(int degree) const;
  std::size_t n_dofs() const { return dofs_.n_dofs(); }

  /// Lumped mass per node (same for the three components).
  const std::vector<double>& mass() const { return mass_; }
  /// Dofs held at zero (roller boundaries).
  const std::vector<int>& constrained() const { return constrained_; }
  const std::vector<DGFace>& dg_faces() const { return faces_; }
  const std::vector<AbsorbingFace>& absorbing_faces() const { return absorbing_; }

  /// out = A u (SIPG stiffness).
  void apply_A(const std::vector<double>& u, std::vector<double>& out) const;
  /// out += M2 u.
  void add_M2(const std::vector<double>& u, std::vector<double>& out) const;
  /// out = (A + M2) u.
  void apply_Q(const std::vector<double>& u, std::vector<double>& out) const;
  /// out += M1 v.
  void add_M1(const std::vector<double>& v, std::vector<double>& out) const;
  /// Per-node 3x3 absorbing blocks of M1.
  const std::vector<std::pair<int, Mat3>>& m1_blocks() const { return m1_; }

  double eta_min() const;
  double eta_max() const;
  /// Warnings collected during assembly (e.g. vp/vs > 2 on absorbing faces).
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// Element containing x and its reference coordinates; elements satisfying
  /// `prefer` win when several contain the point.
  bool locate(const Vec3& x, int& elem, Vec3& xi, const std::function<bool(int)>& prefer = {}) const;

  /// u at reference point xi of elem.
  Vec3 evaluate(const std::vector<double>& u, int elem, const Vec3& xi) const;

  /// Nodal interpolation of a vector field.
  std::vector<double> interpolate(const std::function<Vec3(const Vec3&)>& f) const;

 private:
  struct ElementGeometry {
    bool axis_aligned = false;
    std::vector<double> jinv;  ///< 9 per node (or 9 if axis aligned)
    std::vector<double> wdet;  ///< per node
  };

  void build_dofs();
  void build_geometry();
  void build_faces();
  void build_boundary();
  void volume_element(int e, const double* u, double* out) const;
  void face_term(const DGFace& f, const std::vector<double>& u, std::vector<double>& out) const;
  void gradient_at_node(int e, int local, const std::vector<double>& u, Mat3& G) const;

  mesh::HexMesh mesh_;
  BlockMaterials mat_;
  AssemblyOptions opt_;
  std::vector<SpectralBasis> bases_;  // index = degree
  DofMap dofs_;
  std::vector<ElementGeometry> geom_;
  std::vector<double> mass_;
  std::vector<int> constrained_;
  std::vector<DGFace> faces_;
  std::vector<AbsorbingFace> absorbing_;
  std::vector<std::pair<int, Mat3>> m1_;
  std::vector<std::string> warnings_;
  // bucket grid over element bounding boxes
  Vec3 grid_lo_{}, grid_cell_{};
  std::array<int, 3> grid_n_{};
  std::vector<std::vector<int>> buckets_;
};

/// Time-dependent load F(t).
class Source {
 public:
  virtual ~Source() = default;
  virtual void assemble(double t, std::vector<double>& F) const = 0;
};

/// Body force R(t) z-hat concentrated on the plane z = z0, which must be a
/// union of element faces.
class PlaneBodyForce : public Source {
 public:
  PlaneBodyForce(const SemiDiscreteSystem& sys, double z0, synth::RickerParams ricker);
  void assemble(double t, std::vector<double>& F) const override;
  double total_area() const;

 private:
  synth::RickerParams ricker_;
  std::vector<std::pair<int, double>> weights_;  // node, area weight
};

/// Scattered-field load for an incident plane P wave: the volume term
/// rho_a (v_a^2 / v_e^2 - 1) u_I'' z-hat over the acoustic block and the
/// interface term int ((sigma_a - sigma_e)(u_I) n_e) . {v} over Gamma_I.
class ScatteredFieldSource : public Source {
 public:
  ScatteredFieldSource(const SemiDiscreteSystem& sys, synth::PlaneWave incident);
  void assemble(double t, std::vector<double>& F) const override;
  const synth::PlaneWave& incident() const { return incident_; }

  /// Interface traction mismatch (sigma_a - sigma_e)(u_I) n_e at a point.
  Vec3 interface_mismatch(const Vec3& x, const Vec3& n_e, double t) const;

 private:
  const SemiDiscreteSystem& sys_;
  synth::PlaneWave incident_;
  double volume_coef_ = 0.0;
  std::vector<std::pair<int, double>> volume_nodes_;  // node, M0 / rho_a
};

struct TimeIntegrationConfig {
  double dt = 0.0;
  int n_steps = 0;
  double cfl_safety = 0.2;
  double cfl_const = 0.175;
};

/// cfl_safety * cfl_const * h_min / vp_max with h_min the shortest element
/// edge.
double cfl_dt(const mesh::HexMesh& mesh, const BlockMaterials& mat, const TimeIntegrationConfig& cfg);
double cfl_dt(double h_min, double vp_max, const TimeIntegrationConfig& cfg);

/// Largest eigenvalue of M0^{-1} Q by power iteration.
double max_eigenvalue(const SemiDiscreteSystem& sys, int iterations = 200, unsigned seed = 1);
struct SpectrumBounds {
  double min = 0.0, max = 0.0;
};
/// Extreme eigenvalues of M0^{-1/2} A M0^{-1/2} by Lanczos iteration
/// (Ritz values; min is an upper bound on the smallest eigenvalue and
/// converges to it from above).
SpectrumBounds stiffness_spectrum(const SemiDiscreteSystem& sys, int iterations = 150, unsigned seed = 1);

/// Leap-frog stability limit 2 / sqrt(lambda_max), lambda_max of M0^{-1} Q.
double critical_dt(const SemiDiscreteSystem& sys, int iterations = 200);

struct ReceiverSpec {
  std::string id;
  Vec3 position{};
  /// Prefer elements of this block when the point lies on a block boundary.
  std::optional<mesh::Block> prefer;
};

struct SnapshotSpec {
  std::vector<double> times;
  /// Sampling window in the y = 0 plane.
  double x_min = -300, x_max = 300, z_min = -300, z_max = 300, spacing = 10;
  std::string directory;
  std::string prefix = "snapshot";
  /// Field added to the solution at every sample point, e.g. the incident
  /// wave of a scattered-field run. Arguments: position, time.
  std::function<Vec3(const Vec3&, double)> background;
};

struct RunOptions {
  bool track_energy = true;
  double blowup_factor = 1e6;
  bool throw_on_blowup = true;
  std::vector<synth::Component> components{synth::Component::X, synth::Component::Z};
  std::optional<SnapshotSpec> snapshots;
  /// Called every `progress_interval` steps with the step index.
  std::function<void(int)> progress;
  int progress_interval = 500;
};

struct RunResult {
  std::vector<synth::Seismogram> seismograms;
  /// E_{n+1/2} = |U_{n+1} - U_n|^2_M0 / (2 dt^2) + U_{n+1}^T A U_n / 2, one per step.
  std::vector<double> energy;
  bool blew_up = false;
  int blowup_step = -1;
  int steps = 0;
  std::vector<std::string> snapshot_files;
  std::vector<double> final_state;
};

/// Leap-frog integration from rest:
///   U_1 = dt^2 / 2 M0^{-1} F_0,
///   (M0 + dt/2 M1) U_{n+1} = (2 M0 - dt^2 Q) U_n + (-M0 + dt/2 M1) U_{n-1} + dt^2 F_n.
/// Receiver samples are taken at t_n = n dt for n = 0..n_steps-1.
RunResult leapfrog_run(const SemiDiscreteSystem& sys, const Source* source, const TimeIntegrationConfig& cfg,
                       const std::vector<ReceiverSpec>& receivers, const RunOptions& opt = {});

/// Writes one legacy-VTK structured-points slice of the displacement.
void write_snapshot(const SemiDiscreteSystem& sys, const std::vector<double>& u, const SnapshotSpec& spec,
                    const std::string& path, double t = 0.0);

}  // namespace cavscat::dg
