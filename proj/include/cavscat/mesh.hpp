#pragma once

#include <array>
#include <string>
#include <vector>

#include "cavscat/vec.hpp"

/// Hexahedral meshes for the sphere-in-box scattering geometry.
///
/// Vertices of an element are ordered lexicographically in the reference
/// cube [-1, 1]^3: vertex i + 2 j + 4 k sits at (xi, eta, zeta) =
/// (2i - 1, 2j - 1, 2k - 1). Local faces are 0..5 = xi-, xi+, eta-, eta+,
/// zeta-, zeta+.
namespace cavscat::mesh {

enum class Block { ElasticOuter, ElasticInner, Acoustic };

const char* block_name(Block b);
Block parse_block(const std::string& s);

struct Element {
  std::array<int, 8> v{};
  Block block = Block::ElasticOuter;

  bool operator==(const Element&) const = default;
};

struct FaceRef {
  int elem = -1;
  int face = -1;

  auto operator<=>(const FaceRef&) const = default;
};

/// Two elements sharing all four face vertices.
struct FacePair {
  FaceRef a, b;

  bool operator==(const FacePair&) const = default;
};

/// A coarse master face covered exactly by finer slave faces. For each slave
/// the master-face parameters (s, t) in [-1, 1]^2 of its four corners
/// (face-vertex order) are stored.
struct FacePairing {
  FaceRef master;
  std::vector<FaceRef> slaves;
  std::vector<std::array<std::array<double, 2>, 4>> slave_corners;

  bool operator==(const FacePairing&) const = default;
};

enum class BoundaryKind { Absorbing, Roller, Free };

const char* boundary_kind_name(BoundaryKind k);
BoundaryKind parse_boundary_kind(const std::string& s);

/// Sides of the bounding box: 0..5 = x-, x+, y-, y+, z-, z+.
struct BoundaryFace {
  FaceRef f;
  int side = 0;
  BoundaryKind kind = BoundaryKind::Absorbing;

  bool operator==(const BoundaryFace&) const = default;
};

struct FaceSets {
  std::vector<FacePair> interior;          ///< conforming, both sides elastic or both acoustic
  std::vector<FacePair> acoustic_elastic;  ///< conforming Gamma_I, `a` is the acoustic side
  std::vector<FacePairing> box_nonconforming;
  std::vector<BoundaryFace> boundary;

  bool operator==(const FaceSets&) const = default;
};

struct HexMesh {
  std::vector<Vec3> nodes;
  std::vector<Element> elements;
  FaceSets faces;
  Vec3 box_lo{}, box_hi{};
  std::array<BoundaryKind, 6> side_kind{BoundaryKind::Absorbing, BoundaryKind::Absorbing, BoundaryKind::Absorbing,
                                        BoundaryKind::Absorbing, BoundaryKind::Absorbing, BoundaryKind::Absorbing};
  /// Sphere radius when the mesh contains a meshed sphere, else 0.
  double sphere_radius = 0.0;

  int count(Block b) const;
  /// Stable content hash (FNV-1a over nodes and connectivity), hex string.
  std::string hash() const;
};

/// Local vertex indices of a face, in cyclic order. The face parameters
/// (s, t) run along the two free reference axes in increasing axis order.
std::array<int, 4> face_vertices(int face);
/// Fixed reference axis of a face and its value (-1 or +1).
int face_axis(int face);
double face_side(int face);
/// Reference point of face parameters (s, t) on `face`.
Vec3 face_to_reference(int face, double s, double t);

/// Trilinear map of one element.
struct ReferenceMap {
  std::array<Vec3, 8> x{};

  static ReferenceMap of(const HexMesh& m, int elem);
  Vec3 operator()(const Vec3& xi) const;
};

struct Jacobian {
  Mat3 J{};  ///< J[i][j] = d x_i / d xi_j
  double det = 0.0;
};

Jacobian jacobian(const ReferenceMap& map, const Vec3& xi);

/// Newton inversion of the trilinear map. Returns false when it does not
/// converge or the point lies outside [-1 - tol, 1 + tol]^3.
bool invert_map(const ReferenceMap& map, const Vec3& x, Vec3& xi, double tol = 1e-9);

/// Area of a (bilinear) element face by Gauss quadrature.
double face_area(const HexMesh& m, FaceRef f);
/// Outward unit normal of a face at face parameters (s, t).
Vec3 face_normal(const HexMesh& m, FaceRef f, double s, double t);
/// Element volume by Gauss quadrature.
double element_volume(const HexMesh& m, int elem);
/// Largest vertex-to-vertex distance of the element.
double element_diameter(const HexMesh& m, int elem);
/// Shortest element edge over the mesh.
double min_edge_length(const HexMesh& m);

/// Recomputes face sets from connectivity and the bounding box; idempotent.
/// Throws TopologyError on faces that are neither shared, paired nor on the
/// bounding box.
FaceSets classify_faces(const HexMesh& m);

struct SphereInBoxParams {
  double radius = 30.0;
  double inner_box_half = 60.0;
  Vec3 outer_box_dims{600.0, 600.0, 600.0};
  double h_inner = 15.0;
  double h_outer = 30.0;
  int n_radial_layers = 2;
  /// Half-width of the central cube as a fraction of the radius.
  double core_fraction = 0.45;
  /// Layers between sphere and inner box; 0 selects round((b - R) / h_inner).
  int n_transition_layers = 0;
};

/// Cubed-sphere acoustic inclusion, conforming to an inner elastic box whose
/// faces carry an equidistant n x n grid (n = 2b / h_inner), nested in a
/// regular outer grid of spacing h_outer. The inner box is joined to the
/// outer grid by FacePairings unless both grids match.
HexMesh build_sphere_in_box(const SphereInBoxParams& p);

HexMesh build_sphere_in_box(double radius, double inner_box_half, const Vec3& outer_box_dims, double h_inner,
                            double h_outer, int n_radial_layers);

/// Regular grid of cells[0] x cells[1] x cells[2] elements on [lo, hi]. Block
/// per element from its centroid.
template <class BlockFn>
HexMesh build_box(const Vec3& lo, const Vec3& hi, const std::array<int, 3>& cells, BlockFn&& block_of);
HexMesh build_box(const Vec3& lo, const Vec3& hi, const std::array<int, 3>& cells,
                  Block block = Block::ElasticOuter);

/// Construction checks: positive Jacobian on a 3x3x3 GLL grid of every
/// element, h_K <= 10 h_F, sphere nodes on r = R. Throws GeometryError
/// naming the element.
void check_geometry(const HexMesh& m);

void write_text(const HexMesh& m, const std::string& path);
HexMesh read_text(const std::string& path);
void write_vtk(const HexMesh& m, const std::string& path);

namespace detail {
HexMesh build_box_impl(const Vec3& lo, const Vec3& hi, const std::array<int, 3>& cells,
                       const std::vector<Block>& blocks);
}

template <class BlockFn>
HexMesh build_box(const Vec3& lo, const Vec3& hi, const std::array<int, 3>& cells, BlockFn&& block_of) {
  std::vector<Block> blocks;
  blocks.reserve(static_cast<std::size_t>(cells[0]) * cells[1] * cells[2]);
  for (int k = 0; k < cells[2]; ++k)
    for (int j = 0; j < cells[1]; ++j)
      for (int i = 0; i < cells[0]; ++i) {
        const Vec3 c{lo[0] + (i + 0.5) * (hi[0] - lo[0]) / cells[0], lo[1] + (j + 0.5) * (hi[1] - lo[1]) / cells[1],
                     lo[2] + (k + 0.5) * (hi[2] - lo[2]) / cells[2]};
        blocks.push_back(block_of(c));
      }
  return detail::build_box_impl(lo, hi, cells, blocks);
}

}  // namespace cavscat::mesh
