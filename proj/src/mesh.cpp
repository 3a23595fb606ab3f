#include "cavscat/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

#include "cavscat/errors.hpp"
#include "cavscat/point_index.hpp"
#include "cavscat/quadrature.hpp"

namespace cavscat::mesh {

const char* block_name(Block b) {
  switch (b) {
    case Block::ElasticOuter:
      return "elastic_outer";
    case Block::ElasticInner:
      return "elastic_inner";
    default:
      return "acoustic";
  }
}

Block parse_block(const std::string& s) {
  if (s == "elastic_outer") return Block::ElasticOuter;
  if (s == "elastic_inner") return Block::ElasticInner;
  if (s == "acoustic") return Block::Acoustic;
  throw ConfigError("mesh", "unknown block '" + s + "'");
}

const char* boundary_kind_name(BoundaryKind k) {
  switch (k) {
    case BoundaryKind::Absorbing:
      return "absorbing";
    case BoundaryKind::Roller:
      return "roller";
    default:
      return "free";
  }
}

BoundaryKind parse_boundary_kind(const std::string& s) {
  if (s == "absorbing") return BoundaryKind::Absorbing;
  if (s == "roller") return BoundaryKind::Roller;
  if (s == "free") return BoundaryKind::Free;
  throw ConfigError("mesh", "unknown boundary kind '" + s + "'");
}

int HexMesh::count(Block b) const {
  return static_cast<int>(std::count_if(elements.begin(), elements.end(), [b](const Element& e) { return e.block == b; }));
}

std::string HexMesh::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& x : nodes) mix(x.data(), sizeof(double) * 3);
  for (const auto& e : elements) {
    mix(e.v.data(), sizeof(int) * 8);
    const int b = static_cast<int>(e.block);
    mix(&b, sizeof b);
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

int face_axis(int face) { return face / 2; }
double face_side(int face) { return (face % 2) ? 1.0 : -1.0; }

namespace {

std::array<int, 2> free_axes(int face) {
  switch (face_axis(face)) {
    case 0:
      return {1, 2};
    case 1:
      return {0, 2};
    default:
      return {0, 1};
  }
}

}  // namespace

std::array<int, 4> face_vertices(int face) {
  const int d = face_axis(face);
  const int bit = face % 2;
  const auto [a1, a2] = free_axes(face);
  std::array<int, 4> out{};
  const int pq[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  for (int c = 0; c < 4; ++c) {
    int idx[3];
    idx[d] = bit;
    idx[a1] = pq[c][0];
    idx[a2] = pq[c][1];
    out[c] = idx[0] + 2 * idx[1] + 4 * idx[2];
  }
  return out;
}

Vec3 face_to_reference(int face, double s, double t) {
  Vec3 xi{};
  const auto [a1, a2] = free_axes(face);
  xi[face_axis(face)] = face_side(face);
  xi[a1] = s;
  xi[a2] = t;
  return xi;
}

ReferenceMap ReferenceMap::of(const HexMesh& m, int elem) {
  ReferenceMap r;
  for (int a = 0; a < 8; ++a) r.x[a] = m.nodes[m.elements[elem].v[a]];
  return r;
}

Vec3 ReferenceMap::operator()(const Vec3& xi) const {
  Vec3 out{0, 0, 0};
  for (int a = 0; a < 8; ++a) {
    const double w = 0.125 * (1 + ((a & 1) ? 1 : -1) * xi[0]) * (1 + ((a & 2) ? 1 : -1) * xi[1]) *
                     (1 + ((a & 4) ? 1 : -1) * xi[2]);
    for (int c = 0; c < 3; ++c) out[c] += w * x[a][c];
  }
  return out;
}

Jacobian jacobian(const ReferenceMap& map, const Vec3& xi) {
  Jacobian jac;
  for (int a = 0; a < 8; ++a) {
    const double s[3] = {(a & 1) ? 1.0 : -1.0, (a & 2) ? 1.0 : -1.0, (a & 4) ? 1.0 : -1.0};
    const double f[3] = {1 + s[0] * xi[0], 1 + s[1] * xi[1], 1 + s[2] * xi[2]};
    const double d[3] = {0.125 * s[0] * f[1] * f[2], 0.125 * f[0] * s[1] * f[2], 0.125 * f[0] * f[1] * s[2]};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) jac.J[i][j] += map.x[a][i] * d[j];
  }
  jac.det = det(jac.J);
  return jac;
}

bool invert_map(const ReferenceMap& map, const Vec3& x, Vec3& xi, double tol) {
  xi = {0.0, 0.0, 0.0};
  double scale = 0.0;
  for (int a = 1; a < 8; ++a) scale = std::max(scale, norm(map.x[a] - map.x[0]));
  for (int it = 0; it < 50; ++it) {
    const Vec3 r = map(xi) - x;
    const Jacobian jac = jacobian(map, xi);
    if (!(jac.det > 0.0)) return false;
    const Mat3 inv = inverse(jac.J, jac.det);
    Vec3 dxi{};
    for (int i = 0; i < 3; ++i) dxi[i] = inv[i][0] * r[0] + inv[i][1] * r[1] + inv[i][2] * r[2];
    for (int i = 0; i < 3; ++i) xi[i] = std::clamp(xi[i] - dxi[i], -3.0, 3.0);
    if (norm(dxi) < 1e-14 && norm(r) < 1e-12 * scale) break;
    if (norm(dxi) < 1e-15) break;
  }
  if (norm(map(xi) - x) > 1e-9 * scale) return false;
  for (double v : xi)
    if (std::abs(v) > 1.0 + tol) return false;
  return true;
}

namespace {

const quadrature::Rule& gauss4() {
  static const quadrature::Rule r = quadrature::gauss_legendre(4);
  return r;
}

void face_tangents(const ReferenceMap& map, int face, double s, double t, Vec3& xs, Vec3& xt) {
  const Jacobian jac = jacobian(map, face_to_reference(face, s, t));
  const auto [a1, a2] = free_axes(face);
  for (int i = 0; i < 3; ++i) {
    xs[i] = jac.J[i][a1];
    xt[i] = jac.J[i][a2];
  }
}

}  // namespace

double face_area(const HexMesh& m, FaceRef f) {
  const ReferenceMap map = ReferenceMap::of(m, f.elem);
  const auto& g = gauss4();
  double a = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      Vec3 xs, xt;
      face_tangents(map, f.face, g.nodes[i], g.nodes[j], xs, xt);
      a += g.weights[i] * g.weights[j] * norm(cross(xs, xt));
    }
  return a;
}

Vec3 face_normal(const HexMesh& m, FaceRef f, double s, double t) {
  const ReferenceMap map = ReferenceMap::of(m, f.elem);
  const Jacobian jac = jacobian(map, face_to_reference(f.face, s, t));
  const Mat3 inv = inverse(jac.J, jac.det);
  const int d = face_axis(f.face);
  const double sg = face_side(f.face);
  // outward normal ~ J^{-T} e_d
  return normalized(Vec3{sg * inv[d][0], sg * inv[d][1], sg * inv[d][2]});
}

double element_volume(const HexMesh& m, int elem) {
  const ReferenceMap map = ReferenceMap::of(m, elem);
  const auto& g = gauss4();
  double v = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        v += g.weights[i] * g.weights[j] * g.weights[k] * jacobian(map, {g.nodes[i], g.nodes[j], g.nodes[k]}).det;
  return v;
}

double element_diameter(const HexMesh& m, int elem) {
  double d = 0.0;
  const auto& v = m.elements[elem].v;
  for (int a = 0; a < 8; ++a)
    for (int b = a + 1; b < 8; ++b) d = std::max(d, norm(m.nodes[v[a]] - m.nodes[v[b]]));
  return d;
}

double min_edge_length(const HexMesh& m) {
  static constexpr int kEdges[12][2] = {{0, 1}, {2, 3}, {4, 5}, {6, 7}, {0, 2}, {1, 3},
                                        {4, 6}, {5, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
  double h = 1e300;
  for (const auto& e : m.elements)
    for (const auto& ed : kEdges) h = std::min(h, norm(m.nodes[e.v[ed[0]]] - m.nodes[e.v[ed[1]]]));
  return h;
}

namespace {

double box_scale(const HexMesh& m) { return std::max(1.0, norm(m.box_hi - m.box_lo)); }

// Side of the bounding box containing all four face vertices, or -1.
int boundary_side(const HexMesh& m, FaceRef f, double tol) {
  const auto fv = face_vertices(f.face);
  for (int side = 0; side < 6; ++side) {
    const int d = side / 2;
    const double plane = (side % 2) ? m.box_hi[d] : m.box_lo[d];
    bool on = true;
    for (int c : fv)
      if (std::abs(m.nodes[m.elements[f.elem].v[c]][d] - plane) > tol) on = false;
    if (on) return side;
  }
  return -1;
}

Vec3 face_centroid(const HexMesh& m, FaceRef f) {
  const ReferenceMap map = ReferenceMap::of(m, f.elem);
  return map(face_to_reference(f.face, 0.0, 0.0));
}

}  // namespace

FaceSets classify_faces(const HexMesh& m) {
  const double tol = 1e-9 * box_scale(m);
  std::map<std::array<int, 4>, std::vector<FaceRef>> by_key;
  for (int e = 0; e < static_cast<int>(m.elements.size()); ++e)
    for (int f = 0; f < 6; ++f) {
      std::array<int, 4> key{};
      const auto fv = face_vertices(f);
      for (int c = 0; c < 4; ++c) key[c] = m.elements[e].v[fv[c]];
      std::sort(key.begin(), key.end());
      by_key[key].push_back({e, f});
    }

  FaceSets fs;
  std::vector<FaceRef> unmatched;
  for (const auto& [key, refs] : by_key) {
    if (refs.size() > 2) throw TopologyError("mesh", "face shared by more than two elements");
    if (refs.size() == 2) {
      FaceRef a = std::min(refs[0], refs[1]), b = std::max(refs[0], refs[1]);
      const bool aa = m.elements[a.elem].block == Block::Acoustic;
      const bool ba = m.elements[b.elem].block == Block::Acoustic;
      if (aa != ba) {
        if (!aa) std::swap(a, b);
        fs.acoustic_elastic.push_back({a, b});
      } else {
        fs.interior.push_back({a, b});
      }
      continue;
    }
    const FaceRef f = refs[0];
    const int side = boundary_side(m, f, tol);
    if (side >= 0) {
      fs.boundary.push_back({f, side, m.side_kind[side]});
    } else {
      unmatched.push_back(f);
    }
  }

  // Non-conforming pairings: a coarse face covered by coplanar finer faces.
  struct Cand {
    FaceRef f;
    double area;
    Vec3 centroid, normal;
    int master = -1;
    bool is_master = false;
  };
  std::vector<Cand> cands;
  for (const FaceRef& f : unmatched)
    cands.push_back({f, face_area(m, f), face_centroid(m, f), face_normal(m, f, 0.0, 0.0)});
  std::vector<int> order(cands.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (cands[a].area != cands[b].area) return cands[a].area > cands[b].area;
    return cands[a].f < cands[b].f;
  });
  for (int mi : order) {
    Cand& mc = cands[mi];
    if (mc.master >= 0) continue;
    const ReferenceMap map = ReferenceMap::of(m, mc.f.elem);
    FacePairing pairing;
    pairing.master = mc.f;
    double slave_area = 0.0;
    for (int si : order) {
      Cand& sc = cands[si];
      if (si == mi || sc.master >= 0 || sc.is_master || sc.area >= mc.area * (1.0 - 1e-6)) continue;
      if (std::abs(dot(sc.centroid - mc.centroid, mc.normal)) > tol) continue;
      if (dot(sc.normal, mc.normal) > -1.0 + 1e-6) continue;
      Vec3 xi;
      if (!invert_map(map, sc.centroid, xi, 1e-9)) continue;
      const int d = face_axis(mc.f.face);
      if (std::abs(xi[d] - face_side(mc.f.face)) > 1e-7) continue;
      std::array<std::array<double, 2>, 4> corners{};
      const auto fv = face_vertices(sc.f.face);
      const auto axes = free_axes(mc.f.face);
      bool inside = true;
      for (int c = 0; c < 4; ++c) {
        Vec3 cx;
        if (!invert_map(map, m.nodes[m.elements[sc.f.elem].v[fv[c]]], cx, 1e-7)) inside = false;
        corners[c] = {cx[axes[0]], cx[axes[1]]};
      }
      if (!inside) continue;
      sc.master = mi;
      pairing.slaves.push_back(sc.f);
      pairing.slave_corners.push_back(corners);
      slave_area += sc.area;
    }
    if (pairing.slaves.empty()) continue;
    if (std::abs(slave_area - mc.area) > 1e-8 * mc.area)
      throw TopologyError("mesh", "non-conforming face of element " + std::to_string(mc.f.elem) +
                                      " is not covered by its slaves (area mismatch)");
    mc.is_master = true;
    fs.box_nonconforming.push_back(std::move(pairing));
  }
  for (const Cand& c : cands)
    if (c.master < 0 && !c.is_master)
      throw TopologyError("mesh", "dangling face " + std::to_string(c.f.face) + " of element " +
                                      std::to_string(c.f.elem));

  auto by_a = [](const FacePair& x, const FacePair& y) { return x.a < y.a; };
  std::sort(fs.interior.begin(), fs.interior.end(), by_a);
  std::sort(fs.acoustic_elastic.begin(), fs.acoustic_elastic.end(), by_a);
  std::sort(fs.boundary.begin(), fs.boundary.end(),
            [](const BoundaryFace& x, const BoundaryFace& y) { return x.f < y.f; });
  std::sort(fs.box_nonconforming.begin(), fs.box_nonconforming.end(),
            [](const FacePairing& x, const FacePairing& y) { return x.master < y.master; });
  return fs;
}

void check_geometry(const HexMesh& m) {
  for (int e = 0; e < static_cast<int>(m.elements.size()); ++e) {
    const ReferenceMap map = ReferenceMap::of(m, e);
    for (int i = -1; i <= 1; ++i)
      for (int j = -1; j <= 1; ++j)
        for (int k = -1; k <= 1; ++k) {
          const double d = jacobian(map, {double(i), double(j), double(k)}).det;
          if (!(d > 0.0))
            throw GeometryError("mesh", "element " + std::to_string(e) + " has non-positive Jacobian " +
                                            std::to_string(d));
        }
    const double hk = element_diameter(m, e);
    for (int f = 0; f < 6; ++f) {
      const auto fv = face_vertices(f);
      double hf = 0.0;
      for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b)
          hf = std::max(hf, norm(m.nodes[m.elements[e].v[fv[a]]] - m.nodes[m.elements[e].v[fv[b]]]));
      if (hk > 10.0 * hf)
        throw GeometryError("mesh", "element " + std::to_string(e) + " violates h_K <= 10 h_F");
    }
  }
  if (m.sphere_radius > 0.0) {
    const double R = m.sphere_radius;
    for (const auto& p : m.faces.acoustic_elastic) {
      for (int c : face_vertices(p.a.face)) {
        const double r = norm(m.nodes[m.elements[p.a.elem].v[c]]);
        if (std::abs(r - R) > 1e-12 * R)
          throw GeometryError("mesh", "interface node of element " + std::to_string(p.a.elem) + " off the sphere");
      }
    }
  }
}

namespace {

class Builder {
 public:
  explicit Builder(double tol) : index_(tol) {}

  void add(std::array<Vec3, 8> x, Block block) {
    ReferenceMap map;
    map.x = x;
    if (jacobian(map, {0, 0, 0}).det < 0.0) {
      for (int a = 0; a < 8; a += 2) std::swap(x[a], x[a + 1]);
    }
    Element e;
    e.block = block;
    for (int a = 0; a < 8; ++a) e.v[a] = index_.insert(x[a]);
    elements_.push_back(e);
  }

  HexMesh finish() {
    HexMesh m;
    m.nodes = index_.release();
    m.elements = std::move(elements_);
    return m;
  }

 private:
  PointIndex index_;
  std::vector<Element> elements_;
};

int checked_count(double length, double h, const char* what) {
  const double n = length / h;
  const long r = std::lround(n);
  if (r < 1 || std::abs(n - r) > 1e-6 * n)
    throw ConfigError("mesh", std::string(what) + ": length " + std::to_string(length) +
                                  " is not a multiple of the cell size " + std::to_string(h));
  return static_cast<int>(r);
}

}  // namespace

namespace detail {

HexMesh build_box_impl(const Vec3& lo, const Vec3& hi, const std::array<int, 3>& cells,
                       const std::vector<Block>& blocks) {
  for (int d = 0; d < 3; ++d)
    if (cells[d] < 1 || !(hi[d] > lo[d])) throw ConfigError("mesh", "invalid box dimensions");
  Builder b(1e-9 * norm(hi - lo));
  std::size_t idx = 0;
  for (int k = 0; k < cells[2]; ++k)
    for (int j = 0; j < cells[1]; ++j)
      for (int i = 0; i < cells[0]; ++i) {
        std::array<Vec3, 8> x{};
        for (int a = 0; a < 8; ++a) {
          const int ii = i + (a & 1), jj = j + ((a >> 1) & 1), kk = k + ((a >> 2) & 1);
          x[a] = {lo[0] + (hi[0] - lo[0]) * ii / cells[0], lo[1] + (hi[1] - lo[1]) * jj / cells[1],
                  lo[2] + (hi[2] - lo[2]) * kk / cells[2]};
        }
        b.add(x, blocks[idx++]);
      }
  HexMesh m = b.finish();
  m.box_lo = lo;
  m.box_hi = hi;
  m.faces = classify_faces(m);
  return m;
}

}  // namespace detail

HexMesh build_box(const Vec3& lo, const Vec3& hi, const std::array<int, 3>& cells, Block block) {
  return detail::build_box_impl(lo, hi, cells,
                                std::vector<Block>(static_cast<std::size_t>(cells[0]) * cells[1] * cells[2], block));
}

HexMesh build_sphere_in_box(const SphereInBoxParams& p) {
  const double R = p.radius, b = p.inner_box_half;
  const Vec3 L = p.outer_box_dims;
  if (!(R > 0.0)) throw ConfigError("mesh", "sphere radius must be positive");
  if (!(b > R)) throw ConfigError("mesh", "inner box half-width must exceed the radius");
  if (!(2.0 * b < std::min({L[0], L[1], L[2]}))) throw ConfigError("mesh", "inner box must fit in the outer box");
  if (!(p.h_inner > 0.0 && p.h_outer >= p.h_inner)) throw ConfigError("mesh", "require 0 < h_inner <= h_outer");
  if (p.n_radial_layers < 1) throw ConfigError("mesh", "n_radial_layers must be >= 1");
  if (!(p.core_fraction > 0.0 && p.core_fraction * std::sqrt(3.0) < 1.0))
    throw ConfigError("mesh", "core_fraction must lie in (0, 1/sqrt(3))");

  const int n = std::max(1, static_cast<int>(std::lround(2.0 * b / p.h_inner)));
  const int m_out = checked_count(2.0 * b, p.h_outer, "inner box");
  if (n % m_out != 0)
    throw ConfigError("mesh", "inner grid (" + std::to_string(n) + " cells per face edge) must nest in the outer grid (" +
                                  std::to_string(m_out) + ")");
  std::array<int, 3> outer_cells{};
  std::array<int, 3> hole_lo{};
  for (int d = 0; d < 3; ++d) {
    outer_cells[d] = checked_count(L[d], p.h_outer, "outer box");
    hole_lo[d] = checked_count(L[d] / 2.0 - b, p.h_outer, "outer box margin");
  }
  const int n_trans =
      p.n_transition_layers > 0 ? p.n_transition_layers : std::max(1, static_cast<int>(std::lround((b - R) / p.h_inner)));
  const double a = p.core_fraction * R;

  Builder builder(1e-9 * norm(L));

  // Central cube.
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        std::array<Vec3, 8> x{};
        for (int c = 0; c < 8; ++c) {
          const int id[3] = {i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)};
          for (int d = 0; d < 3; ++d) x[c][d] = a * (-1.0 + 2.0 * id[d] / n);
        }
        builder.add(x, Block::Acoustic);
      }

  // Six patches: shells from the cube to the sphere, then to the inner box.
  for (int axis = 0; axis < 3; ++axis)
    for (int sgn = -1; sgn <= 1; sgn += 2) {
      const int u_axis = (axis + 1) % 3, v_axis = (axis + 2) % 3;
      auto cube_point = [&](int i, int j) {
        Vec3 q{};
        q[axis] = sgn;
        q[u_axis] = -1.0 + 2.0 * i / n;
        q[v_axis] = -1.0 + 2.0 * j / n;
        return q;
      };
      auto sphere_point = [&](int i, int j) {
        Vec3 q = cube_point(i, j);
        q[u_axis] = std::tan(0.25 * std::numbers::pi * q[u_axis]);
        q[v_axis] = std::tan(0.25 * std::numbers::pi * q[v_axis]);
        return R * normalized(q);
      };
      auto layer_point = [&](int i, int j, int layer) {
        const Vec3 s = sphere_point(i, j);
        if (layer <= p.n_radial_layers) {
          const double t = static_cast<double>(layer) / p.n_radial_layers;
          if (layer == p.n_radial_layers) return s;
          return (1.0 - t) * (a * cube_point(i, j)) + t * s;
        }
        const int l = layer - p.n_radial_layers;
        if (l == n_trans) return b * cube_point(i, j);
        const double t = static_cast<double>(l) / n_trans;
        return (1.0 - t) * s + t * (b * cube_point(i, j));
      };
      for (int layer = 0; layer < p.n_radial_layers + n_trans; ++layer)
        for (int j = 0; j < n; ++j)
          for (int i = 0; i < n; ++i) {
            std::array<Vec3, 8> x{};
            for (int c = 0; c < 8; ++c) x[c] = layer_point(i + (c & 1), j + ((c >> 1) & 1), layer + ((c >> 2) & 1));
            builder.add(x, layer < p.n_radial_layers ? Block::Acoustic : Block::ElasticInner);
          }
    }

  // Outer grid with the inner box removed.
  const Vec3 lo{-L[0] / 2, -L[1] / 2, -L[2] / 2};
  const int hole_n = m_out;
  for (int k = 0; k < outer_cells[2]; ++k)
    for (int j = 0; j < outer_cells[1]; ++j)
      for (int i = 0; i < outer_cells[0]; ++i) {
        const int id[3] = {i, j, k};
        bool in_hole = true;
        for (int d = 0; d < 3; ++d)
          if (id[d] < hole_lo[d] || id[d] >= hole_lo[d] + hole_n) in_hole = false;
        if (in_hole) continue;
        std::array<Vec3, 8> x{};
        for (int c = 0; c < 8; ++c) {
          const int ii[3] = {i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)};
          for (int d = 0; d < 3; ++d) x[c][d] = lo[d] + L[d] * ii[d] / outer_cells[d];
        }
        builder.add(x, Block::ElasticOuter);
      }

  HexMesh mesh = builder.finish();
  mesh.box_lo = lo;
  mesh.box_hi = {L[0] / 2, L[1] / 2, L[2] / 2};
  mesh.sphere_radius = R;
  mesh.faces = classify_faces(mesh);
  check_geometry(mesh);
  return mesh;
}

HexMesh build_sphere_in_box(double radius, double inner_box_half, const Vec3& outer_box_dims, double h_inner,
                            double h_outer, int n_radial_layers) {
  SphereInBoxParams p;
  p.radius = radius;
  p.inner_box_half = inner_box_half;
  p.outer_box_dims = outer_box_dims;
  p.h_inner = h_inner;
  p.h_outer = h_outer;
  p.n_radial_layers = n_radial_layers;
  return build_sphere_in_box(p);
}

void write_text(const HexMesh& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("mesh", "cannot open '" + path + "' for writing");
  os << std::setprecision(17);
  os << "CAVSCAT-MESH 1\n";
  os << "BOX " << m.box_lo[0] << ' ' << m.box_lo[1] << ' ' << m.box_lo[2] << ' ' << m.box_hi[0] << ' ' << m.box_hi[1]
     << ' ' << m.box_hi[2] << '\n';
  os << "SIDES";
  for (auto k : m.side_kind) os << ' ' << boundary_kind_name(k);
  os << "\nSPHERE " << m.sphere_radius << '\n';
  os << "NODES " << m.nodes.size() << '\n';
  for (const auto& x : m.nodes) os << x[0] << ' ' << x[1] << ' ' << x[2] << '\n';
  os << "ELEMS " << m.elements.size() << '\n';
  for (const auto& e : m.elements) {
    os << block_name(e.block);
    for (int v : e.v) os << ' ' << v;
    os << '\n';
  }
  os << "FACESETS\n";
  os << "interior " << m.faces.interior.size() << '\n';
  for (const auto& p : m.faces.interior) os << p.a.elem << ' ' << p.a.face << ' ' << p.b.elem << ' ' << p.b.face << '\n';
  os << "acoustic_elastic " << m.faces.acoustic_elastic.size() << '\n';
  for (const auto& p : m.faces.acoustic_elastic)
    os << p.a.elem << ' ' << p.a.face << ' ' << p.b.elem << ' ' << p.b.face << '\n';
  os << "boundary " << m.faces.boundary.size() << '\n';
  for (const auto& bf : m.faces.boundary)
    os << bf.f.elem << ' ' << bf.f.face << ' ' << bf.side << ' ' << boundary_kind_name(bf.kind) << '\n';
  os << "PAIRINGS " << m.faces.box_nonconforming.size() << '\n';
  for (const auto& pr : m.faces.box_nonconforming) {
    os << pr.master.elem << ' ' << pr.master.face << ' ' << pr.slaves.size() << '\n';
    for (std::size_t s = 0; s < pr.slaves.size(); ++s) {
      os << pr.slaves[s].elem << ' ' << pr.slaves[s].face;
      for (const auto& c : pr.slave_corners[s]) os << ' ' << c[0] << ' ' << c[1];
      os << '\n';
    }
  }
  os << "END\n";
}

namespace {

void expect(std::istream& is, const std::string& word) {
  std::string w;
  if (!(is >> w) || w != word) throw ConfigError("mesh", "mesh file: expected '" + word + "', got '" + w + "'");
}

}  // namespace

HexMesh read_text(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("mesh", "cannot open '" + path + "'");
  HexMesh m;
  expect(is, "CAVSCAT-MESH");
  int version = 0;
  is >> version;
  if (version != 1) throw ConfigError("mesh", "unsupported mesh file version");
  expect(is, "BOX");
  is >> m.box_lo[0] >> m.box_lo[1] >> m.box_lo[2] >> m.box_hi[0] >> m.box_hi[1] >> m.box_hi[2];
  expect(is, "SIDES");
  for (auto& k : m.side_kind) {
    std::string s;
    is >> s;
    k = parse_boundary_kind(s);
  }
  expect(is, "SPHERE");
  is >> m.sphere_radius;
  std::size_t n = 0;
  expect(is, "NODES");
  is >> n;
  m.nodes.resize(n);
  for (auto& x : m.nodes) is >> x[0] >> x[1] >> x[2];
  expect(is, "ELEMS");
  is >> n;
  m.elements.resize(n);
  for (auto& e : m.elements) {
    std::string b;
    is >> b;
    e.block = parse_block(b);
    for (int& v : e.v) is >> v;
  }
  expect(is, "FACESETS");
  expect(is, "interior");
  is >> n;
  m.faces.interior.resize(n);
  for (auto& p : m.faces.interior) is >> p.a.elem >> p.a.face >> p.b.elem >> p.b.face;
  expect(is, "acoustic_elastic");
  is >> n;
  m.faces.acoustic_elastic.resize(n);
  for (auto& p : m.faces.acoustic_elastic) is >> p.a.elem >> p.a.face >> p.b.elem >> p.b.face;
  expect(is, "boundary");
  is >> n;
  m.faces.boundary.resize(n);
  for (auto& bf : m.faces.boundary) {
    std::string k;
    is >> bf.f.elem >> bf.f.face >> bf.side >> k;
    bf.kind = parse_boundary_kind(k);
  }
  expect(is, "PAIRINGS");
  is >> n;
  m.faces.box_nonconforming.resize(n);
  for (auto& pr : m.faces.box_nonconforming) {
    std::size_t ns = 0;
    is >> pr.master.elem >> pr.master.face >> ns;
    pr.slaves.resize(ns);
    pr.slave_corners.resize(ns);
    for (std::size_t s = 0; s < ns; ++s) {
      is >> pr.slaves[s].elem >> pr.slaves[s].face;
      for (auto& c : pr.slave_corners[s]) is >> c[0] >> c[1];
    }
  }
  expect(is, "END");
  if (!is) throw ConfigError("mesh", "truncated mesh file '" + path + "'");
  return m;
}

void write_vtk(const HexMesh& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("mesh", "cannot open '" + path + "' for writing");
  os << std::setprecision(12);
  os << "# vtk DataFile Version 3.0\ncavscat mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << m.nodes.size() << " double\n";
  for (const auto& x : m.nodes) os << x[0] << ' ' << x[1] << ' ' << x[2] << '\n';
  os << "CELLS " << m.elements.size() << ' ' << 9 * m.elements.size() << '\n';
  static constexpr int kVtkOrder[8] = {0, 1, 3, 2, 4, 5, 7, 6};
  for (const auto& e : m.elements) {
    os << 8;
    for (int c : kVtkOrder) os << ' ' << e.v[c];
    os << '\n';
  }
  os << "CELL_TYPES " << m.elements.size() << '\n';
  for (std::size_t i = 0; i < m.elements.size(); ++i) os << "12\n";
  os << "CELL_DATA " << m.elements.size() << "\nSCALARS block int 1\nLOOKUP_TABLE default\n";
  for (const auto& e : m.elements) os << static_cast<int>(e.block) << '\n';
}

}  // namespace cavscat::mesh
