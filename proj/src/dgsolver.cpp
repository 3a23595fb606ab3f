#include "cavscat/dgsolver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "cavscat/errors.hpp"
#include "cavscat/parallel.hpp"
#include "cavscat/point_index.hpp"

namespace cavscat::dg {

namespace {

constexpr int kMaxDegree = 15;

inline int lidx(int i, int j, int k, int n1) { return i + n1 * (j + n1 * k); }


inline Mat3 stress(const Mat3& G, double lambda, double mu) {
  const double tr = G[0][0] + G[1][1] + G[2][2];
  Mat3 s{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) s[i][j] = mu * (G[i][j] + G[j][i]);
  for (int i = 0; i < 3; ++i) s[i][i] += lambda * tr;
  return s;
}

inline Vec3 mat_vec(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2], m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

Mat3 invert3(const Mat3& m) {
  const double d = det(m);
  if (!(std::abs(d) > 0.0)) throw GeometryError("dgsolver", "singular Jacobian");
  return inverse(m, d);
}

// Nodes of local face f of a degree-N element as (local index, s index, t index).
struct FaceNodes {
  int axis, a, b, fixed;
};
FaceNodes face_nodes(int face, int N) {
  const int d = mesh::face_axis(face);
  FaceNodes fn{d, d == 0 ? 1 : 0, d == 2 ? 1 : 2, mesh::face_side(face) > 0 ? N : 0};
  return fn;
}
int face_local(const FaceNodes& fn, int s, int t, int n1) {
  int ijk[3];
  ijk[fn.axis] = fn.fixed;
  ijk[fn.a] = s;
  ijk[fn.b] = t;
  return lidx(ijk[0], ijk[1], ijk[2], n1);
}

// Scratch buffers reused by kernels on the calling thread.
struct Scratch {
  std::vector<double> ue, s0, s1, s2, oe;
  void ensure(std::size_t n) {
    if (ue.size() < 3 * n) {
      ue.resize(3 * n);
      s0.resize(3 * n);
      s1.resize(3 * n);
      s2.resize(3 * n);
      oe.resize(3 * n);
    }
  }
};
Scratch& scratch() {
  thread_local Scratch s;
  return s;
}

}  // namespace

SpectralBasis SpectralBasis::make(int degree) {
  if (degree < 1 || degree > kMaxDegree) throw ConfigError("dgsolver", "polynomial degree must be in [1, 15]");
  SpectralBasis b;
  b.degree = degree;
  const auto rule = quadrature::gauss_lobatto_legendre(degree);
  b.nodes = rule.nodes;
  b.weights = rule.weights;
  b.D = quadrature::Lagrange(rule.nodes).differentiation_matrix();
  return b;
}

const Material& BlockMaterials::of(mesh::Block b) const {
  switch (b) {
    case mesh::Block::Acoustic:
      return acoustic;
    case mesh::Block::ElasticInner:
      return elastic_inner;
    default:
      return elastic_outer;
  }
}

double BlockMaterials::vp_max() const { return std::max({acoustic.vp, elastic_inner.vp, elastic_outer.vp}); }

JumpAverage trace_jump_average(const Vec3& v1, const Vec3& n1, const Vec3& v2, const Vec3& n2) {
  JumpAverage r;
  for (int i = 0; i < 3; ++i) {
    r.average[i] = 0.5 * (v1[i] + v2[i]);
    for (int j = 0; j < 3; ++j)
      r.jump[i][j] = 0.5 * (v1[i] * n1[j] + n1[i] * v1[j]) + 0.5 * (v2[i] * n2[j] + n2[i] * v2[j]);
  }
  return r;
}

JumpAverage trace_jump_average(const Vec3& v, const Vec3& n) {
  JumpAverage r;
  r.average = v;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.jump[i][j] = 0.5 * (v[i] * n[j] + n[i] * v[j]);
  return r;
}

std::array<Vec3, 2> tangent_frame(const Vec3& n) {
  const Vec3 a = std::abs(n[0]) < 0.9 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 1.0, 0.0};
  const Vec3 t1 = normalized(a - dot(a, n) * n);
  return {t1, cross(n, t1)};
}

// ---------------------------------------------------------------------------
// Assembly

std::shared_ptr<SemiDiscreteSystem> SemiDiscreteSystem::build(const mesh::HexMesh& m, const BlockMaterials& mat,
                                                              const AssemblyOptions& opt) {
  if (m.elements.empty()) throw ConfigError("dgsolver", "empty mesh");
  mat.acoustic.validate("acoustic");
  mat.elastic_inner.validate("elastic_inner");
  mat.elastic_outer.validate("elastic_outer");
  if (opt.penalty.alpha <= 0.0) throw ConfigError("dgsolver", "penalty alpha must be positive");
  auto sys = std::shared_ptr<SemiDiscreteSystem>(new SemiDiscreteSystem);
  sys->mesh_ = m;
  sys->mat_ = mat;
  sys->opt_ = opt;
  sys->bases_.resize(kMaxDegree + 1);
  sys->build_dofs();
  sys->build_geometry();
  sys->build_faces();
  sys->build_boundary();
  return sys;
}

const SpectralBasis& SemiDiscreteSystem::basis(int degree) const {
  if (degree < 1 || degree > kMaxDegree || bases_[degree].degree != degree)
    throw DomainError("dgsolver", "no basis of degree " + std::to_string(degree));
  return bases_[degree];
}

void SemiDiscreteSystem::build_dofs() {
  const int ne = static_cast<int>(mesh_.elements.size());
  const bool has_pairings = !mesh_.faces.box_nonconforming.empty();
  auto& d = dofs_;
  d.elem_degree.resize(ne);
  d.elem_group.resize(ne);
  d.elem_offset.resize(ne + 1);
  d.elem_offset[0] = 0;
  for (int e = 0; e < ne; ++e) {
    const auto b = mesh_.elements[e].block;
    const int deg = (b == mesh::Block::Acoustic && opt_.acoustic_degree > 0) ? opt_.acoustic_degree : opt_.degree;
    if (bases_[deg].degree != deg) bases_[deg] = SpectralBasis::make(deg);
    d.elem_degree[e] = deg;
    if (opt_.discontinuous_everywhere)
      d.elem_group[e] = e;
    else
      d.elem_group[e] = b == mesh::Block::Acoustic ? 0 : (b == mesh::Block::ElasticInner || !has_pairings ? 1 : 2);
    d.elem_offset[e + 1] = d.elem_offset[e] + bases_[deg].n3();
  }
  d.elem_nodes.resize(d.elem_offset[ne]);

  double hmin = mesh::min_edge_length(mesh_);
  std::map<int, PointIndex> index;
  std::map<int, std::vector<int>> ids;  // per group: index point -> global node
  for (int e = 0; e < ne; ++e) {
    const auto& B = bases_[d.elem_degree[e]];
    const int n1 = B.n1();
    const auto map = mesh::ReferenceMap::of(mesh_, e);
    auto it = index.find(d.elem_group[e]);
    if (it == index.end()) it = index.emplace(d.elem_group[e], PointIndex(1e-6 * hmin)).first;
    auto& gids = ids[d.elem_group[e]];
    for (int k = 0; k < n1; ++k)
      for (int j = 0; j < n1; ++j)
        for (int i = 0; i < n1; ++i) {
          const Vec3 x = map({B.nodes[i], B.nodes[j], B.nodes[k]});
          const std::size_t before = it->second.points().size();
          const int p = it->second.insert(x);
          if (it->second.points().size() > before) {
            gids.push_back(d.n_nodes());
            d.coords.push_back(x);
            d.node_group.push_back(d.elem_group[e]);
          }
          d.elem_nodes[d.elem_offset[e] + lidx(i, j, k, n1)] = gids[p];
        }
  }
}

void SemiDiscreteSystem::build_geometry() {
  const int ne = static_cast<int>(mesh_.elements.size());
  geom_.resize(ne);
  mass_.assign(dofs_.n_nodes(), 0.0);
  Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
  std::vector<std::pair<Vec3, Vec3>> boxes(ne);
  for (int e = 0; e < ne; ++e) {
    const auto& B = bases_[dofs_.elem_degree[e]];
    const int n1 = B.n1();
    const auto map = mesh::ReferenceMap::of(mesh_, e);
    const double rho = mat_.of(mesh_.elements[e].block).rho;
    auto& g = geom_[e];
    const auto jc = mesh::jacobian(map, {0.0, 0.0, 0.0});
    double scale = 0.0;
    for (int i = 0; i < 3; ++i) scale = std::max(scale, std::abs(jc.J[i][i]));
    bool aligned = true;
    for (int i = 0; i < 3 && aligned; ++i)
      for (int j = 0; j < 3; ++j)
        if (i != j && std::abs(jc.J[i][j]) > 1e-12 * scale) aligned = false;
    for (int v = 0; v < 8 && aligned; ++v) {
      const Vec3 xi{double(2 * (v & 1) - 1), double(2 * ((v >> 1) & 1) - 1), double(2 * ((v >> 2) & 1) - 1)};
      const Vec3 c = map({0.0, 0.0, 0.0});
      for (int i = 0; i < 3; ++i)
        if (std::abs(map.x[v][i] - c[i] - jc.J[i][i] * xi[i]) > 1e-10 * scale) aligned = false;
    }
    g.axis_aligned = aligned;
    g.wdet.resize(B.n3());
    if (aligned) {
      if (!(jc.det > 0.0)) throw GeometryError("dgsolver", "inverted element " + std::to_string(e));
      g.jinv = {1.0 / jc.J[0][0], 0, 0, 0, 1.0 / jc.J[1][1], 0, 0, 0, 1.0 / jc.J[2][2]};
    } else {
      g.jinv.resize(9 * B.n3());
    }
    for (int k = 0; k < n1; ++k)
      for (int j = 0; j < n1; ++j)
        for (int i = 0; i < n1; ++i) {
          const int l = lidx(i, j, k, n1);
          double detJ = jc.det;
          if (!aligned) {
            const auto jac = mesh::jacobian(map, {B.nodes[i], B.nodes[j], B.nodes[k]});
            if (!(jac.det > 0.0)) throw GeometryError("dgsolver", "non-positive Jacobian in element " + std::to_string(e));
            detJ = jac.det;
            const Mat3 inv = inverse(jac.J, jac.det);
            for (int a = 0; a < 3; ++a)
              for (int b = 0; b < 3; ++b) g.jinv[9 * l + 3 * a + b] = inv[a][b];
          }
          g.wdet[l] = B.weights[i] * B.weights[j] * B.weights[k] * detJ;
          mass_[dofs_.elem_nodes[dofs_.elem_offset[e] + l]] += rho * g.wdet[l];
        }
    Vec3 blo = map.x[0], bhi = map.x[0];
    for (const auto& x : map.x)
      for (int i = 0; i < 3; ++i) {
        blo[i] = std::min(blo[i], x[i]);
        bhi[i] = std::max(bhi[i], x[i]);
      }
    boxes[e] = {blo, bhi};
    for (int i = 0; i < 3; ++i) {
      lo[i] = std::min(lo[i], blo[i]);
      hi[i] = std::max(hi[i], bhi[i]);
    }
  }

  // Bucket grid for point location.
  const int per_axis = std::max(1, static_cast<int>(std::cbrt(static_cast<double>(ne))));
  for (int i = 0; i < 3; ++i) {
    grid_n_[i] = per_axis;
    grid_lo_[i] = lo[i];
    grid_cell_[i] = std::max((hi[i] - lo[i]) / per_axis, 1e-300);
  }
  buckets_.assign(static_cast<std::size_t>(per_axis) * per_axis * per_axis, {});
  for (int e = 0; e < ne; ++e) {
    std::array<int, 3> a{}, b{};
    for (int i = 0; i < 3; ++i) {
      const double pad = 1e-9 * (hi[i] - lo[i]);
      a[i] = std::clamp(static_cast<int>(std::floor((boxes[e].first[i] - pad - grid_lo_[i]) / grid_cell_[i])), 0,
                        per_axis - 1);
      b[i] = std::clamp(static_cast<int>(std::floor((boxes[e].second[i] + pad - grid_lo_[i]) / grid_cell_[i])), 0,
                        per_axis - 1);
    }
    for (int z = a[2]; z <= b[2]; ++z)
      for (int y = a[1]; y <= b[1]; ++y)
        for (int x = a[0]; x <= b[0]; ++x) buckets_[x + per_axis * (y + per_axis * z)].push_back(e);
  }
}

void SemiDiscreteSystem::build_faces() {
  const auto& fs = mesh_.faces;
  const double alpha = opt_.penalty.alpha;

  auto jinv_at = [&](int e, int l) {
    const auto& g = geom_[e];
    Mat3 r{};
    if (g.axis_aligned) {
      r[0][0] = g.jinv[0];
      r[1][1] = g.jinv[4];
      r[2][2] = g.jinv[8];
    } else {
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) r[a][b] = g.jinv[9 * l + 3 * a + b];
    }
    return r;
  };

  auto add_face = [&](int e1, int f1, int e2, int f2, bool nonconforming, bool acoustic_elastic) {
    DGFace face;
    face.e1 = e1;
    face.f1 = f1;
    face.e2 = e2;
    face.nonconforming = nonconforming;
    face.acoustic_elastic = acoustic_elastic;
    const auto& B1 = bases_[dofs_.elem_degree[e1]];
    const auto& B2 = bases_[dofs_.elem_degree[e2]];
    const int n1 = B1.n1(), m1 = B2.n1();
    const auto map1 = mesh::ReferenceMap::of(mesh_, e1);
    const auto map2 = mesh::ReferenceMap::of(mesh_, e2);
    const FaceNodes fn = face_nodes(f1, B1.degree);
    const double side = mesh::face_side(f1);
    for (int t = 0; t < n1; ++t)
      for (int s = 0; s < n1; ++s) {
        FacePoint p;
        p.local1 = face_local(fn, s, t, n1);
        Vec3 xi{};
        xi[fn.axis] = side;
        xi[fn.a] = B1.nodes[s];
        xi[fn.b] = B1.nodes[t];
        const auto jac = mesh::jacobian(map1, xi);
        const Vec3 ca{jac.J[0][fn.a], jac.J[1][fn.a], jac.J[2][fn.a]};
        const Vec3 cb{jac.J[0][fn.b], jac.J[1][fn.b], jac.J[2][fn.b]};
        Vec3 nrm = cross(ca, cb);
        const double dA = norm(nrm);
        const Mat3 inv1 = inverse(jac.J, jac.det);
        const Vec3 outward{side * inv1[fn.axis][0], side * inv1[fn.axis][1], side * inv1[fn.axis][2]};
        if (dot(nrm, outward) < 0.0) nrm = -1.0 * nrm;
        p.normal = (1.0 / dA) * nrm;
        p.weight = B1.weights[s] * B1.weights[t] * dA;
        p.x = map1(xi);
        p.jinv1 = jinv_at(e1, p.local1);
        if (!mesh::invert_map(map2, p.x, p.xi2, 1e-8))
          throw TopologyError("dgsolver", "face point of element " + std::to_string(e1) +
                                              " not found in neighbour " + std::to_string(e2));
        for (int i = 0; i < 3; ++i) p.xi2[i] = std::clamp(p.xi2[i], -1.0, 1.0);
        // Snap to a side-2 GLL node when the point coincides with one.
        int ijk[3];
        bool on_node = true;
        for (int i = 0; i < 3 && on_node; ++i) {
          ijk[i] = -1;
          for (int q = 0; q < m1; ++q)
            if (std::abs(B2.nodes[q] - p.xi2[i]) < 1e-10) ijk[i] = q;
          on_node = ijk[i] >= 0;
        }
        if (on_node) {
          p.local2 = lidx(ijk[0], ijk[1], ijk[2], m1);
          p.jinv2 = jinv_at(e2, p.local2);
        } else {
          const auto j2 = mesh::jacobian(map2, p.xi2);
          p.jinv2 = inverse(j2.J, j2.det);
        }
        face.points.push_back(p);
      }
    face.basis2.assign(6 * m1 * face.points.size(), 0.0);
    {
      quadrature::Lagrange lag(B2.nodes);
      for (std::size_t q = 0; q < face.points.size(); ++q) {
        if (face.points[q].local2 >= 0) continue;
        double* b = face.basis2.data() + 6 * m1 * q;
        for (int i = 0; i < 3; ++i) lag.values_and_derivatives(face.points[q].xi2[i], b + i * m1, b + (3 + i) * m1);
      }
    }
    const double a1 = mesh::face_area(mesh_, {e1, f1});
    const double a2 = mesh::face_area(mesh_, {e2, f2});
    face.h = std::min(mesh::element_volume(mesh_, e1) / a1, mesh::element_volume(mesh_, e2) / a2);
    const auto& M1 = mat_.of(mesh_.elements[e1].block);
    const auto& M2 = mat_.of(mesh_.elements[e2].block);
    const double modulus = std::max(M1.p_modulus(), M2.p_modulus());
    const double N = std::max(B1.degree, B2.degree);
    face.eta = alpha * modulus * N * N / face.h * (nonconforming ? opt_.penalty.nonconforming_factor : 1.0);
    faces_.push_back(std::move(face));
  };

  for (const auto& p : fs.acoustic_elastic) add_face(p.a.elem, p.a.face, p.b.elem, p.b.face, false, true);
  for (const auto& p : fs.interior) {
    if (dofs_.elem_group[p.a.elem] == dofs_.elem_group[p.b.elem]) {
      if (dofs_.elem_degree[p.a.elem] != dofs_.elem_degree[p.b.elem])
        throw ConfigError("dgsolver", "conforming elements of one block must share a degree");
      continue;
    }
    add_face(p.a.elem, p.a.face, p.b.elem, p.b.face, false, false);
  }
  for (const auto& pr : fs.box_nonconforming)
    for (const auto& s : pr.slaves) add_face(s.elem, s.face, pr.master.elem, pr.master.face, true, false);
}

void SemiDiscreteSystem::build_boundary() {
  std::vector<int> block_of(dofs_.n_nodes(), -1);
  std::vector<char> fixed(dofs_.n_dofs(), 0);
  bool warned = false;
  for (const auto& bf : mesh_.faces.boundary) {
    const int e = bf.f.elem;
    const auto& B = bases_[dofs_.elem_degree[e]];
    const int n1 = B.n1();
    const FaceNodes fn = face_nodes(bf.f.face, B.degree);
    const int* nodes = dofs_.nodes_of(e);
    if (bf.kind == mesh::BoundaryKind::Free) continue;
    if (bf.kind == mesh::BoundaryKind::Roller) {
      const int axis = bf.side / 2;
      for (int t = 0; t < n1; ++t)
        for (int s = 0; s < n1; ++s) fixed[3 * nodes[face_local(fn, s, t, n1)] + axis] = 1;
      continue;
    }
    const auto& M = mat_.of(mesh_.elements[e].block);
    if (opt_.absorbing_tangential && M.vs > 0.0 && M.vp > 2.0 * M.vs && !warned) {
      warnings_.push_back("vp/vs > 2 on an absorbing face: the tangential absorbing term is not dissipative");
      warned = true;
    }
    const auto map = mesh::ReferenceMap::of(mesh_, e);
    const double side = mesh::face_side(bf.f.face);
    AbsorbingFace af;
    af.elem = e;
    af.face = bf.f.face;
    for (int t = 0; t < n1; ++t)
      for (int s = 0; s < n1; ++s) {
        FacePoint p;
        p.local1 = face_local(fn, s, t, n1);
        Vec3 xi{};
        xi[fn.axis] = side;
        xi[fn.a] = B.nodes[s];
        xi[fn.b] = B.nodes[t];
        const auto jac = mesh::jacobian(map, xi);
        const Vec3 ca{jac.J[0][fn.a], jac.J[1][fn.a], jac.J[2][fn.a]};
        const Vec3 cb{jac.J[0][fn.b], jac.J[1][fn.b], jac.J[2][fn.b]};
        Vec3 nrm = cross(ca, cb);
        const double dA = norm(nrm);
        const Mat3 inv = inverse(jac.J, jac.det);
        const Vec3 outward{side * inv[fn.axis][0], side * inv[fn.axis][1], side * inv[fn.axis][2]};
        if (dot(nrm, outward) < 0.0) nrm = -1.0 * nrm;
        p.normal = (1.0 / dA) * nrm;
        p.weight = B.weights[s] * B.weights[t] * dA;
        p.x = map(xi);
        p.jinv1 = inv;
        const auto frame = tangent_frame(p.normal);
        p.tau1 = frame[0];
        p.tau2 = frame[1];
        const int node = nodes[p.local1];
        if (block_of[node] < 0) {
          block_of[node] = static_cast<int>(m1_.size());
          m1_.push_back({node, Mat3{}});
        }
        Mat3& K = m1_[block_of[node]].second;
        const double zp = M.rho * M.vp, zs = M.rho * M.vs;
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) {
            const double nn = p.normal[i] * p.normal[j];
            const double tt = p.tau1[i] * p.tau1[j] + p.tau2[i] * p.tau2[j];
            K[i][j] += p.weight * (zp * nn + zs * tt);
          }
        af.points.push_back(p);
      }
    absorbing_.push_back(std::move(af));
  }
  for (std::size_t i = 0; i < fixed.size(); ++i)
    if (fixed[i]) constrained_.push_back(static_cast<int>(i));
}

double SemiDiscreteSystem::eta_min() const {
  double r = std::numeric_limits<double>::infinity();
  for (const auto& f : faces_) r = std::min(r, f.eta);
  return faces_.empty() ? 0.0 : r;
}

double SemiDiscreteSystem::eta_max() const {
  double r = 0.0;
  for (const auto& f : faces_) r = std::max(r, f.eta);
  return r;
}

// ---------------------------------------------------------------------------
// Operators

void SemiDiscreteSystem::volume_element(int e, const double* u, double* out) const {
  const auto& B = bases_[dofs_.elem_degree[e]];
  const int n1 = B.n1(), n3 = B.n3();
  const double* D = B.D.data();
  const auto& g = geom_[e];
  const auto& M = mat_.of(mesh_.elements[e].block);
  const double lam = M.lambda(), mu = M.mu();
  const int* nodes = dofs_.nodes_of(e);
  auto& sc = scratch();
  sc.ensure(n3);
  double* ue = sc.ue.data();
  double* s0 = sc.s0.data();
  double* s1 = sc.s1.data();
  double* s2 = sc.s2.data();
  double* oe = sc.oe.data();
  for (int l = 0; l < n3; ++l)
    for (int c = 0; c < 3; ++c) ue[3 * l + c] = u[3 * nodes[l] + c];

  for (int k = 0; k < n1; ++k)
    for (int j = 0; j < n1; ++j)
      for (int i = 0; i < n1; ++i) {
        const int l = lidx(i, j, k, n1);
        double d[3][3] = {};  // d[c][axis]
        for (int m = 0; m < n1; ++m) {
          const double* a = ue + 3 * lidx(m, j, k, n1);
          const double* b = ue + 3 * lidx(i, m, k, n1);
          const double* z = ue + 3 * lidx(i, j, m, n1);
          const double di = D[i * n1 + m], dj = D[j * n1 + m], dk = D[k * n1 + m];
          for (int c = 0; c < 3; ++c) {
            d[c][0] += di * a[c];
            d[c][1] += dj * b[c];
            d[c][2] += dk * z[c];
          }
        }
        Mat3 G;
        const double* J = g.axis_aligned ? g.jinv.data() : g.jinv.data() + 9 * l;
        if (g.axis_aligned) {
          for (int c = 0; c < 3; ++c) {
            G[c][0] = d[c][0] * J[0];
            G[c][1] = d[c][1] * J[4];
            G[c][2] = d[c][2] * J[8];
          }
        } else {
          for (int c = 0; c < 3; ++c)
            for (int q = 0; q < 3; ++q) G[c][q] = d[c][0] * J[q] + d[c][1] * J[3 + q] + d[c][2] * J[6 + q];
        }
        const Mat3 sig = stress(G, lam, mu);
        const double w = g.wdet[l];
        // S[c][axis] = w sum_q sig[c][q] Jinv[axis][q]
        for (int c = 0; c < 3; ++c) {
          if (g.axis_aligned) {
            s0[3 * l + c] = w * sig[c][0] * J[0];
            s1[3 * l + c] = w * sig[c][1] * J[4];
            s2[3 * l + c] = w * sig[c][2] * J[8];
          } else {
            s0[3 * l + c] = w * (sig[c][0] * J[0] + sig[c][1] * J[1] + sig[c][2] * J[2]);
            s1[3 * l + c] = w * (sig[c][0] * J[3] + sig[c][1] * J[4] + sig[c][2] * J[5]);
            s2[3 * l + c] = w * (sig[c][0] * J[6] + sig[c][1] * J[7] + sig[c][2] * J[8]);
          }
        }
      }
  // out_b = sum_l sum_axis dphi_b/dxi_axis(l) S_axis(l)
  for (int k = 0; k < n1; ++k)
    for (int j = 0; j < n1; ++j)
      for (int i = 0; i < n1; ++i) {
        double acc[3] = {0, 0, 0};
        for (int m = 0; m < n1; ++m) {
          const double* a = s0 + 3 * lidx(m, j, k, n1);
          const double* b = s1 + 3 * lidx(i, m, k, n1);
          const double* z = s2 + 3 * lidx(i, j, m, n1);
          const double di = D[m * n1 + i], dj = D[m * n1 + j], dk = D[m * n1 + k];
          for (int c = 0; c < 3; ++c) acc[c] += di * a[c] + dj * b[c] + dk * z[c];
        }
        const int l = lidx(i, j, k, n1);
        for (int c = 0; c < 3; ++c) oe[3 * l + c] = acc[c];
      }
  for (int l = 0; l < n3; ++l)
    for (int c = 0; c < 3; ++c) out[3 * nodes[l] + c] += oe[3 * l + c];
}

void SemiDiscreteSystem::gradient_at_node(int e, int l, const std::vector<double>& u, Mat3& G) const {
  const auto& B = bases_[dofs_.elem_degree[e]];
  const int n1 = B.n1();
  const int i = l % n1, j = (l / n1) % n1, k = l / (n1 * n1);
  const int* nodes = dofs_.nodes_of(e);
  double d[3][3] = {};
  for (int m = 0; m < n1; ++m) {
    const double* a = &u[3 * nodes[lidx(m, j, k, n1)]];
    const double* b = &u[3 * nodes[lidx(i, m, k, n1)]];
    const double* z = &u[3 * nodes[lidx(i, j, m, n1)]];
    for (int c = 0; c < 3; ++c) {
      d[c][0] += B.D[i * n1 + m] * a[c];
      d[c][1] += B.D[j * n1 + m] * b[c];
      d[c][2] += B.D[k * n1 + m] * z[c];
    }
  }
  const auto& g = geom_[e];
  const double* J = g.axis_aligned ? g.jinv.data() : g.jinv.data() + 9 * l;
  for (int c = 0; c < 3; ++c)
    for (int q = 0; q < 3; ++q) G[c][q] = d[c][0] * J[q] + d[c][1] * J[3 + q] + d[c][2] * J[6 + q];
}

namespace {

// Value and gradient access to one side of a face at one quadrature point.
struct SideAccess {
  const SpectralBasis* B;
  const int* nodes;
  int local;           // >= 0: point sits on this GLL node
  const double* bas;   // else: 1D values (3 n1) then derivatives (3 n1)
  Mat3 jinv;

  Vec3 value(const std::vector<double>& u) const {
    if (local >= 0) return {u[3 * nodes[local]], u[3 * nodes[local] + 1], u[3 * nodes[local] + 2]};
    const int n1 = B->n1();
    Vec3 r{0, 0, 0};
    for (int k = 0; k < n1; ++k)
      for (int j = 0; j < n1; ++j) {
        const double yz = bas[n1 + j] * bas[2 * n1 + k];
        for (int i = 0; i < n1; ++i) {
          const double phi = bas[i] * yz;
          const double* x = &u[3 * nodes[lidx(i, j, k, n1)]];
          r[0] += phi * x[0];
          r[1] += phi * x[1];
          r[2] += phi * x[2];
        }
      }
    return r;
  }

  // G[c][q] = du_c/dx_q
  Mat3 gradient(const std::vector<double>& u) const {
    const int n1 = B->n1();
    double d[3][3] = {};
    if (local >= 0) {
      const int i = local % n1, j = (local / n1) % n1, k = local / (n1 * n1);
      for (int m = 0; m < n1; ++m) {
        const double* a = &u[3 * nodes[lidx(m, j, k, n1)]];
        const double* b = &u[3 * nodes[lidx(i, m, k, n1)]];
        const double* z = &u[3 * nodes[lidx(i, j, m, n1)]];
        for (int c = 0; c < 3; ++c) {
          d[c][0] += B->D[i * n1 + m] * a[c];
          d[c][1] += B->D[j * n1 + m] * b[c];
          d[c][2] += B->D[k * n1 + m] * z[c];
        }
      }
    } else {
      const double *X = bas, *Y = bas + n1, *Z = bas + 2 * n1;
      const double *dX = bas + 3 * n1, *dY = bas + 4 * n1, *dZ = bas + 5 * n1;
      for (int k = 0; k < n1; ++k)
        for (int j = 0; j < n1; ++j)
          for (int i = 0; i < n1; ++i) {
            const double* x = &u[3 * nodes[lidx(i, j, k, n1)]];
            const double g0 = dX[i] * Y[j] * Z[k], g1 = X[i] * dY[j] * Z[k], g2 = X[i] * Y[j] * dZ[k];
            for (int c = 0; c < 3; ++c) {
              d[c][0] += g0 * x[c];
              d[c][1] += g1 * x[c];
              d[c][2] += g2 * x[c];
            }
          }
    }
    Mat3 G;
    for (int c = 0; c < 3; ++c)
      for (int q = 0; q < 3; ++q) G[c][q] = d[c][0] * jinv[0][q] + d[c][1] * jinv[1][q] + d[c][2] * jinv[2][q];
    return G;
  }

  // out_b += v phi_b
  void scatter_value(const Vec3& v, std::vector<double>& out) const {
    if (local >= 0) {
      for (int c = 0; c < 3; ++c) out[3 * nodes[local] + c] += v[c];
      return;
    }
    const int n1 = B->n1();
    for (int k = 0; k < n1; ++k)
      for (int j = 0; j < n1; ++j) {
        const double yz = bas[n1 + j] * bas[2 * n1 + k];
        for (int i = 0; i < n1; ++i) {
          const double phi = bas[i] * yz;
          double* x = &out[3 * nodes[lidx(i, j, k, n1)]];
          x[0] += phi * v[0];
          x[1] += phi * v[1];
          x[2] += phi * v[2];
        }
      }
  }

  // out_{b,c} += sum_q T[c][q] dphi_b/dx_q
  void scatter_gradient(const Mat3& T, std::vector<double>& out) const {
    Mat3 S;  // S[c][axis] = sum_q T[c][q] jinv[axis][q]
    for (int c = 0; c < 3; ++c)
      for (int a = 0; a < 3; ++a) S[c][a] = T[c][0] * jinv[a][0] + T[c][1] * jinv[a][1] + T[c][2] * jinv[a][2];
    const int n1 = B->n1();
    if (local >= 0) {
      const int i = local % n1, j = (local / n1) % n1, k = local / (n1 * n1);
      for (int m = 0; m < n1; ++m) {
        double* a = &out[3 * nodes[lidx(m, j, k, n1)]];
        double* b = &out[3 * nodes[lidx(i, m, k, n1)]];
        double* z = &out[3 * nodes[lidx(i, j, m, n1)]];
        const double di = B->D[i * n1 + m], dj = B->D[j * n1 + m], dk = B->D[k * n1 + m];
        for (int c = 0; c < 3; ++c) {
          a[c] += di * S[c][0];
          b[c] += dj * S[c][1];
          z[c] += dk * S[c][2];
        }
      }
      return;
    }
    const double *X = bas, *Y = bas + n1, *Z = bas + 2 * n1;
    const double *dX = bas + 3 * n1, *dY = bas + 4 * n1, *dZ = bas + 5 * n1;
    for (int k = 0; k < n1; ++k)
      for (int j = 0; j < n1; ++j)
        for (int i = 0; i < n1; ++i) {
          double* x = &out[3 * nodes[lidx(i, j, k, n1)]];
          const double g0 = dX[i] * Y[j] * Z[k], g1 = X[i] * dY[j] * Z[k], g2 = X[i] * Y[j] * dZ[k];
          for (int c = 0; c < 3; ++c) x[c] += g0 * S[c][0] + g1 * S[c][1] + g2 * S[c][2];
        }
  }
};

}  // namespace

void SemiDiscreteSystem::face_term(const DGFace& f, const std::vector<double>& u, std::vector<double>& out) const {
  const auto& B1 = bases_[dofs_.elem_degree[f.e1]];
  const auto& B2 = bases_[dofs_.elem_degree[f.e2]];
  const auto& M1 = mat_.of(mesh_.elements[f.e1].block);
  const auto& M2 = mat_.of(mesh_.elements[f.e2].block);
  const double l1 = M1.lambda(), mu1 = M1.mu(), l2 = M2.lambda(), mu2 = M2.mu();
  const int m1 = B2.n1();
  for (std::size_t q = 0; q < f.points.size(); ++q) {
    const auto& p = f.points[q];
    const SideAccess s1{&B1, dofs_.nodes_of(f.e1), p.local1, nullptr, p.jinv1};
    const SideAccess s2{&B2, dofs_.nodes_of(f.e2), p.local2, f.basis2.data() + 6 * m1 * q, p.jinv2};
    const Vec3& n = p.normal;
    const Vec3 a = s1.value(u) - s2.value(u);
    const Mat3 sig1 = stress(s1.gradient(u), l1, mu1);
    const Mat3 sig2 = stress(s2.gradient(u), l2, mu2);
    const Vec3 t1 = mat_vec(sig1, n), t2 = mat_vec(sig2, n);
    const double an = dot(a, n);
    Vec3 r;
    for (int c = 0; c < 3; ++c) r[c] = p.weight * (-0.5 * (t1[c] + t2[c]) + f.eta * 0.5 * (a[c] + an * n[c]));
    s1.scatter_value(r, out);
    s2.scatter_value(-1.0 * r, out);
    // -{sigma(v)} : [[u]] with [[u]] = sym(a n^T)
    Mat3 T1{}, T2{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double sym = 0.5 * (a[i] * n[j] + n[i] * a[j]);
        T1[i][j] = -0.5 * p.weight * 2.0 * mu1 * sym;
        T2[i][j] = -0.5 * p.weight * 2.0 * mu2 * sym;
      }
    for (int i = 0; i < 3; ++i) {
      T1[i][i] -= 0.5 * p.weight * l1 * an;
      T2[i][i] -= 0.5 * p.weight * l2 * an;
    }
    s1.scatter_gradient(T1, out);
    s2.scatter_gradient(T2, out);
  }
}

void SemiDiscreteSystem::apply_A(const std::vector<double>& u, std::vector<double>& out) const {
  if (u.size() != n_dofs()) throw DomainError("dgsolver", "vector size mismatch");
  out.assign(n_dofs(), 0.0);
  const int ne = static_cast<int>(mesh_.elements.size());
  const int threads = std::max(1, std::min(opt_.threads, ne));
  if (threads == 1) {
    for (int e = 0; e < ne; ++e) volume_element(e, u.data(), out.data());
  } else {
    std::vector<std::vector<double>> partial(threads);
    parallel_for(threads, threads, [&](int t) {
      partial[t].assign(n_dofs(), 0.0);
      const int lo = static_cast<int>(static_cast<long>(ne) * t / threads);
      const int hi = static_cast<int>(static_cast<long>(ne) * (t + 1) / threads);
      for (int e = lo; e < hi; ++e) volume_element(e, u.data(), partial[t].data());
    });
    for (const auto& p : partial)
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += p[i];
  }
  for (const auto& f : faces_) face_term(f, u, out);
  for (int d : constrained_) out[d] = 0.0;
}

void SemiDiscreteSystem::add_M2(const std::vector<double>& u, std::vector<double>& out) const {
  for (const auto& af : absorbing_) {
    const auto& M = mat_.of(mesh_.elements[af.elem].block);
    const double c = M.rho * M.vs * (M.vp - 2.0 * M.vs);
    if (c == 0.0) continue;
    const int* nodes = dofs_.nodes_of(af.elem);
    for (const auto& p : af.points) {
      Mat3 G;
      gradient_at_node(af.elem, p.local1, u, G);
      const Vec3& n = p.normal;
      // P G and P G^T n with P = I - n n^T
      Mat3 PG;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) PG[i][j] = G[i][j] - n[i] * (n[0] * G[0][j] + n[1] * G[1][j] + n[2] * G[2][j]);
      const double trPG = PG[0][0] + PG[1][1] + PG[2][2];
      Vec3 gtn{G[0][0] * n[0] + G[1][0] * n[1] + G[2][0] * n[2], G[0][1] * n[0] + G[1][1] * n[1] + G[2][1] * n[2],
               G[0][2] * n[0] + G[1][2] * n[1] + G[2][2] * n[2]};
      const double gn = dot(gtn, n);
      for (int i = 0; i < 3; ++i) gtn[i] -= gn * n[i];
      const int node = nodes[p.local1];
      for (int i = 0; i < 3; ++i) out[3 * node + i] += -c * p.weight * (trPG * n[i] - gtn[i]);
    }
  }
  for (int d : constrained_) out[d] = 0.0;
}

void SemiDiscreteSystem::apply_Q(const std::vector<double>& u, std::vector<double>& out) const {
  apply_A(u, out);
  if (opt_.absorbing_tangential) add_M2(u, out);
}

void SemiDiscreteSystem::add_M1(const std::vector<double>& v, std::vector<double>& out) const {
  for (const auto& [node, K] : m1_) {
    const Vec3 x{v[3 * node], v[3 * node + 1], v[3 * node + 2]};
    const Vec3 y = mat_vec(K, x);
    for (int c = 0; c < 3; ++c) out[3 * node + c] += y[c];
  }
  for (int d : constrained_) out[d] = 0.0;
}

// ---------------------------------------------------------------------------
// Point location and evaluation

bool SemiDiscreteSystem::locate(const Vec3& x, int& elem, Vec3& xi, const std::function<bool(int)>& prefer) const {
  std::array<int, 3> c{};
  for (int i = 0; i < 3; ++i) {
    const double f = (x[i] - grid_lo_[i]) / grid_cell_[i];
    if (f < -1e-9 * grid_n_[i] || f > grid_n_[i] * (1.0 + 1e-9)) return false;
    c[i] = std::clamp(static_cast<int>(std::floor(f)), 0, grid_n_[i] - 1);
  }
  int found = -1;
  Vec3 found_xi{};
  for (int e : buckets_[c[0] + grid_n_[0] * (c[1] + grid_n_[1] * c[2])]) {
    Vec3 r;
    if (!mesh::invert_map(mesh::ReferenceMap::of(mesh_, e), x, r, 1e-8)) continue;
    for (auto& v : r) v = std::clamp(v, -1.0, 1.0);
    if (found < 0 || (prefer && prefer(e) && !prefer(found))) {
      found = e;
      found_xi = r;
      if (!prefer || prefer(e)) break;
    }
  }
  if (found < 0) return false;
  elem = found;
  xi = found_xi;
  return true;
}

Vec3 SemiDiscreteSystem::evaluate(const std::vector<double>& u, int elem, const Vec3& xi) const {
  const auto& B = bases_[dofs_.elem_degree[elem]];
  const int n1 = B.n1();
  std::vector<double> bas(6 * n1);
  quadrature::Lagrange lag(B.nodes);
  for (int i = 0; i < 3; ++i) lag.values_and_derivatives(xi[i], bas.data() + i * n1, bas.data() + (3 + i) * n1);
  const SideAccess s{&B, dofs_.nodes_of(elem), -1, bas.data(), Mat3{}};
  return s.value(u);
}

std::vector<double> SemiDiscreteSystem::interpolate(const std::function<Vec3(const Vec3&)>& f) const {
  std::vector<double> u(n_dofs());
  for (int n = 0; n < dofs_.n_nodes(); ++n) {
    const Vec3 v = f(dofs_.coords[n]);
    for (int c = 0; c < 3; ++c) u[3 * n + c] = v[c];
  }
  for (int d : constrained_) u[d] = 0.0;
  return u;
}

// ---------------------------------------------------------------------------
// Sources

PlaneBodyForce::PlaneBodyForce(const SemiDiscreteSystem& sys, double z0, synth::RickerParams ricker)
    : ricker_(ricker) {
  ricker_.validate();
  const auto& m = sys.mesh();
  const double tol = 1e-9 * std::max(1.0, m.box_hi[2] - m.box_lo[2]);
  std::map<int, double> w;
  for (int e = 0; e < static_cast<int>(m.elements.size()); ++e) {
    const auto map = mesh::ReferenceMap::of(m, e);
    const Vec3 c = map({0.0, 0.0, 0.0});
    if (c[2] >= z0) continue;
    for (int f = 0; f < 6; ++f) {
      bool on = true;
      for (int v : mesh::face_vertices(f)) on = on && std::abs(map.x[v][2] - z0) <= tol;
      if (!on) continue;
      const auto& B = sys.basis(sys.dofs().elem_degree[e]);
      const int n1 = B.n1();
      const FaceNodes fn = face_nodes(f, B.degree);
      const int* nodes = sys.dofs().nodes_of(e);
      for (int t = 0; t < n1; ++t)
        for (int s = 0; s < n1; ++s) {
          Vec3 xi{};
          xi[fn.axis] = mesh::face_side(f);
          xi[fn.a] = B.nodes[s];
          xi[fn.b] = B.nodes[t];
          const auto jac = mesh::jacobian(map, xi);
          const Vec3 ca{jac.J[0][fn.a], jac.J[1][fn.a], jac.J[2][fn.a]};
          const Vec3 cb{jac.J[0][fn.b], jac.J[1][fn.b], jac.J[2][fn.b]};
          w[nodes[face_local(fn, s, t, n1)]] += B.weights[s] * B.weights[t] * norm(cross(ca, cb));
        }
    }
  }
  if (w.empty()) throw ConfigError("dgsolver", "source plane z0 is not a union of element faces");
  weights_.assign(w.begin(), w.end());
}

void PlaneBodyForce::assemble(double t, std::vector<double>& F) const {
  const double r = synth::ricker(ricker_, t);
  for (const auto& [node, w] : weights_) F[3 * node + 2] += r * w;
}

double PlaneBodyForce::total_area() const {
  double a = 0.0;
  for (const auto& nw : weights_) a += nw.second;
  return a;
}

ScatteredFieldSource::ScatteredFieldSource(const SemiDiscreteSystem& sys, synth::PlaneWave incident)
    : sys_(sys), incident_(incident) {
  const auto& mat = sys.materials();
  if (!(mat.elastic_inner == incident.medium) || !(mat.elastic_outer == incident.medium))
    throw ConfigError("dgsolver", "scattered-field source needs a homogeneous elastic background");
  const auto& ac = mat.acoustic;
  volume_coef_ = ac.rho * (ac.vp * ac.vp / (incident.medium.vp * incident.medium.vp) - 1.0);
  std::vector<char> seen(sys.dofs().n_nodes(), 0);
  const auto& m = sys.mesh();
  for (int e = 0; e < static_cast<int>(m.elements.size()); ++e) {
    if (m.elements[e].block != mesh::Block::Acoustic) continue;
    const int n3 = sys.basis(sys.dofs().elem_degree[e]).n3();
    const int* nodes = sys.dofs().nodes_of(e);
    for (int l = 0; l < n3; ++l)
      if (!seen[nodes[l]]) {
        seen[nodes[l]] = 1;
        volume_nodes_.push_back({nodes[l], sys.mass()[nodes[l]] / ac.rho});
      }
  }
}

Vec3 ScatteredFieldSource::interface_mismatch(const Vec3& x, const Vec3& n_e, double t) const {
  const auto& a = sys_.materials().acoustic;
  const auto& e = incident_.medium;
  const double s = incident_.strain(x[2], t);
  // ((lambda_a - lambda_e) s I + 2 (mu_a - mu_e) s z z^T) n_e
  Vec3 r = ((a.lambda() - e.lambda()) * s) * n_e;
  r[2] += 2.0 * (a.mu() - e.mu()) * s * n_e[2];
  return r;
}

void ScatteredFieldSource::assemble(double t, std::vector<double>& F) const {
  if (volume_coef_ != 0.0)
    for (const auto& [node, m] : volume_nodes_)
      F[3 * node + 2] += volume_coef_ * m * incident_.acceleration(sys_.dofs().coords[node][2], t);
  for (const auto& f : sys_.dg_faces()) {
    if (!f.acoustic_elastic) continue;
    const auto& B1 = sys_.basis(sys_.dofs().elem_degree[f.e1]);
    const auto& B2 = sys_.basis(sys_.dofs().elem_degree[f.e2]);
    const int m1 = B2.n1();
    for (std::size_t q = 0; q < f.points.size(); ++q) {
      const auto& p = f.points[q];
      const Vec3 g = (0.5 * p.weight) * interface_mismatch(p.x, -1.0 * p.normal, t);
      if (g[0] == 0.0 && g[1] == 0.0 && g[2] == 0.0) continue;
      SideAccess{&B1, sys_.dofs().nodes_of(f.e1), p.local1, nullptr, p.jinv1}.scatter_value(g, F);
      SideAccess{&B2, sys_.dofs().nodes_of(f.e2), p.local2, f.basis2.data() + 6 * m1 * q, p.jinv2}.scatter_value(g, F);
    }
  }
}

// ---------------------------------------------------------------------------
// Time stepping

double cfl_dt(double h_min, double vp_max, const TimeIntegrationConfig& cfg) {
  if (!(h_min > 0.0) || !(vp_max > 0.0)) throw ConfigError("dgsolver", "CFL needs positive h_min and vp_max");
  return cfg.cfl_safety * cfg.cfl_const * h_min / vp_max;
}

double cfl_dt(const mesh::HexMesh& mesh, const BlockMaterials& mat, const TimeIntegrationConfig& cfg) {
  double vp = 0.0;
  bool has[3] = {false, false, false};
  for (const auto& e : mesh.elements) has[static_cast<int>(e.block)] = true;
  if (has[0]) vp = std::max(vp, mat.elastic_outer.vp);
  if (has[1]) vp = std::max(vp, mat.elastic_inner.vp);
  if (has[2]) vp = std::max(vp, mat.acoustic.vp);
  return cfl_dt(mesh::min_edge_length(mesh), vp, cfg);
}

double max_eigenvalue(const SemiDiscreteSystem& sys, int iterations, unsigned seed) {
  const std::size_t n = sys.n_dofs();
  std::vector<double> isq(n);
  for (std::size_t i = 0; i < n; ++i) isq[i] = 1.0 / std::sqrt(sys.mass()[i / 3]);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> x(n), y(n), tmp(n);
  for (auto& v : x) v = dist(rng);
  for (int d : sys.constrained()) x[d] = 0.0;
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    double nx = 0.0;
    for (double v : x) nx += v * v;
    nx = std::sqrt(nx);
    if (!(nx > 0.0)) break;
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] / nx * isq[i];
    sys.apply_Q(tmp, y);
    double rq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] *= isq[i];
      rq += y[i] * x[i] / nx;
    }
    lambda = rq;
    x.swap(y);
  }
  return lambda;
}

SpectrumBounds stiffness_spectrum(const SemiDiscreteSystem& sys, int iterations, unsigned seed) {
  const std::size_t n = sys.n_dofs();
  std::vector<double> isq(n);
  for (std::size_t i = 0; i < n; ++i) isq[i] = 1.0 / std::sqrt(sys.mass()[i / 3]);
  std::vector<char> fixed(n, 0);
  for (int d : sys.constrained()) fixed[d] = 1;
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(n, 0.0), vprev(n, 0.0), w(n), tmp(n);
  double nv = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (!fixed[i]) {
      v[i] = dist(rng);
      nv += v[i] * v[i];
    }
  nv = std::sqrt(nv);
  for (auto& x : v) x /= nv;
  std::vector<double> alpha, beta;
  double b = 0.0;
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) tmp[i] = v[i] * isq[i];
    sys.apply_A(tmp, w);
    double a = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] *= isq[i];
      a += w[i] * v[i];
    }
    alpha.push_back(a);
    double nb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] -= a * v[i] + b * vprev[i];
      nb += w[i] * w[i];
    }
    b = std::sqrt(nb);
    if (!(b > 1e-14 * std::abs(a))) break;
    beta.push_back(b);
    vprev.swap(v);
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / b;
  }
  const int m = static_cast<int>(alpha.size());
  Eigen::VectorXd d(m), e(std::max(m - 1, 0));
  for (int i = 0; i < m; ++i) d[i] = alpha[i];
  for (int i = 0; i + 1 < m; ++i) e[i] = beta[i];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(d, e, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

double critical_dt(const SemiDiscreteSystem& sys, int iterations) {
  const double lmax = sys.options().absorbing_tangential ? max_eigenvalue(sys, iterations)
                                                         : stiffness_spectrum(sys, std::min(iterations, 150)).max;
  if (!(lmax > 0.0)) throw NumericalError("dgsolver", "non-positive spectral radius estimate");
  return 2.0 / std::sqrt(lmax);
}

namespace {

struct ReceiverSampler {
  int elem = -1;
  std::vector<int> nodes;
  std::vector<double> phi;

  ReceiverSampler(const SemiDiscreteSystem& sys, const ReceiverSpec& r) {
    Vec3 xi;
    std::function<bool(int)> prefer;
    if (r.prefer) {
      const auto b = *r.prefer;
      prefer = [&sys, b](int e) { return sys.mesh().elements[e].block == b; };
    }
    if (!sys.locate(r.position, elem, xi, prefer))
      throw ConfigError("dgsolver", "receiver " + r.id + " lies outside the mesh");
    const auto& B = sys.basis(sys.dofs().elem_degree[elem]);
    const int n1 = B.n1();
    quadrature::Lagrange lag(B.nodes);
    std::vector<double> v(3 * n1);
    for (int i = 0; i < 3; ++i) lag.values(xi[i], v.data() + i * n1);
    const int* en = sys.dofs().nodes_of(elem);
    for (int k = 0; k < n1; ++k)
      for (int j = 0; j < n1; ++j)
        for (int i = 0; i < n1; ++i) {
          const double p = v[i] * v[n1 + j] * v[2 * n1 + k];
          if (p == 0.0) continue;
          nodes.push_back(en[lidx(i, j, k, n1)]);
          phi.push_back(p);
        }
  }

  Vec3 sample(const std::vector<double>& u) const {
    Vec3 r{0, 0, 0};
    for (std::size_t i = 0; i < nodes.size(); ++i)
      for (int c = 0; c < 3; ++c) r[c] += phi[i] * u[3 * nodes[i] + c];
    return r;
  }
};

}  // namespace

RunResult leapfrog_run(const SemiDiscreteSystem& sys, const Source* source, const TimeIntegrationConfig& cfg,
                       const std::vector<ReceiverSpec>& receivers, const RunOptions& opt) {
  if (!(cfg.dt > 0.0) || cfg.n_steps < 1) throw ConfigError("dgsolver", "time step and step count must be positive");
  const std::size_t n = sys.n_dofs();
  const double dt = cfg.dt, dt2 = dt * dt;
  const auto& mass = sys.mass();

  // Block-diagonal left-hand side (M0 + dt/2 M1)^{-1}.
  std::vector<double> inv_mass(mass.size());
  for (std::size_t i = 0; i < mass.size(); ++i) inv_mass[i] = 1.0 / mass[i];
  std::vector<std::pair<int, Mat3>> lhs_inv;
  std::vector<char> has_block(mass.size(), 0);
  for (const auto& [node, K] : sys.m1_blocks()) {
    Mat3 L = K;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) L[i][j] = 0.5 * dt * K[i][j] + (i == j ? mass[node] : 0.0);
    lhs_inv.push_back({node, invert3(L)});
    has_block[node] = 1;
  }

  std::vector<ReceiverSampler> samplers;
  samplers.reserve(receivers.size());
  for (const auto& r : receivers) samplers.emplace_back(sys, r);

  RunResult res;
  synth::TimeGrid grid{dt, cfg.n_steps, 0.0};
  for (const auto& r : receivers)
    for (auto c : opt.components) {
      synth::Seismogram s;
      s.id = r.id;
      s.receiver = r.position;
      s.component = c;
      s.grid = grid;
      s.values.assign(cfg.n_steps, 0.0);
      res.seismograms.push_back(std::move(s));
    }
  auto record = [&](int step, const std::vector<double>& u) {
    std::size_t idx = 0;
    for (const auto& sm : samplers) {
      const Vec3 v = sm.sample(u);
      for (auto c : opt.components) res.seismograms[idx++].values[step] = v[static_cast<int>(c)];
    }
  };

  std::vector<int> snap_steps;
  if (opt.snapshots)
    for (double t : opt.snapshots->times) {
      const int s = static_cast<int>(std::lround(t / dt));
      if (s >= 0 && s < cfg.n_steps) snap_steps.push_back(s);
    }
  auto snapshot = [&](int step, const std::vector<double>& u) {
    for (int s : snap_steps)
      if (s == step) {
        std::ostringstream name;
        name << opt.snapshots->directory << (opt.snapshots->directory.empty() ? "" : "/") << opt.snapshots->prefix
             << "_" << std::setw(6) << std::setfill('0') << step << ".vtk";
        write_snapshot(sys, u, *opt.snapshots, name.str(), step * dt);
        res.snapshot_files.push_back(name.str());
        break;
      }
  };

  const auto& fixed = sys.constrained();
  std::vector<double> Um(n, 0.0), U(n, 0.0), Up(n, 0.0), AU(n, 0.0), F(n, 0.0), rhs(n, 0.0);

  auto solve_lhs = [&](std::vector<double>& r, std::vector<double>& out) {
    for (std::size_t node = 0; node < mass.size(); ++node)
      if (!has_block[node])
        for (int c = 0; c < 3; ++c) out[3 * node + c] = r[3 * node + c] * inv_mass[node];
    for (const auto& [node, L] : lhs_inv) {
      const Vec3 x{r[3 * node], r[3 * node + 1], r[3 * node + 2]};
      const Vec3 y = mat_vec(L, x);
      for (int c = 0; c < 3; ++c) out[3 * node + c] = y[c];
    }
    for (int d : fixed) out[d] = 0.0;
  };

  // Reference energy: the larger of the early-time maximum and the total
  // work done by the source so far, so a growing source is not mistaken for
  // an instability.
  double source_work = 0.0;
  std::vector<double> running_max;
  auto energy_check = [&](int step, double E) {
    res.energy.push_back(E);
    running_max.push_back(std::max(running_max.empty() ? 0.0 : running_max.back(), std::abs(E)));
    const double ref = std::max(running_max[step / 2], source_work);
    if (!std::isfinite(E) || (ref > 0.0 && std::abs(E) > opt.blowup_factor * ref)) {
      res.blew_up = true;
      res.blowup_step = step;
    }
  };
  auto kinetic = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double k = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = a[i] - b[i];
      k += mass[i / 3] * d * d;
    }
    return 0.5 * k / dt2;
  };

  // Step 0 -> 1
  record(0, U);
  snapshot(0, U);
  std::fill(F.begin(), F.end(), 0.0);
  if (source) source->assemble(0.0, F);
  for (std::size_t i = 0; i < n; ++i) Up[i] = 0.5 * dt2 * F[i] * inv_mass[i / 3];
  for (int d : fixed) Up[d] = 0.0;
  if (opt.track_energy) {
    for (std::size_t i = 0; i < n; ++i) source_work += 0.5 * std::abs(F[i] * Up[i]);
    energy_check(0, kinetic(Up, U));
  }
  Um.swap(U);
  U.swap(Up);
  res.steps = 1;

  for (int step = 1; step < cfg.n_steps && !res.blew_up; ++step) {
    const double t = step * dt;
    record(step, U);
    snapshot(step, U);
    sys.apply_A(U, AU);
    std::fill(F.begin(), F.end(), 0.0);
    if (source) source->assemble(t, F);
    // rhs = 2 M0 U - dt^2 (A + M2) U + (-M0 + dt/2 M1) U_- + dt^2 F
    for (std::size_t i = 0; i < n; ++i) {
      const double m = mass[i / 3];
      rhs[i] = 2.0 * m * U[i] - dt2 * AU[i] - m * Um[i] + dt2 * F[i];
    }
    if (sys.options().absorbing_tangential) {
      std::vector<double> m2(n, 0.0);
      sys.add_M2(U, m2);
      for (std::size_t i = 0; i < n; ++i) rhs[i] -= dt2 * m2[i];
    }
    {
      std::vector<double>& tmp = Up;  // reuse as scratch for M1 U_-
      std::fill(tmp.begin(), tmp.end(), 0.0);
      sys.add_M1(Um, tmp);
      for (std::size_t i = 0; i < n; ++i) rhs[i] += 0.5 * dt * tmp[i];
    }
    solve_lhs(rhs, Up);
    if (opt.track_energy) {
      double pot = 0.0, work = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        pot += Up[i] * AU[i];
        work += F[i] * (Up[i] - Um[i]);
      }
      source_work += 0.5 * std::abs(work);
      energy_check(step, kinetic(Up, U) + 0.5 * pot);
    } else if (!std::isfinite(Up[0]) || !std::isfinite(Up[n / 2])) {
      res.blew_up = true;
      res.blowup_step = step;
    }
    Um.swap(U);
    U.swap(Up);
    res.steps = step + 1;
    if (opt.progress && opt.progress_interval > 0 && step % opt.progress_interval == 0) opt.progress(step);
  }
  if (res.blew_up && opt.throw_on_blowup) {
    std::ostringstream msg;
    msg << "solution blew up at step " << res.blowup_step << " (t = " << res.blowup_step * dt << " s); dt = " << dt
        << " s exceeds the stability limit, reduce cfl_safety or coarsen the smallest elements";
    throw NumericalError("dgsolver", msg.str());
  }
  res.final_state = std::move(U);
  return res;
}

void write_snapshot(const SemiDiscreteSystem& sys, const std::vector<double>& u, const SnapshotSpec& spec,
                    const std::string& path, double t) {
  if (!(spec.spacing > 0.0) || spec.x_max < spec.x_min || spec.z_max < spec.z_min)
    throw ConfigError("dgsolver", "invalid snapshot window");
  const int nx = static_cast<int>(std::floor((spec.x_max - spec.x_min) / spec.spacing + 1e-9)) + 1;
  const int nz = static_cast<int>(std::floor((spec.z_max - spec.z_min) / spec.spacing + 1e-9)) + 1;
  std::ofstream out(path);
  if (!out) throw ConfigError("dgsolver", "cannot write " + path);
  out << "# vtk DataFile Version 3.0\ndisplacement slice y=0\nASCII\nDATASET STRUCTURED_POINTS\n";
  out << "DIMENSIONS " << nx << " 1 " << nz << "\nORIGIN " << spec.x_min << " 0 " << spec.z_min << "\nSPACING "
      << spec.spacing << " 1 " << spec.spacing << "\n";
  out << "POINT_DATA " << nx * nz << "\nVECTORS displacement double\n";
  out << std::setprecision(9);
  for (int k = 0; k < nz; ++k)
    for (int i = 0; i < nx; ++i) {
      const Vec3 x{spec.x_min + i * spec.spacing, 0.0, spec.z_min + k * spec.spacing};
      int e;
      Vec3 xi;
      Vec3 v{0, 0, 0};
      if (sys.locate(x, e, xi)) v = sys.evaluate(u, e, xi);
      if (spec.background) v = v + spec.background(x, t);
      out << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
    }
}

}  // namespace cavscat::dg
