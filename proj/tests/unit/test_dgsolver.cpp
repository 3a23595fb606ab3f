#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "cavscat/dgsolver.hpp"
#include "cavscat/errors.hpp"
#include "cavscat/point_index.hpp"
#include "cavscat/quadrature.hpp"
#include "doctest.h"

using namespace cavscat;
using namespace cavscat::dg;

namespace {

mesh::HexMesh small_sphere(double h_inner = 25.0, double h_outer = 50.0) {
  mesh::SphereInBoxParams p;
  p.radius = 30;
  p.inner_box_half = 50;
  p.outer_box_dims = {200, 200, 200};
  p.h_inner = h_inner;
  p.h_outer = h_outer;
  p.n_radial_layers = 1;
  return mesh::build_sphere_in_box(p);
}

BlockMaterials all_elastic() {
  BlockMaterials m;
  m.acoustic = m.elastic_inner = m.elastic_outer = kRock;
  return m;
}

double max_abs(const std::vector<double>& v) {
  double r = 0.0;
  for (double x : v) r = std::max(r, std::abs(x));
  return r;
}

double dotv(const std::vector<double>& a, const std::vector<double>& b) {
  double r = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r += a[i] * b[i];
  return r;
}

bool on_box_boundary(const mesh::HexMesh& m, const Vec3& x) {
  for (int i = 0; i < 3; ++i)
    if (std::abs(x[i] - m.box_lo[i]) < 1e-9 || std::abs(x[i] - m.box_hi[i]) < 1e-9) return true;
  return false;
}

// Largest residual at nodes off the outer boundary relative to the largest
// boundary entry (the constant-stress tractions there).
double interior_residual(const SemiDiscreteSystem& sys, const std::vector<double>& r) {
  double inner = 0.0, outer = 0.0;
  for (int n = 0; n < sys.dofs().n_nodes(); ++n) {
    const bool b = on_box_boundary(sys.mesh(), sys.dofs().coords[n]);
    for (int c = 0; c < 3; ++c) (b ? outer : inner) = std::max(b ? outer : inner, std::abs(r[3 * n + c]));
  }
  REQUIRE(outer > 0.0);
  return inner / outer;
}

Mat3 sample_gradient() { return Mat3{{{0.3, -1.1, 0.7}, {0.4, 0.2, -0.9}, {1.3, 0.5, -0.6}}}; }

Vec3 linear_field(const Vec3& x) {
  const Mat3 G = sample_gradient();
  Vec3 u;
  for (int i = 0; i < 3; ++i) u[i] = 1e-3 * (G[i][0] * x[0] + G[i][1] * x[1] + G[i][2] * x[2]) + 0.2 * i;
  return u;
}

// Dense M0^{-1/2} A M0^{-1/2} of a small system.
Eigen::MatrixXd dense_scaled(const SemiDiscreteSystem& sys) {
  const int n = static_cast<int>(sys.n_dofs());
  Eigen::MatrixXd S(n, n);
  std::vector<double> e(n, 0.0), col;
  for (int j = 0; j < n; ++j) {
    e[j] = 1.0;
    sys.apply_A(e, col);
    e[j] = 0.0;
    for (int i = 0; i < n; ++i) S(i, j) = col[i] / std::sqrt(sys.mass()[i / 3] * sys.mass()[j / 3]);
  }
  return S;
}

mesh::HexMesh column(double zlo, double zhi, int nz, double width = 20.0) {
  auto m = mesh::build_box({-width / 2, -width / 2, zlo}, {width / 2, width / 2, zhi}, {1, 1, nz});
  for (int s = 0; s < 4; ++s) m.side_kind[s] = mesh::BoundaryKind::Roller;
  m.faces = mesh::classify_faces(m);
  return m;
}

}  // namespace

TEST_CASE("spectral basis") {
  for (int N : {1, 2, 4, 7}) {
    const auto B = SpectralBasis::make(N);
    double s = 0.0;
    for (double w : B.weights) s += w;
    CHECK(s == doctest::Approx(2.0).epsilon(1e-14));
    // derivative of x^N sampled at the nodes
    for (int i = 0; i <= N; ++i) {
      double d = 0.0;
      for (int j = 0; j <= N; ++j) d += B.D[i * (N + 1) + j] * std::pow(B.nodes[j], N);
      CHECK(d == doctest::Approx(N * std::pow(B.nodes[i], N - 1)).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(SpectralBasis::make(0), ConfigError);
}

TEST_CASE("trace jump and average") {
  const Vec3 n{0.0, 0.6, 0.8};
  const Vec3 v{1.0, -2.0, 0.5};
  const auto same = trace_jump_average(v, n, v, -1.0 * n);
  for (const auto& row : same.jump)
    for (double x : row) CHECK(x == doctest::Approx(0.0).scale(1.0));
  CHECK(same.average == v);

  const auto unit = trace_jump_average({0, 0, 1}, {0, 0, 1}, {0, 0, 0}, {0, 0, -1});
  const Mat3 expected{{{0, 0, 0}, {0, 0, 0}, {0, 0, 1}}};
  CHECK(unit.jump == expected);

  std::mt19937 rng(7);
  std::normal_distribution<double> g;
  for (int k = 0; k < 20; ++k) {
    const Vec3 a{g(rng), g(rng), g(rng)}, nn = normalized(Vec3{g(rng), g(rng), g(rng)});
    const auto r = trace_jump_average(a, nn);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(r.jump[i][j] == r.jump[j][i]);
    CHECK(r.jump[0][0] + r.jump[1][1] + r.jump[2][2] == doctest::Approx(dot(a, nn)).epsilon(1e-14));
    CHECK(r.average == a);
  }
}

TEST_CASE("tangent frames are right handed") {
  std::mt19937 rng(3);
  std::normal_distribution<double> g;
  for (int k = 0; k < 100; ++k) {
    const Vec3 n = normalized(Vec3{g(rng), g(rng), g(rng)});
    const auto t = tangent_frame(n);
    const Vec3 c = cross(t[0], t[1]);
    for (int i = 0; i < 3; ++i) CHECK(c[i] == doctest::Approx(n[i]).epsilon(1e-12).scale(1.0));
    CHECK(std::abs(dot(t[0], n)) < 1e-12);
  }
  const auto sys = SemiDiscreteSystem::build(small_sphere(), {}, {.degree = 2});
  int points = 0;
  for (const auto& f : sys->absorbing_faces())
    for (const auto& p : f.points) {
      const Vec3 c = cross(p.tau1, p.tau2);
      CHECK(norm(c - p.normal) < 1e-12);
      ++points;
    }
  CHECK(points == 6 * 16 * 9);
}

TEST_CASE("dof map and mass") {
  const auto m = small_sphere();
  const auto sys = SemiDiscreteSystem::build(m, {}, {.degree = 3});
  const auto& d = sys->dofs();
  // Nodes of different continuity groups never coincide in index.
  for (std::size_t e = 0; e < m.elements.size(); ++e)
    for (int l = 0; l < 64; ++l) CHECK(d.node_group[d.nodes_of(static_cast<int>(e))[l]] == d.elem_group[e]);
  // Mass sums to the material-weighted volume.
  double mass = 0.0, oracle = 0.0;
  for (double v : sys->mass()) mass += v;
  for (std::size_t e = 0; e < m.elements.size(); ++e)
    oracle += sys->materials().of(m.elements[e].block).rho * mesh::element_volume(m, static_cast<int>(e));
  CHECK(mass == doctest::Approx(oracle).epsilon(1e-10));
  for (double v : sys->mass()) CHECK(v > 0.0);
  // Nodes on the interior side of Gamma_I and on the elastic side are distinct.
  PointIndex idx(1e-6);
  int duplicates = 0;
  for (const auto& x : d.coords) {
    if (idx.find(x) >= 0) ++duplicates;
    idx.insert(x);
  }
  CHECK(duplicates > 0);
  CHECK(sys->dg_faces().size() == 6 * 16 + 96);
  for (const auto& f : sys->dg_faces()) CHECK(f.eta > 0.0);
}

TEST_CASE("rigid motions lie in the kernel of A") {
  const auto sys = SemiDiscreteSystem::build(small_sphere(), {}, {.degree = 4});
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<double> ref(sys->n_dofs()), Aref;
  for (auto& v : ref) v = U(rng);
  sys->apply_A(ref, Aref);
  const double scale = max_abs(Aref);
  const auto translation = sys->interpolate([](const Vec3&) { return Vec3{0.3, -0.7, 1.0}; });
  const auto rotation = sys->interpolate([](const Vec3& x) { return 1e-2 * cross(Vec3{0.2, 0.5, -0.4}, x); });
  for (const auto* u : {&translation, &rotation}) {
    std::vector<double> r;
    sys->apply_A(*u, r);
    CHECK(max_abs(r) < 1e-9 * scale);
  }
}

TEST_CASE("patch test: linear fields across conforming and non-conforming interfaces") {
  SUBCASE("two-block conforming box with a DG interface") {
    auto m = mesh::build_box({-40, -40, -40}, {40, 40, 40}, {2, 2, 4}, [](const Vec3& c) {
      return c[2] > 0 ? mesh::Block::Acoustic : mesh::Block::ElasticOuter;
    });
    REQUIRE(m.faces.acoustic_elastic.size() == 4);
    const auto sys = SemiDiscreteSystem::build(m, all_elastic(), {.degree = 3});
    std::vector<double> r;
    sys->apply_A(sys->interpolate(linear_field), r);
    CHECK(interior_residual(*sys, r) < 1e-9);
  }
  SUBCASE("every face discontinuous") {
    auto m = mesh::build_box({0, 0, 0}, {30, 20, 40}, {3, 2, 2});
    const auto sys = SemiDiscreteSystem::build(m, {}, {.degree = 2, .discontinuous_everywhere = true});
    std::vector<double> r;
    sys->apply_A(sys->interpolate(linear_field), r);
    CHECK(interior_residual(*sys, r) < 1e-9);
  }
  SUBCASE("curved sphere and non-conforming box faces") {
    const auto sys = SemiDiscreteSystem::build(small_sphere(), all_elastic(), {.degree = 4});
    std::vector<double> r;
    sys->apply_A(sys->interpolate(linear_field), r);
    CHECK(interior_residual(*sys, r) < 1e-9);
  }
}

TEST_CASE("A is symmetric and positive semidefinite above the penalty threshold") {
  auto m = mesh::build_box({0, 0, 0}, {20, 10, 10}, {2, 1, 1}, [](const Vec3& c) {
    return c[0] > 10 ? mesh::Block::Acoustic : mesh::Block::ElasticOuter;
  });
  const auto sys = SemiDiscreteSystem::build(m, {}, {.degree = 2});
  const Eigen::MatrixXd S = dense_scaled(*sys);
  CHECK((S - S.transpose()).cwiseAbs().maxCoeff() < 1e-10 * S.cwiseAbs().maxCoeff());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  const double lmax = es.eigenvalues().maxCoeff();
  CHECK(es.eigenvalues().minCoeff() > -1e-10 * lmax);

  // A tiny penalty destroys coercivity.
  const auto weak = SemiDiscreteSystem::build(m, {}, {.degree = 2, .penalty = {.alpha = 0.01}});
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_weak(dense_scaled(*weak));
  CHECK(es_weak.eigenvalues().minCoeff() < -1e-6 * lmax);

  // Lanczos probe agrees with the dense spectrum on its extremes.
  const auto b = stiffness_spectrum(*sys, 400);
  CHECK(b.max == doctest::Approx(lmax).epsilon(1e-6));
  const auto bw = stiffness_spectrum(*weak, 400);
  CHECK(bw.min < 0.0);
}

TEST_CASE("symmetry and smallest-eigenvalue probe on a sphere mesh") {
  const auto sys = SemiDiscreteSystem::build(small_sphere(), {}, {.degree = 3});
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<double> u(sys->n_dofs()), v(sys->n_dofs()), Au, Av;
  for (auto& x : u) x = U(rng);
  for (auto& x : v) x = U(rng);
  sys->apply_A(u, Au);
  sys->apply_A(v, Av);
  CHECK(std::abs(dotv(u, Av) - dotv(v, Au)) < 1e-12 * std::sqrt(dotv(Au, Au) * dotv(v, v)));
  const auto b = stiffness_spectrum(*sys, 200);
  CHECK(b.min > -1e-8 * b.max);
}

TEST_CASE("operator flux consistency with and without DG faces") {
  // Identical materials and conforming faces: for a continuous field the
  // DG operator, summed over coinciding nodes, equals the continuous one.
  const auto m = mesh::build_box({0, 0, 0}, {40, 30, 30}, {4, 3, 3});
  const auto cg = SemiDiscreteSystem::build(m, {}, {.degree = 3});
  const auto dgs = SemiDiscreteSystem::build(m, {}, {.degree = 3, .discontinuous_everywhere = true});
  auto field = [](const Vec3& x) {
    return Vec3{std::sin(0.1 * x[0] + 0.05 * x[2]), std::cos(0.07 * x[1]) * x[2] * 1e-2, std::sin(0.03 * x[0] * x[1] * 1e-1)};
  };
  std::vector<double> rc, rd;
  cg->apply_A(cg->interpolate(field), rc);
  dgs->apply_A(dgs->interpolate(field), rd);
  PointIndex idx(1e-6);
  for (const auto& x : cg->dofs().coords) idx.insert(x);
  std::vector<double> gathered(rc.size(), 0.0);
  for (int n = 0; n < dgs->dofs().n_nodes(); ++n) {
    const int k = idx.find(dgs->dofs().coords[n]);
    REQUIRE(k >= 0);
    for (int c = 0; c < 3; ++c) gathered[3 * k + c] += rd[3 * n + c];
  }
  double diff = 0.0;
  for (std::size_t i = 0; i < rc.size(); ++i) diff = std::max(diff, std::abs(gathered[i] - rc[i]));
  CHECK(diff < 1e-10 * max_abs(rc));
}

TEST_CASE("absorbing boundary blocks") {
  const auto m = mesh::build_box({0, 0, 0}, {10, 20, 30}, {1, 1, 1});
  const auto sys = SemiDiscreteSystem::build(m, {}, {.degree = 3});
  Mat3 total{};
  for (const auto& [node, K] : sys->m1_blocks())
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) total[i][j] += K[i][j];
  const Material& e = kRock;
  const double area[3] = {20.0 * 30.0, 10.0 * 30.0, 10.0 * 20.0};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double oracle = 0.0;
      if (i == j)
        for (int a = 0; a < 3; ++a) oracle += 2.0 * area[a] * (a == i ? e.rho * e.vp : e.rho * e.vs);
      CHECK(std::abs(total[i][j] - oracle) < 1e-12 * 2.0 * area[0] * e.rho * e.vp);
    }
  // M1 acts on velocity: zero velocity gives nothing.
  std::vector<double> zero(sys->n_dofs(), 0.0), out(sys->n_dofs(), 0.0);
  sys->add_M1(zero, out);
  CHECK(max_abs(out) == 0.0);
  // M2 annihilates translations and fields without tangential variation.
  std::vector<double> m2(sys->n_dofs(), 0.0), m2_lin(sys->n_dofs(), 0.0);
  sys->add_M2(sys->interpolate([](const Vec3&) { return Vec3{1, 2, 3}; }), m2);
  sys->add_M2(sys->interpolate([](const Vec3& x) { return Vec3{x[1] / 20, x[2] / 30, x[0] / 10}; }), m2_lin);
  CHECK(max_abs(m2) < 1e-12 * max_abs(m2_lin));
  CHECK(sys->warnings().empty());
  BlockMaterials soft;
  soft.elastic_outer = {2000.0, 3000.0, 1000.0};
  const auto warn = SemiDiscreteSystem::build(m, soft, {.degree = 2, .absorbing_tangential = true});
  CHECK(warn->warnings().size() == 1);
}

TEST_CASE("rollers constrain the normal component") {
  const auto m = column(-50, 50, 5);
  const auto sys = SemiDiscreteSystem::build(m, {}, {.degree = 2});
  int fixed_x = 0, fixed_z = 0;
  for (int d : sys->constrained()) (d % 3 == 0 ? fixed_x : fixed_z) += (d % 3 != 1);
  CHECK(fixed_x > 0);
  CHECK(fixed_z == 0);
  std::vector<double> r;
  sys->apply_A(sys->interpolate([](const Vec3& x) { return Vec3{x[0], x[1], x[2]}; }), r);
  for (int d : sys->constrained()) CHECK(r[d] == 0.0);
}

TEST_CASE("plane body force") {
  const auto m = column(-100, 100, 10);
  const auto sys = SemiDiscreteSystem::build(m, {}, {.degree = 3});
  synth::RickerParams r;
  PlaneBodyForce f(*sys, 0.0, r);
  CHECK(f.total_area() == doctest::Approx(400.0).epsilon(1e-12));
  CHECK_THROWS_AS(PlaneBodyForce(*sys, 3.0, r), ConfigError);
  std::vector<double> F(sys->n_dofs(), 0.0);
  f.assemble(0.01, F);
  double fz = 0.0, fx = 0.0;
  for (std::size_t i = 0; i < F.size(); ++i) (i % 3 == 2 ? fz : fx) += F[i];
  CHECK(fz == doctest::Approx(400.0 * synth::ricker(r, 0.01)).epsilon(1e-12));
  CHECK(fx == 0.0);
}

TEST_CASE("scattered-field source") {
  synth::RickerParams r;
  r.f_peak = 20.0;
  r.t0 = 6.0 / (M_PI * 20.0);
  const double z0 = -200.0;
  const synth::PlaneWave pw{kRock, z0, r};

  SUBCASE("causality") {
    const auto sys = SemiDiscreteSystem::build(small_sphere(), {}, {.degree = 2});
    ScatteredFieldSource src(*sys, pw);
    std::vector<double> F(sys->n_dofs(), 0.0);
    src.assemble((z0 * -1.0 - 30.0) / 4000.0 - 1e-6, F);
    CHECK(max_abs(F) == 0.0);
    src.assemble((z0 * -1.0 - 30.0) / 4000.0 + 0.05, F);
    CHECK(max_abs(F) > 0.0);
  }

  SUBCASE("matched control: only the shear mismatch survives") {
    BlockMaterials mat;
    const Material& e = kRock;
    mat.acoustic = {e.rho, e.vp, 0.0};  // lambda_a = lambda_e + 2 mu_e
    const auto sys = SemiDiscreteSystem::build(small_sphere(), mat, {.degree = 3});
    ScatteredFieldSource src(*sys, pw);
    const double t = 0.12;
    int checked = 0;
    for (const auto& f : sys->dg_faces()) {
      if (!f.acoustic_elastic) continue;
      for (const auto& p : f.points) {
        const Vec3 ne = -1.0 * p.normal;
        // du_z/dz of the upgoing pulse: -R(t - (z - z0)/v) / (2 rho v^2)
        const double s = t - (p.x[2] - z0) / e.vp;
        const double strain = s > 0 ? -synth::ricker(r, s) / (2.0 * e.rho * e.vp * e.vp) : 0.0;
        Vec3 oracle = (2.0 * e.mu() * strain) * ne;
        oracle[2] -= 2.0 * e.mu() * strain * ne[2];
        const Vec3 got = src.interface_mismatch(p.x, ne, t);
        for (int c = 0; c < 3; ++c) CHECK(got[c] == doctest::Approx(oracle[c]).epsilon(1e-10).scale(1e-12 * e.mu()));
        ++checked;
      }
    }
    CHECK(checked == 6 * 16 * 16);
    // No volume load: the total force equals the interface integral.
    std::vector<double> F(sys->n_dofs(), 0.0);
    src.assemble(t, F);
    Vec3 total{0, 0, 0}, oracle{0, 0, 0};
    double magnitude = 0.0;
    for (std::size_t i = 0; i < F.size(); ++i) total[i % 3] += F[i];
    for (const auto& f : sys->dg_faces())
      if (f.acoustic_elastic)
        for (const auto& p : f.points) {
          const Vec3 g = p.weight * src.interface_mismatch(p.x, -1.0 * p.normal, t);
          oracle = oracle + g;
          magnitude += norm(g);
        }
    REQUIRE(magnitude > 0.0);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(total[c] - oracle[c]) < 1e-12 * magnitude);
  }

  SUBCASE("volume load against a refined quadrature oracle") {
    const auto m = small_sphere();
    BlockMaterials mat;
    const auto sys = SemiDiscreteSystem::build(m, mat, {.degree = 6});
    ScatteredFieldSource src(*sys, pw);
    const double t = 0.1 + 0.02;
    std::vector<double> F(sys->n_dofs(), 0.0);
    src.assemble(t, F);
    // Remove the interface part, whose node sums are the face integrals.
    Vec3 iface{0, 0, 0};
    for (const auto& f : sys->dg_faces())
      if (f.acoustic_elastic)
        for (const auto& p : f.points) iface = iface + p.weight * src.interface_mismatch(p.x, -1.0 * p.normal, t);
    double fz = 0.0;
    for (std::size_t i = 2; i < F.size(); i += 3) fz += F[i];
    const double volume = fz - iface[2];

    const Material& a = mat.acoustic;
    const double coef = a.rho * (a.vp * a.vp / (kRock.vp * kRock.vp) - 1.0);
    const auto gl = quadrature::gauss_legendre(14);
    double oracle = 0.0;
    for (std::size_t e = 0; e < m.elements.size(); ++e) {
      if (m.elements[e].block != mesh::Block::Acoustic) continue;
      const auto map = mesh::ReferenceMap::of(m, static_cast<int>(e));
      for (int i = 0; i < 14; ++i)
        for (int j = 0; j < 14; ++j)
          for (int k = 0; k < 14; ++k) {
            const Vec3 xi{gl.nodes[i], gl.nodes[j], gl.nodes[k]};
            const double w = gl.weights[i] * gl.weights[j] * gl.weights[k] * mesh::jacobian(map, xi).det;
            oracle += w * coef * pw.acceleration(map(xi)[2], t);
          }
    }
    REQUIRE(std::abs(oracle) > 0.0);
    CHECK(std::abs(volume - oracle) < 1e-8 * std::abs(oracle));
  }

  SUBCASE("heterogeneous background rejected") {
    BlockMaterials mat;
    mat.elastic_inner = {2600.0, 3900.0, 2200.0};
    const auto sys = SemiDiscreteSystem::build(small_sphere(), mat, {.degree = 2});
    CHECK_THROWS_AS(ScatteredFieldSource(*sys, pw), ConfigError);
  }
}

TEST_CASE("receivers and snapshots") {
  const auto sys = SemiDiscreteSystem::build(small_sphere(), {}, {.degree = 3});
  // Cubic fields are represented exactly inside each element.
  auto cubic = [](const Vec3& x) {
    return Vec3{1e-6 * x[0] * x[0] * x[1], 1e-4 * x[2] * x[2] - 0.3, 1e-5 * x[0] * x[1] * x[2] + 0.01 * x[0]};
  };
  const auto u = sys->interpolate(cubic);
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> U(-99.0, 99.0);
  for (int k = 0; k < 50; ++k) {
    const Vec3 x{U(rng), U(rng), U(rng)};
    int e;
    Vec3 xi;
    REQUIRE(sys->locate(x, e, xi));
    const Vec3 v = sys->evaluate(u, e, xi);
    const Vec3 w = cubic(x);
    for (int c = 0; c < 3; ++c) CHECK(v[c] == doctest::Approx(w[c]).epsilon(1e-9).scale(1e-9));
  }
  int e;
  Vec3 xi;
  CHECK_FALSE(sys->locate({500, 0, 0}, e, xi));
  // On the sphere the preference decides the side.
  REQUIRE(sys->locate({0, 0, 30}, e, xi, [&](int k) { return sys->mesh().elements[k].block == mesh::Block::Acoustic; }));
  CHECK(sys->mesh().elements[e].block == mesh::Block::Acoustic);

  TimeIntegrationConfig cfg{1e-4, 5};
  CHECK_THROWS_AS(leapfrog_run(*sys, nullptr, cfg, {{"far", {0, 0, 900}}}), ConfigError);

  const auto dir = std::filesystem::temp_directory_path() / "cavscat_snap_test";
  std::filesystem::create_directories(dir);
  SnapshotSpec spec;
  spec.x_min = -100;
  spec.x_max = 100;
  spec.z_min = -50;
  spec.z_max = 50;
  spec.spacing = 25;
  const auto path = (dir / "s.vtk").string();
  write_snapshot(*sys, u, spec, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("# vtk DataFile", 0) == 0);
  int count = 0;
  while (std::getline(in, line))
    if (line.rfind("DIMENSIONS", 0) == 0) CHECK(line == "DIMENSIONS 9 1 5");
    else if (line.rfind("POINT_DATA", 0) == 0) CHECK(line == "POINT_DATA 45");
    else ++count;
  CHECK(count >= 45);
}

TEST_CASE("leap-frog: zero load stays at rest") {
  const auto sys = SemiDiscreteSystem::build(column(-50, 50, 4), {}, {.degree = 2});
  const auto res = leapfrog_run(*sys, nullptr, {1e-4, 100}, {{"r", {0, 0, 10}}});
  for (const auto& s : res.seismograms)
    for (double v : s.values) CHECK(v == 0.0);
  CHECK(max_abs(res.final_state) == 0.0);
  for (double E : res.energy) CHECK(E == 0.0);
}

TEST_CASE("homogeneous column: plane source matches the closed-form plane wave") {
  const auto m = column(-500, 500, 50, 40.0);
  const auto sys = SemiDiscreteSystem::build(m, {}, {.degree = 4});
  synth::RickerParams r;
  r.f_peak = 20.0;
  r.t0 = 6.0 / (M_PI * 20.0);
  PlaneBodyForce src(*sys, 0.0, r);
  TimeIntegrationConfig cfg;
  cfg.dt = std::min(cfl_dt(m, {}, cfg), 0.9 * critical_dt(*sys));
  cfg.n_steps = static_cast<int>(0.4 / cfg.dt);
  const auto res = leapfrog_run(*sys, &src, cfg, {{"up", {5, -3, 150}}, {"down", {0, 0, -250}}});
  const synth::PlaneWave pw{kRock, 0.0, r};
  for (std::size_t i = 0; i < res.seismograms.size(); ++i) {
    const auto& s = res.seismograms[i];
    if (s.component == synth::Component::X) {
      CHECK(max_abs(s.values) < 1e-12 * pw.amplitude());
      continue;
    }
    double err = 0.0, ref = 0.0;
    for (int k = 0; k < cfg.n_steps; ++k) {
      const double a = pw.displacement(s.receiver[2], k * cfg.dt);
      err += (s.values[k] - a) * (s.values[k] - a);
      ref += a * a;
    }
    CHECK(std::sqrt(err / ref) < 0.02);
  }
  // The pulses leave through the absorbing ends: less than 1% of the peak
  // energy remains, and energy never grows once the source is quiet.
  double peak = 0.0;
  for (double E : res.energy) peak = std::max(peak, E);
  CHECK(res.energy.back() < 1e-2 * peak);
  const int quiet = static_cast<int>((2.0 * r.t0 + 0.01) / cfg.dt);
  for (std::size_t k = quiet + 1; k < res.energy.size(); ++k)
    CHECK(res.energy[k] <= res.energy[k - 1] * (1.0 + 1e-10) + 1e-300);
}

TEST_CASE("1D column: reflection off an acoustic layer") {
  auto m = mesh::build_box({-5, -5, -700}, {5, 5, 300}, {1, 1, 100},
                           [](const Vec3& c) { return c[2] > 0 ? mesh::Block::Acoustic : mesh::Block::ElasticOuter; });
  for (int s = 0; s < 4; ++s) m.side_kind[s] = mesh::BoundaryKind::Roller;
  m.faces = mesh::classify_faces(m);
  const auto sys = SemiDiscreteSystem::build(m, {}, {.degree = 4});
  synth::RickerParams r;
  r.f_peak = 20.0;
  r.t0 = 6.0 / (M_PI * 20.0);
  PlaneBodyForce src(*sys, -500.0, r);
  TimeIntegrationConfig cfg;
  cfg.dt = std::min(cfl_dt(m, {}, cfg), 0.9 * critical_dt(*sys));
  cfg.n_steps = static_cast<int>(0.35 / cfg.dt);
  const auto res = leapfrog_run(*sys, &src, cfg, {{"r", {0, 0, -300}}}, {.components = {synth::Component::Z}});
  const auto& u = res.seismograms[0].values;
  // incident arrives at 200/vp + t0, reflection at 400/vp later
  const double split = r.t0 + 0.05 + 300.0 / 4000.0 + 0.5 * 300.0 / 4000.0;
  double inc = 0.0, refl = 0.0;
  for (int k = 0; k < cfg.n_steps; ++k) {
    const double v = u[k];
    if (k * cfg.dt < split) {
      if (std::abs(v) > std::abs(inc)) inc = v;
    } else if (std::abs(v) > std::abs(refl)) {
      refl = v;
    }
  }
  const double oracle = normal_reflection_coefficient(kRock, kWater);
  CHECK(oracle == doctest::Approx(0.756).epsilon(1e-3));
  CHECK(refl / inc == doctest::Approx(oracle).epsilon(0.02 / 0.756));
}

TEST_CASE("stability limit and blow-up detection") {
  const auto m = small_sphere();
  const auto sys = SemiDiscreteSystem::build(m, {}, {.degree = 3});
  const double dtc = critical_dt(*sys);
  CHECK(dtc == doctest::Approx(2.0 / std::sqrt(max_eigenvalue(*sys, 400))).epsilon(0.02));
  synth::RickerParams r;
  r.f_peak = 20.0;
  r.t0 = 0.02;
  ScatteredFieldSource src(*sys, {kRock, -40.0, r});
  RunOptions opt;
  opt.throw_on_blowup = false;
  const auto unstable = leapfrog_run(*sys, &src, {1.01 * dtc, 2000}, {{"r", {0, 0, 60}}}, opt);
  CHECK(unstable.blew_up);
  CHECK(unstable.blowup_step < 2000);
  const auto stable = leapfrog_run(*sys, &src, {0.97 * dtc, 2000}, {{"r", {0, 0, 60}}}, opt);
  CHECK_FALSE(stable.blew_up);
  CHECK_THROWS_AS(leapfrog_run(*sys, &src, {1.01 * dtc, 2000}, {{"r", {0, 0, 60}}}), NumericalError);
}

TEST_CASE("CFL formula") {
  const TimeIntegrationConfig cfg;
  CHECK(cfl_dt(4.74, 4000.0, cfg) == doctest::Approx(4.15e-5).epsilon(2e-3));
  CHECK(cfl_dt(1.1, 4000.0, cfg) == doctest::Approx(9.6e-6).epsilon(5e-3));
  CHECK(cfl_dt(4.74, 8000.0, cfg) == cfl_dt(4.74, 4000.0, cfg) / 2.0);
  CHECK_THROWS_AS(cfl_dt(0.0, 4000.0, cfg), ConfigError);
  const auto m = mesh::build_box({0, 0, 0}, {10, 20, 30}, {2, 2, 2});
  CHECK(cfl_dt(m, {}, cfg) == doctest::Approx(0.2 * 0.175 * 5.0 / 4000.0).epsilon(1e-14));
}
