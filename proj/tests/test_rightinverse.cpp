#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "sv/mesh.hpp"
#include "sv/rightinverse.hpp"
#include "sv/rng.hpp"

using namespace sv;

namespace {

Eigen::VectorXd random_free_velocity(const VelocitySpace& vs, std::uint64_t seed) {
  SplitMix64 rng(seed_stream(seed, 1));
  Eigen::VectorXd u_free(vs.n_free);
  for (int i = 0; i < vs.n_free; ++i) u_free(i) = rng.uniform(-1.0, 1.0);
  return free_to_full_vec(vs, u_free);
}

// per-block constant removal: zeroes every element mean
Eigen::VectorXd strip_element_means(const Mesh& m, const PressureSpace& ps,
                                    const Eigen::VectorXd& p) {
  Eigen::VectorXd out = p;
  for (int t = 0; t < m.n_tris(); ++t) {
    double mean = integrate_triangle(element_pressure(ps, p, t), tri_geom(m, t));
    double c = mean / m.tris[static_cast<std::size_t>(t)].area;
    for (int i = 0; i < ps.block_dim; ++i) out[t * ps.block_dim + i] -= c;
  }
  return out;
}

}  // namespace

TEST_CASE("step-1 subspace has the advertised shape") {
  Mesh m = generate_mesh(MeshFamily::Diagonal, 2);
  BRSubspace br = build_br_subspace(m);
  CHECK(br.host.k == 2);
  CHECK(br.n_vertex_cols == 2);  // one interior vertex
  CHECK(br.n_edge_cols == 8);
  CHECK(br.cols.cols() == 10);

  // every member is supported on free dofs only and has a mean-zero divergence
  Classification cls = classify(m);
  PressureSpace ps = build_pressure_space(m, 4, cls);
  for (int c = 0; c < br.cols.cols(); ++c) {
    Eigen::VectorXd u = free_to_full_vec(br.host, br.cols.col(c));
    CHECK(max_boundary_coeff(br.host, u) == 0.0);
    Eigen::VectorXd means(m.n_tris());
    for (int t = 0; t < m.n_tris(); ++t)
      means(t) = integrate_triangle(divergence(element_velocity(br.host, u, t),
                                               tri_geom(m, t)),
                                    tri_geom(m, t));
    CHECK(std::abs(means.sum()) <= 1e-14);
    if (c >= br.n_vertex_cols) {
      // edge bubbles push mass across exactly one edge
      int nonzero = 0;
      for (int t = 0; t < m.n_tris(); ++t)
        if (std::abs(means(t)) > 1e-13) ++nonzero;
      CHECK(nonzero == 2);
    }
  }
}

TEST_CASE("step 1 matches element means") {
  Mesh m = generate_mesh(MeshFamily::Diagonal, 2);
  Classification cls = classify(m);
  PressureSpace ps = build_pressure_space(m, 4, cls);
  BRSubspace br = build_br_subspace(m);

  SUBCASE("piecewise +-1 split") {
    Eigen::VectorXd p(ps.n_dofs);
    for (int t = 0; t < m.n_tris(); ++t) {
      Vec2 c = (1.0 / 3.0) * (m.point(m.tris[static_cast<std::size_t>(t)].v[0]) +
                              m.point(m.tris[static_cast<std::size_t>(t)].v[1]) +
                              m.point(m.tris[static_cast<std::size_t>(t)].v[2]));
      double v = c.x < 0.5 ? 1.0 : -1.0;
      for (int i = 0; i < ps.block_dim; ++i) p[t * ps.block_dim + i] = v;
    }
    Step1Result s1 = step1_element_averages(m, br, ps, p);
    CHECK(s1.mean_residual <= 1e-11);
    CHECK(s1.grad > 0.0);

    Eigen::VectorXd b = element_means(m, ps, p);
    for (int t = 0; t < m.n_tris(); ++t)
      CHECK(std::abs(std::abs(b(t)) - 0.125) <= 1e-15);
  }

  SUBCASE("zero element means give the zero minimizer") {
    Eigen::VectorXd p = strip_element_means(
        m, ps, random_admissible_pressure(m, ps, 31));
    Step1Result s1 = step1_element_averages(m, br, ps, p);
    CHECK(s1.v_host.cwiseAbs().maxCoeff() <= 1e-13);
  }

  SUBCASE("only the means matter") {
    Eigen::VectorXd p = random_admissible_pressure(m, ps, 32);
    Eigen::VectorXd q = p - strip_element_means(m, ps, p);  // same means as p
    Step1Result a = step1_element_averages(m, br, ps, p);
    Step1Result b = step1_element_averages(m, br, ps, q);
    CHECK((a.v_host - b.v_host).cwiseAbs().maxCoeff() <= 1e-12);
  }

  SUBCASE("p2p0 variant agrees on the constraints") {
    Eigen::VectorXd p = random_admissible_pressure(m, ps, 33);
    BRSubspace full = build_br_subspace(m, true);
    Step1Result s1 = step1_element_averages(m, full, ps, p);
    CHECK(s1.mean_residual <= 1e-11);
  }
}

TEST_CASE("local bubble solves") {
  SUBCASE("k=4 reference triangle example") {
    TriGeom g = reference_tri_geom();
    BaryPoly pT = BaryPoly::monomial(1, 1, 0) - BaryPoly::constant(1.0 / 12.0);
    CHECK(std::abs(integrate_triangle(pT, g)) <= 1e-16);  // mean-free by design
    BaryPoly p3 = pT.homogenized(3);
    Eigen::VectorXd mono(p3.coeffs().size());
    for (int i = 0; i < mono.size(); ++i) mono(i) = p3.coeffs()[static_cast<std::size_t>(i)];
    double res = 1.0;
    Eigen::VectorXd c = local_bubble_solve(4, g, mono, &res);
    CHECK(res <= 1e-12);
    // the realized divergence is exactly the moment projection of pT
    auto bubbles = bubble_space_basis(4);
    VectorBaryPoly u{BaryPoly(4), BaryPoly(4)};
    for (int i = 0; i < c.size(); ++i) u = u + c(i) * bubbles[static_cast<std::size_t>(i)];
    BaryPoly div = divergence(u, g);
    Eigen::VectorXd proj = moment_to_monomial(4, monomial_to_moment(4, mono));
    for (int i = 0; i < proj.size(); ++i)
      CHECK(div.coeffs()[static_cast<std::size_t>(i)] ==
            doctest::Approx(proj(i)).epsilon(1e-11));
  }

  SUBCASE("k=5 minimum-norm solution is orthogonal to the divergence-free bubble") {
    TriGeom g = tri_geom_from_points({0.1, -0.2}, {1.3, 0.1}, {0.2, 1.1});
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(space_dims(5).dim_moment);
    e1(0) = 1.0;
    Eigen::VectorXd mono = moment_to_monomial(5, e1);
    double res = 1.0;
    Eigen::VectorXd c = local_bubble_solve(5, g, mono, &res);
    CHECK(res <= 1e-12);

    // coefficients of curl(b^2) in the bubble basis, by coefficient matching
    auto bubbles = bubble_space_basis(5);
    VectorBaryPoly zf = divfree_bubble_basis(5, g)[0];
    const int nc5 = BaryPoly::n_coeffs(5);
    Eigen::MatrixXd Bc(2 * nc5, static_cast<int>(bubbles.size()));
    for (std::size_t j = 0; j < bubbles.size(); ++j)
      for (int i = 0; i < nc5; ++i) {
        Bc(i, static_cast<int>(j)) = bubbles[j].x.coeffs()[static_cast<std::size_t>(i)];
        Bc(nc5 + i, static_cast<int>(j)) = bubbles[j].y.coeffs()[static_cast<std::size_t>(i)];
      }
    Eigen::VectorXd rhs(2 * nc5);
    for (int i = 0; i < nc5; ++i) {
      rhs(i) = zf.x.coeffs()[static_cast<std::size_t>(i)];
      rhs(nc5 + i) = zf.y.coeffs()[static_cast<std::size_t>(i)];
    }
    Eigen::VectorXd zeta = Bc.colPivHouseholderQr().solve(rhs);
    CHECK((Bc * zeta - rhs).norm() <= 1e-10 * rhs.norm());
    CHECK(std::abs(c.dot(zeta)) <= 1e-12 * std::max(1.0, c.norm() * zeta.norm()));
  }
}

TEST_CASE("step 3 validates its input") {
  Mesh m = generate_mesh(MeshFamily::Diagonal, 1);
  Classification cls = classify(m);
  VelocitySpace vs = build_velocity_space(m, 4);
  PressureSpace ps = build_pressure_space(m, 4, cls);

  Eigen::VectorXd zero = Eigen::VectorXd::Zero(ps.n_dofs);
  Step3Result s = step3_local_bubble(m, vs, ps, zero);
  CHECK(s.v_full.cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.grad == 0.0);

  Eigen::VectorXd bad_vertex = zero;
  bad_vertex[corner_node_index(ps.degree, 0)] = 1.0;
  CHECK_THROWS_AS((void)step3_local_bubble(m, vs, ps, bad_vertex), validation_error);

  // cubic bubble block: zero corners and edge nodes, nonzero mean
  Eigen::VectorXd bad_mean = zero;
  bad_mean[BaryPoly::index(3, 1, 1)] = 1.0 / 27.0;
  CHECK_THROWS_AS((void)step3_local_bubble(m, vs, ps, bad_mean), validation_error);
}

TEST_CASE("right inverse: div v = p across mesh families") {
  struct Case {
    Mesh m;
    std::uint64_t seed;
  };
  std::vector<Case> cases;
  cases.push_back({generate_mesh(MeshFamily::PerturbedDiagonal, 2, 13), 41});
  cases.push_back({generate_mesh(MeshFamily::Crisscross, 2), 42});
  cases.push_back({make_boundary_singular_fixture(), 43});
  for (auto& cse : cases) {
    const Mesh& m = cse.m;
    Classification cls = classify(m);
    VelocitySpace vs = build_velocity_space(m, 4);
    PressureSpace ps = build_pressure_space(m, 4, cls);
    Eigen::VectorXd p = random_admissible_pressure(m, ps, cse.seed);

    RightInverseResult r = right_inverse(m, vs, ps, cls, p);
    CHECK(r.p_norm == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.mean_residual <= 1e-11 * r.p_norm);
    CHECK(r.vertex_residual <= 1e-11 * r.p_norm);
    CHECK(r.final_residual <= 1e-10 * r.p_norm);
    CHECK(r.grad_v > 0.0);
    CHECK(r.stability_ratio == doctest::Approx(r.grad_v / r.p_norm).epsilon(1e-14));
    CHECK(max_boundary_coeff(vs, r.v) == 0.0);
    CHECK(max_boundary_coeff(vs, r.v3) == 0.0);
    CHECK(r.v == Eigen::VectorXd(r.v1 + r.v2 + r.v3));

    // the composed field reproduces p exactly enough to re-run the pipeline
    Eigen::VectorXd div = divergence_coords(m, vs, ps, r.v);
    CHECK(pressure_l2_norm(m, ps, p - div) <= 1e-10);
  }
}

TEST_CASE("right inverse: p in the range of div comes back with tiny residual") {
  Mesh m = generate_mesh(MeshFamily::PerturbedDiagonal, 2, 7);
  Classification cls = classify(m);
  VelocitySpace vs = build_velocity_space(m, 4);
  PressureSpace ps = build_pressure_space(m, 4, cls);
  Eigen::VectorXd v0 = random_free_velocity(vs, 99);
  Eigen::VectorXd p = divergence_coords(m, vs, ps, v0);
  RightInverseResult r = right_inverse(m, vs, ps, cls, p);
  CHECK(r.final_residual <= 1e-10 * r.p_norm);
}

TEST_CASE("right inverse is linear") {
  Mesh m = generate_mesh(MeshFamily::Diagonal, 2);
  Classification cls = classify(m);
  VelocitySpace vs = build_velocity_space(m, 4);
  PressureSpace ps = build_pressure_space(m, 4, cls);
  Eigen::VectorXd p = random_admissible_pressure(m, ps, 7);
  Eigen::VectorXd q = random_admissible_pressure(m, ps, 8);
  RightInverseResult rp = right_inverse(m, vs, ps, cls, p);
  RightInverseResult rq = right_inverse(m, vs, ps, cls, q);
  RightInverseResult rc = right_inverse(m, vs, ps, cls, 0.7 * p + 1.3 * q);
  Eigen::VectorXd want = 0.7 * rp.v + 1.3 * rq.v;
  double scale = std::max(1.0, want.cwiseAbs().maxCoeff());
  CHECK((rc.v - want).cwiseAbs().maxCoeff() <= 1e-9 * scale);
}

TEST_CASE("right inverse: stability ratio stays flat under refinement") {
  std::vector<double> ratios;
  for (int n : {1, 2, 4}) {
    Mesh m = generate_mesh(MeshFamily::PerturbedDiagonal, n, 5);
    Classification cls = classify(m);
    VelocitySpace vs = build_velocity_space(m, 4);
    PressureSpace ps = build_pressure_space(m, 4, cls);
    Eigen::VectorXd p = random_admissible_pressure(m, ps, 11);
    ratios.push_back(right_inverse(m, vs, ps, cls, p).stability_ratio);
  }
  double lo = *std::min_element(ratios.begin(), ratios.end());
  double hi = *std::max_element(ratios.begin(), ratios.end());
  CHECK(hi / lo < 3.0);
}

TEST_CASE("right inverse rejects bad input") {
  Mesh m = generate_mesh(MeshFamily::Crisscross, 1);
  Classification cls = classify(m);
  VelocitySpace vs = build_velocity_space(m, 4);
  PressureSpace ps = build_pressure_space(m, 4, cls);

  // k = 3 is below the supported range
  VelocitySpace vs3 = build_velocity_space(m, 3);
  PressureSpace ps3 = build_pressure_space(m, 3, cls);
  CHECK_THROWS_AS(
      (void)right_inverse(m, vs3, ps3, cls, Eigen::VectorXd::Ones(ps3.n_dofs), Exec::Serial),
      validation_error);

  // nonzero mean
  CHECK_THROWS_AS(
      (void)right_inverse(m, vs, ps, cls, Eigen::VectorXd::Ones(ps.n_dofs), Exec::Serial),
      validation_error);

  // zero mean but broken singular constraint at the center vertex
  Eigen::VectorXd p = strip_element_means(m, ps, random_admissible_pressure(m, ps, 3));
  VertexPatch center = build_patch(m, 4);
  int t0 = center.tris[0];
  p[t0 * ps.block_dim + corner_node_index(ps.degree, m.local_index(t0, 4))] += 0.5;
  p = strip_element_means(m, ps, p);
  CHECK_THROWS_AS((void)right_inverse(m, vs, ps, cls, p, Exec::Serial), validation_error);
}

TEST_CASE("right inverse: serial equals parallel, p2p0 variant works") {
  Mesh m = generate_mesh(MeshFamily::Crisscross, 2);
  Classification cls = classify(m);
  VelocitySpace vs = build_velocity_space(m, 4);
  PressureSpace ps = build_pressure_space(m, 4, cls);
  Eigen::VectorXd p = random_admissible_pressure(m, ps, 55);

  RightInverseResult a = right_inverse(m, vs, ps, cls, p, Exec::Par);
  RightInverseResult b = right_inverse(m, vs, ps, cls, p, Exec::Serial);
  CHECK(a.v == b.v);
  CHECK(a.final_residual == b.final_residual);
  CHECK(a.stability_ratio == b.stability_ratio);

  RightInverseResult c = right_inverse(m, vs, ps, cls, p, Exec::Par, true);
  CHECK(c.final_residual <= 1e-10 * c.p_norm);
}
