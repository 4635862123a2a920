#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "oracles.hpp"
#include "sv/fields.hpp"
#include "sv/mesh.hpp"
#include "sv/polyspace.hpp"
#include "sv/rng.hpp"
#include "sv/spaces.hpp"
#include "sv/topology.hpp"

using namespace sv;

namespace {

std::vector<int> interior_edges(const Mesh& m) {
  std::vector<int> out;
  for (int e = 0; e < m.n_edges(); ++e)
    if (m.edges[static_cast<std::size_t>(e)].tri[1] >= 0) out.push_back(e);
  return out;
}

double corner_value(const Mesh& m, int t, int z, const BaryPoly& p) {
  double l[3] = {0.0, 0.0, 0.0};
  l[m.local_index(t, z)] = 1.0;
  return p.eval(l[0], l[1], l[2]);
}

Eigen::VectorXd to_full(const VelocitySpace& vs, const std::map<int, double>& nodal) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(vs.n_full());
  for (const auto& [dof, val] : nodal) u[dof] = val;
  return u;
}

double element_mean(const Mesh& m, const PressureSpace& ps, const Eigen::VectorXd& q,
                    int t) {
  return integrate_triangle(element_pressure(ps, q, t), tri_geom(m, t));
}

}  // namespace

TEST_CASE("edge humps: closed forms, continuity, support") {
  for (Mesh m : {generate_mesh(MeshFamily::PerturbedDiagonal, 2, 5),
                 generate_mesh(MeshFamily::Crisscross, 1)}) {
    for (int e : interior_edges(m)) {
      const Edge& ed = m.edges[static_cast<std::size_t>(e)];
      for (int side = 0; side < 2; ++side) {
        int z = ed.v[side], y = ed.v[1 - side];
        ScalarPatchField eta = eta_field(m, e, z);
        ScalarPatchField gam = gamma_field(m, e, z);
        REQUIRE(eta.parts.size() == 2);
        for (const auto& [t, p] : eta.parts) {
          TriGeom g = tri_geom(m, t);
          int opp = -1;
          for (int c : m.tris[static_cast<std::size_t>(t)].v)
            if (c != z && c != y) opp = c;
          int lopp = m.local_index(t, opp);
          // edge moments against the factorial formula
          CHECK(integrate_edge(p, g, lopp) == doctest::Approx(ed.length / 12.0).epsilon(1e-14));
          CHECK(std::abs(integrate_edge(gam.parts.at(t), g, lopp)) <= 1e-15 * ed.length);
          // vanishing trace on the two non-shared edges
          for (int other : {z, y}) {
            int lo = m.local_index(t, other);
            Vec2 a = m.point(m.tris[static_cast<std::size_t>(t)].v[(lo + 1) % 3]);
            Vec2 b = m.point(m.tris[static_cast<std::size_t>(t)].v[(lo + 2) % 3]);
            for (double s : {0.25, 0.6}) {
              Vec2 pt = a + s * (b - a);
              CHECK(std::abs(eval_at_point(p, g, pt)) <= 1e-13);
              CHECK(std::abs(eval_at_point(gam.parts.at(t), g, pt)) <= 1e-13);
            }
          }
        }
        // both restrictions agree along the shared edge
        for (double s : {0.2, 0.5, 0.9}) {
          Vec2 pt = m.point(z) + s * (m.point(y) - m.point(z));
          double va = eval_at_point(eta.parts.at(ed.tri[0]), tri_geom(m, ed.tri[0]), pt);
          double vb = eval_at_point(eta.parts.at(ed.tri[1]), tri_geom(m, ed.tri[1]), pt);
          CHECK(va == doctest::Approx(vb).epsilon(1e-13));
        }
      }
    }
  }
}

TEST_CASE("w fields: unit divergence at the tip, zero elsewhere, zero means") {
  Mesh m = generate_mesh(MeshFamily::PerturbedDiagonal, 3, 11);
  for (int e : interior_edges(m)) {
    const Edge& ed = m.edges[static_cast<std::size_t>(e)];
    for (int side = 0; side < 2; ++side) {
      int z = ed.v[side];
      PatchField w = w_field(m, e, z);
      REQUIRE(w.parts.size() == 2);
      for (const auto& [t, u] : w.parts) {
        TriGeom g = tri_geom(m, t);
        BaryPoly div = divergence(u, g);
        for (int c : m.tris[static_cast<std::size_t>(t)].v) {
          double expect = (c == z) ? 1.0 : 0.0;
          CHECK(corner_value(m, t, c, div) == doctest::Approx(expect).epsilon(1e-13));
        }
        CHECK(std::abs(integrate_triangle(div, g)) <= 1e-14);
      }
      CHECK(field_grad_norm(m, w) > 0.0);
    }
  }
}

TEST_CASE("fan fields: identity at the center, clean away from it") {
  std::vector<Mesh> meshes;
  meshes.push_back(generate_mesh(MeshFamily::PerturbedDiagonal, 3, 7));
  meshes.push_back(make_offset_center_square(0.17));
  meshes.push_back(make_offset_center_square(0.01));
  meshes.push_back(make_boundary_singular_fixture());
  meshes.push_back(generate_mesh(MeshFamily::Crisscross, 2));
  for (const Mesh& m : meshes) {
    Classification cls = classify(m);
    for (int z : cls.nonsingular) {
      VertexPatch patch = build_patch(m, z);
      int n = patch.n();
      std::vector<PatchField> fan = fan_fields(m, patch);
      REQUIRE(static_cast<int>(fan.size()) == n);
      for (int j = 0; j < n; ++j) {
        std::vector<double> d = div_at_center(m, patch, fan[static_cast<std::size_t>(j)]);
        for (int i = 0; i < n; ++i) {
          double expect = (i == j) ? 1.0 : 0.0;
          CHECK(std::abs(d[static_cast<std::size_t>(i)] - expect) <= 5e-12);
        }
        for (const auto& [t, u] : fan[static_cast<std::size_t>(j)].parts) {
          TriGeom g = tri_geom(m, t);
          BaryPoly div = divergence(u, g);
          CHECK(std::abs(integrate_triangle(div, g)) <= 1e-13);
          for (int c : m.tris[static_cast<std::size_t>(t)].v)
            if (c != z) CHECK(std::abs(corner_value(m, t, c, div)) <= 5e-12);
        }
      }
    }
  }
}

TEST_CASE("fan fields refuse singular fans") {
  Mesh m = generate_mesh(MeshFamily::Crisscross, 1);
  CHECK_THROWS_AS((void)fan_fields(m, build_patch(m, 4)), internal_error);
}

TEST_CASE("vertex corrections hit their targets") {
  Mesh m = generate_mesh(MeshFamily::PerturbedDiagonal, 2, 3);
  Classification cls = classify(m);
  VelocitySpace vs = build_velocity_space(m, 4);
  SplitMix64 rng(seed_stream(99, 0));
  for (int z = 0; z < m.n_vertices(); ++z) {
    const VertexClass& vc = cls.vclass[static_cast<std::size_t>(z)];
    if (vc.singular) continue;
    VertexPatch patch = build_patch(m, z);
    std::vector<double> targets(static_cast<std::size_t>(patch.n()));
    for (double& a : targets) a = rng.uniform(-2.0, 2.0);
    VertexCorrection c = vertex_correction(m, vs, patch, vc, targets);
    CHECK_FALSE(c.singular_branch);
    for (int j = 0; j < patch.n(); ++j)
      CHECK(std::abs(c.achieved[static_cast<std::size_t>(j)] -
                     targets[static_cast<std::size_t>(j)]) <= 1e-11);
    CHECK(c.grad > 0.0);
  }
}

TEST_CASE("singular corrections use the alternating sums") {
  // interior singular fan, N = 4: compatibility -a1+a2-a3+a4 = 0
  Mesh m = generate_mesh(MeshFamily::Crisscross, 1);
  Classification cls = classify(m);
  VelocitySpace vs = build_velocity_space(m, 4);
  {
    int z = 4;
    REQUIRE(cls.vclass[4].singular);
    VertexPatch patch = build_patch(m, z);
    REQUIRE(patch.n() == 4);
    std::vector<double> targets{1.0, 2.0, 3.0, 2.0};
    VertexCorrection c = vertex_correction(m, vs, patch, cls.vclass[4], targets);
    CHECK(c.singular_branch);
    for (int j = 0; j < 4; ++j)
      CHECK(std::abs(c.achieved[static_cast<std::size_t>(j)] -
                     targets[static_cast<std::size_t>(j)]) <= 1e-13);
    CHECK(c.grad > 0.0);
  }

  // boundary singular fan, N = 2: compatibility -a1+a2 = 0
  Mesh b = make_boundary_singular_fixture();
  Classification bcls = classify(b);
  VelocitySpace bvs = build_velocity_space(b, 4);
  {
    int z = 1;
    REQUIRE(bcls.vclass[1].singular);
    VertexPatch patch = build_patch(b, z);
    REQUIRE(patch.n() == 2);
    std::vector<double> targets{3.0, 3.0};
    VertexCorrection c = vertex_correction(b, bvs, patch, bcls.vclass[1], targets);
    CHECK(std::abs(c.achieved[0] - 3.0) <= 1e-13);
    CHECK(std::abs(c.achieved[1] - 3.0) <= 1e-13);
    CHECK_FALSE(c.nodal.empty());
  }

  // corner with a single triangle: only the zero target is compatible
  {
    int z = 0;
    REQUIRE(bcls.vclass[0].singular);
    VertexPatch patch = build_patch(b, z);
    REQUIRE(patch.n() == 1);
    VertexCorrection c = vertex_correction(b, bvs, patch, bcls.vclass[0], {0.0});
    CHECK(c.nodal.empty());
    CHECK(c.grad == 0.0);
    CHECK(c.achieved[0] == 0.0);
  }
}

TEST_CASE("materialization reproduces the fields in the velocity space") {
  Mesh m = generate_mesh(MeshFamily::PerturbedDiagonal, 2, 17);
  int e = interior_edges(m).front();
  int z = m.edges[static_cast<std::size_t>(e)].v[0];
  PatchField w = w_field(m, e, z);
  for (int k : {4, 5}) {
    VelocitySpace vs = build_velocity_space(m, k);
    std::map<int, double> nodal;
    materialize(m, vs, w, nodal);
    Eigen::VectorXd u = to_full(vs, nodal);
    CHECK(max_boundary_coeff(vs, u) == 0.0);
    SplitMix64 rng(seed_stream(5, static_cast<std::uint64_t>(k)));
    for (const auto& [t, part] : w.parts) {
      VectorBaryPoly uh = element_velocity(vs, u, t);
      for (int trial = 0; trial < 4; ++trial) {
        double l1 = rng.uniform(0.05, 0.9);
        double l2 = rng.uniform(0.05, 0.95 - l1);
        double l3 = 1.0 - l1 - l2;
        CHECK(uh.x.eval(l1, l2, l3) ==
              doctest::Approx(part.x.eval(l1, l2, l3)).epsilon(1e-13));
        CHECK(uh.y.eval(l1, l2, l3) ==
              doctest::Approx(part.y.eval(l1, l2, l3)).epsilon(1e-13));
      }
    }
    // triangles outside the support stay identically zero
    for (int t = 0; t < m.n_tris(); ++t) {
      if (w.parts.count(t)) continue;
      VectorBaryPoly uh = element_velocity(vs, u, t);
      CHECK(uh.x.max_abs_coeff() == 0.0);
      CHECK(uh.y.max_abs_coeff() == 0.0);
    }
  }
}

TEST_CASE("global correction clears all vertex values of the pressure") {
  for (Mesh m : {generate_mesh(MeshFamily::PerturbedDiagonal, 2, 21),
                 generate_mesh(MeshFamily::Crisscross, 2)}) {
    Classification cls = classify(m);
    VelocitySpace vs = build_velocity_space(m, 4);
    PressureSpace ps = build_pressure_space(m, 4, cls);
    Eigen::VectorXd p = random_admissible_pressure(m, ps, 2024);

    GlobalCorrection g = global_vertex_correction(m, vs, ps, cls, p, Exec::Par);
    CHECK(g.max_target_residual <= 1e-12);
    CHECK(max_boundary_coeff(vs, g.v_full) == 0.0);
    CHECK(g.pressure_norm == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(g.ratio == doctest::Approx(g.grad).epsilon(1e-12));
    if (!cls.nonsingular.empty())
      CHECK(g.predictor == doctest::Approx(1.0 / *cls.theta_min + 1.0).epsilon(1e-14));

    Eigen::VectorXd div = divergence_coords(m, vs, ps, g.v_full);
    Eigen::VectorXd q = p - div;
    for (int t = 0; t < m.n_tris(); ++t) {
      for (int i = 0; i < 3; ++i) {
        int c = corner_node_index(ps.degree, i);
        CHECK(std::abs(q[t * ps.block_dim + c]) <= 1e-11);
      }
      // the correction is mean-free element by element
      CHECK(element_mean(m, ps, q, t) ==
            doctest::Approx(element_mean(m, ps, p, t)).epsilon(1e-11));
    }

    GlobalCorrection gs = global_vertex_correction(m, vs, ps, cls, p, Exec::Serial);
    CHECK(gs.v_full == g.v_full);
    CHECK(gs.grad == g.grad);
    CHECK(gs.max_target_residual == g.max_target_residual);
  }
}

TEST_CASE("correction effort grows as the fan degenerates") {
  Mesh tame = make_offset_center_square(0.3);
  Mesh tight = make_offset_center_square(0.01);
  auto center_grad = [](const Mesh& m) {
    Classification cls = classify(m);
    VertexPatch patch = build_patch(m, 4);
    std::vector<double> targets{1.0, 0.0, 0.0, 0.0};
    VelocitySpace vs = build_velocity_space(m, 4);
    return vertex_correction(m, vs, patch, cls.vclass[4], targets).grad;
  };
  CHECK(center_grad(tight) > 5.0 * center_grad(tame));
}
