#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sv/verify.hpp"

using namespace sv;

namespace {

struct Case {
  Mesh m;
  Classification cls;
  VelocitySpace vs;
  PressureSpace ps;
};

Case make_case(Mesh mesh, int k) {
  Case c{std::move(mesh), {}, {}, {}};
  c.cls = classify(c.m);
  c.vs = build_velocity_space(c.m, k);
  c.ps = build_pressure_space(c.m, k, c.cls);
  return c;
}

InfSupReport run(const Case& c, Exec ex = Exec::Par, bool ctor = true) {
  return compute_infsup(c.m, c.vs, c.ps, c.cls, ex, ctor);
}

}  // namespace

TEST_CASE("regression fixture on the unit diagonal cell") {
  Case c = make_case(generate_mesh(MeshFamily::Diagonal, 1), 4);
  InfSupReport r = run(c);
  // frozen after the first computation; guards the whole eigensolve pipeline
  CHECK(r.beta_h == doctest::Approx(0.121214701104669).epsilon(1e-10));
  CHECK(r.n_u == 18);
  CHECK(r.n_p == 17);  // 20 block coefficients, mean row, two N=1 corners
  CHECK(r.lambda_min > 0.0);
  CHECK_FALSE(r.failure);
  CHECK(r.h_max == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  REQUIRE(r.theta_min.has_value());
  CHECK(*r.theta_min == doctest::Approx(1.0).epsilon(1e-12));
  // here div maps onto the pressures with a one-dimensional kernel and the
  // construction happens to return the minimizer, so the bound is tight
  REQUIRE(r.constructive_lb.has_value());
  CHECK(*r.constructive_lb == doctest::Approx(r.beta_h).epsilon(1e-9));
}

TEST_CASE("dense eigensolve agrees with the inverse power iteration") {
  auto check_agreement = [](const Case& c) {
    InfSupReport r = run(c, Exec::Par, false);
    double pc = infsup_power_check(c.m, c.vs, c.ps);
    CHECK(std::abs(pc - r.beta_h) <= 1e-8 * r.beta_h);
  };
  check_agreement(make_case(generate_mesh(MeshFamily::Diagonal, 1), 4));
  check_agreement(make_case(generate_mesh(MeshFamily::Diagonal, 1), 5));
  check_agreement(make_case(generate_mesh(MeshFamily::Crisscross, 1), 4));
  check_agreement(make_case(generate_mesh(MeshFamily::PerturbedDiagonal, 2, 7), 4));
  check_agreement(make_case(make_boundary_singular_fixture(), 4));
}

TEST_CASE("reports are stable and internally consistent for k >= 4") {
  Case cases[] = {
      make_case(generate_mesh(MeshFamily::Diagonal, 1), 4),
      make_case(generate_mesh(MeshFamily::Diagonal, 1), 5),
      make_case(generate_mesh(MeshFamily::Crisscross, 1), 4),
      make_case(generate_mesh(MeshFamily::PerturbedDiagonal, 2, 7), 4),
      make_case(make_boundary_singular_fixture(), 4),
  };
  for (const Case& c : cases) {
    CAPTURE(c.vs.k);
    CAPTURE(c.m.n_tris());
    InfSupReport r = run(c);
    CHECK(r.beta_h > 0.01);
    CHECK_FALSE(r.failure);
    CHECK(r.beta_h <= r.beta_h_semi + 1e-12);
    REQUIRE(r.constructive_lb.has_value());
    CHECK(*r.constructive_lb > 0.0);
    CHECK(*r.constructive_lb <= r.beta_h + 1e-8);
  }
  // the crisscross center is singular: its constraint row must be active
  InfSupReport cc = run(cases[2]);
  CHECK(cc.n_p == 38);  // 40 block coefficients, mean row, one singular row
}

TEST_CASE("the known-deficient lowest-order pair is flagged, not crashed") {
  Mesh m = generate_mesh(MeshFamily::Crisscross, 2);
  Classification cls = classify(m);
  Classification open = cls;
  open.singular.clear();  // full P0: no alternating rows, just the mean
  VelocitySpace vs = build_velocity_space(m, 1);
  PressureSpace ps = build_pressure_space(m, 1, open);
  InfSupReport r = compute_infsup(m, vs, ps, cls, Exec::Par, true);
  CHECK(r.failure);
  CHECK(r.lambda_min < 1e-14);
  CHECK(r.lambda_min >= -1e-12);
  CHECK(r.beta_h == 0.0);
  CHECK(r.n_p > r.n_u);  // more pressures than velocities: locking is forced
  CHECK_FALSE(r.constructive_lb.has_value());
}

TEST_CASE("refinement keeps beta away from zero") {
  RefinementStudy s = refinement_study(MeshFamily::PerturbedDiagonal, 4, 3, 7);
  REQUIRE(s.rows.size() == 3);
  CHECK(s.rows[0].n == 1);
  CHECK(s.rows[1].n == 2);
  CHECK(s.rows[2].n == 4);
  for (const RefinementRow& row : s.rows) {
    CHECK(row.rep.beta_h > 0.0);
    CHECK_FALSE(row.rep.failure);
    REQUIRE(row.rep.constructive_lb.has_value());
    CHECK(*row.rep.constructive_lb <= row.rep.beta_h + 1e-8);
  }
  CHECK(s.h_independent);
  // the finest level stays well inside the band
  CHECK(s.rows.back().rep.beta_h > 0.25 * s.rows.front().rep.beta_h);
}

TEST_CASE("flattening fans degrade the construction no faster than predicted") {
  DegeneracyStudy s = degeneracy_study(4, {0.5, 0.1});
  REQUIRE(s.rows.size() == 3);
  CHECK(s.within_margin);
  CHECK(s.c > 0.0);

  const DegeneracyRow& a = s.rows[0];
  const DegeneracyRow& b = s.rows[1];
  REQUIRE(a.theta_min.has_value());
  CHECK(*a.theta_min == doctest::Approx(0.5).epsilon(1e-9));
  REQUIRE(b.theta_min.has_value());
  CHECK(*b.theta_min == doctest::Approx(0.1).epsilon(1e-9));
  // both the pair and the construction degrade with the fan angle
  CHECK(b.beta_h < a.beta_h);
  CHECK(b.ratio > a.ratio);
  CHECK(b.predictor > a.predictor);
  CHECK(a.final_residual_rel <= 1e-10);
  CHECK(b.final_residual_rel <= 1e-10);

  // exactly flattened: the center reclassifies as singular and the right
  // inverse still lands on the constrained space
  const DegeneracyRow& col = s.rows[2];
  CHECK(col.singular_collapse);
  CHECK(col.delta == 0.0);
  CHECK(col.beta_h > 0.1);
  CHECK(col.final_residual_rel <= 1e-10);
}

TEST_CASE("manufactured stokes flow") {
  Case c2 = make_case(generate_mesh(MeshFamily::Diagonal, 2), 4);
  StokesSolution s2 = solve_stokes(c2.m, c2.vs, c2.ps, StokesProblem::Manufactured);
  CHECK(s2.solver_residual <= 1e-12);
  CHECK(s2.grad_u > 0.0);
  // pointwise divergence control, the reason this pair exists
  CHECK(s2.max_sampled_div <= 1e-10 * s2.grad_u);
  CHECK(s2.div_moment_norm <= 1e-12);
  REQUIRE(s2.err_l2.has_value());
  REQUIRE(s2.err_h1.has_value());
  REQUIRE(s2.err_p.has_value());

  Case c4 = make_case(generate_mesh(MeshFamily::Diagonal, 4), 4);
  StokesSolution s4 = solve_stokes(c4.m, c4.vs, c4.ps, StokesProblem::Manufactured);
  CHECK(s4.max_sampled_div <= 1e-10 * s4.grad_u);
  CHECK(*s4.err_l2 < *s2.err_l2);
  CHECK(*s4.err_h1 < *s2.err_h1);
  // pressure error is reported, not asserted: it rides on the constraint rows
  CHECK(*s4.err_p > 0.0);

  StokesSolution z = solve_stokes(c2.m, c2.vs, c2.ps, StokesProblem::Zero);
  CHECK(z.u_full.cwiseAbs().maxCoeff() == 0.0);
  CHECK(z.max_sampled_div == 0.0);
  CHECK_FALSE(z.err_l2.has_value());
}

TEST_CASE("serial and parallel verification agree bitwise") {
  Case c = make_case(generate_mesh(MeshFamily::PerturbedDiagonal, 2, 7), 4);
  InfSupReport rs = run(c, Exec::Serial);
  InfSupReport rp = run(c, Exec::Par);
  CHECK(rs.beta_h == rp.beta_h);
  CHECK(rs.beta_h_semi == rp.beta_h_semi);
  CHECK(rs.lambda_min == rp.lambda_min);
  REQUIRE(rs.constructive_lb.has_value());
  REQUIRE(rp.constructive_lb.has_value());
  CHECK(*rs.constructive_lb == *rp.constructive_lb);

  StokesSolution ss = solve_stokes(c.m, c.vs, c.ps, StokesProblem::Manufactured, Exec::Serial);
  StokesSolution sp = solve_stokes(c.m, c.vs, c.ps, StokesProblem::Manufactured, Exec::Par);
  CHECK(ss.u_full == sp.u_full);
  CHECK(ss.max_sampled_div == sp.max_sampled_div);
  CHECK(*ss.err_h1 == *sp.err_h1);
}

TEST_CASE("bad inputs are rejected up front") {
  Mesh m = generate_mesh(MeshFamily::Diagonal, 1);
  Classification cls = classify(m);
  VelocitySpace v4 = build_velocity_space(m, 4);
  PressureSpace p5 = build_pressure_space(m, 5, cls);
  CHECK_THROWS_AS((void)compute_infsup(m, v4, p5, cls), validation_error);
  CHECK_THROWS_AS((void)refinement_study(MeshFamily::Diagonal, 4, 0), validation_error);
  CHECK_THROWS_AS((void)degeneracy_study(3, {0.5}), validation_error);
  CHECK_THROWS_AS((void)degeneracy_study(4, {}), validation_error);
  // the offset square cannot reach sin values this close to one
  CHECK_THROWS_AS((void)degeneracy_study(4, {0.999}), validation_error);
  // k=1 has no free velocity dofs on the unit cell at all
  VelocitySpace v1 = build_velocity_space(m, 1);
  PressureSpace p1 = build_pressure_space(m, 1, cls);
  CHECK_THROWS_AS((void)compute_infsup(m, v1, p1, cls), validation_error);
}
