#include "sv/verify.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sv/polyspace.hpp"

namespace sv {

namespace {

// lambda_min below this is a numerical zero: the pair has a pressure the
// velocity space cannot see
constexpr double kFailureFloor = 1e-14;
// and below this the pencil itself is broken
constexpr double kNegativeTol = -1e-12;

struct Pencil {
  Eigen::MatrixXd S_full;  // N^T B A_full^{-1} B^T N
  Eigen::MatrixXd S_semi;
  Eigen::MatrixXd T;  // N^T Mp N
};

Eigen::MatrixXd schur(const Eigen::MatrixXd& A, const Eigen::MatrixXd& BtN) {
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success)
    throw internal_error("velocity gram matrix is not positive definite");
  Eigen::MatrixXd W = llt.solve(BtN);
  Eigen::MatrixXd S = BtN.transpose() * W;
  return 0.5 * (S + S.transpose());
}

Pencil build_pencil(const Mesh& m, const VelocitySpace& vs, const PressureSpace& ps,
                    Exec ex) {
  if (ps.dim < 1) throw validation_error("pressure space has no admissible directions");
  if (vs.n_free < 1) throw validation_error("velocity space has no free dofs");
  AssembledOps ops = assemble(m, vs, ps, ex);
  Eigen::MatrixXd BtN = ops.B.transpose() * ps.nullspace;
  Pencil pc;
  pc.S_semi = schur(ops.A, BtN);
  pc.S_full = schur(ops.A + ops.Mv, BtN);
  Eigen::MatrixXd T = ps.nullspace.transpose() * ops.Mp * ps.nullspace;
  pc.T = 0.5 * (T + T.transpose());
  return pc;
}

double checked_lambda_min(const Eigen::VectorXd& evs) {
  double l = evs(0);
  if (l < kNegativeTol) {
    throw internal_error("inf-sup pencil produced lambda_min = " + std::to_string(l) +
                         ", below the negative tolerance");
  }
  return l;
}

}  // namespace

InfSupReport compute_infsup(const Mesh& m, const VelocitySpace& vs,
                            const PressureSpace& ps, const Classification& cls,
                            Exec ex, bool with_constructive) {
  if (vs.k != ps.k) throw validation_error("velocity and pressure orders disagree");
  Pencil pc = build_pencil(m, vs, ps, ex);

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> full(pc.S_full, pc.T);
  if (full.info() != Eigen::Success)
    throw internal_error("dense generalized eigensolve failed (full norm)");
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> semi(pc.S_semi, pc.T);
  if (semi.info() != Eigen::Success)
    throw internal_error("dense generalized eigensolve failed (seminorm)");

  InfSupReport rep;
  rep.k = vs.k;
  rep.h_max = m.h_max();
  rep.theta_min = cls.theta_min;
  rep.n_u = vs.n_free;
  rep.n_p = ps.dim;
  rep.lambda_min = checked_lambda_min(full.eigenvalues());
  double l_semi = checked_lambda_min(semi.eigenvalues());
  rep.beta_h = std::sqrt(std::max(rep.lambda_min, 0.0));
  rep.beta_h_semi = std::sqrt(std::max(l_semi, 0.0));
  rep.failure = rep.lambda_min < kFailureFloor;
  // the full norm dominates the seminorm, so its inf-sup constant cannot win
  if (rep.beta_h > rep.beta_h_semi + 1e-12)
    throw internal_error("beta_h exceeded its seminorm variant");

  if (with_constructive && vs.k >= 4 && !rep.failure) {
    // the minimizing eigenvector realizes beta_h, so the construction driven
    // by that pressure certifies a lower bound
    Eigen::VectorXd pstar = ps.nullspace * full.eigenvectors().col(0);
    RightInverseResult r = right_inverse(m, vs, ps, cls, pstar, ex);
    double h1 = std::sqrt(r.grad_v * r.grad_v +
                          std::pow(l2_norm(m, vs, r.v), 2));
    if (h1 > 0.0) rep.constructive_lb = r.p_norm / h1;
  }
  return rep;
}

double infsup_power_check(const Mesh& m, const VelocitySpace& vs,
                          const PressureSpace& ps, Exec ex) {
  Pencil pc = build_pencil(m, vs, ps, ex);
  // Cholesky transform of the pencil: T = L L^T, M = L^{-1} S L^{-T}
  Eigen::LLT<Eigen::MatrixXd> tllt(pc.T);
  if (tllt.info() != Eigen::Success)
    throw internal_error("pressure gram matrix is not positive definite");
  Eigen::MatrixXd L = tllt.matrixL();
  Eigen::MatrixXd LiS = L.triangularView<Eigen::Lower>().solve(pc.S_full);
  Eigen::MatrixXd LiSt = LiS.transpose();
  Eigen::MatrixXd M = L.triangularView<Eigen::Lower>().solve(LiSt);
  M = 0.5 * (M + Eigen::MatrixXd(M.transpose()));

  const Eigen::Index n = M.rows();
  Eigen::VectorXd y = Eigen::VectorXd::Ones(n);
  y.normalize();

  // plain inverse iterations orient y toward the smallest eigenvalue
  Eigen::LDLT<Eigen::MatrixXd> mldlt(M);
  if (mldlt.info() != Eigen::Success)
    throw internal_error("inverse iteration factorization failed");
  for (int it = 0; it < 30; ++it) {
    y = mldlt.solve(y);
    y.normalize();
  }
  double lambda = y.dot(M * y);

  // Rayleigh quotient steps; the near-singular solves amplify exactly the
  // direction being sought
  for (int it = 0; it < 3; ++it) {
    Eigen::MatrixXd Ms = M - lambda * Eigen::MatrixXd::Identity(n, n);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(Ms);
    Eigen::VectorXd z = lu.solve(y);
    double zn = z.norm();
    if (!(zn > 0.0) || !std::isfinite(zn)) break;  // already at an eigenpair
    y = z / zn;
    lambda = y.dot(M * y);
  }
  return std::sqrt(std::max(lambda, 0.0));
}

RefinementStudy refinement_study(MeshFamily family, int k, int levels,
                                 std::uint64_t seed, Exec ex) {
  if (levels < 1) throw validation_error("refinement study needs at least one level");
  RefinementStudy study;
  int n = 1;
  for (int lvl = 0; lvl < levels; ++lvl, n *= 2) {
    Mesh m = generate_mesh(family, n, seed);
    Classification cls = classify(m, ex);
    VelocitySpace vs = build_velocity_space(m, k);
    PressureSpace ps = build_pressure_space(m, k, cls);
    RefinementRow row;
    row.n = n;
    row.rep = compute_infsup(m, vs, ps, cls, ex, k >= 4);
    study.rows.push_back(std::move(row));
  }
  bool monotone = true;
  for (std::size_t i = 1; i < study.rows.size(); ++i)
    monotone = monotone && study.rows[i].rep.beta_h < study.rows[i - 1].rep.beta_h;
  double coarsest = study.rows.front().rep.beta_h;
  double finest = study.rows.back().rep.beta_h;
  study.h_independent = !(monotone && finest < 0.25 * coarsest);
  return study;
}

namespace {

double offset_theta(double delta) {
  Mesh m = make_offset_center_square(delta);
  Classification cls = classify(m, Exec::Serial);
  if (!cls.theta_min) throw internal_error("offset square lost every nonsingular vertex");
  return *cls.theta_min;
}

// theta_min grows with delta on this bracket; bisect to the target
double delta_for_theta(double target) {
  double lo = 1e-7, hi = 0.39;
  if (offset_theta(hi) < target)
    throw validation_error("theta target " + std::to_string(target) +
                           " is not reachable by the offset square");
  for (int it = 0; it < 80 && hi - lo > 1e-14; ++it) {
    double mid = 0.5 * (lo + hi);
    (offset_theta(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

DegeneracyStudy degeneracy_study(int k, const std::vector<double>& theta_targets,
                                 bool include_collapse, std::uint64_t seed, Exec ex) {
  if (k < 4) throw validation_error("degeneracy study needs order k >= 4");
  if (theta_targets.empty())
    throw validation_error("degeneracy study needs at least one theta target");

  DegeneracyStudy study;
  auto run_case = [&](double delta, double target, bool collapse) {
    Mesh m = make_offset_center_square(delta);
    Classification cls = classify(m, ex);
    VelocitySpace vs = build_velocity_space(m, k);
    PressureSpace ps = build_pressure_space(m, k, cls);
    InfSupReport rep = compute_infsup(m, vs, ps, cls, ex, false);
    Eigen::VectorXd p = random_admissible_pressure(m, ps, seed);
    RightInverseResult r = right_inverse(m, vs, ps, cls, p, ex);
    DegeneracyRow row;
    row.theta_target = target;
    row.delta = delta;
    row.theta_min = cls.theta_min;
    row.beta_h = rep.beta_h;
    row.ratio = r.stability_ratio;
    row.predictor = r.predictor;
    row.final_residual_rel = r.p_norm > 0.0 ? r.final_residual / r.p_norm : 0.0;
    row.singular_collapse = collapse;
    study.rows.push_back(row);
  };

  for (double target : theta_targets) run_case(delta_for_theta(target), target, false);
  // delta = 0 collapses the center onto the diagonals: it reclassifies as
  // singular and the construction must keep working on the constrained space
  if (include_collapse) run_case(0.0, 0.0, true);

  const DegeneracyRow& first = study.rows.front();
  study.c = first.ratio / first.predictor;
  study.within_margin = true;
  for (const DegeneracyRow& row : study.rows) {
    if (row.singular_collapse) continue;  // its predictor tracks other vertices
    if (row.ratio > 5.0 * study.c * row.predictor) study.within_margin = false;
  }
  return study;
}

namespace {

struct ManufacturedStokes {
  VectorBaryPoly u;  // divergence free, zero trace on the unit square
  VectorBaryPoly f;  // -laplace(u) + grad(p)
  BaryPoly p;
};

// all fields are polynomial, so per-element barycentric forms are exact
ManufacturedStokes manufactured_on(const TriGeom& g) {
  BaryPoly X = g.corner[0].x * BaryPoly::hat(0) + g.corner[1].x * BaryPoly::hat(1) +
               g.corner[2].x * BaryPoly::hat(2);
  BaryPoly Y = g.corner[0].y * BaryPoly::hat(0) + g.corner[1].y * BaryPoly::hat(1) +
               g.corner[2].y * BaryPoly::hat(2);
  BaryPoly one = BaryPoly::constant(1.0);
  BaryPoly phi = (X * (one - X)) * (Y * (one - Y));
  BaryPoly gsq = phi * phi;

  ManufacturedStokes ms;
  ms.u = curl(gsq, g);
  VectorBaryPoly dg = gradient(gsq, g);
  BaryPoly lap_gx = divergence(gradient(dg.x, g), g);
  BaryPoly lap_gy = divergence(gradient(dg.y, g), g);
  // u = (d/dy g, -d/dx g), so -laplace(u) = (-laplace(dg.y), laplace(dg.x))
  ms.f = {-1.0 * lap_gy + 3.0 * (X * X), lap_gx + 3.0 * (Y * Y)};
  ms.p = X * X * X + Y * Y * Y - BaryPoly::constant(0.5);
  return ms;
}

Eigen::VectorXd assemble_body_force(const Mesh& m, const VelocitySpace& vs, Exec ex) {
  const LagrangeData& ld = lagrange_data(vs.k);
  const int nloc = static_cast<int>(ld.basis.size());
  std::vector<Eigen::VectorXd> local(static_cast<std::size_t>(m.n_tris()));
  for_each_index(ex, m.n_tris(), [&](std::int64_t t) {
    TriGeom g = tri_geom(m, static_cast<int>(t));
    ManufacturedStokes ms = manufactured_on(g);
    Eigen::VectorXd lv(2 * nloc);
    for (int i = 0; i < nloc; ++i) {
      lv(2 * i) = integrate_triangle(ms.f.x * ld.basis[i], g);
      lv(2 * i + 1) = integrate_triangle(ms.f.y * ld.basis[i], g);
    }
    local[static_cast<std::size_t>(t)] = std::move(lv);
  });
  Eigen::VectorXd F = Eigen::VectorXd::Zero(vs.n_free);
  for (int t = 0; t < m.n_tris(); ++t) {
    const auto& nodes = vs.element_nodes[static_cast<std::size_t>(t)];
    const Eigen::VectorXd& lv = local[static_cast<std::size_t>(t)];
    for (int i = 0; i < nloc; ++i) {
      for (int c = 0; c < 2; ++c) {
        int fd = vs.full_to_free[static_cast<std::size_t>(2 * nodes[static_cast<std::size_t>(i)] + c)];
        if (fd >= 0) F(fd) += lv(2 * i + c);
      }
    }
  }
  return F;
}

}  // namespace

StokesSolution solve_stokes(const Mesh& m, const VelocitySpace& vs,
                            const PressureSpace& ps, StokesProblem problem, Exec ex) {
  if (vs.k != ps.k) throw validation_error("velocity and pressure orders disagree");
  if (ps.dim < 1) throw validation_error("pressure space has no admissible directions");
  AssembledOps ops = assemble(m, vs, ps, ex);
  Eigen::MatrixXd BtN = ops.B.transpose() * ps.nullspace;

  const int nf = vs.n_free;
  const int np = ps.dim;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nf + np, nf + np);
  K.topLeftCorner(nf, nf) = ops.A;
  K.topRightCorner(nf, np) = BtN;
  K.bottomLeftCorner(np, nf) = BtN.transpose();

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nf + np);
  if (problem == StokesProblem::Manufactured)
    rhs.head(nf) = assemble_body_force(m, vs, ex);

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
  Eigen::VectorXd x = lu.solve(rhs);
  for (int round = 0; round < 2; ++round) {
    Eigen::VectorXd r = rhs - K * x;
    x += lu.solve(r);
  }
  double rn = (rhs - K * x).norm();
  double rd = std::max(rhs.norm(), 1e-300);
  StokesSolution sol;
  sol.solver_residual = rn / rd;
  if (sol.solver_residual > 1e-8)
    throw internal_error("stokes saddle solve stalled at relative residual " +
                         std::to_string(sol.solver_residual));

  // the pressure unknown is the negated multiplier of the symmetric form
  sol.u_full = free_to_full_vec(vs, x.head(nf));
  sol.p_coords = ps.nullspace * Eigen::VectorXd(-x.tail(np));
  sol.grad_u = grad_norm(m, vs, sol.u_full);
  sol.div_moment_norm = (BtN.transpose() * x.head(nf)).norm();

  const auto grid = lattice_nodes(6);
  std::vector<double> tri_div(static_cast<std::size_t>(m.n_tris()), 0.0);
  std::vector<std::array<double, 3>> tri_err(static_cast<std::size_t>(m.n_tris()),
                                             {0.0, 0.0, 0.0});
  const bool manufactured = problem == StokesProblem::Manufactured;
  for_each_index(ex, m.n_tris(), [&](std::int64_t ti) {
    int t = static_cast<int>(ti);
    TriGeom g = tri_geom(m, t);
    VectorBaryPoly uh = element_velocity(vs, sol.u_full, t);
    BaryPoly d = divergence(uh, g);
    double worst = 0.0;
    for (const auto& node : grid) {
      double v = d.eval(node[0] / 6.0, node[1] / 6.0, node[2] / 6.0);
      worst = std::max(worst, std::abs(v));
    }
    tri_div[static_cast<std::size_t>(ti)] = worst;
    if (!manufactured) return;
    ManufacturedStokes ms = manufactured_on(g);
    VectorBaryPoly du = uh - ms.u;
    VectorBaryPoly gx = gradient(du.x, g), gy = gradient(du.y, g);
    BaryPoly dp = element_pressure(ps, sol.p_coords, t) - ms.p;
    tri_err[static_cast<std::size_t>(ti)] = {
        integrate_triangle(du.x * du.x + du.y * du.y, g),
        integrate_triangle(gx.x * gx.x + gx.y * gx.y + gy.x * gy.x + gy.y * gy.y, g),
        integrate_triangle(dp * dp, g)};
  });
  double e0 = 0.0, e1 = 0.0, e2 = 0.0;
  for (int t = 0; t < m.n_tris(); ++t) {
    sol.max_sampled_div = std::max(sol.max_sampled_div, tri_div[static_cast<std::size_t>(t)]);
    e0 += tri_err[static_cast<std::size_t>(t)][0];
    e1 += tri_err[static_cast<std::size_t>(t)][1];
    e2 += tri_err[static_cast<std::size_t>(t)][2];
  }
  if (manufactured) {
    sol.err_l2 = std::sqrt(std::max(e0, 0.0));
    sol.err_h1 = std::sqrt(std::max(e1, 0.0));
    sol.err_p = std::sqrt(std::max(e2, 0.0));
  }
  return sol;
}

}  // namespace sv
