#include "sv/spaces.hpp"

#include <algorithm>
#include <cmath>

#include "sv/rng.hpp"

namespace sv {

int corner_node_index(int degree, int i) {
  switch (i) {
    case 0: return BaryPoly::n_coeffs(degree) - 1;  // (d,0,0)
    case 1: return degree;                          // (0,d,0)
    case 2: return 0;                               // (0,0,d)
  }
  throw internal_error("corner index out of range");
}

VelocitySpace build_velocity_space(const Mesh& m, int k) {
  if (k < 1) throw validation_error("velocity order must be >= 1");
  VelocitySpace vs;
  vs.k = k;
  const int nv = m.n_vertices();
  const int ne = m.n_edges();
  const int per_edge = k - 1;
  const int per_tri = (k - 1) * (k - 2) / 2;
  vs.n_nodes = nv + ne * per_edge + m.n_tris() * per_tri;
  vs.node_pos.assign(static_cast<std::size_t>(vs.n_nodes), Vec2{});
  vs.node_on_boundary.assign(static_cast<std::size_t>(vs.n_nodes), false);

  const auto nodes = lattice_nodes(k);
  const int nd = static_cast<int>(nodes.size());
  vs.element_nodes.assign(static_cast<std::size_t>(m.n_tris()), {});
  for (int t = 0; t < m.n_tris(); ++t) {
    const auto& tv = m.tris[static_cast<std::size_t>(t)].v;
    auto& en = vs.element_nodes[static_cast<std::size_t>(t)];
    en.resize(static_cast<std::size_t>(nd));
    int interior_seen = 0;
    for (int i = 0; i < nd; ++i) {
      auto [a, b, c] = nodes[static_cast<std::size_t>(i)];
      int zeros = (a == 0) + (b == 0) + (c == 0);
      int gid;
      if (zeros == 2) {
        int corner = (a == k) ? 0 : (b == k) ? 1 : 2;
        gid = tv[static_cast<std::size_t>(corner)];
      } else if (zeros == 1) {
        // on the edge opposite the vanished coordinate
        int opp = (a == 0) ? 0 : (b == 0) ? 1 : 2;
        int e = m.tri_edges[static_cast<std::size_t>(t)][static_cast<std::size_t>(opp)];
        const Edge& ed = m.edges[static_cast<std::size_t>(e)];
        // bary weight of the higher-id endpoint fixes the slot along the edge
        int lo_local = -1;
        for (int j = 0; j < 3; ++j)
          if (tv[static_cast<std::size_t>(j)] == ed.v[0]) lo_local = j;
        int w[3] = {a, b, c};
        int hi_weight = k - w[lo_local];
        gid = nv + e * per_edge + (hi_weight - 1);
      } else {
        gid = nv + ne * per_edge + t * per_tri + interior_seen;
        interior_seen++;
      }
      en[static_cast<std::size_t>(i)] = gid;
      Vec2 p = (static_cast<double>(a) / k) * m.point(tv[0]) +
               (static_cast<double>(b) / k) * m.point(tv[1]) +
               (static_cast<double>(c) / k) * m.point(tv[2]);
      vs.node_pos[static_cast<std::size_t>(gid)] = p;
    }
  }
  for (int v = 0; v < nv; ++v)
    vs.node_on_boundary[static_cast<std::size_t>(v)] =
        m.vertices[static_cast<std::size_t>(v)].on_boundary;
  for (int e = 0; e < ne; ++e)
    if (m.edges[static_cast<std::size_t>(e)].tri[1] < 0)
      for (int s = 0; s < per_edge; ++s)
        vs.node_on_boundary[static_cast<std::size_t>(nv + e * per_edge + s)] = true;

  vs.full_to_free.assign(static_cast<std::size_t>(vs.n_full()), -1);
  for (int node = 0; node < vs.n_nodes; ++node) {
    if (vs.node_on_boundary[static_cast<std::size_t>(node)]) continue;
    for (int c = 0; c < 2; ++c) {
      vs.full_to_free[static_cast<std::size_t>(2 * node + c)] =
          static_cast<int>(vs.free_to_full.size());
      vs.free_to_full.push_back(2 * node + c);
    }
  }
  vs.n_free = static_cast<int>(vs.free_to_full.size());
  return vs;
}

Eigen::RowVectorXd singular_functional_row(const Mesh& m, const PressureSpace& ps,
                                           const VertexPatch& patch) {
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(ps.n_dofs);
  const int n = patch.n();
  for (int j = 0; j < n; ++j) {
    int t = patch.tris[static_cast<std::size_t>(j)];
    int local = m.local_index(t, patch.center);
    int node = corner_node_index(ps.degree, local);
    // fan positions are 1-based in the alternating sign
    double sign = ((n - (j + 1)) % 2 == 0) ? 1.0 : -1.0;
    row(t * ps.block_dim + node) += sign;
  }
  return row;
}

double singular_functional(const Mesh& m, const PressureSpace& ps,
                           const VertexPatch& patch, const Eigen::VectorXd& p) {
  double sum = 0.0;
  const int n = patch.n();
  for (int j = 0; j < n; ++j) {
    int t = patch.tris[static_cast<std::size_t>(j)];
    int local = m.local_index(t, patch.center);
    int node = corner_node_index(ps.degree, local);
    double sign = ((n - (j + 1)) % 2 == 0) ? 1.0 : -1.0;
    sum += sign * p(t * ps.block_dim + node);
  }
  return sum;
}

PressureSpace build_pressure_space(const Mesh& m, int k, const Classification& cls) {
  if (k < 1) throw validation_error("pressure space requires k >= 1");
  PressureSpace ps;
  ps.k = k;
  ps.degree = k - 1;
  ps.block_dim = BaryPoly::n_coeffs(ps.degree);
  ps.n_dofs = ps.block_dim * m.n_tris();

  const int n_rows = 1 + static_cast<int>(cls.singular.size());
  ps.constraint_rows = Eigen::MatrixXd::Zero(n_rows, ps.n_dofs);
  ps.constraint_vertices.assign(static_cast<std::size_t>(n_rows), -1);
  const auto& basis = lagrange_data(ps.degree).basis;
  for (int t = 0; t < m.n_tris(); ++t) {
    TriGeom g = tri_geom(m, t);
    for (int r = 0; r < ps.block_dim; ++r)
      ps.constraint_rows(0, t * ps.block_dim + r) =
          integrate_triangle(basis[static_cast<std::size_t>(r)], g);
  }
  int row = 1;
  for (int z : cls.singular) {
    VertexPatch patch = build_patch(m, z);
    ps.constraint_rows.row(row) = singular_functional_row(m, ps, patch);
    ps.constraint_vertices[static_cast<std::size_t>(row)] = z;
    row++;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(ps.constraint_rows, Eigen::ComputeFullV);
  double smax = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
  int rank = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()(i) > 1e-10 * smax) rank++;
  ps.dim = ps.n_dofs - rank;
  ps.nullspace = svd.matrixV().rightCols(ps.dim);
  return ps;
}

namespace {

struct LocalMats {
  Eigen::MatrixXd A, Mv, B, Mp;
};

LocalMats element_matrices(const Mesh& m, const VelocitySpace& vs,
                           const PressureSpace& ps, int t) {
  const TriGeom g = tri_geom(m, t);
  const auto& lag = lagrange_data(vs.k);
  const auto& plag = lagrange_data(ps.degree);
  const int nd = static_cast<int>(lag.basis.size());
  const int pb = ps.block_dim;

  // gradients of the scalar velocity basis on this triangle
  std::vector<VectorBaryPoly> grads;
  grads.reserve(static_cast<std::size_t>(nd));
  for (int i = 0; i < nd; ++i) {
    VectorBaryPoly gi{BaryPoly(std::max(0, vs.k - 1)), BaryPoly(std::max(0, vs.k - 1))};
    for (int c = 0; c < 3; ++c) {
      const BaryPoly& d = lag.dbasis[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
      Vec2 gb = g.grad_bary[static_cast<std::size_t>(c)];
      gi.x = gi.x + gb.x * d;
      gi.y = gi.y + gb.y * d;
    }
    grads.push_back(std::move(gi));
  }

  LocalMats loc;
  loc.A = Eigen::MatrixXd::Zero(2 * nd, 2 * nd);
  loc.Mv = Eigen::MatrixXd::Zero(2 * nd, 2 * nd);
  loc.B = Eigen::MatrixXd::Zero(pb, 2 * nd);
  loc.Mp = Eigen::MatrixXd::Zero(pb, pb);
  for (int i = 0; i < nd; ++i)
    for (int j = i; j < nd; ++j) {
      double a = integrate_triangle(
          grads[static_cast<std::size_t>(i)].x * grads[static_cast<std::size_t>(j)].x +
              grads[static_cast<std::size_t>(i)].y * grads[static_cast<std::size_t>(j)].y,
          g);
      double mm = integrate_triangle(
          lag.basis[static_cast<std::size_t>(i)] * lag.basis[static_cast<std::size_t>(j)], g);
      for (int c = 0; c < 2; ++c) {
        loc.A(2 * i + c, 2 * j + c) = a;
        loc.A(2 * j + c, 2 * i + c) = a;
        loc.Mv(2 * i + c, 2 * j + c) = mm;
        loc.Mv(2 * j + c, 2 * i + c) = mm;
      }
    }
  for (int r = 0; r < pb; ++r) {
    const BaryPoly& q = plag.basis[static_cast<std::size_t>(r)];
    for (int i = 0; i < nd; ++i) {
      loc.B(r, 2 * i + 0) = integrate_triangle(q * grads[static_cast<std::size_t>(i)].x, g);
      loc.B(r, 2 * i + 1) = integrate_triangle(q * grads[static_cast<std::size_t>(i)].y, g);
    }
    for (int s = r; s < pb; ++s) {
      double v = integrate_triangle(
          plag.basis[static_cast<std::size_t>(r)] * plag.basis[static_cast<std::size_t>(s)], g);
      loc.Mp(r, s) = v;
      loc.Mp(s, r) = v;
    }
  }
  return loc;
}

}  // namespace

AssembledOps assemble(const Mesh& m, const VelocitySpace& vs,
                      const PressureSpace& ps, Exec ex) {
  const int nt = m.n_tris();
  std::vector<LocalMats> local(static_cast<std::size_t>(nt));
  for_each_index(ex, nt, [&](std::int64_t t) {
    local[static_cast<std::size_t>(t)] =
        element_matrices(m, vs, ps, static_cast<int>(t));
  });

  AssembledOps ops;
  ops.A = Eigen::MatrixXd::Zero(vs.n_free, vs.n_free);
  ops.Mv = Eigen::MatrixXd::Zero(vs.n_free, vs.n_free);
  ops.B = Eigen::MatrixXd::Zero(ps.n_dofs, vs.n_free);
  ops.Mp = Eigen::MatrixXd::Zero(ps.n_dofs, ps.n_dofs);
  const int nd = BaryPoly::n_coeffs(vs.k);
  // serial scatter in element order keeps results independent of Exec
  for (int t = 0; t < nt; ++t) {
    const auto& en = vs.element_nodes[static_cast<std::size_t>(t)];
    const LocalMats& loc = local[static_cast<std::size_t>(t)];
    std::vector<int> gdof(static_cast<std::size_t>(2 * nd));
    for (int i = 0; i < nd; ++i)
      for (int c = 0; c < 2; ++c)
        gdof[static_cast<std::size_t>(2 * i + c)] =
            vs.full_to_free[static_cast<std::size_t>(2 * en[static_cast<std::size_t>(i)] + c)];
    for (int i = 0; i < 2 * nd; ++i) {
      int gi = gdof[static_cast<std::size_t>(i)];
      if (gi < 0) continue;
      for (int j = 0; j < 2 * nd; ++j) {
        int gj = gdof[static_cast<std::size_t>(j)];
        if (gj < 0) continue;
        ops.A(gi, gj) += loc.A(i, j);
        ops.Mv(gi, gj) += loc.Mv(i, j);
      }
      for (int r = 0; r < ps.block_dim; ++r)
        ops.B(t * ps.block_dim + r, gi) += loc.B(r, i);
    }
    ops.Mp.block(t * ps.block_dim, t * ps.block_dim, ps.block_dim, ps.block_dim) =
        loc.Mp;
  }
  return ops;
}

VectorBaryPoly element_velocity(const VelocitySpace& vs,
                                const Eigen::VectorXd& u_full, int t) {
  const auto& lag = lagrange_data(vs.k);
  const int nd = static_cast<int>(lag.basis.size());
  const auto& en = vs.element_nodes[static_cast<std::size_t>(t)];
  VectorBaryPoly out{BaryPoly(vs.k), BaryPoly(vs.k)};
  for (int i = 0; i < nd; ++i) {
    double cx = u_full(2 * en[static_cast<std::size_t>(i)] + 0);
    double cy = u_full(2 * en[static_cast<std::size_t>(i)] + 1);
    if (cx != 0.0) out.x = out.x + cx * lag.basis[static_cast<std::size_t>(i)];
    if (cy != 0.0) out.y = out.y + cy * lag.basis[static_cast<std::size_t>(i)];
  }
  return out;
}

BaryPoly element_pressure(const PressureSpace& ps, const Eigen::VectorXd& p, int t) {
  const auto& lag = lagrange_data(ps.degree);
  BaryPoly out(ps.degree);
  for (int r = 0; r < ps.block_dim; ++r) {
    double c = p(t * ps.block_dim + r);
    if (c != 0.0) out = out + c * lag.basis[static_cast<std::size_t>(r)];
  }
  return out;
}

double grad_norm(const Mesh& m, const VelocitySpace& vs, const Eigen::VectorXd& u_full) {
  double sum = 0.0;
  for (int t = 0; t < m.n_tris(); ++t) {
    TriGeom g = tri_geom(m, t);
    VectorBaryPoly u = element_velocity(vs, u_full, t);
    VectorBaryPoly gx = gradient(u.x, g), gy = gradient(u.y, g);
    sum += integrate_triangle(gx.x * gx.x + gx.y * gx.y + gy.x * gy.x + gy.y * gy.y, g);
  }
  return std::sqrt(std::max(0.0, sum));
}

double l2_norm(const Mesh& m, const VelocitySpace& vs, const Eigen::VectorXd& u_full) {
  double sum = 0.0;
  for (int t = 0; t < m.n_tris(); ++t) {
    TriGeom g = tri_geom(m, t);
    VectorBaryPoly u = element_velocity(vs, u_full, t);
    sum += integrate_triangle(u.x * u.x + u.y * u.y, g);
  }
  return std::sqrt(std::max(0.0, sum));
}

double pressure_l2_norm(const Mesh& m, const PressureSpace& ps, const Eigen::VectorXd& p) {
  double sum = 0.0;
  for (int t = 0; t < m.n_tris(); ++t) {
    TriGeom g = tri_geom(m, t);
    BaryPoly q = element_pressure(ps, p, t);
    sum += integrate_triangle(q * q, g);
  }
  return std::sqrt(std::max(0.0, sum));
}

double pressure_mean(const Mesh& m, const PressureSpace& ps, const Eigen::VectorXd& p) {
  double sum = 0.0;
  for (int t = 0; t < m.n_tris(); ++t) {
    TriGeom g = tri_geom(m, t);
    sum += integrate_triangle(element_pressure(ps, p, t), g);
  }
  return sum / m.domain_area;
}

Eigen::VectorXd free_to_full_vec(const VelocitySpace& vs, const Eigen::VectorXd& u_free) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(vs.n_full());
  for (int i = 0; i < vs.n_free; ++i)
    out(vs.free_to_full[static_cast<std::size_t>(i)]) = u_free(i);
  return out;
}

Eigen::VectorXd full_to_free_vec(const VelocitySpace& vs, const Eigen::VectorXd& u_full) {
  Eigen::VectorXd out(vs.n_free);
  for (int i = 0; i < vs.n_free; ++i)
    out(i) = u_full(vs.free_to_full[static_cast<std::size_t>(i)]);
  return out;
}

double max_boundary_coeff(const VelocitySpace& vs, const Eigen::VectorXd& u_full) {
  double mx = 0.0;
  for (int node = 0; node < vs.n_nodes; ++node)
    if (vs.node_on_boundary[static_cast<std::size_t>(node)])
      for (int c = 0; c < 2; ++c)
        mx = std::max(mx, std::abs(u_full(2 * node + c)));
  return mx;
}

Eigen::VectorXd interpolate(const VelocitySpace& vs, const std::function<Vec2(Vec2)>& f) {
  Eigen::VectorXd out(vs.n_full());
  for (int node = 0; node < vs.n_nodes; ++node) {
    Vec2 v = f(vs.node_pos[static_cast<std::size_t>(node)]);
    out(2 * node + 0) = v.x;
    out(2 * node + 1) = v.y;
  }
  return out;
}

void assign_element_field(const Mesh& m, const VelocitySpace& vs, int t,
                          const VectorBaryPoly& f, Eigen::VectorXd& u_full) {
  (void)m;
  const auto nodes = lattice_nodes(vs.k);
  const auto& en = vs.element_nodes[static_cast<std::size_t>(t)];
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    double l1 = static_cast<double>(nodes[i][0]) / vs.k;
    double l2 = static_cast<double>(nodes[i][1]) / vs.k;
    double l3 = static_cast<double>(nodes[i][2]) / vs.k;
    u_full(2 * en[i] + 0) = f.x.eval(l1, l2, l3);
    u_full(2 * en[i] + 1) = f.y.eval(l1, l2, l3);
  }
}

Eigen::VectorXd interpolate_between(const Mesh& m, const VelocitySpace& from,
                                    const Eigen::VectorXd& u_from,
                                    const VelocitySpace& to) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(to.n_full());
  for (int t = 0; t < m.n_tris(); ++t)
    assign_element_field(m, to, t, element_velocity(from, u_from, t), out);
  return out;
}

Eigen::VectorXd divergence_coords(const Mesh& m, const VelocitySpace& vs,
                                  const PressureSpace& ps, const Eigen::VectorXd& u_full) {
  if (ps.degree != vs.k - 1)
    throw internal_error("divergence_coords needs pressure degree k-1");
  Eigen::VectorXd out(ps.n_dofs);
  const auto pnodes = lattice_nodes(ps.degree);
  for (int t = 0; t < m.n_tris(); ++t) {
    TriGeom g = tri_geom(m, t);
    BaryPoly div = divergence(element_velocity(vs, u_full, t), g);
    for (std::size_t r = 0; r < pnodes.size(); ++r) {
      double l1 = ps.degree ? static_cast<double>(pnodes[r][0]) / ps.degree : 1.0 / 3;
      double l2 = ps.degree ? static_cast<double>(pnodes[r][1]) / ps.degree : 1.0 / 3;
      double l3 = ps.degree ? static_cast<double>(pnodes[r][2]) / ps.degree : 1.0 / 3;
      out(t * ps.block_dim + static_cast<int>(r)) = div.eval(l1, l2, l3);
    }
  }
  return out;
}

Eigen::VectorXd random_admissible_pressure(const Mesh& m, const PressureSpace& ps,
                                           std::uint64_t seed) {
  SplitMix64 rng(seed);
  Eigen::VectorXd r(ps.dim);
  for (int i = 0; i < ps.dim; ++i) r(i) = rng.uniform(-1.0, 1.0);
  Eigen::VectorXd p = ps.nullspace * r;
  double nrm = pressure_l2_norm(m, ps, p);
  if (nrm <= 0.0) throw internal_error("random pressure degenerated to zero");
  return p / nrm;
}

DivInclusionReport verify_div_inclusion(const Mesh& m, const VelocitySpace& vs,
                                        const Classification& cls, int trials,
                                        std::uint64_t seed) {
  DivInclusionReport rep;
  rep.trials = trials;
  // functional rows only need the pressure block layout, not the constraints
  PressureSpace layout;
  layout.k = vs.k;
  layout.degree = vs.k - 1;
  layout.block_dim = BaryPoly::n_coeffs(vs.k - 1);
  layout.n_dofs = layout.block_dim * m.n_tris();
  std::vector<VertexPatch> patches;
  for (int z : cls.singular) patches.push_back(build_patch(m, z));

  for (int trial = 0; trial < trials; ++trial) {
    SplitMix64 rng(seed_stream(seed, static_cast<std::uint64_t>(trial)));
    Eigen::VectorXd u = Eigen::VectorXd::Zero(vs.n_full());
    for (int i = 0; i < vs.n_free; ++i)
      u(vs.free_to_full[static_cast<std::size_t>(i)]) = rng.uniform(-1.0, 1.0);
    double gn = grad_norm(m, vs, u);
    if (gn <= 0.0) continue;
    Eigen::VectorXd dc = divergence_coords(m, vs, layout, u);
    for (const auto& patch : patches) {
      double f = singular_functional(m, layout, patch, dc);
      rep.max_rel_residual = std::max(rep.max_rel_residual, std::abs(f) / gn);
    }
  }
  return rep;
}

}  // namespace sv
