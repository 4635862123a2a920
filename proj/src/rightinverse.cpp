#include "sv/rightinverse.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace sv {

namespace {

int free_dof(const VelocitySpace& vs, int node, int comp) {
  int f = vs.full_to_free[static_cast<std::size_t>(2 * node + comp)];
  if (f < 0) throw internal_error("step-1 subspace touched a constrained dof");
  return f;
}

// mid-edge scalar node of edge e in a k=2 space (vertex nodes come first)
int mid_node(const Mesh& m, int e) { return m.n_vertices() + e; }

// rows are the element means of the divergence over the free dofs
Eigen::MatrixXd mean_div_operator(const Mesh& m, const VelocitySpace& vs) {
  Eigen::MatrixXd Dm = Eigen::MatrixXd::Zero(m.n_tris(), vs.n_free);
  const auto& ld = lagrange_data(vs.k);
  for (int t = 0; t < m.n_tris(); ++t) {
    TriGeom g = tri_geom(m, t);
    const auto& en = vs.element_nodes[static_cast<std::size_t>(t)];
    for (std::size_t i = 0; i < en.size(); ++i) {
      double ix = 0.0, iy = 0.0;
      for (int d = 0; d < 3; ++d) {
        double w = integrate_triangle(ld.dbasis[i][static_cast<std::size_t>(d)], g);
        ix += w * g.grad_bary[static_cast<std::size_t>(d)].x;
        iy += w * g.grad_bary[static_cast<std::size_t>(d)].y;
      }
      int fx = vs.full_to_free[static_cast<std::size_t>(2 * en[i])];
      int fy = vs.full_to_free[static_cast<std::size_t>(2 * en[i] + 1)];
      if (fx >= 0) Dm(t, fx) += ix;
      if (fy >= 0) Dm(t, fy) += iy;
    }
  }
  return Dm;
}

// gradient gram over the free dofs (both components share the scalar gram)
Eigen::MatrixXd grad_gram(const Mesh& m, const VelocitySpace& vs) {
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(vs.n_free, vs.n_free);
  const auto& ld = lagrange_data(vs.k);
  const std::size_t nl = ld.basis.size();
  for (int t = 0; t < m.n_tris(); ++t) {
    TriGeom g = tri_geom(m, t);
    std::vector<VectorBaryPoly> gb(nl);
    for (std::size_t i = 0; i < nl; ++i) gb[i] = gradient(ld.basis[i], g);
    const auto& en = vs.element_nodes[static_cast<std::size_t>(t)];
    for (std::size_t i = 0; i < nl; ++i) {
      for (std::size_t j = i; j < nl; ++j) {
        double s = integrate_triangle(gb[i].x * gb[j].x + gb[i].y * gb[j].y, g);
        for (int c = 0; c < 2; ++c) {
          int fi = vs.full_to_free[static_cast<std::size_t>(2 * en[i] + c)];
          int fj = vs.full_to_free[static_cast<std::size_t>(2 * en[j] + c)];
          if (fi < 0 || fj < 0) continue;
          G(fi, fj) += s;
          if (fi != fj) G(fj, fi) += s;
        }
      }
    }
  }
  return G;
}

}  // namespace

BRSubspace build_br_subspace(const Mesh& m, bool p2p0) {
  BRSubspace br;
  br.host = build_velocity_space(m, 2);
  br.p2p0 = p2p0;
  if (p2p0) {
    br.cols = Eigen::MatrixXd::Identity(br.host.n_free, br.host.n_free);
    return br;
  }
  std::vector<int> interior_verts;
  for (int z = 0; z < m.n_vertices(); ++z)
    if (!m.vertices[static_cast<std::size_t>(z)].on_boundary) interior_verts.push_back(z);
  std::vector<int> interior_edges;
  for (int e = 0; e < m.n_edges(); ++e)
    if (m.edges[static_cast<std::size_t>(e)].tri[1] >= 0) interior_edges.push_back(e);

  br.n_vertex_cols = 2 * static_cast<int>(interior_verts.size());
  br.n_edge_cols = static_cast<int>(interior_edges.size());
  br.cols = Eigen::MatrixXd::Zero(br.host.n_free, br.n_vertex_cols + br.n_edge_cols);

  int c = 0;
  for (int z : interior_verts) {
    for (int comp = 0; comp < 2; ++comp) {
      br.cols(free_dof(br.host, z, comp), c) = 1.0;
      // the hat is 1/2 at the midpoints of incident edges, all interior here
      for (int e : m.vertex_int_edges[static_cast<std::size_t>(z)])
        br.cols(free_dof(br.host, mid_node(m, e), comp), c) = 0.5;
      ++c;
    }
  }
  for (int e : interior_edges) {
    const Edge& ed = m.edges[static_cast<std::size_t>(e)];
    Vec2 d = m.point(ed.v[1]) - m.point(ed.v[0]);
    Vec2 n = rot90(d);
    n = (1.0 / norm(n)) * n;
    br.cols(free_dof(br.host, mid_node(m, e), 0), c) = n.x;
    br.cols(free_dof(br.host, mid_node(m, e), 1), c) = n.y;
    ++c;
  }
  return br;
}

Eigen::VectorXd element_means(const Mesh& m, const PressureSpace& ps,
                              const Eigen::VectorXd& p) {
  Eigen::VectorXd b(m.n_tris());
  for (int t = 0; t < m.n_tris(); ++t)
    b(t) = integrate_triangle(element_pressure(ps, p, t), tri_geom(m, t));
  return b;
}

Step1Result step1_element_averages(const Mesh& m, const BRSubspace& br,
                                   const PressureSpace& ps, const Eigen::VectorXd& p) {
  const int nc = static_cast<int>(br.cols.cols());
  const int nt = m.n_tris();
  Eigen::VectorXd b = element_means(m, ps, p);

  Eigen::MatrixXd C = mean_div_operator(m, br.host) * br.cols;
  Eigen::MatrixXd G = br.cols.transpose() * grad_gram(m, br.host) * br.cols;

  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nc + nt, nc + nt);
  K.topLeftCorner(nc, nc) = G;
  K.topRightCorner(nc, nt) = C.transpose();
  K.bottomLeftCorner(nt, nc) = C;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nc + nt);
  rhs.tail(nt) = b;

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(K);
  if (cod.rank() < nc + nt - 1)
    throw internal_error(
        "step-1 saddle system lost rank beyond the constant-pressure kernel");
  Eigen::VectorXd x = cod.solve(rhs);

  Step1Result out;
  Eigen::VectorXd v_free = br.cols * x.head(nc);
  out.v_host = free_to_full_vec(br.host, v_free);
  out.grad = grad_norm(m, br.host, out.v_host);
  out.mean_residual = nt > 0 ? (C * x.head(nc) - b).cwiseAbs().maxCoeff() : 0.0;
  return out;
}

Eigen::VectorXd local_bubble_solve(int k, const TriGeom& g, const Eigen::VectorXd& mono,
                                   double* residual) {
  Eigen::VectorXd mc = monomial_to_moment(k, mono);
  Eigen::MatrixXd D = divergence_matrix(k, g);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(D);
  if (cod.rank() < D.rows())
    throw internal_error("bubble divergence matrix lost rank");
  Eigen::VectorXd c = cod.solve(mc);
  if (residual) {
    double scale = std::max(mc.norm(), 1e-300);
    *residual = (D * c - mc).norm() / scale;
  }
  return c;
}

Step3Result step3_local_bubble(const Mesh& m, const VelocitySpace& vs,
                               const PressureSpace& ps, const Eigen::VectorXd& p2,
                               Exec ex) {
  const int k = vs.k;
  if (ps.degree != k - 1) throw internal_error("step-3 needs the paired pressure space");
  const int nt = m.n_tris();
  const int bd = ps.block_dim;
  const double pinf = p2.size() > 0 ? p2.cwiseAbs().maxCoeff() : 0.0;
  const double pl2 = pressure_l2_norm(m, ps, p2);

  // validate the membership in the per-triangle moment spaces up front; the
  // parallel region below must stay exception-free
  for (int t = 0; t < nt; ++t) {
    for (int i = 0; i < 3; ++i) {
      double v = std::abs(p2[t * bd + corner_node_index(ps.degree, i)]);
      if (v > 1e-9 * std::max(pinf, 1e-300))
        throw validation_error("pressure has a vertex value on triangle " +
                               std::to_string(t));
    }
    double mean = integrate_triangle(element_pressure(ps, p2, t), tri_geom(m, t));
    if (std::abs(mean) > 1e-12 * std::max(pl2, 1e-300))
      throw validation_error("pressure has a nonzero mean on triangle " +
                             std::to_string(t));
  }

  const auto& lag = lagrange_data(ps.degree);
  const int ncoef = BaryPoly::n_coeffs(ps.degree);
  const auto bubbles = bubble_space_basis(k);

  std::vector<Eigen::VectorXd> coeffs(static_cast<std::size_t>(nt));
  std::vector<double> resid(static_cast<std::size_t>(nt), 0.0);
  std::vector<std::string> errs(static_cast<std::size_t>(nt));
  for_each_index(ex, nt, [&](std::int64_t ti) {
    // exceptions must not unwind out of the parallel region
    int t = static_cast<int>(ti);
    try {
      Eigen::VectorXd mono = Eigen::VectorXd::Zero(ncoef);
      for (int i = 0; i < bd; ++i) {
        double c = p2[t * bd + i];
        if (c == 0.0) continue;
        const auto& bc = lag.basis[static_cast<std::size_t>(i)].coeffs();
        for (int j = 0; j < ncoef; ++j) mono(j) += c * bc[static_cast<std::size_t>(j)];
      }
      coeffs[static_cast<std::size_t>(t)] =
          local_bubble_solve(k, tri_geom(m, t), mono, &resid[static_cast<std::size_t>(t)]);
    } catch (const std::exception& e) {
      errs[static_cast<std::size_t>(t)] = e.what();
    }
  });
  for (int t = 0; t < nt; ++t)
    if (!errs[static_cast<std::size_t>(t)].empty())
      throw internal_error("triangle " + std::to_string(t) + ": " +
                           errs[static_cast<std::size_t>(t)]);

  Step3Result out;
  out.v_full = Eigen::VectorXd::Zero(vs.n_full());
  for (int t = 0; t < nt; ++t) {
    const Eigen::VectorXd& c = coeffs[static_cast<std::size_t>(t)];
    VectorBaryPoly u{BaryPoly(k), BaryPoly(k)};
    for (int i = 0; i < c.size(); ++i)
      if (c(i) != 0.0) u = u + c(i) * bubbles[static_cast<std::size_t>(i)];
    assign_element_field(m, vs, t, u, out.v_full);
    out.max_rel_residual = std::max(out.max_rel_residual, resid[static_cast<std::size_t>(t)]);
  }
  out.grad = grad_norm(m, vs, out.v_full);
  return out;
}

RightInverseResult right_inverse(const Mesh& m, const VelocitySpace& vs,
                                 const PressureSpace& ps, const Classification& cls,
                                 const Eigen::VectorXd& p, Exec ex, bool p2p0) {
  if (vs.k < 4) throw validation_error("the right inverse needs velocity order k >= 4");
  if (ps.k != vs.k) throw internal_error("velocity/pressure space pair mismatch");
  if (p.size() != ps.n_dofs) throw internal_error("pressure vector size mismatch");

  RightInverseResult r;
  r.p_norm = pressure_l2_norm(m, ps, p);
  r.predictor = cls.theta_min ? 1.0 / *cls.theta_min + 1.0 : 0.0;
  if (r.p_norm == 0.0) {
    r.v1 = r.v2 = r.v3 = r.v = Eigen::VectorXd::Zero(vs.n_full());
    return r;
  }

  // admissibility, relative to the coefficient sup norm
  const double pinf = p.cwiseAbs().maxCoeff();
  if (std::abs(pressure_mean(m, ps, p)) > 1e-9 * pinf * m.domain_area)
    throw validation_error("pressure mean is not zero");
  for (int z : cls.singular) {
    VertexPatch patch = build_patch(m, z);
    if (std::abs(singular_functional(m, ps, patch, p)) > 1e-9 * pinf * patch.n())
      throw validation_error("pressure violates the singular-vertex constraint at vertex " +
                             std::to_string(z));
  }

  BRSubspace br = build_br_subspace(m, p2p0);
  Step1Result s1 = step1_element_averages(m, br, ps, p);
  r.v1 = interpolate_between(m, br.host, s1.v_host, vs);
  r.grad_v1 = grad_norm(m, vs, r.v1);

  Eigen::VectorXd p1 = p - divergence_coords(m, vs, ps, r.v1);
  r.mean_residual = element_means(m, ps, p1).cwiseAbs().maxCoeff();
  // div v1 lies in the pressure space, so p1 inherits the admissibility of p
  for (int z : cls.singular) {
    VertexPatch patch = build_patch(m, z);
    if (std::abs(singular_functional(m, ps, patch, p1)) >
        1e-9 * std::max(pinf, p1.cwiseAbs().maxCoeff()) * patch.n())
      throw internal_error("step 1 broke a singular-vertex constraint at vertex " +
                           std::to_string(z));
  }

  GlobalCorrection g2 = global_vertex_correction(m, vs, ps, cls, p1, ex);
  r.v2 = g2.v_full;
  r.grad_v2 = g2.grad;

  Eigen::VectorXd p2 = p1 - divergence_coords(m, vs, ps, r.v2);
  for (int t = 0; t < m.n_tris(); ++t)
    for (int i = 0; i < 3; ++i)
      r.vertex_residual = std::max(
          r.vertex_residual,
          std::abs(p2[t * ps.block_dim + corner_node_index(ps.degree, i)]));

  Step3Result s3 = step3_local_bubble(m, vs, ps, p2, ex);
  r.v3 = s3.v_full;
  r.grad_v3 = s3.grad;

  r.v = r.v1 + r.v2 + r.v3;
  r.final_residual = pressure_l2_norm(m, ps, p - divergence_coords(m, vs, ps, r.v));
  r.grad_v = grad_norm(m, vs, r.v);
  r.stability_ratio = r.grad_v / r.p_norm;
  return r;
}

}  // namespace sv
