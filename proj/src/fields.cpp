#include "sv/fields.hpp"

#include <cmath>
#include <utility>

namespace sv {

void PatchField::accumulate(int tri, const VectorBaryPoly& f) {
  auto it = parts.find(tri);
  if (it == parts.end()) {
    parts.emplace(tri, f);
  } else {
    it->second = it->second + f;
  }
}

void PatchField::accumulate(double s, const PatchField& g) {
  for (const auto& [tri, f] : g.parts) accumulate(tri, s * f);
}

namespace {

// endpoints of edge e as (z, other)
int other_endpoint(const Edge& ed, int e, int z) {
  if (ed.v[0] == z) return ed.v[1];
  if (ed.v[1] == z) return ed.v[0];
  throw internal_error("vertex " + std::to_string(z) + " is not on edge " +
                       std::to_string(e));
}

const Edge& interior_edge(const Mesh& m, int e) {
  const Edge& ed = m.edges[static_cast<std::size_t>(e)];
  if (ed.tri[1] < 0)
    throw internal_error("edge " + std::to_string(e) + " is not interior");
  return ed;
}

}  // namespace

ScalarPatchField eta_field(const Mesh& m, int e, int z) {
  const Edge& ed = interior_edge(m, e);
  int y = other_endpoint(ed, e, z);
  ScalarPatchField out;
  for (int t : ed.tri) {
    BaryPoly hz = BaryPoly::hat(m.local_index(t, z));
    BaryPoly hy = BaryPoly::hat(m.local_index(t, y));
    out.parts.emplace(t, hz * hz * hy);
  }
  return out;
}

ScalarPatchField gamma_field(const Mesh& m, int e, int z) {
  const Edge& ed = interior_edge(m, e);
  int y = other_endpoint(ed, e, z);
  ScalarPatchField out;
  for (int t : ed.tri) {
    BaryPoly hz = BaryPoly::hat(m.local_index(t, z));
    BaryPoly hy = BaryPoly::hat(m.local_index(t, y));
    BaryPoly hzy = hz * hy;
    out.parts.emplace(t, hz * hzy - 2.5 * (hzy * hzy));
  }
  return out;
}

PatchField w_field(const Mesh& m, int e, int z) {
  const Edge& ed = interior_edge(m, e);
  int y = other_endpoint(ed, e, z);
  Vec2 d = m.point(y) - m.point(z);
  PatchField out;
  for (int t : ed.tri) {
    BaryPoly hz = BaryPoly::hat(m.local_index(t, z));
    BaryPoly hy = BaryPoly::hat(m.local_index(t, y));
    out.parts.emplace(t, vec_poly(d, hz * hz * hy));
  }
  return out;
}

std::vector<PatchField> fan_fields(const Mesh& m, const VertexPatch& patch) {
  VertexClass vc = classify_vertex(patch);
  if (vc.singular) throw internal_error("fan fields need a non-singular fan");
  int n = patch.n();
  int s0 = max_pair_index(patch);

  // work in an enumeration where the maximizing pair never wraps the cycle
  VertexPatch p = patch;
  if (p.interior && s0 != 0) {
    p = rotated(p, s0);
    s0 = 0;
  }
  int z = p.center;

  // Base field on the maximizing pair (T_s, T_{s+1}), s = s0 1-based-shifted:
  // a constant direction along the far edge of T_{s+1} times the zero-moment
  // hump of the shared fan edge. The direction kills the divergence at the
  // center seen from T_{s+1}; the signed scale makes it exactly 1 from T_s.
  std::vector<PatchField> v(static_cast<std::size_t>(n));
  {
    int e = p.fan_edges[static_cast<std::size_t>(s0)];
    const Edge& ed = interior_edge(m, e);
    int y = other_endpoint(ed, e, z);
    int t_next = p.tris[static_cast<std::size_t>(s0) + 1];
    const Triangle& tn = m.tris[static_cast<std::size_t>(t_next)];
    int q = -1;
    for (int c : tn.v)
      if (c != z && c != y) q = c;
    Vec2 d = m.point(q) - m.point(z);
    double th_a = p.angles[static_cast<std::size_t>(s0)];
    double th_b = p.angles[static_cast<std::size_t>(s0) + 1];
    double sin_pair = std::sin(th_a + th_b);
    if (sin_pair == 0.0) throw internal_error("flat maximizing pair in a non-singular fan");
    double scale = ed.length * std::sin(th_a) / (sin_pair * norm(d));
    ScalarPatchField g = gamma_field(m, e, z);
    for (const auto& [tri, gp] : g.parts)
      v[static_cast<std::size_t>(s0)].accumulate(tri, vec_poly(scale * d, gp));
  }

  // telescope outward: each step trades the unit divergence across one fan edge
  for (int j = s0 + 1; j < n; ++j) {
    PatchField f = w_field(m, p.fan_edges[static_cast<std::size_t>(j) - 1], z);
    f.accumulate(-1.0, v[static_cast<std::size_t>(j) - 1]);
    v[static_cast<std::size_t>(j)] = std::move(f);
  }
  for (int j = s0 - 1; j >= 0; --j) {
    PatchField f = w_field(m, p.fan_edges[static_cast<std::size_t>(j)], z);
    f.accumulate(-1.0, v[static_cast<std::size_t>(j) + 1]);
    v[static_cast<std::size_t>(j)] = std::move(f);
  }

  if (p.tris == patch.tris) return v;
  // undo the rotation: original fan position j sits at rotated position j - r
  int r = 0;
  while (patch.tris[static_cast<std::size_t>(r)] != p.tris[0]) ++r;
  std::vector<PatchField> out(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j)
    out[static_cast<std::size_t>(j)] = std::move(v[static_cast<std::size_t>((j - r + n) % n)]);
  return out;
}

std::vector<double> div_at_center(const Mesh& m, const VertexPatch& patch,
                                  const PatchField& f) {
  std::vector<double> out(static_cast<std::size_t>(patch.n()), 0.0);
  for (int j = 0; j < patch.n(); ++j) {
    int t = patch.tris[static_cast<std::size_t>(j)];
    auto it = f.parts.find(t);
    if (it == f.parts.end()) continue;
    BaryPoly div = divergence(it->second, tri_geom(m, t));
    double l[3] = {0.0, 0.0, 0.0};
    l[m.local_index(t, patch.center)] = 1.0;
    out[static_cast<std::size_t>(j)] = div.eval(l[0], l[1], l[2]);
  }
  return out;
}

double field_grad_norm(const Mesh& m, const PatchField& f) {
  double s = 0.0;
  for (const auto& [t, u] : f.parts) {
    TriGeom g = tri_geom(m, t);
    VectorBaryPoly gx = gradient(u.x, g);
    VectorBaryPoly gy = gradient(u.y, g);
    s += integrate_triangle(gx.x * gx.x + gx.y * gx.y + gy.x * gy.x + gy.y * gy.y, g);
  }
  return std::sqrt(s);
}

void materialize(const Mesh& m, const VelocitySpace& vs, const PatchField& f,
                 std::map<int, double>& nodal) {
  const auto lattice = lattice_nodes(vs.k);
  for (const auto& [t, u] : f.parts) {
    const auto& enodes = vs.element_nodes[static_cast<std::size_t>(t)];
    for (std::size_t i = 0; i < lattice.size(); ++i) {
      double l1 = static_cast<double>(lattice[i][0]) / vs.k;
      double l2 = static_cast<double>(lattice[i][1]) / vs.k;
      double l3 = static_cast<double>(lattice[i][2]) / vs.k;
      int node = enodes[i];
      nodal[2 * node] = u.x.eval(l1, l2, l3);
      nodal[2 * node + 1] = u.y.eval(l1, l2, l3);
    }
  }
}

VertexCorrection vertex_correction(const Mesh& m, const VelocitySpace& vs,
                                   const VertexPatch& patch, const VertexClass& vc,
                                   const std::vector<double>& targets) {
  int n = patch.n();
  if (static_cast<int>(targets.size()) != n)
    throw internal_error("one target per fan triangle expected");
  VertexCorrection out;
  out.vertex = patch.center;
  out.singular_branch = vc.singular;
  out.target = targets;

  PatchField field;
  if (vc.singular) {
    // alternating partial sums; the compatibility functional of the targets
    // makes the last triangle come out right without the closing fan edge
    double b = 0.0;
    for (int j = 0; j + 1 < n; ++j) {
      b = targets[static_cast<std::size_t>(j)] - b;
      if (b != 0.0)
        field.accumulate(b, w_field(m, patch.fan_edges[static_cast<std::size_t>(j)],
                                    patch.center));
    }
  } else {
    std::vector<PatchField> fan = fan_fields(m, patch);
    for (int j = 0; j < n; ++j) {
      double a = targets[static_cast<std::size_t>(j)];
      if (a != 0.0) field.accumulate(a, fan[static_cast<std::size_t>(j)]);
    }
  }

  out.achieved = div_at_center(m, patch, field);
  out.grad = field_grad_norm(m, field);
  materialize(m, vs, field, out.nodal);
  return out;
}

GlobalCorrection global_vertex_correction(const Mesh& m, const VelocitySpace& vs,
                                          const PressureSpace& ps,
                                          const Classification& cls,
                                          const Eigen::VectorXd& p, Exec ex) {
  if (vs.k < 4)
    throw internal_error("vertex corrections are quartic; velocity order must be >= 4");
  if (p.size() != ps.n_dofs) throw internal_error("pressure vector size mismatch");

  int nv = m.n_vertices();
  std::vector<VertexCorrection> corr(static_cast<std::size_t>(nv));
  std::vector<std::string> errs(static_cast<std::size_t>(nv));
  for_each_index(ex, nv, [&](std::int64_t zi) {
    // exceptions must not unwind out of the parallel region
    int z = static_cast<int>(zi);
    try {
      VertexPatch patch = build_patch(m, z);
      std::vector<double> targets(static_cast<std::size_t>(patch.n()));
      for (int j = 0; j < patch.n(); ++j) {
        int t = patch.tris[static_cast<std::size_t>(j)];
        int c = corner_node_index(ps.degree, m.local_index(t, z));
        targets[static_cast<std::size_t>(j)] = p[t * ps.block_dim + c];
      }
      corr[static_cast<std::size_t>(z)] =
          vertex_correction(m, vs, patch, cls.vclass[static_cast<std::size_t>(z)], targets);
    } catch (const std::exception& e) {
      errs[static_cast<std::size_t>(z)] = e.what();
    }
  });
  for (int z = 0; z < nv; ++z)
    if (!errs[static_cast<std::size_t>(z)].empty())
      throw internal_error("vertex " + std::to_string(z) + ": " +
                           errs[static_cast<std::size_t>(z)]);

  GlobalCorrection out;
  out.v_full = Eigen::VectorXd::Zero(vs.n_full());
  for (int z = 0; z < nv; ++z) {
    const VertexCorrection& c = corr[static_cast<std::size_t>(z)];
    for (const auto& [dof, val] : c.nodal) out.v_full[dof] += val;
    for (std::size_t j = 0; j < c.target.size(); ++j) {
      double r = std::abs(c.achieved[j] - c.target[j]);
      if (r > out.max_target_residual) out.max_target_residual = r;
    }
  }

  out.grad = grad_norm(m, vs, out.v_full);
  out.pressure_norm = pressure_l2_norm(m, ps, p);
  out.ratio = out.pressure_norm > 0.0 ? out.grad / out.pressure_norm : 0.0;
  out.predictor = cls.theta_min ? 1.0 / *cls.theta_min + 1.0 : 0.0;
  return out;
}

}  // namespace sv
