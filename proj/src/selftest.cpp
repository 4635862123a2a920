#include "sv/selftest.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sv/fields.hpp"
#include "sv/mesh.hpp"
#include "sv/polyspace.hpp"
#include "sv/rng.hpp"
#include "sv/spaces.hpp"
#include "sv/topology.hpp"

namespace sv {

namespace {

std::string worst_str(const char* what, double v, int count) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%s %.3g over %d samples", what, v, count);
  return buf;
}

// local index in t of the vertex opposite edge e
int opposite_local(const Mesh& m, int t, int e) {
  for (int i = 0; i < 3; ++i)
    if (m.tri_edges[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] == e) return i;
  throw internal_error("edge is not part of the triangle");
}

SelfTestLine edge_moment_suite(std::uint64_t seed) {
  double worst = 0.0;
  int samples = 0;
  for (std::uint64_t s = 0; samples < 50; ++s) {
    Mesh m = generate_mesh(MeshFamily::PerturbedDiagonal, 3, seed_stream(seed, s));
    for (int e = 0; e < m.n_edges() && samples < 50; ++e) {
      const Edge& ed = m.edges[static_cast<std::size_t>(e)];
      if (ed.tri[1] < 0) continue;
      for (int zi = 0; zi < 2; ++zi) {
        int z = ed.v[static_cast<std::size_t>(zi)];
        int y = ed.v[static_cast<std::size_t>(1 - zi)];
        ScalarPatchField eta = eta_field(m, e, z);
        ScalarPatchField gam = gamma_field(m, e, z);
        for (const auto& [t, poly] : eta.parts) {
          TriGeom g = tri_geom(m, t);
          int opp = opposite_local(m, t, e);
          BaryPoly hz = BaryPoly::hat(m.local_index(t, z));
          BaryPoly hy = BaryPoly::hat(m.local_index(t, y));
          double cubic = integrate_edge(poly, g, opp);
          double quartic = integrate_edge(hz * hz * (hy * hy), g, opp);
          double gmom = integrate_edge(gam.parts.at(t), g, opp);
          worst = std::max(worst, std::abs(cubic - ed.length / 12.0) / (ed.length / 12.0));
          worst = std::max(worst, std::abs(quartic - ed.length / 30.0) / (ed.length / 30.0));
          worst = std::max(worst, std::abs(gmom) / ed.length);
        }
      }
      samples++;
    }
  }
  SelfTestLine line;
  line.name = "edge-moment identities";
  line.pass = worst <= 1e-14;
  line.detail = worst_str("worst relative deviation", worst, samples);
  return line;
}

SelfTestLine dimension_suite() {
  bool ok = true;
  int checks = 0;
  TriGeom ref = reference_tri_geom();
  TriGeom skew = tri_geom_from_points({0.1, -0.2}, {1.3, 0.4}, {0.2, 1.7});
  for (int k = 3; k <= 8; ++k) {
    TriSpaceDims d = space_dims(k);
    int dim_m = k * (k + 1) / 2 - 4;
    int dim_z = k >= 5 ? (k - 4) * (k - 3) / 2 : 0;
    ok = ok && d.dim_moment == dim_m && d.dim_divfree == dim_z &&
         d.dim_bubble == dim_m + dim_z;
    for (const TriGeom& g : {ref, skew}) {
      Eigen::MatrixXd D = divergence_matrix(k, g);
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(D);
      ok = ok && static_cast<int>(qr.rank()) == dim_m &&
           static_cast<int>(D.cols() - qr.rank()) == dim_z;
      checks++;
    }
  }
  SelfTestLine line;
  line.name = "bubble-space dimensions";
  line.pass = ok;
  char buf[96];
  std::snprintf(buf, sizeof buf, "rank checks on %d geometries, k = 3..8", checks);
  line.detail = buf;
  return line;
}

SelfTestLine field_suite(std::uint64_t seed) {
  double worst = 0.0;
  int n_edges = 0, n_patches = 0;
  for (std::uint64_t s = 0; n_edges < 20 || n_patches < 8; ++s) {
    Mesh m = generate_mesh(MeshFamily::PerturbedDiagonal, 3, seed_stream(seed, 100 + s));
    Classification cls = classify(m);
    for (int e = 0; e < m.n_edges() && n_edges < 20; ++e) {
      const Edge& ed = m.edges[static_cast<std::size_t>(e)];
      if (ed.tri[1] < 0) continue;
      int z = ed.v[static_cast<std::size_t>(n_edges % 2)];
      PatchField w = w_field(m, e, z);
      for (const auto& [t, f] : w.parts) {
        TriGeom g = tri_geom(m, t);
        BaryPoly d = divergence(f, g);
        for (int i = 0; i < 3; ++i) {
          double l[3] = {0, 0, 0};
          l[i] = 1.0;
          double want = m.tris[static_cast<std::size_t>(t)].v[static_cast<std::size_t>(i)] == z ? 1.0 : 0.0;
          worst = std::max(worst, std::abs(d.eval(l[0], l[1], l[2]) - want));
        }
        worst = std::max(worst, std::abs(integrate_triangle(d, g)) / g.area);
      }
      n_edges++;
    }
    for (int z = 0; z < m.n_vertices() && n_patches < 8; ++z) {
      const VertexClass& vc = cls.vclass[static_cast<std::size_t>(z)];
      if (!vc.interior || vc.singular) continue;
      VertexPatch patch = build_patch(m, z);
      std::vector<PatchField> fans = fan_fields(m, patch);
      for (int j = 0; j < patch.n(); ++j) {
        std::vector<double> dv = div_at_center(m, patch, fans[static_cast<std::size_t>(j)]);
        for (int i = 0; i < patch.n(); ++i)
          worst = std::max(worst, std::abs(dv[static_cast<std::size_t>(i)] - (i == j ? 1.0 : 0.0)));
        for (const auto& [t, f] : fans[static_cast<std::size_t>(j)].parts) {
          TriGeom g = tri_geom(m, t);
          worst = std::max(worst, std::abs(integrate_triangle(divergence(f, g), g)) / g.area);
        }
      }
      n_patches++;
    }
  }
  SelfTestLine line;
  line.name = "fundamental-field divergences";
  line.pass = worst <= 1e-12;
  line.detail = worst_str("worst deviation", worst, n_edges + n_patches);
  return line;
}

}  // namespace

SelfTestReport run_selftest(std::uint64_t seed) {
  SelfTestReport rep;
  rep.lines.push_back(edge_moment_suite(seed));
  rep.lines.push_back(dimension_suite());
  rep.lines.push_back(field_suite(seed));
  for (const SelfTestLine& l : rep.lines) rep.all_pass = rep.all_pass && l.pass;
  return rep;
}

}  // namespace sv
