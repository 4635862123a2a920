#pragma once

#include <Eigen/Dense>
#include <map>
#include <vector>

#include "sv/mesh.hpp"
#include "sv/polyspace.hpp"
#include "sv/spaces.hpp"
#include "sv/topology.hpp"

namespace sv {

// piecewise polynomial vector field supported on a few triangles
struct PatchField {
  std::map<int, VectorBaryPoly> parts;  // by triangle id

  void accumulate(int tri, const VectorBaryPoly& f);
  void accumulate(double s, const PatchField& g);
};

struct ScalarPatchField {
  std::map<int, BaryPoly> parts;
};

// cubic edge hump for interior edge e = {z, y}: restriction (hat_z)^2 hat_y on
// both incident triangles; vanishes on the boundary of their union
ScalarPatchField eta_field(const Mesh& m, int e, int z);

// quartic variant with vanishing moment on e itself:
// gamma = eta - (5/2) (hat_z hat_y)^2
ScalarPatchField gamma_field(const Mesh& m, int e, int z);

// w = (p_y - p_z) * eta. Its divergence at z equals 1 on both triangles of e,
// vanishes at their other vertices, and has zero mean on each triangle.
PatchField w_field(const Mesh& m, int e, int z);

// Fields of the fan of a non-singular vertex: v[j] (0-based fan position) has
// divergence-at-center exactly delta_ij across the fan, zero divergence at
// all other vertices, and zero element means. Built from the angle-maximizing
// pair and telescoped outward with w fields.
std::vector<PatchField> fan_fields(const Mesh& m, const VertexPatch& patch);

// divergence of f at the patch center, one value per fan triangle
std::vector<double> div_at_center(const Mesh& m, const VertexPatch& patch,
                                  const PatchField& f);

double field_grad_norm(const Mesh& m, const PatchField& f);

// nodal values of f in the velocity space; exact when f has degree <= vs.k
void materialize(const Mesh& m, const VelocitySpace& vs, const PatchField& f,
                 std::map<int, double>& nodal /* dof -> value */);

struct VertexCorrection {
  int vertex = -1;
  bool singular_branch = false;
  std::map<int, double> nodal;    // velocity dofs touched, with their values
  std::vector<double> target;     // requested div at the center per fan triangle
  std::vector<double> achieved;   // div at the center per fan triangle
  double grad = 0.0;
};

// Builds v_z with div(v_z) at z matching `targets` per fan triangle, zero
// divergence at every other vertex, zero element means. Singular vertices use
// the alternating w-field sums (targets must satisfy the compatibility
// functional); non-singular ones combine fan fields.
VertexCorrection vertex_correction(const Mesh& m, const VelocitySpace& vs,
                                   const VertexPatch& patch, const VertexClass& vc,
                                   const std::vector<double>& targets);

struct GlobalCorrection {
  Eigen::VectorXd v_full;
  double grad = 0.0;             // |v|_H1 of the summed correction
  double pressure_norm = 0.0;    // L2 norm of the input pressure
  double ratio = 0.0;            // grad / pressure_norm
  double predictor = 0.0;        // 1/theta_min + 1 (0 when no non-singular vertex)
  double max_target_residual = 0.0;  // max |achieved - target| over all fans
};

// One correction per mesh vertex, targets taken from the vertex values of p;
// corrections are independent, so they are computed in parallel and merged in
// vertex order.
GlobalCorrection global_vertex_correction(const Mesh& m, const VelocitySpace& vs,
                                          const PressureSpace& ps,
                                          const Classification& cls,
                                          const Eigen::VectorXd& p,
                                          Exec ex = Exec::Par);

}  // namespace sv
