#pragma once

#include <Eigen/Dense>

#include "sv/fields.hpp"
#include "sv/mesh.hpp"
#include "sv/parallel.hpp"
#include "sv/polyspace.hpp"
#include "sv/spaces.hpp"
#include "sv/topology.hpp"

namespace sv {

// Step-1 search space inside V_h^2: hat fields at interior vertices (both
// components) plus one normal quadratic bubble per interior edge. The p2p0
// variant swaps in every free dof of V_h^2 for cross-checking.
struct BRSubspace {
  VelocitySpace host;    // k = 2
  Eigen::MatrixXd cols;  // free coords of host, one column per member
  int n_vertex_cols = 0;
  int n_edge_cols = 0;
  bool p2p0 = false;
};

BRSubspace build_br_subspace(const Mesh& m, bool p2p0 = false);

// per-triangle integrals of p
Eigen::VectorXd element_means(const Mesh& m, const PressureSpace& ps,
                              const Eigen::VectorXd& p);

struct Step1Result {
  Eigen::VectorXd v_host;      // full coords of the k=2 host space
  double grad = 0.0;
  double mean_residual = 0.0;  // max |mean of div v - mean of p| over triangles
};

// Minimizes the gradient energy over the subspace under the element-mean
// constraints (piecewise-constant multipliers). The saddle system has the
// one-dimensional constant-multiplier kernel and nothing else; losing more
// rank means the subspace cannot steer the means and is reported as an error.
Step1Result step1_element_averages(const Mesh& m, const BRSubspace& br,
                                   const PressureSpace& ps, const Eigen::VectorXd& p);

// Minimum-norm bubble coefficients with div matching the moment projection of
// a degree-(k-1) polynomial given in monomial coords; *residual gets the
// relative solve residual in moment coordinates.
Eigen::VectorXd local_bubble_solve(int k, const TriGeom& g, const Eigen::VectorXd& mono,
                                   double* residual = nullptr);

struct Step3Result {
  Eigen::VectorXd v_full;         // in the target V_h^k
  double grad = 0.0;
  double max_rel_residual = 0.0;  // worst per-triangle moment-solve residual
};

// Per-triangle bubble solves for a pressure with zero vertex values (within
// 1e-9 of its sup coefficient) and zero element means (within 1e-12 of its L2
// norm); both are validated. The result vanishes on every edge, so it is
// continuous and has no effect on vertex values or element means.
Step3Result step3_local_bubble(const Mesh& m, const VelocitySpace& vs,
                               const PressureSpace& ps, const Eigen::VectorXd& p2,
                               Exec ex = Exec::Par);

struct RightInverseResult {
  Eigen::VectorXd v1, v2, v3, v;  // full coords in V_h^k, v = v1 + v2 + v3
  double mean_residual = 0.0;     // max element mean of p - div v1
  double vertex_residual = 0.0;   // max vertex coefficient of p - div(v1 + v2)
  double final_residual = 0.0;    // L2 norm of p - div v
  double grad_v1 = 0.0, grad_v2 = 0.0, grad_v3 = 0.0, grad_v = 0.0;
  double p_norm = 0.0;            // L2 norm of the input
  double stability_ratio = 0.0;   // grad_v / p_norm
  double predictor = 0.0;         // 1/theta_min + 1
};

// The composed right inverse of the divergence: element averages, then vertex
// corrections, then local bubbles. Requires k >= 4 and an admissible p (zero
// mean, singular-vertex functionals zero), both validated to 1e-9 relative.
RightInverseResult right_inverse(const Mesh& m, const VelocitySpace& vs,
                                 const PressureSpace& ps, const Classification& cls,
                                 const Eigen::VectorXd& p, Exec ex = Exec::Par,
                                 bool p2p0 = false);

}  // namespace sv
