#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "sv/mesh.hpp"
#include "sv/parallel.hpp"
#include "sv/rightinverse.hpp"
#include "sv/spaces.hpp"
#include "sv/topology.hpp"

namespace sv {

struct InfSupReport {
  int k = 0;
  double h_max = 0.0;
  std::optional<double> theta_min;
  int n_u = 0;  // free velocity dofs
  int n_p = 0;  // admissible pressure dimension
  double lambda_min = 0.0;
  double beta_h = 0.0;       // full H1 norm in the denominator
  double beta_h_semi = 0.0;  // H1 seminorm variant
  // certified bound from running the right inverse on the minimizing
  // eigenvector pressure; only for k >= 4
  std::optional<double> constructive_lb;
  bool failure = false;  // lambda_min below 1e-14: the pair is not inf-sup stable
};

// beta_h = sqrt(lambda_min) of (N^T B A^{-1} B^T N) x = lambda (N^T Mp N) x,
// where N spans the admissible pressures; dense solve, both norm variants.
// lambda_min < -1e-12 raises an error; lambda_min < 1e-14 sets `failure`.
InfSupReport compute_infsup(const Mesh& m, const VelocitySpace& vs,
                            const PressureSpace& ps, const Classification& cls,
                            Exec ex = Exec::Par, bool with_constructive = true);

// independent cross-check of beta_h (full-norm variant) by inverse power
// iteration on the Cholesky-transformed pencil
double infsup_power_check(const Mesh& m, const VelocitySpace& vs,
                          const PressureSpace& ps, Exec ex = Exec::Par);

struct RefinementRow {
  int n = 0;
  InfSupReport rep;
};

struct RefinementStudy {
  std::vector<RefinementRow> rows;
  // desk-scale h-independence proxy: beta_h must not decay monotonically to
  // below a quarter of the coarsest value
  bool h_independent = true;
};

RefinementStudy refinement_study(MeshFamily family, int k, int levels,
                                 std::uint64_t seed = 0, Exec ex = Exec::Par);

struct DegeneracyRow {
  double theta_target = 0.0;  // 0 marks the fully singular collapse row
  double delta = 0.0;         // offset-square parameter realizing the target
  std::optional<double> theta_min;
  double beta_h = 0.0;
  double ratio = 0.0;      // stability ratio of the construction
  double predictor = 0.0;  // 1/theta_min + 1
  double final_residual_rel = 0.0;
  bool singular_collapse = false;
};

struct DegeneracyStudy {
  std::vector<DegeneracyRow> rows;
  double c = 0.0;  // ratio/predictor fitted on the first row
  // every ratio stays below 5*c*predictor; the bound constrains the
  // construction, not beta_h itself
  bool within_margin = true;
};

// drives the offset-square fan toward the two-line configuration; appends a
// delta = 0 row (exactly singular center) when include_collapse is set
DegeneracyStudy degeneracy_study(int k, const std::vector<double>& theta_targets,
                                 bool include_collapse = true,
                                 std::uint64_t seed = 2024, Exec ex = Exec::Par);

enum class StokesProblem {
  Zero,          // no body force: the zero solution
  Manufactured,  // u = curl((x(1-x)y(1-y))^2), p = x^3 + y^3 - 1/2
};

struct StokesSolution {
  Eigen::VectorXd u_full;    // velocity, full coords
  Eigen::VectorXd p_coords;  // pressure, DG block coords
  double grad_u = 0.0;
  double max_sampled_div = 0.0;  // max |div u_h| over per-triangle grids
  double div_moment_norm = 0.0;  // norm of the admissible-pressure moments of div u_h
  double solver_residual = 0.0;  // relative residual of the saddle solve
  // errors against the manufactured solution (Manufactured only)
  std::optional<double> err_l2, err_h1, err_p;
};

// dense saddle solve with two rounds of iterative refinement; the manufactured
// body force and errors are integrated exactly (all data is polynomial)
StokesSolution solve_stokes(const Mesh& m, const VelocitySpace& vs,
                            const PressureSpace& ps, StokesProblem problem,
                            Exec ex = Exec::Par);

}  // namespace sv
