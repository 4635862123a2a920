#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "sv/mesh.hpp"
#include "sv/parallel.hpp"
#include "sv/polyspace.hpp"
#include "sv/topology.hpp"

namespace sv {

// Continuous [P^k]^2 with zero boundary trace. Scalar Lagrange nodes are
// shared across elements; vector dof = 2*node + component. Free dofs exclude
// every boundary node, in ascending dof order.
struct VelocitySpace {
  int k = 0;
  int n_nodes = 0;
  std::vector<Vec2> node_pos;
  std::vector<bool> node_on_boundary;
  std::vector<std::vector<int>> element_nodes;  // aligned with lattice_nodes(k)
  std::vector<int> full_to_free;                // -1 where constrained
  std::vector<int> free_to_full;
  int n_free = 0;

  int n_full() const { return 2 * n_nodes; }
};

VelocitySpace build_velocity_space(const Mesh& m, int k);

// Discontinuous P^{k-1} in per-triangle Lagrange blocks (block t at offset
// t*block_dim). In this representation a block's value at a triangle corner
// is one of its coefficients, so vertex functionals are exact +-1 rows.
// Constraints: global zero mean, then one alternating row per singular
// vertex; `nullspace` has orthonormal columns spanning their kernel.
struct PressureSpace {
  int k = 0;       // paired velocity order
  int degree = 0;  // k - 1
  int block_dim = 0;
  int n_dofs = 0;
  Eigen::MatrixXd constraint_rows;
  std::vector<int> constraint_vertices;  // -1 for the mean row
  Eigen::MatrixXd nullspace;
  int dim = 0;
};

PressureSpace build_pressure_space(const Mesh& m, int k, const Classification& cls);

// lattice index of the node sitting at local corner i (degree >= 0)
int corner_node_index(int degree, int i);

// row of the alternating vertex functional sum_j (-1)^(N-j) q|_{T_j}(z)
Eigen::RowVectorXd singular_functional_row(const Mesh& m, const PressureSpace& ps,
                                           const VertexPatch& patch);
double singular_functional(const Mesh& m, const PressureSpace& ps,
                           const VertexPatch& patch, const Eigen::VectorXd& p);

struct AssembledOps {
  Eigen::MatrixXd A;   // gradient gram, free x free
  Eigen::MatrixXd Mv;  // velocity mass, free x free
  Eigen::MatrixXd B;   // B(r, j) = integral of q_r * div(phi_j), n_dofs x free
  Eigen::MatrixXd Mp;  // pressure mass, block diagonal
};

AssembledOps assemble(const Mesh& m, const VelocitySpace& vs,
                      const PressureSpace& ps, Exec ex = Exec::Par);

VectorBaryPoly element_velocity(const VelocitySpace& vs,
                                const Eigen::VectorXd& u_full, int t);
BaryPoly element_pressure(const PressureSpace& ps, const Eigen::VectorXd& p, int t);

double grad_norm(const Mesh& m, const VelocitySpace& vs, const Eigen::VectorXd& u_full);
double l2_norm(const Mesh& m, const VelocitySpace& vs, const Eigen::VectorXd& u_full);
double pressure_l2_norm(const Mesh& m, const PressureSpace& ps, const Eigen::VectorXd& p);
double pressure_mean(const Mesh& m, const PressureSpace& ps, const Eigen::VectorXd& p);

Eigen::VectorXd free_to_full_vec(const VelocitySpace& vs, const Eigen::VectorXd& u_free);
Eigen::VectorXd full_to_free_vec(const VelocitySpace& vs, const Eigen::VectorXd& u_full);
double max_boundary_coeff(const VelocitySpace& vs, const Eigen::VectorXd& u_full);

// nodal values of f at every node, boundary included
Eigen::VectorXd interpolate(const VelocitySpace& vs, const std::function<Vec2(Vec2)>& f);

// overwrite the nodal dofs of element t with the values of a polynomial field
void assign_element_field(const Mesh& m, const VelocitySpace& vs, int t,
                          const VectorBaryPoly& f, Eigen::VectorXd& u_full);

// nodal re-interpolation of a field into another order on the same mesh;
// exact whenever from.k <= to.k
Eigen::VectorXd interpolate_between(const Mesh& m, const VelocitySpace& from,
                                    const Eigen::VectorXd& u_from,
                                    const VelocitySpace& to);

// exact coefficients of div(u) in the pressure blocks (div V_h^k lies in
// discontinuous P^{k-1})
Eigen::VectorXd divergence_coords(const Mesh& m, const VelocitySpace& vs,
                                  const PressureSpace& ps, const Eigen::VectorXd& u_full);

// pseudorandom admissible pressure (inside the constraint kernel) with unit
// L2 norm
Eigen::VectorXd random_admissible_pressure(const Mesh& m, const PressureSpace& ps,
                                           std::uint64_t seed);

struct DivInclusionReport {
  double max_rel_residual = 0.0;
  int trials = 0;
};

// draws random velocity fields and checks the alternating functional of their
// divergence vanishes at every singular vertex, relative to |grad v|
DivInclusionReport verify_div_inclusion(const Mesh& m, const VelocitySpace& vs,
                                        const Classification& cls, int trials,
                                        std::uint64_t seed);

}  // namespace sv
