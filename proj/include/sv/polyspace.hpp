#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "sv/mesh.hpp"

namespace sv {

// Homogeneous polynomial in barycentric coordinates (l1, l2, l3), stored as
// coefficients of the monomials l1^a l2^b l3^c with a+b+c = degree, ordered
// by a ascending then b ascending. Degree-d and degree-d' representations of
// the same function are related by multiplying with (l1+l2+l3)^(d'-d);
// arithmetic homogenizes to the larger degree automatically.
class BaryPoly {
 public:
  BaryPoly() : degree_(0), coef_(1, 0.0) {}
  explicit BaryPoly(int degree)
      : degree_(degree), coef_(static_cast<std::size_t>(n_coeffs(degree)), 0.0) {}

  static int n_coeffs(int d) { return (d + 1) * (d + 2) / 2; }
  static int index(int d, int a, int b) { return a * (d + 1) - a * (a - 1) / 2 + b; }

  static BaryPoly constant(double v);
  static BaryPoly monomial(int a, int b, int c, double v = 1.0);
  static BaryPoly hat(int i);  // l_{i+1} for i in {0,1,2}
  static BaryPoly bubble();    // l1 l2 l3

  int degree() const { return degree_; }
  double at(int a, int b) const { return coef_[static_cast<std::size_t>(index(degree_, a, b))]; }
  double& at(int a, int b) { return coef_[static_cast<std::size_t>(index(degree_, a, b))]; }
  const std::vector<double>& coeffs() const { return coef_; }
  std::vector<double>& coeffs() { return coef_; }

  double eval(double l1, double l2, double l3) const;
  BaryPoly dlambda(int i) const;       // formal d/dl_{i+1}, degree drops by one
  BaryPoly homogenized(int d) const;   // representation at degree d >= degree()
  double max_abs_coeff() const;

 private:
  int degree_;
  std::vector<double> coef_;
};

BaryPoly operator*(const BaryPoly& p, const BaryPoly& q);
BaryPoly operator*(double s, const BaryPoly& p);
BaryPoly operator+(const BaryPoly& p, const BaryPoly& q);
BaryPoly operator-(const BaryPoly& p, const BaryPoly& q);
BaryPoly operator-(const BaryPoly& p);

struct VectorBaryPoly {
  BaryPoly x, y;
};

VectorBaryPoly operator+(const VectorBaryPoly& u, const VectorBaryPoly& v);
VectorBaryPoly operator-(const VectorBaryPoly& u, const VectorBaryPoly& v);
VectorBaryPoly operator*(double s, const VectorBaryPoly& u);
VectorBaryPoly operator*(const BaryPoly& p, const VectorBaryPoly& u);
inline VectorBaryPoly vec_poly(Vec2 dir, const BaryPoly& p) {
  return {dir.x * p, dir.y * p};
}

// affine data of one triangle, enough to differentiate and integrate exactly
struct TriGeom {
  double area = 0.0;
  std::array<Vec2, 3> corner;
  std::array<Vec2, 3> grad_bary;   // gradient of l_{i+1}
  std::array<double, 3> edge_len;  // length of the edge opposite corner i
};

TriGeom tri_geom(const Mesh& m, int t);
TriGeom tri_geom_from_points(Vec2 p0, Vec2 p1, Vec2 p2);
inline TriGeom reference_tri_geom() {
  return tri_geom_from_points({0, 0}, {1, 0}, {0, 1});
}

// exact integrals from the factorial formula; degree must stay below 28
double integrate_triangle(const BaryPoly& p, const TriGeom& g);
// integral over the edge opposite corner `opp`
double integrate_edge(const BaryPoly& p, const TriGeom& g, int opp);

VectorBaryPoly gradient(const BaryPoly& p, const TriGeom& g);
BaryPoly divergence(const VectorBaryPoly& u, const TriGeom& g);
// curl of a scalar: (ds/dy, -ds/dx); divergence-free by construction
VectorBaryPoly curl(const BaryPoly& s, const TriGeom& g);

double eval_at_point(const BaryPoly& p, const TriGeom& g, Vec2 pt);
std::array<double, 3> barycentric_of(const TriGeom& g, Vec2 pt);

// equispaced barycentric lattice of degree k (k >= 0); node i has barycentric
// index (a,b,c)/k ordered like the monomials; degree 0 has the single node at
// the centroid
std::vector<std::array<int, 3>> lattice_nodes(int k);

// Lagrange basis on the lattice, plus its formal lambda-derivatives; cached
// per degree, safe to call concurrently
struct LagrangeData {
  std::vector<BaryPoly> basis;
  std::vector<std::array<BaryPoly, 3>> dbasis;
};
const LagrangeData& lagrange_data(int k);

struct TriSpaceDims {
  int dim_moment = 0;   // pressure moment space inside P^{k-1}
  int dim_bubble = 0;   // vector bubble space inside [P^k]^2
  int dim_divfree = 0;  // divergence-free bubbles
};
// k >= 3; dim_bubble == dim_moment + dim_divfree
TriSpaceDims space_dims(int k);

// basis of b_T * [P^{k-3}]^2 as vector polynomials of degree k; order: for
// each scalar monomial, the x-component field then the y-component field
std::vector<VectorBaryPoly> bubble_space_basis(int k);

// basis of {curl(psi * b_T^2) : psi in P^{k-5}}; empty for k < 5
std::vector<VectorBaryPoly> divfree_bubble_basis(int k, const TriGeom& g);

// columns span the degree-(k-1) polynomials with zero vertex values and zero
// mean, in monomial coordinates; triangle-independent
Eigen::MatrixXd pressure_moment_basis(int k);

// matrix of div : bubble basis -> moment basis coordinates, dim_moment x
// dim_bubble; raises internal_error if some div lands outside the moment space
Eigen::MatrixXd divergence_matrix(int k, const TriGeom& g);

// coordinates (in monomial basis of degree k-1) of a moment-space element
// given its moment coordinates
Eigen::VectorXd moment_to_monomial(int k, const Eigen::VectorXd& mcoords);

// least-squares moment coordinates of a degree-(k-1) polynomial; exact when
// the polynomial already lies in the moment space
Eigen::VectorXd monomial_to_moment(int k, const Eigen::VectorXd& mono);

}  // namespace sv
