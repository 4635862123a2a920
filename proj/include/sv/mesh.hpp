#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sv {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::sqrt(a.x * a.x + a.y * a.y); }
// counterclockwise quarter turn
inline Vec2 rot90(Vec2 a) { return {-a.y, a.x}; }

// invalid input (bad mesh file, bad arguments): exit code 1 territory
class validation_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// a contract the implementation promised and failed to meet: exit code 2
class internal_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Vertex {
  Vec2 p;
  bool on_boundary = false;
};

struct Triangle {
  std::array<int, 3> v{-1, -1, -1};  // CCW
  double area = 0.0;
};

struct Edge {
  std::array<int, 2> v{-1, -1};      // v[0] < v[1]
  std::array<int, 2> tri{-1, -1};    // incident triangles, tri[1] = -1 on boundary
  double length = 0.0;
};

// Conforming triangulation. Construction validates: references in range,
// positive areas after CCW reorientation, no duplicate or unused vertices,
// every edge in at most two triangles, and a single angular fan per vertex
// (which rules out hanging nodes and pinched vertices without any geometric
// tolerance).
struct Mesh {
  std::vector<Vertex> vertices;
  std::vector<Triangle> tris;
  std::vector<Edge> edges;
  std::vector<std::array<int, 3>> tri_edges;       // edge opposite local vertex i
  std::vector<std::vector<int>> vertex_tris;       // incident triangles, ascending
  std::vector<std::vector<int>> vertex_int_edges;  // incident interior edges, ascending
  double domain_area = 0.0;

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_tris() const { return static_cast<int>(tris.size()); }
  int n_edges() const { return static_cast<int>(edges.size()); }
  Vec2 point(int v) const { return vertices[static_cast<std::size_t>(v)].p; }
  // local index of global vertex z in triangle t; error if absent
  int local_index(int t, int z) const;
  double h_max() const;
};

Mesh build_mesh(std::vector<Vec2> coords, std::vector<std::array<int, 3>> tris);

// Text format:
//   nodes <N>
//   <x> <y>          (N lines)
//   tris <M>
//   <v0> <v1> <v2>   (M lines, 0-based)
// '#' starts a comment anywhere on a line.
Mesh load_mesh_text(const std::string& text);
Mesh load_mesh_file(const std::string& path);
std::string to_mesh_text(const Mesh& m);

enum class MeshFamily { Diagonal, Crisscross, PerturbedDiagonal };

// Unit-square families, n cells per side. Diagonal splits each cell along
// SW-NE; crisscross splits each cell into four at the exact cell center;
// perturbed-diagonal displaces each interior grid vertex by a deterministic
// seeded offset of magnitude < magnitude*h in each coordinate.
Mesh generate_mesh(MeshFamily family, int n, std::uint64_t seed = 0,
                   double magnitude = 0.2);

// family spec string: "diagonal:n", "crisscross:n",
// "perturbed-diagonal:n[:seed[:magnitude]]"
Mesh generate_mesh_from_string(const std::string& spec);

// Square with an interior vertex at (1/2, 1/2+delta) joined to all four
// corners. delta = 0 is the crisscross cell (singular center); small delta > 0
// leaves the center barely non-singular.
Mesh make_offset_center_square(double delta);

// mesh of two triangles over collinear boundary edges: the midpoint of the
// base is a singular boundary vertex
Mesh make_boundary_singular_fixture();

// geometry of triangle t as seen from its vertex y (global id):
//   height  distance from y to the line of the opposite edge
//   normal  unit normal of the opposite edge pointing away from y
//   grad_hat  gradient of the P1 hat of y restricted to t (= -normal/height)
struct VertexGeom {
  double height = 0.0;
  Vec2 normal;
  Vec2 grad_hat;
};
VertexGeom geometry_at(const Mesh& m, int t, int y);

// min over triangles of (2 * inradius / longest edge), in (0, 1]
double shape_regularity(const Mesh& m);

}  // namespace sv
