#pragma once

#include <optional>

#include "sv/mesh.hpp"
#include "sv/parallel.hpp"

namespace sv {

// angle-pair sums within this distance of pi count as exactly pi, so meshes
// built from floating-point grids classify the way their exact counterparts do
inline constexpr double kAngleSnapTol = 1e-12;

// Triangles around a vertex in angular order T_1..T_N (stored 0-based).
// fan_edges[j] is the edge shared by tris[j] and tris[j+1]; an interior fan
// has N fan edges (the last closes the cycle back to tris[0]), a boundary fan
// has N-1. Boundary fans start at the triangle whose leading edge is on the
// boundary; interior fans start at the smallest incident triangle id.
struct VertexPatch {
  int center = -1;
  bool interior = false;
  std::vector<int> tris;
  std::vector<int> fan_edges;
  std::vector<double> angles;

  int n() const { return static_cast<int>(tris.size()); }
};

VertexPatch build_patch(const Mesh& m, int z);

// rotate an interior fan so old position s (0-based) becomes position 0
VertexPatch rotated(const VertexPatch& p, int s);

// reverse the angular orientation of a fan (still a valid patch)
VertexPatch reversed(const VertexPatch& p);

struct VertexClass {
  double gamma = 0.0;  // max over consecutive pairs of |theta_j + theta_{j+1} - pi|
  double theta = 0.0;  // max over consecutive pairs of |sin(theta_j + theta_{j+1})|
  bool singular = false;
  int n = 0;
  bool interior = false;
};

// Pair ranges: j = 1..N-1 for boundary fans, cyclic j = 1..N for interior.
// A boundary vertex with N = 1 has no pairs: gamma := 0, singular.
VertexClass classify_vertex(const VertexPatch& p);

// 0-based index s of the pair (angles[s], angles[s+1 mod N]) attaining theta,
// smallest s on ties; requires a non-singular classification
int max_pair_index(const VertexPatch& p);

struct Classification {
  std::vector<VertexClass> vclass;   // indexed by vertex id
  std::vector<int> nonsingular;     // ascending
  std::vector<int> singular;        // ascending
  std::optional<double> theta_min;  // min of theta over nonsingular vertices
};

// Classifies every vertex. Also checks that interior fan angles sum to 2*pi
// (within 1e-9), which catches folded meshes that are combinatorially valid.
Classification classify(const Mesh& m, Exec ex = Exec::Par);

}  // namespace sv
