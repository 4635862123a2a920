#include "sv/topology.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace sv {

namespace {

constexpr double kPi = 3.14159265358979323846;

int edge_between(const Mesh& m, int z, int other) {
  for (int e : m.vertex_int_edges[static_cast<std::size_t>(z)]) {
    const Edge& ed = m.edges[static_cast<std::size_t>(e)];
    if (ed.v[0] == other || ed.v[1] == other) return e;
  }
  throw internal_error("no interior edge between vertices " + std::to_string(z) +
                       " and " + std::to_string(other));
}

double angle_at(const Mesh& m, int t, int z) {
  int i = m.local_index(t, z);
  const auto& tv = m.tris[static_cast<std::size_t>(t)].v;
  Vec2 pz = m.point(z);
  Vec2 u = m.point(tv[static_cast<std::size_t>((i + 1) % 3)]) - pz;
  Vec2 v = m.point(tv[static_cast<std::size_t>((i + 2) % 3)]) - pz;
  return std::atan2(cross(u, v), dot(u, v));  // in (0, pi) for a CCW triangle
}

}  // namespace

VertexPatch build_patch(const Mesh& m, int z) {
  const auto& inc = m.vertex_tris[static_cast<std::size_t>(z)];
  // links contributed by each incident triangle, walking CCW around z
  std::map<int, std::pair<int, int>> succ;  // neighbor a -> (neighbor b, tri)
  std::map<int, int> indeg;
  for (int t : inc) {
    const auto& tv = m.tris[static_cast<std::size_t>(t)].v;
    int i = m.local_index(t, z);
    int a = tv[static_cast<std::size_t>((i + 1) % 3)];
    int b = tv[static_cast<std::size_t>((i + 2) % 3)];
    succ[a] = {b, t};
    indeg[a];
    indeg[b]++;
  }
  int start = -1;
  for (auto& [a, d] : indeg)
    if (succ.count(a) && d == 0) start = a;

  VertexPatch p;
  p.center = z;
  p.interior = (start < 0);
  int cur;
  if (p.interior) {
    // start at the smallest incident triangle id
    int best_tri = inc[0];
    cur = -1;
    for (auto& [a, link] : succ)
      if (link.second == best_tri) cur = a;
  } else {
    cur = start;
  }
  const int n = static_cast<int>(inc.size());
  for (int j = 0; j < n; ++j) {
    auto [b, t] = succ.at(cur);
    p.tris.push_back(t);
    p.angles.push_back(angle_at(m, t, z));
    bool last = (j == n - 1);
    if (!last || p.interior) p.fan_edges.push_back(edge_between(m, z, b));
    cur = b;
  }
  return p;
}

VertexPatch rotated(const VertexPatch& p, int s) {
  if (!p.interior) throw internal_error("rotated() requires an interior patch");
  const int n = p.n();
  VertexPatch q;
  q.center = p.center;
  q.interior = true;
  for (int j = 0; j < n; ++j) {
    int k = (s + j) % n;
    q.tris.push_back(p.tris[static_cast<std::size_t>(k)]);
    q.angles.push_back(p.angles[static_cast<std::size_t>(k)]);
    q.fan_edges.push_back(p.fan_edges[static_cast<std::size_t>(k)]);
  }
  return q;
}

VertexPatch reversed(const VertexPatch& p) {
  const int n = p.n();
  VertexPatch q;
  q.center = p.center;
  q.interior = p.interior;
  for (int j = n - 1; j >= 0; --j) {
    q.tris.push_back(p.tris[static_cast<std::size_t>(j)]);
    q.angles.push_back(p.angles[static_cast<std::size_t>(j)]);
  }
  if (p.interior) {
    // reversed fan edge j sits between reversed tris j and j+1
    for (int j = 0; j < n; ++j)
      q.fan_edges.push_back(
          p.fan_edges[static_cast<std::size_t>((2 * n - 2 - j) % n)]);
  } else {
    for (int j = n - 2; j >= 0; --j)
      q.fan_edges.push_back(p.fan_edges[static_cast<std::size_t>(j)]);
  }
  return q;
}

namespace {

// deviation of an angle-pair sum from pi, snapped to exact zero near pi
double pair_dev(double s) {
  double d = s - kPi;
  return (std::abs(d) < kAngleSnapTol) ? 0.0 : d;
}

}  // namespace

VertexClass classify_vertex(const VertexPatch& p) {
  VertexClass c;
  c.n = p.n();
  c.interior = p.interior;
  const int n = p.n();
  const int pairs = p.interior ? n : n - 1;
  double gamma = 0.0, theta = 0.0;
  for (int j = 0; j < pairs; ++j) {
    double s = p.angles[static_cast<std::size_t>(j)] +
               p.angles[static_cast<std::size_t>((j + 1) % n)];
    double d = pair_dev(s);
    gamma = std::max(gamma, std::abs(d));
    theta = std::max(theta, d == 0.0 ? 0.0 : std::abs(std::sin(s)));
  }
  c.gamma = gamma;
  c.theta = theta;
  c.singular = (gamma == 0.0);  // includes the boundary N=1 case (no pairs)
  return c;
}

int max_pair_index(const VertexPatch& p) {
  const int n = p.n();
  const int pairs = p.interior ? n : n - 1;
  if (pairs <= 0) throw internal_error("max_pair_index on a single-triangle fan");
  int best = -1;
  double best_theta = -1.0;
  for (int j = 0; j < pairs; ++j) {
    double s = p.angles[static_cast<std::size_t>(j)] +
               p.angles[static_cast<std::size_t>((j + 1) % n)];
    double t = pair_dev(s) == 0.0 ? 0.0 : std::abs(std::sin(s));
    if (t > best_theta) {
      best_theta = t;
      best = j;
    }
  }
  if (best_theta <= 0.0)
    throw internal_error("max_pair_index on a singular vertex");
  return best;
}

Classification classify(const Mesh& m, Exec ex) {
  const int nv = m.n_vertices();
  Classification out;
  out.vclass.assign(static_cast<std::size_t>(nv), {});
  std::vector<double> angle_sum(static_cast<std::size_t>(nv), 0.0);
  for_each_index(ex, nv, [&](std::int64_t v) {
    VertexPatch p = build_patch(m, static_cast<int>(v));
    out.vclass[static_cast<std::size_t>(v)] = classify_vertex(p);
    double s = 0.0;
    for (double a : p.angles) s += a;
    angle_sum[static_cast<std::size_t>(v)] = s;
  });
  for (int v = 0; v < nv; ++v) {
    const VertexClass& c = out.vclass[static_cast<std::size_t>(v)];
    if (c.interior && std::abs(angle_sum[static_cast<std::size_t>(v)] - 2 * kPi) > 1e-9)
      throw validation_error("mesh folds around interior vertex " + std::to_string(v));
    if (!c.singular && !(c.theta > 0.0))
      throw internal_error("vertex " + std::to_string(v) +
                           " is non-singular but its angle measure vanished");
    if (c.singular)
      out.singular.push_back(v);
    else
      out.nonsingular.push_back(v);
  }
  for (int v : out.nonsingular) {
    double t = out.vclass[static_cast<std::size_t>(v)].theta;
    if (!out.theta_min || t < *out.theta_min) out.theta_min = t;
  }
  return out;
}

}  // namespace sv
