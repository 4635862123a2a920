#include "sv/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "sv/rng.hpp"

namespace sv {

namespace {

std::string vstr(int v) { return std::to_string(v); }

// one angular fan of triangles around z: the directed links (prev -> next)
// contributed by each incident CCW triangle must form a single cycle
// (interior vertex) or a single open chain (boundary vertex)
void check_vertex_fan(const Mesh& m, int z) {
  const auto& inc = m.vertex_tris[static_cast<std::size_t>(z)];
  std::map<int, int> succ;  // neighbor a -> neighbor b with (z,a,b) CCW
  std::map<int, int> indeg;
  for (int t : inc) {
    const auto& tv = m.tris[static_cast<std::size_t>(t)].v;
    int i = m.local_index(t, z);
    int a = tv[static_cast<std::size_t>((i + 1) % 3)];
    int b = tv[static_cast<std::size_t>((i + 2) % 3)];
    if (succ.count(a))
      throw validation_error("non-conforming mesh: vertex " + vstr(z) +
                             " has two triangles on the same side");
    succ[a] = b;
    indeg[a];  // ensure key
    indeg[b]++;
  }
  // chain start: a neighbor that is never a successor; absent for a cycle
  int start = -1;
  int n_starts = 0;
  for (auto& [a, d] : indeg) {
    if (succ.count(a) && d == 0) {
      start = a;
      n_starts++;
    }
  }
  if (n_starts > 1)
    throw validation_error("non-conforming mesh: vertex " + vstr(z) +
                           " has a split triangle fan");
  int links = static_cast<int>(succ.size());
  bool ok;
  if (start >= 0) {
    int cur = start;
    int steps = 0;
    while (steps < links && succ.count(cur)) {
      cur = succ[cur];
      steps++;
    }
    ok = (steps == links && !succ.count(cur));
  } else {
    // cycle: the first return to the start must consume every link
    int origin = succ.begin()->first;
    int cur = origin;
    int steps = 0;
    do {
      cur = succ[cur];
      steps++;
    } while (cur != origin && steps < links && succ.count(cur));
    ok = (cur == origin && steps == links);
  }
  if (!ok)
    throw validation_error("non-conforming mesh: vertex " + vstr(z) +
                           " has a split triangle fan");
}

}  // namespace

int Mesh::local_index(int t, int z) const {
  const auto& tv = tris[static_cast<std::size_t>(t)].v;
  for (int i = 0; i < 3; ++i)
    if (tv[static_cast<std::size_t>(i)] == z) return i;
  throw internal_error("vertex " + vstr(z) + " not in triangle " + vstr(t));
}

double Mesh::h_max() const {
  double h = 0.0;
  for (const auto& e : edges) h = std::max(h, e.length);
  return h;
}

Mesh build_mesh(std::vector<Vec2> coords, std::vector<std::array<int, 3>> tris) {
  Mesh m;
  if (coords.empty()) throw validation_error("mesh has no vertices");
  if (tris.empty()) throw validation_error("mesh has no triangles");
  const int nv = static_cast<int>(coords.size());
  for (int v = 0; v < nv; ++v) {
    if (!std::isfinite(coords[static_cast<std::size_t>(v)].x) ||
        !std::isfinite(coords[static_cast<std::size_t>(v)].y))
      throw validation_error("vertex " + vstr(v) + " has non-finite coordinates");
    m.vertices.push_back({coords[static_cast<std::size_t>(v)], false});
  }
  for (std::size_t t = 0; t < tris.size(); ++t) {
    auto tv = tris[t];
    for (int i = 0; i < 3; ++i) {
      if (tv[static_cast<std::size_t>(i)] < 0 || tv[static_cast<std::size_t>(i)] >= nv)
        throw validation_error("triangle " + vstr(static_cast<int>(t)) +
                               " references vertex " +
                               vstr(tv[static_cast<std::size_t>(i)]) +
                               " out of range");
    }
    if (tv[0] == tv[1] || tv[1] == tv[2] || tv[0] == tv[2])
      throw validation_error("triangle " + vstr(static_cast<int>(t)) +
                             " repeats a vertex");
    Vec2 p0 = coords[static_cast<std::size_t>(tv[0])];
    Vec2 p1 = coords[static_cast<std::size_t>(tv[1])];
    Vec2 p2 = coords[static_cast<std::size_t>(tv[2])];
    double signed2 = cross(p1 - p0, p2 - p0);
    if (signed2 < 0.0) {
      std::swap(tv[1], tv[2]);
      signed2 = -signed2;
    }
    if (!(signed2 > 0.0))
      throw validation_error("triangle " + vstr(static_cast<int>(t)) +
                             " is degenerate");
    m.tris.push_back({tv, 0.5 * signed2});
    m.domain_area += 0.5 * signed2;
  }

  const int nt = m.n_tris();
  std::map<std::pair<int, int>, int> edge_of;
  m.tri_edges.assign(static_cast<std::size_t>(nt), {-1, -1, -1});
  std::map<std::pair<int, int>, int> directed_seen;
  for (int t = 0; t < nt; ++t) {
    const auto& tv = m.tris[static_cast<std::size_t>(t)].v;
    for (int i = 0; i < 3; ++i) {
      int a = tv[static_cast<std::size_t>((i + 1) % 3)];
      int b = tv[static_cast<std::size_t>((i + 2) % 3)];
      if (directed_seen.count({a, b}))
        throw validation_error("non-conforming mesh: directed edge " + vstr(a) +
                               "->" + vstr(b) + " appears twice");
      directed_seen[{a, b}] = t;
      auto key = std::minmax(a, b);
      auto it = edge_of.find(key);
      int e;
      if (it == edge_of.end()) {
        e = m.n_edges();
        edge_of[key] = e;
        Edge ed;
        ed.v = {key.first, key.second};
        ed.length = norm(m.point(key.second) - m.point(key.first));
        m.edges.push_back(ed);
      } else {
        e = it->second;
      }
      Edge& ed = m.edges[static_cast<std::size_t>(e)];
      if (ed.tri[0] < 0)
        ed.tri[0] = t;
      else if (ed.tri[1] < 0)
        ed.tri[1] = t;
      else
        throw validation_error("edge " + vstr(ed.v[0]) + "-" + vstr(ed.v[1]) +
                               " lies in more than two triangles");
      m.tri_edges[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] = e;
    }
  }

  m.vertex_tris.assign(static_cast<std::size_t>(nv), {});
  for (int t = 0; t < nt; ++t)
    for (int i = 0; i < 3; ++i)
      m.vertex_tris[static_cast<std::size_t>(
                        m.tris[static_cast<std::size_t>(t)].v[static_cast<std::size_t>(i)])]
          .push_back(t);
  for (int v = 0; v < nv; ++v) {
    if (m.vertex_tris[static_cast<std::size_t>(v)].empty())
      throw validation_error("vertex " + vstr(v) + " is not used by any triangle");
  }

  m.vertex_int_edges.assign(static_cast<std::size_t>(nv), {});
  for (int e = 0; e < m.n_edges(); ++e) {
    const Edge& ed = m.edges[static_cast<std::size_t>(e)];
    if (ed.tri[1] < 0) {
      m.vertices[static_cast<std::size_t>(ed.v[0])].on_boundary = true;
      m.vertices[static_cast<std::size_t>(ed.v[1])].on_boundary = true;
    } else {
      m.vertex_int_edges[static_cast<std::size_t>(ed.v[0])].push_back(e);
      m.vertex_int_edges[static_cast<std::size_t>(ed.v[1])].push_back(e);
    }
  }
  for (auto& lst : m.vertex_int_edges) std::sort(lst.begin(), lst.end());

  for (int v = 0; v < nv; ++v) check_vertex_fan(m, v);
  return m;
}

namespace {

struct Token {
  std::string text;
  int line;
};

std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> out;
  int line = 1;
  std::string cur;
  bool comment = false;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back({cur, line});
      cur.clear();
    }
  };
  for (char c : text) {
    if (c == '\n') {
      flush();
      comment = false;
      line++;
    } else if (comment) {
      continue;
    } else if (c == '#') {
      flush();
      comment = true;
    } else if (c == ' ' || c == '\t' || c == '\r') {
      flush();
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

class Cursor {
 public:
  explicit Cursor(std::vector<Token> toks) : toks_(std::move(toks)) {}

  bool done() const { return pos_ >= toks_.size(); }

  const Token& take(const char* what) {
    if (done())
      throw validation_error(std::string("mesh parse error: expected ") + what +
                             ", got end of input");
    return toks_[pos_++];
  }

  void expect_word(const char* word) {
    const Token& t = take(word);
    if (t.text != word)
      throw validation_error("mesh parse error at line " + std::to_string(t.line) +
                             ": expected '" + word + "', got '" + t.text + "'");
  }

  int take_int(const char* what) {
    const Token& t = take(what);
    int value = 0;
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), value);
    if (ec != std::errc() || p != t.text.data() + t.text.size())
      throw validation_error("mesh parse error at line " + std::to_string(t.line) +
                             ": expected integer " + what + ", got '" + t.text + "'");
    return value;
  }

  double take_double(const char* what) {
    const Token& t = take(what);
    double value = 0;
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), value);
    if (ec != std::errc() || p != t.text.data() + t.text.size())
      throw validation_error("mesh parse error at line " + std::to_string(t.line) +
                             ": expected number " + what + ", got '" + t.text + "'");
    return value;
  }

  int line() const {
    if (toks_.empty()) return 1;
    return pos_ < toks_.size() ? toks_[pos_].line : toks_.back().line;
  }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

}  // namespace

Mesh load_mesh_text(const std::string& text) {
  Cursor cur(tokenize(text));
  cur.expect_word("nodes");
  int n = cur.take_int("node count");
  if (n <= 0) throw validation_error("mesh parse error: node count must be positive");
  std::vector<Vec2> coords;
  coords.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double x = cur.take_double("x");
    double y = cur.take_double("y");
    coords.push_back({x, y});
  }
  cur.expect_word("tris");
  int mcount = cur.take_int("triangle count");
  if (mcount <= 0)
    throw validation_error("mesh parse error: triangle count must be positive");
  std::vector<std::array<int, 3>> tris;
  tris.reserve(static_cast<std::size_t>(mcount));
  for (int i = 0; i < mcount; ++i) {
    int a = cur.take_int("v0");
    int b = cur.take_int("v1");
    int c = cur.take_int("v2");
    tris.push_back({a, b, c});
  }
  if (!cur.done())
    throw validation_error("mesh parse error at line " + std::to_string(cur.line()) +
                           ": trailing input");
  return build_mesh(std::move(coords), std::move(tris));
}

Mesh load_mesh_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw validation_error("cannot open mesh file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_mesh_text(ss.str());
}

std::string to_mesh_text(const Mesh& m) {
  std::ostringstream out;
  char buf[128];
  out << "nodes " << m.n_vertices() << "\n";
  for (const auto& v : m.vertices) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g\n", v.p.x, v.p.y);
    out << buf;
  }
  out << "tris " << m.n_tris() << "\n";
  for (const auto& t : m.tris)
    out << t.v[0] << " " << t.v[1] << " " << t.v[2] << "\n";
  return out.str();
}

namespace {

Mesh make_diagonal(int n, std::uint64_t seed, double magnitude, bool perturb) {
  const double h = 1.0 / n;
  auto vid = [n](int i, int j) { return j * (n + 1) + i; };
  std::vector<Vec2> coords(static_cast<std::size_t>((n + 1) * (n + 1)));
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i) {
      Vec2 p{static_cast<double>(i) / n, static_cast<double>(j) / n};
      if (perturb && i > 0 && i < n && j > 0 && j < n) {
        SplitMix64 g(seed_stream(seed, static_cast<std::uint64_t>(vid(i, j))));
        double ang = 6.283185307179586 * g.uniform01();
        double r = magnitude * h * g.uniform01();
        p.x += r * std::cos(ang);
        p.y += r * std::sin(ang);
      }
      coords[static_cast<std::size_t>(vid(i, j))] = p;
    }
  std::vector<std::array<int, 3>> tris;
  tris.reserve(static_cast<std::size_t>(2 * n * n));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      int v00 = vid(i, j), v10 = vid(i + 1, j);
      int v01 = vid(i, j + 1), v11 = vid(i + 1, j + 1);
      tris.push_back({v00, v10, v11});
      tris.push_back({v00, v11, v01});
    }
  return build_mesh(std::move(coords), std::move(tris));
}

Mesh make_crisscross(int n) {
  auto vid = [n](int i, int j) { return j * (n + 1) + i; };
  const int grid = (n + 1) * (n + 1);
  auto cid = [n, grid](int i, int j) { return grid + j * n + i; };
  std::vector<Vec2> coords(static_cast<std::size_t>(grid + n * n));
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      coords[static_cast<std::size_t>(vid(i, j))] = {static_cast<double>(i) / n,
                                                     static_cast<double>(j) / n};
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      // exact mean of the cell corners so the center is exactly singular
      double x0 = static_cast<double>(i) / n, x1 = static_cast<double>(i + 1) / n;
      double y0 = static_cast<double>(j) / n, y1 = static_cast<double>(j + 1) / n;
      coords[static_cast<std::size_t>(cid(i, j))] = {0.5 * (x0 + x1), 0.5 * (y0 + y1)};
    }
  std::vector<std::array<int, 3>> tris;
  tris.reserve(static_cast<std::size_t>(4 * n * n));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      int v00 = vid(i, j), v10 = vid(i + 1, j);
      int v01 = vid(i, j + 1), v11 = vid(i + 1, j + 1);
      int c = cid(i, j);
      tris.push_back({v00, v10, c});
      tris.push_back({v10, v11, c});
      tris.push_back({v11, v01, c});
      tris.push_back({v01, v00, c});
    }
  return build_mesh(std::move(coords), std::move(tris));
}

}  // namespace

Mesh generate_mesh(MeshFamily family, int n, std::uint64_t seed, double magnitude) {
  if (n < 1) throw validation_error("mesh family parameter n must be >= 1");
  switch (family) {
    case MeshFamily::Diagonal:
      return make_diagonal(n, 0, 0.0, false);
    case MeshFamily::Crisscross:
      return make_crisscross(n);
    case MeshFamily::PerturbedDiagonal:
      if (!(magnitude >= 0.0 && magnitude < 0.3))
        throw validation_error("perturbation magnitude must lie in [0, 0.3)");
      return make_diagonal(n, seed, magnitude, true);
  }
  throw internal_error("unknown mesh family");
}

Mesh generate_mesh_from_string(const std::string& spec) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : spec) {
    if (c == ':') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  auto need_int = [&](std::size_t i, const char* what) {
    if (i >= parts.size())
      throw validation_error("mesh family spec '" + spec + "' is missing " + what);
    try {
      return std::stoll(parts[i]);
    } catch (const std::exception&) {
      throw validation_error("mesh family spec '" + spec + "': bad " + what);
    }
  };
  const std::string& fam = parts[0];
  if (fam == "diagonal") {
    return generate_mesh(MeshFamily::Diagonal, static_cast<int>(need_int(1, "n")));
  }
  if (fam == "crisscross") {
    return generate_mesh(MeshFamily::Crisscross, static_cast<int>(need_int(1, "n")));
  }
  if (fam == "perturbed-diagonal") {
    int n = static_cast<int>(need_int(1, "n"));
    std::uint64_t seed = 1;
    double magnitude = 0.2;
    if (parts.size() > 2) seed = static_cast<std::uint64_t>(need_int(2, "seed"));
    if (parts.size() > 3) {
      try {
        magnitude = std::stod(parts[3]);
      } catch (const std::exception&) {
        throw validation_error("mesh family spec '" + spec + "': bad magnitude");
      }
    }
    return generate_mesh(MeshFamily::PerturbedDiagonal, n, seed, magnitude);
  }
  throw validation_error("unknown mesh family '" + fam +
                         "' (expected diagonal, crisscross, perturbed-diagonal)");
}

Mesh make_offset_center_square(double delta) {
  if (!(std::abs(delta) < 0.4))
    throw validation_error("offset-center square requires |delta| < 0.4");
  std::vector<Vec2> coords = {
      {0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5 + delta}};
  std::vector<std::array<int, 3>> tris = {
      {0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}};
  return build_mesh(std::move(coords), std::move(tris));
}

Mesh make_boundary_singular_fixture() {
  std::vector<Vec2> coords = {{0, 0}, {0.5, 0}, {1, 0}, {0.5, 0.75}};
  std::vector<std::array<int, 3>> tris = {{0, 1, 3}, {1, 2, 3}};
  return build_mesh(std::move(coords), std::move(tris));
}

VertexGeom geometry_at(const Mesh& m, int t, int y) {
  int i = m.local_index(t, y);
  const auto& tv = m.tris[static_cast<std::size_t>(t)].v;
  Vec2 pa = m.point(tv[static_cast<std::size_t>((i + 1) % 3)]);
  Vec2 pb = m.point(tv[static_cast<std::size_t>((i + 2) % 3)]);
  Vec2 d = pb - pa;
  double len = norm(d);
  VertexGeom g;
  g.normal = {d.y / len, -d.x / len};  // away from y for a CCW triangle
  g.height = 2.0 * m.tris[static_cast<std::size_t>(t)].area / len;
  g.grad_hat = (-1.0 / g.height) * g.normal;
  return g;
}

double shape_regularity(const Mesh& m) {
  double worst = 1.0;
  for (int t = 0; t < m.n_tris(); ++t) {
    const auto& tv = m.tris[static_cast<std::size_t>(t)].v;
    double l01 = norm(m.point(tv[1]) - m.point(tv[0]));
    double l12 = norm(m.point(tv[2]) - m.point(tv[1]));
    double l20 = norm(m.point(tv[0]) - m.point(tv[2]));
    double s = 0.5 * (l01 + l12 + l20);
    double inradius = m.tris[static_cast<std::size_t>(t)].area / s;
    double dmax = std::max({l01, l12, l20});
    worst = std::min(worst, 2.0 * inradius / dmax);
  }
  return worst;
}

}  // namespace sv
