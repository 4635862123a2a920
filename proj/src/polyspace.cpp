#include "sv/polyspace.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>

namespace sv {

namespace {

constexpr int kMaxFactorial = 30;

const double* factorials() {
  static const auto table = [] {
    std::array<double, kMaxFactorial + 1> t{};
    t[0] = 1.0;
    for (int n = 1; n <= kMaxFactorial; ++n) t[static_cast<std::size_t>(n)] = n * t[static_cast<std::size_t>(n - 1)];
    return t;
  }();
  return table.data();
}

void check_degree(int d) {
  if (d + 2 > kMaxFactorial)
    throw internal_error("polynomial degree " + std::to_string(d) +
                         " exceeds the exact integration table");
}

}  // namespace

BaryPoly BaryPoly::constant(double v) {
  BaryPoly p(0);
  p.coef_[0] = v;
  return p;
}

BaryPoly BaryPoly::monomial(int a, int b, int c, double v) {
  if (a < 0 || b < 0 || c < 0) throw internal_error("negative monomial exponent");
  BaryPoly p(a + b + c);
  p.at(a, b) = v;
  return p;
}

BaryPoly BaryPoly::hat(int i) {
  switch (i) {
    case 0: return monomial(1, 0, 0);
    case 1: return monomial(0, 1, 0);
    case 2: return monomial(0, 0, 1);
  }
  throw internal_error("hat index out of range");
}

BaryPoly BaryPoly::bubble() { return monomial(1, 1, 1); }

double BaryPoly::eval(double l1, double l2, double l3) const {
  const int d = degree_;
  if (d >= 32) throw internal_error("eval degree out of range");
  double p1[32], p2[32], p3[32];
  p1[0] = p2[0] = p3[0] = 1.0;
  for (int i = 1; i <= d; ++i) {
    p1[i] = p1[i - 1] * l1;
    p2[i] = p2[i - 1] * l2;
    p3[i] = p3[i - 1] * l3;
  }
  double sum = 0.0;
  std::size_t idx = 0;
  for (int a = 0; a <= d; ++a)
    for (int b = 0; b <= d - a; ++b, ++idx)
      sum += coef_[idx] * p1[a] * p2[b] * p3[d - a - b];
  return sum;
}

BaryPoly BaryPoly::dlambda(int i) const {
  const int d = degree_;
  if (d == 0) return BaryPoly(0);
  BaryPoly out(d - 1);
  std::size_t idx = 0;
  for (int a = 0; a <= d; ++a)
    for (int b = 0; b <= d - a; ++b, ++idx) {
      int c = d - a - b;
      double v = coef_[idx];
      if (v == 0.0) continue;
      if (i == 0 && a > 0) out.at(a - 1, b) += a * v;
      if (i == 1 && b > 0) out.at(a, b - 1) += b * v;
      if (i == 2 && c > 0) out.at(a, b) += c * v;
    }
  return out;
}

BaryPoly BaryPoly::homogenized(int d) const {
  if (d < degree_) throw internal_error("cannot lower polynomial degree");
  BaryPoly out = *this;
  static const BaryPoly one = [] {
    BaryPoly p(1);
    p.at(1, 0) = p.at(0, 1) = p.at(0, 0) = 1.0;
    return p;
  }();
  for (int i = degree_; i < d; ++i) out = out * one;
  return out;
}

double BaryPoly::max_abs_coeff() const {
  double m = 0.0;
  for (double v : coef_) m = std::max(m, std::abs(v));
  return m;
}

BaryPoly operator*(const BaryPoly& p, const BaryPoly& q) {
  const int dp = p.degree(), dq = q.degree();
  BaryPoly out(dp + dq);
  std::size_t ip = 0;
  for (int a1 = 0; a1 <= dp; ++a1)
    for (int b1 = 0; b1 <= dp - a1; ++b1, ++ip) {
      double v1 = p.coeffs()[ip];
      if (v1 == 0.0) continue;
      std::size_t iq = 0;
      for (int a2 = 0; a2 <= dq; ++a2)
        for (int b2 = 0; b2 <= dq - a2; ++b2, ++iq) {
          double v2 = q.coeffs()[iq];
          if (v2 == 0.0) continue;
          out.at(a1 + a2, b1 + b2) += v1 * v2;
        }
    }
  return out;
}

BaryPoly operator*(double s, const BaryPoly& p) {
  BaryPoly out = p;
  for (double& v : out.coeffs()) v *= s;
  return out;
}

BaryPoly operator+(const BaryPoly& p, const BaryPoly& q) {
  const int d = std::max(p.degree(), q.degree());
  BaryPoly a = p.degree() == d ? p : p.homogenized(d);
  const BaryPoly b = q.degree() == d ? q : q.homogenized(d);
  for (std::size_t i = 0; i < a.coeffs().size(); ++i) a.coeffs()[i] += b.coeffs()[i];
  return a;
}

BaryPoly operator-(const BaryPoly& p, const BaryPoly& q) { return p + (-1.0) * q; }
BaryPoly operator-(const BaryPoly& p) { return -1.0 * p; }

VectorBaryPoly operator+(const VectorBaryPoly& u, const VectorBaryPoly& v) {
  return {u.x + v.x, u.y + v.y};
}
VectorBaryPoly operator-(const VectorBaryPoly& u, const VectorBaryPoly& v) {
  return {u.x - v.x, u.y - v.y};
}
VectorBaryPoly operator*(double s, const VectorBaryPoly& u) {
  return {s * u.x, s * u.y};
}
VectorBaryPoly operator*(const BaryPoly& p, const VectorBaryPoly& u) {
  return {p * u.x, p * u.y};
}

TriGeom tri_geom_from_points(Vec2 p0, Vec2 p1, Vec2 p2) {
  TriGeom g;
  g.corner = {p0, p1, p2};
  double signed2 = cross(p1 - p0, p2 - p0);
  if (!(signed2 > 0.0)) throw internal_error("tri_geom needs a CCW triangle");
  g.area = 0.5 * signed2;
  for (int i = 0; i < 3; ++i) {
    Vec2 a = g.corner[static_cast<std::size_t>((i + 1) % 3)];
    Vec2 b = g.corner[static_cast<std::size_t>((i + 2) % 3)];
    g.grad_bary[static_cast<std::size_t>(i)] = (1.0 / signed2) * rot90(b - a);
    g.edge_len[static_cast<std::size_t>(i)] = norm(b - a);
  }
  return g;
}

TriGeom tri_geom(const Mesh& m, int t) {
  const auto& tv = m.tris[static_cast<std::size_t>(t)].v;
  return tri_geom_from_points(m.point(tv[0]), m.point(tv[1]), m.point(tv[2]));
}

double integrate_triangle(const BaryPoly& p, const TriGeom& g) {
  const int d = p.degree();
  check_degree(d);
  const double* f = factorials();
  double sum = 0.0;
  std::size_t idx = 0;
  for (int a = 0; a <= d; ++a)
    for (int b = 0; b <= d - a; ++b, ++idx) {
      double v = p.coeffs()[idx];
      if (v == 0.0) continue;
      int c = d - a - b;
      sum += v * f[a] * f[b] * f[c] / f[d + 2];
    }
  return 2.0 * g.area * sum;
}

double integrate_edge(const BaryPoly& p, const TriGeom& g, int opp) {
  const int d = p.degree();
  check_degree(d);
  const double* f = factorials();
  double sum = 0.0;
  std::size_t idx = 0;
  for (int a = 0; a <= d; ++a)
    for (int b = 0; b <= d - a; ++b, ++idx) {
      double v = p.coeffs()[idx];
      if (v == 0.0) continue;
      int c = d - a - b;
      int e[3] = {a, b, c};
      if (e[opp] != 0) continue;  // l_opp vanishes on the opposite edge
      int ea = e[(opp + 1) % 3], eb = e[(opp + 2) % 3];
      sum += v * f[ea] * f[eb] / f[ea + eb + 1];
    }
  return g.edge_len[static_cast<std::size_t>(opp)] * sum;
}

VectorBaryPoly gradient(const BaryPoly& p, const TriGeom& g) {
  VectorBaryPoly out{BaryPoly(std::max(0, p.degree() - 1)),
                     BaryPoly(std::max(0, p.degree() - 1))};
  for (int i = 0; i < 3; ++i) {
    BaryPoly d = p.dlambda(i);
    Vec2 gb = g.grad_bary[static_cast<std::size_t>(i)];
    out.x = out.x + gb.x * d;
    out.y = out.y + gb.y * d;
  }
  return out;
}

BaryPoly divergence(const VectorBaryPoly& u, const TriGeom& g) {
  BaryPoly out(std::max(0, std::max(u.x.degree(), u.y.degree()) - 1));
  for (int i = 0; i < 3; ++i) {
    Vec2 gb = g.grad_bary[static_cast<std::size_t>(i)];
    out = out + gb.x * u.x.dlambda(i) + gb.y * u.y.dlambda(i);
  }
  return out;
}

VectorBaryPoly curl(const BaryPoly& s, const TriGeom& g) {
  VectorBaryPoly grad = gradient(s, g);
  return {grad.y, -1.0 * grad.x};
}

std::array<double, 3> barycentric_of(const TriGeom& g, Vec2 pt) {
  // l_i is affine with gradient grad_bary[i] and value 1 at corner i
  std::array<double, 3> lam;
  for (int i = 0; i < 3; ++i)
    lam[static_cast<std::size_t>(i)] =
        1.0 + dot(g.grad_bary[static_cast<std::size_t>(i)],
                  pt - g.corner[static_cast<std::size_t>(i)]);
  return lam;
}

double eval_at_point(const BaryPoly& p, const TriGeom& g, Vec2 pt) {
  auto lam = barycentric_of(g, pt);
  return p.eval(lam[0], lam[1], lam[2]);
}

std::vector<std::array<int, 3>> lattice_nodes(int k) {
  if (k < 0) throw internal_error("negative lattice degree");
  if (k == 0) return {{0, 0, 0}};
  std::vector<std::array<int, 3>> out;
  out.reserve(static_cast<std::size_t>(BaryPoly::n_coeffs(k)));
  for (int a = 0; a <= k; ++a)
    for (int b = 0; b <= k - a; ++b) out.push_back({a, b, k - a - b});
  return out;
}

const LagrangeData& lagrange_data(int k) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<LagrangeData>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(k);
  if (it != cache.end()) return *it->second;

  auto data = std::make_unique<LagrangeData>();
  if (k == 0) {
    data->basis.push_back(BaryPoly::constant(1.0));
    data->dbasis.push_back({BaryPoly(0), BaryPoly(0), BaryPoly(0)});
  } else {
    auto nodes = lattice_nodes(k);
    const int n = static_cast<int>(nodes.size());
    Eigen::MatrixXd V(n, n);
    for (int i = 0; i < n; ++i) {
      double l1 = static_cast<double>(nodes[static_cast<std::size_t>(i)][0]) / k;
      double l2 = static_cast<double>(nodes[static_cast<std::size_t>(i)][1]) / k;
      double l3 = static_cast<double>(nodes[static_cast<std::size_t>(i)][2]) / k;
      std::size_t idx = 0;
      for (int a = 0; a <= k; ++a)
        for (int b = 0; b <= k - a; ++b, ++idx)
          V(i, static_cast<int>(idx)) = std::pow(l1, a) * std::pow(l2, b) *
                                        std::pow(l3, k - a - b);
    }
    Eigen::MatrixXd C = V.partialPivLu().inverse();
    for (int j = 0; j < n; ++j) {
      BaryPoly p(k);
      for (int i = 0; i < n; ++i) p.coeffs()[static_cast<std::size_t>(i)] = C(i, j);
      data->basis.push_back(p);
    }
    for (int j = 0; j < n; ++j)
      data->dbasis.push_back({data->basis[static_cast<std::size_t>(j)].dlambda(0),
                              data->basis[static_cast<std::size_t>(j)].dlambda(1),
                              data->basis[static_cast<std::size_t>(j)].dlambda(2)});
  }
  auto* raw = data.get();
  cache.emplace(k, std::move(data));
  return *raw;
}

TriSpaceDims space_dims(int k) {
  if (k < 3) throw validation_error("space_dims requires k >= 3");
  TriSpaceDims d;
  d.dim_moment = k * (k + 1) / 2 - 4;
  d.dim_bubble = (k - 2) * (k - 1);
  d.dim_divfree = k >= 5 ? (k - 4) * (k - 3) / 2 : 0;
  if (d.dim_bubble != d.dim_moment + d.dim_divfree)
    throw internal_error("bubble dimension split violated");
  return d;
}

std::vector<VectorBaryPoly> bubble_space_basis(int k) {
  if (k < 3) throw validation_error("bubble_space_basis requires k >= 3");
  const BaryPoly b = BaryPoly::bubble();
  std::vector<VectorBaryPoly> out;
  const int d = k - 3;
  for (int a = 0; a <= d; ++a)
    for (int bb = 0; bb <= d - a; ++bb) {
      BaryPoly scalar = b * BaryPoly::monomial(a, bb, d - a - bb);
      out.push_back({scalar, BaryPoly(k)});
      out.push_back({BaryPoly(k), scalar});
    }
  return out;
}

std::vector<VectorBaryPoly> divfree_bubble_basis(int k, const TriGeom& g) {
  if (k < 3) throw validation_error("divfree_bubble_basis requires k >= 3");
  std::vector<VectorBaryPoly> out;
  if (k < 5) return out;
  const BaryPoly b2 = BaryPoly::bubble() * BaryPoly::bubble();
  const int d = k - 5;
  for (int a = 0; a <= d; ++a)
    for (int bb = 0; bb <= d - a; ++bb)
      out.push_back(curl(BaryPoly::monomial(a, bb, d - a - bb) * b2, g));
  return out;
}

Eigen::MatrixXd pressure_moment_basis(int k) {
  if (k < 3) throw validation_error("pressure_moment_basis requires k >= 3");
  const int d = k - 1;
  const int n = BaryPoly::n_coeffs(d);
  const double* f = factorials();
  check_degree(d);
  // rows: values at the three vertices, then the mean
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(4, n);
  std::size_t idx = 0;
  for (int a = 0; a <= d; ++a)
    for (int b = 0; b <= d - a; ++b, ++idx) {
      int c = d - a - b;
      if (a == d) F(0, static_cast<int>(idx)) = 1.0;
      if (b == d) F(1, static_cast<int>(idx)) = 1.0;
      if (c == d) F(2, static_cast<int>(idx)) = 1.0;
      F(3, static_cast<int>(idx)) = 2.0 * f[a] * f[b] * f[c] / f[d + 2];
    }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(F);
  if (lu.rank() != 4)
    throw internal_error("vertex/mean functionals are dependent at k = " +
                         std::to_string(k));
  Eigen::MatrixXd K = lu.kernel();
  if (static_cast<int>(K.cols()) != n - 4)
    throw internal_error("unexpected moment space dimension");
  return K;
}

namespace {

struct MomentCache {
  Eigen::MatrixXd K;                              // monomial coords of basis
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;  // for projections onto K
};

const MomentCache& moment_cache(int k) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<MomentCache>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(k);
  if (it != cache.end()) return *it->second;
  auto mc = std::make_unique<MomentCache>();
  mc->K = pressure_moment_basis(k);
  mc->qr.compute(mc->K);
  auto* raw = mc.get();
  cache.emplace(k, std::move(mc));
  return *raw;
}

}  // namespace

Eigen::MatrixXd divergence_matrix(int k, const TriGeom& g) {
  const auto& mc = moment_cache(k);
  auto bubbles = bubble_space_basis(k);
  const int nb = static_cast<int>(bubbles.size());
  const int nm = static_cast<int>(mc.K.cols());
  const int ncoef = BaryPoly::n_coeffs(k - 1);
  Eigen::MatrixXd D(nm, nb);
  for (int j = 0; j < nb; ++j) {
    BaryPoly div = divergence(bubbles[static_cast<std::size_t>(j)], g);
    Eigen::VectorXd c(ncoef);
    for (int i = 0; i < ncoef; ++i) c(i) = div.coeffs()[static_cast<std::size_t>(i)];
    Eigen::VectorXd x = mc.qr.solve(c);
    double resid = (mc.K * x - c).norm();
    double scale = std::max(1.0, c.norm());
    if (resid > 1e-10 * scale)
      throw internal_error("bubble divergence left the moment space (residual " +
                           std::to_string(resid) + ")");
    D.col(j) = x;
  }
  return D;
}

Eigen::VectorXd moment_to_monomial(int k, const Eigen::VectorXd& mcoords) {
  return moment_cache(k).K * mcoords;
}

Eigen::VectorXd monomial_to_moment(int k, const Eigen::VectorXd& mono) {
  return moment_cache(k).qr.solve(mono);
}

}  // namespace sv
