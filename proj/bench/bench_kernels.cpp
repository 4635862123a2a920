// Times each Exec-switched kernel in serial and parallel mode and confirms
// the two produce identical bits. Parallelism here is per-element/per-vertex
// with an ordered merge, so the outputs must not differ at all.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "sv/fields.hpp"
#include "sv/mesh.hpp"
#include "sv/parallel.hpp"
#include "sv/rightinverse.hpp"
#include "sv/spaces.hpp"
#include "sv/topology.hpp"

using namespace sv;

namespace {

double best_of(int reps, const std::function<void()>& body) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    body();
    double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    best = std::min(best, s);
  }
  return best;
}

void report(const char* name, double serial, double par, bool identical) {
  std::printf("%-22s %9.4fs %9.4fs %7.2fx   %s\n", name, serial, par,
              par > 0 ? serial / par : 0.0, identical ? "bitwise-identical" : "DIFFERS");
}

}  // namespace

int main(int argc, char** argv) {
  int n = 8, k = 4, reps = 3;
  std::uint64_t seed = 7;
  CLI::App app{"kernel benchmark: serial reference vs parallel"};
  app.add_option("--n", n, "cells per side of the perturbed mesh");
  app.add_option("--k", k, "velocity order");
  app.add_option("--reps", reps, "repetitions, best-of");
  app.add_option("--seed", seed, "mesh perturbation seed");
  CLI11_PARSE(app, argc, argv);

  Mesh m = generate_mesh(MeshFamily::PerturbedDiagonal, n, seed);
  Classification cls = classify(m);
  VelocitySpace vs = build_velocity_space(m, k);
  PressureSpace ps = build_pressure_space(m, k, cls);
  Eigen::VectorXd p = random_admissible_pressure(m, ps, 3);

  std::printf("perturbed-diagonal n=%d, k=%d: %d triangles, %d velocity dofs, "
              "%d pressures, %d thread(s)\n\n",
              n, k, m.n_tris(), vs.n_free, ps.dim, max_threads());
  std::printf("%-22s %10s %10s %8s\n", "kernel", "serial", "parallel", "speedup");

  {
    Classification cs, cp;
    double ts = best_of(reps, [&] { cs = classify(m, Exec::Serial); });
    double tp = best_of(reps, [&] { cp = classify(m, Exec::Par); });
    bool same = cs.theta_min == cp.theta_min && cs.singular == cp.singular;
    for (std::size_t z = 0; z < cs.vclass.size(); ++z)
      same = same && cs.vclass[z].gamma == cp.vclass[z].gamma &&
             cs.vclass[z].theta == cp.vclass[z].theta;
    report("classify", ts, tp, same);
  }
  {
    AssembledOps os, op;
    double ts = best_of(reps, [&] { os = assemble(m, vs, ps, Exec::Serial); });
    double tp = best_of(reps, [&] { op = assemble(m, vs, ps, Exec::Par); });
    bool same = os.A == op.A && os.Mv == op.Mv && os.B == op.B && os.Mp == op.Mp;
    report("assemble", ts, tp, same);
  }
  {
    GlobalCorrection gs, gp;
    double ts = best_of(reps, [&] { gs = global_vertex_correction(m, vs, ps, cls, p, Exec::Serial); });
    double tp = best_of(reps, [&] { gp = global_vertex_correction(m, vs, ps, cls, p, Exec::Par); });
    report("vertex corrections", ts, tp, gs.v_full == gp.v_full);
  }
  {
    // a right-inverse tail pressure: zero vertex values and element means
    RightInverseResult r = right_inverse(m, vs, ps, cls, p);
    Eigen::VectorXd p2 = p - divergence_coords(m, vs, ps, Eigen::VectorXd(r.v1 + r.v2));
    Step3Result ss, sp;
    double ts = best_of(reps, [&] { ss = step3_local_bubble(m, vs, ps, p2, Exec::Serial); });
    double tp = best_of(reps, [&] { sp = step3_local_bubble(m, vs, ps, p2, Exec::Par); });
    report("local bubbles", ts, tp, ss.v_full == sp.v_full);
  }
  {
    RightInverseResult rs, rp;
    double ts = best_of(reps, [&] { rs = right_inverse(m, vs, ps, cls, p, Exec::Serial); });
    double tp = best_of(reps, [&] { rp = right_inverse(m, vs, ps, cls, p, Exec::Par); });
    report("right inverse", ts, tp, rs.v == rp.v);
  }
  return 0;
}
