#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sv/fields.hpp"
#include "sv/io.hpp"
#include "sv/mesh.hpp"
#include "sv/rightinverse.hpp"
#include "sv/selftest.hpp"
#include "sv/spaces.hpp"
#include "sv/topology.hpp"
#include "sv/verify.hpp"
#include "sv/version.hpp"

using namespace sv;

namespace {

std::string version_comment() { return std::string("svtool ") + kVersion; }

// every output embeds the effective run configuration, so a report is
// reproducible from its own header
std::string config_comment(const std::string& sub,
                           const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string s = "config: " + sub;
  for (const auto& [k, v] : kv)
    if (!v.empty()) s += " " + k + "=" + v;
  return s;
}

struct MeshSource {
  std::string file;
  std::string family;

  std::string desc() const { return file.empty() ? family : file; }
  Mesh load() const {
    if (file.empty() == family.empty())
      throw validation_error("give exactly one of --mesh and --family");
    return file.empty() ? generate_mesh_from_string(family) : load_mesh_file(file);
  }
  void add_options(CLI::App* sub) {
    sub->add_option("--mesh", file, "mesh text file");
    sub->add_option("--family", family,
                    "generated family, e.g. diagonal:2, crisscross:1, "
                    "perturbed-diagonal:2:7:0.2");
  }
};

// `key = value` lines mirroring the subcommand's flags; explicit command-line
// values win over the file
void apply_config(CLI::App* sub, const std::string& path) {
  if (path.empty()) return;
  for (const auto& [key, value] : parse_config_file(path)) {
    if (key == "config") continue;
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (!opt) throw validation_error("unknown config key '" + key + "'");
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

void require_value(const std::string& v, const char* flag) {
  if (v.empty()) throw validation_error(std::string(flag) + " is required");
}

std::string fmt_opt(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

Eigen::VectorXd load_pressure_file(const std::string& path, int n_dofs) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw validation_error("cannot open pressure file: " + path);
  std::vector<double> vals;
  std::string line;
  while (std::getline(in, line)) {
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    double v;
    while (ls >> v) vals.push_back(v);
  }
  if (static_cast<int>(vals.size()) != n_dofs)
    throw validation_error("pressure file has " + std::to_string(vals.size()) +
                           " coefficients, expected " + std::to_string(n_dofs));
  Eigen::VectorXd p(n_dofs);
  for (int i = 0; i < n_dofs; ++i) p(i) = vals[static_cast<std::size_t>(i)];
  return p;
}

Eigen::VectorXd resolve_pressure(const std::string& spec, const Mesh& m,
                                 const PressureSpace& ps) {
  if (spec.rfind("random:", 0) == 0) {
    std::uint64_t seed = 0;
    try {
      seed = std::stoull(spec.substr(7));
    } catch (const std::exception&) {
      throw validation_error("bad pressure seed in '" + spec + "'");
    }
    return random_admissible_pressure(m, ps, seed);
  }
  return load_pressure_file(spec, ps.n_dofs);
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw validation_error("cannot write file: " + path);
  out << body;
  if (!out) throw validation_error("failed while writing: " + path);
}

int run_gen(const MeshSource& src, const std::string& out) {
  Mesh m = src.load();
  std::string body = "# " + version_comment() + "\n# " +
                     config_comment("gen", {{"family", src.family}, {"mesh", src.file}}) +
                     "\n" + to_mesh_text(m);
  write_text_file(out, body);
  std::printf("wrote %s (%d vertices, %d triangles)\n", out.c_str(), m.n_vertices(),
              m.n_tris());
  return 0;
}

int run_classify(const MeshSource& src, const std::string& out) {
  Mesh m = src.load();
  Classification cls = classify(m);
  CsvWriter csv({"vertex_id", "x", "y", "interior", "N", "gamma", "theta", "singular"});
  csv.add_comment(version_comment());
  csv.add_comment(config_comment("classify", {{"family", src.family}, {"mesh", src.file}}));
  for (int z = 0; z < m.n_vertices(); ++z) {
    const VertexClass& vc = cls.vclass[static_cast<std::size_t>(z)];
    csv.add_row({std::to_string(z), format_double(m.point(z).x), format_double(m.point(z).y),
                 vc.interior ? "1" : "0", std::to_string(vc.n), format_double(vc.gamma),
                 format_double(vc.theta), vc.singular ? "1" : "0"});
  }
  csv.save(out);
  std::printf("wrote %s (%zu singular of %d vertices)\n", out.c_str(), cls.singular.size(),
              m.n_vertices());
  return 0;
}

void dump_ops(const std::string& dir, const Mesh& m, const VelocitySpace& vs,
              const PressureSpace& ps) {
  std::filesystem::create_directories(dir);
  AssembledOps ops = assemble(m, vs, ps);
  auto path = [&](const char* name) { return (std::filesystem::path(dir) / name).string(); };
  write_matrix_market(path("A.mtx"), ops.A, "velocity gradient gram, free dofs");
  write_matrix_market(path("Mv.mtx"), ops.Mv, "velocity mass, free dofs");
  write_matrix_market(path("B.mtx"), ops.B, "pressure x div(velocity)");
  write_matrix_market(path("Mp.mtx"), ops.Mp, "pressure mass");
  write_matrix_market(path("N.mtx"), ps.nullspace, "admissible pressure basis");
}

void dump_field(const std::string& kind, int id, const std::string& out, const Mesh& m,
                const Classification& cls) {
  std::vector<std::pair<std::string, PatchField>> fields;
  if (kind == "vertex") {
    if (id < 0 || id >= m.n_vertices()) throw validation_error("vertex id out of range");
    if (cls.vclass[static_cast<std::size_t>(id)].singular)
      throw validation_error("vertex " + std::to_string(id) +
                             " is singular; dump one of its fan edges instead");
    VertexPatch patch = build_patch(m, id);
    std::vector<PatchField> fans = fan_fields(m, patch);
    for (std::size_t j = 0; j < fans.size(); ++j)
      fields.emplace_back("v" + std::to_string(j), std::move(fans[j]));
  } else if (kind == "edge") {
    if (id < 0 || id >= m.n_edges()) throw validation_error("edge id out of range");
    const Edge& ed = m.edges[static_cast<std::size_t>(id)];
    if (ed.tri[1] < 0) throw validation_error("edge is on the boundary");
    fields.emplace_back("w", w_field(m, id, ed.v[0]));
  } else {
    throw validation_error("dump kind must be 'vertex' or 'edge'");
  }

  CsvWriter csv({"field", "tri", "l1", "l2", "l3", "x", "y", "vx", "vy"});
  csv.add_comment(version_comment());
  csv.add_comment(config_comment("dump-field", {{"kind", kind}, {"id", std::to_string(id)}}));
  const auto grid = lattice_nodes(4);
  for (const auto& [name, f] : fields) {
    for (const auto& [t, poly] : f.parts) {
      TriGeom g = tri_geom(m, t);
      for (const auto& node : grid) {
        double l1 = node[0] / 4.0, l2 = node[1] / 4.0, l3 = node[2] / 4.0;
        Vec2 pt = l1 * g.corner[0] + l2 * g.corner[1] + l3 * g.corner[2];
        csv.add_row({name, std::to_string(t), format_double(l1), format_double(l2),
                     format_double(l3), format_double(pt.x), format_double(pt.y),
                     format_double(poly.x.eval(l1, l2, l3)),
                     format_double(poly.y.eval(l1, l2, l3))});
      }
    }
  }
  csv.save(out);
}

int run_rightinv(const MeshSource& src, int k, const std::string& pressure,
                 const std::string& report, const std::string& ops_dir,
                 const std::vector<std::string>& dump_spec,
                 const std::string& dump_out) {
  Mesh m = src.load();
  Classification cls = classify(m);
  VelocitySpace vs = build_velocity_space(m, k);
  PressureSpace ps = build_pressure_space(m, k, cls);

  if (!ops_dir.empty()) dump_ops(ops_dir, m, vs, ps);
  if (!dump_spec.empty()) {
    int id = 0;
    try {
      id = std::stoi(dump_spec[1]);
    } catch (const std::exception&) {
      throw validation_error("bad --dump-field id '" + dump_spec[1] + "'");
    }
    std::string out = dump_out.empty()
                          ? "field_" + dump_spec[0] + "_" + dump_spec[1] + ".csv"
                          : dump_out;
    dump_field(dump_spec[0], id, out, m, cls);
    std::printf("wrote %s\n", out.c_str());
  }

  Eigen::VectorXd p = resolve_pressure(pressure, m, ps);
  RightInverseResult r = right_inverse(m, vs, ps, cls, p);

  CsvWriter csv({"source", "k", "n_vertices", "n_tris", "theta_min", "p_norm",
                 "mean_residual", "vertex_residual", "final_residual", "grad_v1",
                 "grad_v2", "grad_v3", "grad_v", "stability_ratio", "predictor"});
  csv.add_comment(version_comment());
  csv.add_comment(config_comment("rightinv", {{"family", src.family},
                                              {"mesh", src.file},
                                              {"k", std::to_string(k)},
                                              {"pressure", pressure}}));
  csv.add_row({src.desc(), std::to_string(k), std::to_string(m.n_vertices()),
               std::to_string(m.n_tris()), fmt_opt(cls.theta_min), format_double(r.p_norm),
               format_double(r.mean_residual), format_double(r.vertex_residual),
               format_double(r.final_residual), format_double(r.grad_v1),
               format_double(r.grad_v2), format_double(r.grad_v3), format_double(r.grad_v),
               format_double(r.stability_ratio), format_double(r.predictor)});
  csv.save(report);
  std::printf("wrote %s (final residual %.3e, ratio %.3f)\n", report.c_str(),
              r.final_residual, r.stability_ratio);
  return 0;
}

// family spec "name" or "name:n1,n2,..."; without a list, --levels picks
// n = 1, 2, 4, ...
std::vector<int> level_list(const std::string& family_arg, int levels, std::string* name) {
  std::string fam = family_arg;
  std::vector<int> ns;
  std::size_t colon = fam.find(':');
  if (colon != std::string::npos) {
    std::string list = fam.substr(colon + 1);
    fam = fam.substr(0, colon);
    std::istringstream ls(list);
    std::string tok;
    while (std::getline(ls, tok, ',')) {
      try {
        ns.push_back(std::stoi(tok));
      } catch (const std::exception&) {
        throw validation_error("bad level '" + tok + "' in family spec");
      }
    }
  }
  if (ns.empty()) {
    if (levels < 1) throw validation_error("--levels must be at least 1");
    for (int lvl = 0, n = 1; lvl < levels; ++lvl, n *= 2) ns.push_back(n);
  }
  *name = fam;
  return ns;
}

MeshFamily family_by_name(const std::string& name) {
  if (name == "diagonal") return MeshFamily::Diagonal;
  if (name == "crisscross") return MeshFamily::Crisscross;
  if (name == "perturbed-diagonal") return MeshFamily::PerturbedDiagonal;
  throw validation_error("unknown mesh family: " + name);
}

int run_infsup(const std::string& family_arg, int k, int levels, std::uint64_t seed,
               const std::string& out) {
  std::string name;
  std::vector<int> ns = level_list(family_arg, levels, &name);
  MeshFamily fam = family_by_name(name);

  CsvWriter csv({"family", "n", "h_max", "k", "theta_min", "n_u", "n_p", "beta_h",
                 "beta_h_semi", "constructive_lb"});
  csv.add_comment(version_comment());
  csv.add_comment(config_comment("infsup", {{"family", family_arg},
                                            {"k", std::to_string(k)},
                                            {"levels", std::to_string(levels)},
                                            {"seed", std::to_string(seed)}}));
  bool any_failure = false;
  for (int n : ns) {
    Mesh m = generate_mesh(fam, n, seed);
    Classification cls = classify(m);
    VelocitySpace vs = build_velocity_space(m, k);
    PressureSpace ps = build_pressure_space(m, k, cls);
    InfSupReport rep = compute_infsup(m, vs, ps, cls);
    any_failure = any_failure || rep.failure;
    csv.add_row({name, std::to_string(n), format_double(rep.h_max), std::to_string(rep.k),
                 fmt_opt(rep.theta_min), std::to_string(rep.n_u), std::to_string(rep.n_p),
                 format_double(rep.beta_h), format_double(rep.beta_h_semi),
                 fmt_opt(rep.constructive_lb)});
    std::printf("n=%d: beta_h=%.6f beta_h_semi=%.6f\n", n, rep.beta_h, rep.beta_h_semi);
  }
  csv.save(out);
  std::printf("wrote %s\n", out.c_str());
  if (any_failure) std::fprintf(stderr, "warning: an inf-sup failure was flagged\n");
  return 0;
}

int run_stokes(const MeshSource& src, int k, const std::string& problem,
               const std::string& out) {
  StokesProblem prob;
  if (problem == "manufactured")
    prob = StokesProblem::Manufactured;
  else if (problem == "zero")
    prob = StokesProblem::Zero;
  else
    throw validation_error("--problem must be 'manufactured' or 'zero'");

  Mesh m = src.load();
  Classification cls = classify(m);
  VelocitySpace vs = build_velocity_space(m, k);
  PressureSpace ps = build_pressure_space(m, k, cls);
  StokesSolution sol = solve_stokes(m, vs, ps, prob);

  CsvWriter csv({"source", "k", "n_u", "n_p", "grad_u", "max_sampled_div",
                 "div_moment_norm", "solver_residual", "err_l2", "err_h1", "err_p"});
  csv.add_comment(version_comment());
  csv.add_comment(config_comment("stokes", {{"family", src.family},
                                            {"mesh", src.file},
                                            {"k", std::to_string(k)},
                                            {"problem", problem}}));
  csv.add_row({src.desc(), std::to_string(k), std::to_string(vs.n_free),
               std::to_string(ps.dim), format_double(sol.grad_u),
               format_double(sol.max_sampled_div), format_double(sol.div_moment_norm),
               format_double(sol.solver_residual), fmt_opt(sol.err_l2), fmt_opt(sol.err_h1),
               fmt_opt(sol.err_p)});
  csv.save(out);
  std::printf("wrote %s (max sampled div %.3e)\n", out.c_str(), sol.max_sampled_div);
  return 0;
}

int run_selftest_cmd(std::uint64_t seed) {
  SelfTestReport rep = run_selftest(seed);
  for (const SelfTestLine& l : rep.lines)
    std::printf("%-34s %s  (%s)\n", l.name.c_str(), l.pass ? "pass" : "FAIL",
                l.detail.c_str());
  if (!rep.all_pass) {
    std::fprintf(stderr, "selftest failed\n");
    return 2;
  }
  std::printf("selftest ok\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scott-Vogelius toolkit: mesh classification, divergence right "
               "inverses, inf-sup verification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_comment());

  MeshSource gen_src, cls_src, ri_src, st_src;
  std::string gen_cfg, cls_cfg, ri_cfg, is_cfg, st_cfg, se_cfg;
  std::string gen_out, cls_out = "classify.csv";
  CLI::App* gen = app.add_subcommand("gen", "generate a mesh file");
  gen_src.add_options(gen);
  gen->add_option("--out", gen_out, "output mesh file");
  gen->add_option("--config", gen_cfg, "key = value file mirroring the flags");

  CLI::App* cl = app.add_subcommand("classify", "classify vertices (singular, gamma, theta)");
  cls_src.add_options(cl);
  cl->add_option("--out", cls_out, "output CSV");
  cl->add_option("--config", cls_cfg, "key = value file mirroring the flags");

  int ri_k = 4;
  std::string ri_pressure = "random:1", ri_report = "rightinv.csv", ri_ops, ri_dump_out;
  std::vector<std::string> ri_dump;
  CLI::App* ri = app.add_subcommand("rightinv", "build a right inverse of the divergence");
  ri_src.add_options(ri);
  ri->add_option("--k", ri_k, "velocity order (k >= 4)");
  ri->add_option("--pressure", ri_pressure, "random:<seed> or a coefficient file");
  ri->add_option("--report", ri_report, "output CSV");
  ri->add_option("--dump-ops", ri_ops, "directory for MatrixMarket operator dumps");
  ri->add_option("--dump-field", ri_dump, "sample a fundamental field: (vertex|edge) <id>")
      ->expected(2);
  ri->add_option("--dump-field-out", ri_dump_out, "output CSV for --dump-field");
  ri->add_option("--config", ri_cfg, "key = value file mirroring the flags");

  std::string is_family;
  int is_k = 4, is_levels = 3;
  std::uint64_t is_seed = 7;
  std::string is_out = "infsup.csv";
  CLI::App* is = app.add_subcommand("infsup", "inf-sup constants across refinement levels");
  is->add_option("--family", is_family, "family name, optionally with levels: name:n1,n2,...");
  is->add_option("--k", is_k, "velocity order");
  is->add_option("--levels", is_levels, "level count when the family has no list");
  is->add_option("--seed", is_seed, "perturbation seed");
  is->add_option("--out", is_out, "output CSV");
  is->add_option("--config", is_cfg, "key = value file mirroring the flags");

  int st_k = 4;
  std::string st_problem = "manufactured", st_out = "stokes.csv";
  CLI::App* st = app.add_subcommand("stokes", "solve a Stokes problem, report divergence");
  st_src.add_options(st);
  st->add_option("--k", st_k, "velocity order");
  st->add_option("--problem", st_problem, "manufactured or zero");
  st->add_option("--out", st_out, "output CSV");
  st->add_option("--config", st_cfg, "key = value file mirroring the flags");

  std::uint64_t self_seed = 7;
  CLI::App* se = app.add_subcommand("selftest", "run the built-in property suites");
  se->add_option("--seed", self_seed, "sampling seed");
  se->add_option("--config", se_cfg, "key = value file mirroring the flags");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    // help and version requests exit clean; anything else is a usage error
    return rc == 0 ? 0 : 64;
  }

  try {
    if (app.got_subcommand(gen)) {
      apply_config(gen, gen_cfg);
      require_value(gen_out, "--out");
      return run_gen(gen_src, gen_out);
    }
    if (app.got_subcommand(cl)) {
      apply_config(cl, cls_cfg);
      return run_classify(cls_src, cls_out);
    }
    if (app.got_subcommand(ri)) {
      apply_config(ri, ri_cfg);
      return run_rightinv(ri_src, ri_k, ri_pressure, ri_report, ri_ops, ri_dump, ri_dump_out);
    }
    if (app.got_subcommand(is)) {
      apply_config(is, is_cfg);
      require_value(is_family, "--family");
      return run_infsup(is_family, is_k, is_levels, is_seed, is_out);
    }
    if (app.got_subcommand(st)) {
      apply_config(st, st_cfg);
      return run_stokes(st_src, st_k, st_problem, st_out);
    }
    if (app.got_subcommand(se)) {
      apply_config(se, se_cfg);
      return run_selftest_cmd(self_seed);
    }
  } catch (const validation_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const internal_error& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 2;
  }
  return 0;
}
