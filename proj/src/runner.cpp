#include "bkrylov/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace bkrylov {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::pair<std::string, std::string> split_solver(const std::string& text) {
  auto c = text.find(':');
  if (c == std::string::npos) return {text, ""};
  return {text.substr(0, c), text.substr(c + 1)};
}

}  // namespace

CommWorld::Config RunConfig::world_config() const {
  CommWorld::Config wc;
  wc.ranks = ranks;
  wc.latency = LatencyModel::parse(latency_model);
  wc.overlap = OverlapPolicy::parse(overlap);
  wc.work.us_per_flop = flop_rate_us;
  return wc;
}

SparseOperator RunConfig::load_operator() const {
  if (!matrix_path.empty()) return load_matrixmarket(matrix_path);
  return generate(generator);
}

SolverReport run_solve(const RunConfig& cfg) {
  const SparseOperator a = cfg.load_operator();
  const AlgebraSpec alg = AlgebraSpec::parse(cfg.algebra, cfg.s);
  const Preconditioner m = Preconditioner::parse(cfg.precond, a);
  const BlockVector b = generate_rhs(a.n, cfg.s, cfg.seed);
  const BlockVector x0(a.n, cfg.s);
  CommWorld world(cfg.world_config());

  auto [family, variant] = split_solver(cfg.solver);
  SolverReport rep;
  if (family == "cg") {
    CgConfig c;
    c.variant = parse_cg_variant(variant.empty() ? "classic" : variant);
    c.eta = cfg.eta < 0.0 ? 1e4 : cfg.eta;
    c.eps_tol = cfg.tol;
    c.relative = cfg.tol_relative;
    c.norm_kind = cfg.norm == "frobenius" ? CgConfig::NormKind::Frobenius
                                          : CgConfig::NormKind::MaxColumn;
    c.max_iter = cfg.max_iter;
    rep = bcg_solve(a, m, b, x0, alg, c, world).report;
  } else if (family == "gmres") {
    GmresConfig c;
    c.ortho = OrthoStrategy::parse(variant.empty() ? "modified" : variant);
    c.restart = cfg.restart;
    c.eps_tol = cfg.tol;
    c.relative = cfg.tol_relative;
    c.norm_kind = cfg.norm == "frobenius" ? GmresConfig::NormKind::Frobenius
                                          : GmresConfig::NormKind::MaxColumn;
    c.max_iter = cfg.max_iter;
    rep = bgmres_solve(a, m, b, x0, alg, c, world).report;
  } else if (family == "bicgstab") {
    BicgstabConfig c;
    c.variant = (variant == "pipelined") ? BicgstabConfig::Variant::Pipelined
                                         : BicgstabConfig::Variant::Adaptive;
    c.eta = cfg.eta < 0.0 ? 100.0 : cfg.eta;
    c.eps_tol = cfg.tol;
    c.relative = cfg.tol_relative;
    c.norm_kind = cfg.norm == "frobenius" ? BicgstabConfig::NormKind::Frobenius
                                          : BicgstabConfig::NormKind::MaxColumn;
    c.max_iter = cfg.max_iter;
    rep = bbicgstab_solve(a, m, b, x0, alg, c, world).report;
  } else {
    throw ConfigError("unknown solver family '" + family + "'");
  }
  if (!cfg.out_prefix.empty()) {
    rep.write_csv(cfg.out_prefix + ".csv");
    rep.write_json(cfg.out_prefix + ".json");
  }
  return rep;
}

std::vector<SolverReport> run_sweep(const RunConfig& cfg) {
  if (cfg.sweep.rfind("p=", 0) != 0)
    throw ConfigError("sweep spec must look like p=1,4,16,64");
  std::vector<int> ps;
  {
    std::stringstream ss(cfg.sweep.substr(2));
    std::string tok;
    while (std::getline(ss, tok, ',')) ps.push_back(std::stoi(tok));
  }
  const AlgebraSpec base = AlgebraSpec::parse(cfg.algebra, cfg.s);
  const bool global = base.replicated();
  std::vector<SolverReport> reps;
  std::ostringstream table;
  table << "# bkrylov sweep v1: p,algebra,solver,precond,s,seed,ranks,iterations,converged,"
           "reorthonormalizations,rate,final_frobenius,virtual_time_us\n";
  for (int p : ps) {
    RunConfig one = cfg;
    one.algebra = (global ? "bg:" : "bp:") + std::to_string(p);
    one.sweep.clear();
    if (!cfg.out_prefix.empty()) one.out_prefix = cfg.out_prefix + "_p" + std::to_string(p);
    SolverReport rep = run_solve(one);
    table << p << "," << one.algebra << "," << one.solver << "," << one.precond << "," << one.s
          << "," << one.seed << "," << one.ranks << "," << rep.iterations << ","
          << (rep.converged ? 1 : 0) << "," << rep.reortho_count << "," << fmt(rep.rate) << ","
          << fmt(rep.records.empty() ? 0.0 : rep.records.back().frob) << ","
          << fmt(rep.virt_time_us) << "\n";
    reps.push_back(std::move(rep));
  }
  if (!cfg.out_prefix.empty()) {
    std::ofstream out(cfg.out_prefix + "_sweep.csv");
    out << table.str();
  }
  return reps;
}

std::string bench_kernels(const RunConfig& cfg) {
  const SparseOperator a = cfg.load_operator();
  const int s = cfg.s;
  BlockVector x = generate_rhs(a.n, s, cfg.seed);
  BlockVector y(a.n, s);
  std::ostringstream out;
  out << "# bkrylov kernel bench v1: kernel,p,q,flops,values_transferred,intensity,"
         "model_intensity,seconds_per_rhs\n";
  auto time_it = [](auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  {
    KernelCounters c;
    const double sec = time_it([&] { bop(a, x, y, &c); });
    out << "bop,-," << "-," << c.flops << "," << c.values_transferred() << ","
        << fmt(double(c.flops) / c.values_transferred()) << ","
        << fmt(double(s) * a.nnz() / (a.nnz() + double(s) * a.n)) << "," << fmt(sec / s) << "\n";
  }
  for (int p = 1; p <= s; p *= 2) {
    if (s % p != 0) continue;
    const AlgebraSpec alg = AlgebraSpec::block_parallel(s, p);
    SElement c0 = SElement::identity(alg);
    {
      KernelCounters c;
      const double sec = time_it([&] { bdot(x, y, alg, &c); });
      out << "bdot," << p << "," << alg.q() << "," << c.flops << "," << c.values_transferred()
          << "," << fmt(double(c.flops) / c.values_transferred()) << "," << fmt(double(p)) << ","
          << fmt(sec / s) << "\n";
    }
    {
      KernelCounters c;
      const double sec = time_it([&] { baxpy(y, x, c0, &c, y.all_rows()); });
      out << "baxpy," << p << "," << alg.q() << "," << c.flops << "," << c.values_transferred()
          << "," << fmt(double(c.flops) / c.values_transferred()) << ","
          << fmt(2.0 * p / 3.0) << "," << fmt(sec / s) << "\n";
    }
  }
  if (!cfg.out_prefix.empty()) {
    std::ofstream f(cfg.out_prefix + "_kernels.csv");
    f << out.str();
  }
  return out.str();
}

std::string bench_overlap(const RunConfig& cfg) {
  CommWorld world(cfg.world_config());
  const auto rows = overlap_benchmark(world);
  std::ostringstream out;
  out << "# bkrylov overlap bench v1: t_base_us,t_work_us,t_iter_us,t_ovhd_us,t_avail_us,"
         "avail_over_base\n";
  for (const auto& r : rows)
    out << fmt(r.t_base) << "," << fmt(r.t_work) << "," << fmt(r.t_iter) << "," << fmt(r.t_ovhd)
        << "," << fmt(r.t_avail) << "," << fmt(r.t_base > 0 ? r.t_avail / r.t_base : 0.0) << "\n";
  if (!cfg.out_prefix.empty()) {
    std::ofstream f(cfg.out_prefix + "_overlap.csv");
    f << out.str();
  }
  return out.str();
}

namespace {

void run_check_suite(const std::string& dir, int sched_policy) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto solve_into = [&](RunConfig cfg, const std::string& name) {
    cfg.out_prefix = dir + "/" + name;
    CommWorld::Config wc = cfg.world_config();
    wc.sched_policy = sched_policy;
    // run through run_solve but with the policy override: reconstruct inline
    const SparseOperator a = cfg.load_operator();
    const AlgebraSpec alg = AlgebraSpec::parse(cfg.algebra, cfg.s);
    const Preconditioner m = Preconditioner::parse(cfg.precond, a);
    const BlockVector b = generate_rhs(a.n, cfg.s, cfg.seed);
    const BlockVector x0(a.n, cfg.s);
    CommWorld world(wc);
    auto [family, variant] = split_solver(cfg.solver);
    SolverReport rep;
    if (family == "cg") {
      CgConfig c;
      c.variant = parse_cg_variant(variant);
      c.eta = cfg.eta < 0 ? 1e4 : cfg.eta;
      c.eps_tol = cfg.tol;
      c.max_iter = cfg.max_iter;
      rep = bcg_solve(a, m, b, x0, alg, c, world).report;
    } else if (family == "gmres") {
      GmresConfig c;
      c.ortho = OrthoStrategy::parse(variant);
      c.restart = cfg.restart;
      c.eps_tol = cfg.tol;
      c.max_iter = cfg.max_iter;
      rep = bgmres_solve(a, m, b, x0, alg, c, world).report;
    } else {
      BicgstabConfig c;
      c.variant = variant == "pipelined" ? BicgstabConfig::Variant::Pipelined
                                         : BicgstabConfig::Variant::Adaptive;
      c.eta = cfg.eta < 0 ? 100.0 : cfg.eta;
      c.eps_tol = cfg.tol;
      c.max_iter = cfg.max_iter;
      rep = bbicgstab_solve(a, m, b, x0, alg, c, world).report;
    }
    rep.write_csv(cfg.out_prefix + ".csv");
    rep.write_json(cfg.out_prefix + ".json");
  };

  RunConfig base;
  base.generator = "poisson2d:20";
  base.s = 8;
  base.tol = 1e-6;
  base.max_iter = 300;
  base.seed = 7;

  RunConfig c1 = base;
  c1.solver = "cg:classic";
  c1.algebra = "bp:4";
  solve_into(c1, "cg_classic_p1");
  RunConfig c2 = base;
  c2.solver = "cg:ghysels";
  c2.algebra = "bp:4";
  c2.ranks = 4;
  solve_into(c2, "cg_ghysels_r4");
  RunConfig g1 = base;
  g1.solver = "gmres:modified";
  g1.algebra = "b";
  g1.generator = "convdiff2d:16:1:8:4";
  solve_into(g1, "gmres_modified");
  RunConfig g2 = g1;
  g2.solver = "gmres:localized";
  g2.ranks = 4;
  solve_into(g2, "gmres_localized_r4");
  RunConfig s1 = base;
  s1.solver = "bicgstab:adaptive";
  s1.algebra = "b";
  s1.generator = "convdiff2d:16:1:8:4";
  solve_into(s1, "bicgstab_adaptive");
  RunConfig s2 = s1;
  s2.solver = "bicgstab:pipelined";
  s2.ranks = 4;
  solve_into(s2, "bicgstab_pipelined_r4");

  RunConfig ob = base;
  ob.ranks = 16;
  ob.out_prefix = dir + "/overlap";
  bench_overlap(ob);
}

bool same_bytes(const std::string& a, const std::string& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  return sa.str() == sb.str();
}

}  // namespace

bool run_check(const std::string& workdir, bool verbose) {
  namespace fs = std::filesystem;
  const std::string d1 = workdir + "/check_run1";
  const std::string d2 = workdir + "/check_run2";
  const std::string d3 = workdir + "/check_run3_sched";
  for (const auto& d : {d1, d2, d3}) fs::remove_all(d);
  run_check_suite(d1, 0);
  run_check_suite(d2, 0);
  run_check_suite(d3, 1);  // reversed rank scheduling order must not matter
  bool ok = true;
  for (const auto& entry : fs::directory_iterator(d1)) {
    const std::string name = entry.path().filename().string();
    const bool m2 = same_bytes(d1 + "/" + name, d2 + "/" + name);
    const bool m3 = same_bytes(d1 + "/" + name, d3 + "/" + name);
    ok = ok && m2 && m3;
    if (verbose)
      std::fprintf(stderr, "check %-28s rerun:%s sched:%s\n", name.c_str(), m2 ? "ok" : "DIFF",
                   m3 ? "ok" : "DIFF");
  }
  return ok;
}

}  // namespace bkrylov
