// bkr: block Krylov solver harness (solve / sweep / bench / check).

#include <cstdio>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "bkrylov/runner.hpp"

namespace {

int verbosity() {
  const char* v = std::getenv("BKRYLOV_VERBOSE");
  return v ? std::atoi(v) : 0;
}

void add_common(CLI::App* cmd, bkrylov::RunConfig& cfg) {
  cmd->set_config("--config", "", "flat key=value config file; command-line flags win");
  cmd->add_option("--matrix", cfg.matrix_path, "MatrixMarket file (overrides --generator)");
  cmd->add_option("--generator", cfg.generator,
                  "operator generator: poisson2d:<m> | biharmonic1d:<n> | "
                  "convdiff2d:<m>[:<eps>[:<bx>[:<by>]]]");
  cmd->add_option("--s", cfg.s, "number of right-hand sides")->check(CLI::PositiveNumber);
  cmd->add_option("--algebra", cfg.algebra, "*-subalgebra: p | g | b | bp:<p> | bg:<p>");
  cmd->add_option("--solver", cfg.solver,
                  "cg:{classic|2r|1r|gropp|ppbcg|ghysels} | "
                  "gmres:{modified|classical[:it]|pipelined[:r]|localized} | "
                  "bicgstab:{adaptive|pipelined}");
  cmd->add_option("--precond", cfg.precond, "identity | jacobi | ssor[:omega[:sweeps]] | ilu0");
  cmd->add_option("--eta", cfg.eta, "re-orthonormalization parameter (family default if unset)");
  cmd->add_option("--tol", cfg.tol, "convergence tolerance (relative to the initial residual)");
  cmd->add_flag("--absolute-tol",
                [&cfg](std::int64_t) { cfg.tol_relative = false; },
                "interpret --tol as an absolute threshold");
  cmd->add_option("--norm", cfg.norm, "break norm: maxcol | frobenius");
  cmd->add_option("--restart", cfg.restart, "GMRes restart length");
  cmd->add_option("--max-iter", cfg.max_iter, "iteration budget");
  cmd->add_option("--ranks", cfg.ranks, "simulated rank count")->check(CLI::PositiveNumber);
  cmd->add_option("--latency-model", cfg.latency_model, "log2p[:coeff] | fixed:<us>");
  cmd->add_option("--overlap", cfg.overlap, "overlap policy: full | none | <factor>");
  cmd->add_option("--flop-rate", cfg.flop_rate_us, "virtual microseconds per flop");
  cmd->add_option("--seed", cfg.seed, "right-hand-side seed");
  cmd->add_option("--out", cfg.out_prefix, "output prefix (<out>.csv, <out>.json)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bkr: block Krylov solvers over *-subalgebras with a simulated "
               "distributed communication layer"};
  app.require_subcommand(1);

  bkrylov::RunConfig cfg;
  auto* solve = app.add_subcommand("solve", "run one configured solve");
  add_common(solve, cfg);
  auto* sweep = app.add_subcommand("sweep", "run a blocking-parameter sweep");
  add_common(sweep, cfg);
  sweep->add_option("--sweep", cfg.sweep, "sweep spec, e.g. p=1,4,16,64")->required();
  auto* bk = app.add_subcommand("bench-kernels", "kernel counters/intensity benchmark");
  add_common(bk, cfg);
  auto* bo = app.add_subcommand("bench-overlap", "collective-overlap benchmark");
  add_common(bo, cfg);
  auto* check = app.add_subcommand("check", "determinism self-test (runs the suite twice)");
  std::string checkdir = "bkr_check";
  check->add_option("--dir", checkdir, "scratch directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (solve->parsed()) {
      const auto rep = bkrylov::run_solve(cfg);
      std::cout << rep.json_summary() << std::endl;
      if (!rep.converged) {
        std::fprintf(stderr, "bkr: no convergence within %d iterations\n", cfg.max_iter);
        return 3;
      }
      return 0;
    }
    if (sweep->parsed()) {
      const auto reps = bkrylov::run_sweep(cfg);
      bool all = true;
      std::cout << "p,iterations,converged,reorthos,rate\n";
      size_t i = 0;
      for (const auto& rep : reps) {
        std::cout << rep.algebra << "," << rep.iterations << "," << (rep.converged ? 1 : 0) << ","
                  << rep.reortho_count << "," << rep.rate << "\n";
        all = all && rep.converged;
        ++i;
      }
      return all ? 0 : 3;
    }
    if (bk->parsed()) {
      std::cout << bkrylov::bench_kernels(cfg);
      return 0;
    }
    if (bo->parsed()) {
      std::cout << bkrylov::bench_overlap(cfg);
      return 0;
    }
    if (check->parsed()) {
      const bool ok = bkrylov::run_check(checkdir, verbosity() > 0 || true);
      std::cout << (ok ? "check: all outputs byte-identical\n"
                       : "check: DIFFERENCES FOUND\n");
      return ok ? 0 : 4;
    }
  } catch (const bkrylov::ConfigError& e) {
    std::fprintf(stderr, "bkr: config error: %s\n", e.what());
    return 1;
  } catch (const bkrylov::InputError& e) {
    std::fprintf(stderr, "bkr: input error: %s\n", e.what());
    return 2;
  } catch (const bkrylov::BreakdownError& e) {
    std::fprintf(stderr, "bkr: breakdown: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "bkr: error: %s\n", e.what());
    return 4;
  }
  return 1;
}
