#pragma once

#include <optional>
#include <string>

#include "bkrylov/bicgstab.hpp"
#include "bkrylov/cg.hpp"
#include "bkrylov/gmres.hpp"

namespace bkrylov {

/// Everything one solver run needs; populated from config file + CLI flags
/// (flags win). Every field has a documented default.
struct RunConfig {
  std::string matrix_path;                  // MatrixMarket file, or
  std::string generator = "poisson2d:50";   // generator spec when no file given
  int s = 8;
  std::string algebra = "bp:4";             // p | g | b | bp:<p> | bg:<p>
  std::string solver = "cg:classic";        // cg:<v> | gmres:<o> | bicgstab:<v>
  std::string precond = "jacobi";
  double eta = -1.0;                        // <0: solver-family default
  double tol = 1e-6;
  bool tol_relative = true;
  std::string norm = "maxcol";              // maxcol | frobenius
  int restart = 100;
  int max_iter = 1000;
  int ranks = 1;
  std::string latency_model = "log2p";      // log2p[:coeff] | fixed:<us>
  std::string overlap = "full";             // full | none | <factor>
  double flop_rate_us = 1e-3;               // virtual us per flop
  std::uint64_t seed = 1;
  std::string out_prefix;                   // writes <prefix>.csv/.json when set
  std::string sweep;                        // e.g. "p=1,4,16,64"

  CommWorld::Config world_config() const;
  SparseOperator load_operator() const;
};

/// Runs one configured solve; returns the report (and writes outputs when
/// out_prefix is set).
SolverReport run_solve(const RunConfig& cfg);

/// Runs the configured sweep; one report per value plus a combined table at
/// <out_prefix>_sweep.csv.
std::vector<SolverReport> run_sweep(const RunConfig& cfg);

/// Kernel benchmark: measured time per right-hand side next to the counter
/// model (flops, transferred values, arithmetic intensity) per p.
std::string bench_kernels(const RunConfig& cfg);

/// Overlap benchmark table (doubling protocol on the virtual clock).
std::string bench_overlap(const RunConfig& cfg);

/// Deterministic self-check: runs a fixed suite twice (and under the reversed
/// scheduling order) into two directories and byte-compares every output.
/// Returns true when everything matches.
bool run_check(const std::string& workdir, bool verbose);

}  // namespace bkrylov
