#pragma once

#include <string>
#include <vector>

#include "bkrylov/comms.hpp"
#include "bkrylov/kernels.hpp"

namespace bkrylov {

/// One per-iteration record; record 0 describes the initial state.
struct IterRecord {
  int iter = 0;
  double frob = 0.0;
  double maxcol = 0.0;
  bool reortho = false;
  double virt_us = 0.0;  // rank-0 virtual clock, relative to solve start
  CommCounters comms;    // snapshot deltas since solve start
  KernelCounters kernels;
  std::vector<double> col_norms;
};

/// Per-solve log: iteration records plus summary fields. CSV column order is
/// fixed and versioned in the header comment; wall-clock time is never written
/// (outputs must be byte-reproducible).
struct SolverReport {
  std::string solver;   // "cg" | "gmres" | "bicgstab"
  std::string variant;  // e.g. "ghysels", "modified", "pipelined:3"
  std::string algebra;
  int iterations = 0;
  bool converged = false;
  int reortho_count = 0;
  int restarts = 0;
  double rate = 0.0;  // mean per-iteration residual reduction factor
  double virt_time_us = 0.0;
  int block_vectors_allocated = 0;
  CommCounters comms_total;
  KernelCounters kernels_total;
  std::vector<IterRecord> records;

  void finish();  // derives iterations/rate/totals from the records

  void write_csv(const std::string& path) const;
  void write_json(const std::string& path) const;
  std::string json_summary() const;
};

}  // namespace bkrylov
