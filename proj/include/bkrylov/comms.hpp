#pragma once

#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "bkrylov/kernels.hpp"
#include "bkrylov/salgebra.hpp"

namespace bkrylov {

/// Latency of one global reduction on P ranks. Default: 2*log2(P) microseconds,
/// zero for P=1 (collective communication on tree networks; no bandwidth term,
/// coefficient payloads are tiny).
struct LatencyModel {
  double coeff = 2.0;   // multiplies log2(P)
  double fixed = -1.0;  // >= 0: constant latency instead

  double t_red(int ranks) const;
  static LatencyModel parse(const std::string& text);  // "log2p[:coeff]" | "fixed:<us>"
  std::string name() const;
};

/// Fraction of the reduction latency that registered work can hide:
/// 1 = full overlap (async progress), 0 = none (latency serializes after work).
struct OverlapPolicy {
  double factor = 1.0;
  static OverlapPolicy parse(const std::string& text);  // "full" | "none" | numeric
  std::string name() const;
};

/// Virtual compute speed for the clock: microseconds per flop.
struct WorkModel {
  double us_per_flop = 1e-3;
};

/// Deterministic counters of the communication layer.
struct CommCounters {
  long long reductions_started = 0;
  long long reductions_waited = 0;
  long long overlapped_reductions = 0;  ///< waited reductions with work in flight on every rank
  long long normalizes = 0;             ///< TSQR normalizer collectives
  long long tree_reduce_sweeps = 0;     ///< localized-Arnoldi up-sweeps
  long long tree_backprop_sweeps = 0;   ///< localized-Arnoldi down-sweeps
  long long broadcast_sweeps = 0;
  long long barriers = 0;
  long long messages = 0;  ///< point-to-point tree-edge sends
  int max_outstanding = 0; ///< peak reductions in flight on one rank

  CommCounters operator-(const CommCounters& o) const;
};

class CommWorld;
class Rank;

/// Handle of a pending collective. wait() never moves the clock backwards;
/// get() is allowed once.
class Future {
public:
  Future() = default;
  Future(Future&&) noexcept;
  Future& operator=(Future&&) noexcept;
  Future(const Future&) = delete;
  Future& operator=(const Future&) = delete;
  ~Future() = default;

  bool valid() const { return world_ != nullptr; }
  bool ready() const;
  void wait();
  std::vector<double> get();

private:
  friend class Rank;
  Future(CommWorld* w, int slot, int rank) : world_(w), slot_(slot), rank_(rank) {}
  CommWorld* world_ = nullptr;
  int slot_ = -1;
  int rank_ = -1;
  bool consumed_ = false;
};

using CoeffVec = std::vector<SElement>;  ///< coefficient vector in S^m

/// Persistent reduction tree for the localized Arnoldi method. Every internal
/// node stores its local orthonormal coefficient basis, extended each iteration;
/// the same tree must be used for all iterations of one Arnoldi process.
struct ReductionTree {
  explicit ReductionTree(int ranks, AlgebraSpec alg);

  int ranks;
  AlgebraSpec algebra;
  int iterations = 0;               ///< completed reduce sweeps
  long long selement_products = 0;  ///< instrumented coefficient products (O(k^2)/iter)

  struct Node {
    std::vector<CoeffVec> basis0, basis1;  ///< stored zeta pairs per iteration
  };
  std::vector<Node> nodes;  ///< in fixed bottom-up creation order

  // scratch owned by the collective machinery
  std::vector<CoeffVec> last_zeta;  ///< per-rank back-propagated factors
  CoeffVec last_rho;

  void reset();
};

/// Per-rank handle passed to SPMD tasks. All collectives must be called by every
/// rank in identical order (enforced; violations raise CommError).
class Rank {
public:
  int id() const { return id_; }
  int nranks() const;
  RowRange rows() const;  ///< owned row interval of the active partition
  CommWorld& world() const { return *world_; }

  double now_us() const;
  void add_work_us(double us);
  void add_work_flops(double flops);

  /// Merges a rank-local kernel-counter delta into the world's counters:
  /// additive fields from every rank, logical op counts once (rank 0).
  void charge_kernel(const KernelCounters& local);

  /// Non-blocking sum-allreduce of a fused payload (elementwise).
  Future iallreduce(std::vector<double> local);
  /// Convenience: start and immediately wait (a blocking synchronization point).
  std::vector<double> allreduce_now(std::vector<double> local);

  /// Neighbor-exchange stand-in: rendezvous; clocks advance to the common max.
  void barrier();

  /// TSQR normalizer of the row-partitioned block vector: local Householder QR
  /// now, R-factor tree reduction at the rendezvous, trailing Q update at wait.
  /// The future's payload is the packed global sigma.
  Future inormalize(BlockVector& x, AlgebraSpec alg);

  /// Localized-Arnoldi up-sweep: orthonormalizes the stacked child R-factors
  /// against every node's stored basis, extends the bases, broadcasts the global
  /// rho^{k+1}. Blocking.
  CoeffVec localized_reduce(ReductionTree& tree, const CoeffVec& local_rfactor);
  /// Matching down-sweep: expands the factors stored by the preceding reduce
  /// down to this rank's local zeta. Blocking.
  CoeffVec localized_backprop(ReductionTree& tree);

private:
  friend class CommWorld;
  Rank(CommWorld* w, int id) : world_(w), id_(id) {}
  CommWorld* world_;
  int id_;
};

/// Deterministic SPMD simulation of a P-rank machine: ranks run as cooperatively
/// scheduled tasks (one at a time, fixed handoff order) over shared inputs, with
/// a virtual clock for latency/overlap accounting.
class CommWorld {
public:
  struct Config {
    int ranks = 1;
    LatencyModel latency;
    OverlapPolicy overlap;
    WorkModel work;
    int sched_policy = 0;  ///< 0 = lowest ready rank, 1 = highest (determinism check)
  };

  explicit CommWorld(Config cfg);
  ~CommWorld();

  int ranks() const { return cfg_.ranks; }
  const Config& config() const { return cfg_; }

  /// Runs the SPMD task on all ranks over the row partition of [0, n_rows).
  void run(int n_rows, const std::function<void(Rank&)>& task);

  CommCounters counters() const;
  KernelCounters kernel_counters() const;
  void reset_max_outstanding();

  double clock_us(int rank) const;
  double max_clock_us() const;

  double t_red() const { return cfg_.latency.t_red(cfg_.ranks); }

  struct Slot;  // opaque collective instance
  struct Impl;  // opaque scheduler state

private:
  friend class Rank;
  friend class Future;

  Config cfg_;
  std::unique_ptr<Impl> impl_;
};

/// One row of the collective-communication overlap benchmark.
struct OverlapReport {
  double t_base = 0;
  double t_work = 0;
  double t_iter = 0;
  double t_ovhd = 0;   ///< t_iter - t_work
  double t_avail = 0;  ///< t_base - t_ovhd
};

/// Doubling protocol: measure t_base, then run work slices from t_base/4,
/// doubling until t_iter exceeds 2*t_base, on the virtual clock.
std::vector<OverlapReport> overlap_benchmark(CommWorld& world);

/// Distributed S-QR of a row-partitioned block vector (driver form):
/// X = Q * sigma with <Q,Q>_S = I assembled across ranks; Q replaces X.
SElement tsqr(CommWorld& world, BlockVector& x, AlgebraSpec alg);

}  // namespace bkrylov
