#pragma once

#include <functional>

#include "bkrylov/comms.hpp"
#include "bkrylov/precond.hpp"
#include "bkrylov/report.hpp"

namespace bkrylov {

/// Block BiCGStab with adaptive residual re-orthonormalization, plus the
/// pipelined variant that fuses the omega/beta/chi reductions and overlaps every
/// reduction with a preconditioner application. No transposed operator is
/// applied anywhere.
struct BicgstabConfig {
  enum class Variant { Adaptive, Pipelined } variant = Variant::Adaptive;
  enum class ShadowChoice { PreconditionedInitialResidual, SeededRandom } shadow =
      ShadowChoice::PreconditionedInitialResidual;
  double eta = 100.0;
  double eps_tol = 1e-6;
  bool relative = true;
  enum class NormKind { Frobenius, MaxColumn } norm_kind = NormKind::MaxColumn;
  int max_iter = 1000;
  std::uint64_t shadow_seed = 99;

  /// Test hook on rank 0 per iteration: (iter, X, Rhat, sigma).
  std::function<void(int, const BlockVector&, const BlockVector&, const SElement&)> on_iteration;
};

struct BicgstabResult {
  BlockVector x;
  SolverReport report;
};

BicgstabResult bbicgstab_solve(const SparseOperator& a, const Preconditioner& m,
                               const BlockVector& b, const BlockVector& x0, AlgebraSpec alg,
                               const BicgstabConfig& cfg, CommWorld& world);

/// Steady-state synchronization audit extracted from a solve's iteration log:
/// reduction groups per iteration and whether every group was overlapped with
/// registered work. The Adaptive variant blocks on (at least) three groups per
/// iteration; the Pipelined one issues exactly two, both overlapped with a
/// preconditioner application.
struct SyncCountAudit {
  int min_groups_per_iter = 0;
  int max_groups_per_iter = 0;
  bool all_overlapped = false;
  int iterations_sampled = 0;
};

SyncCountAudit sync_count_audit(const SolverReport& report);

}  // namespace bkrylov
