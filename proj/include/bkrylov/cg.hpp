#pragma once

#include <functional>

#include "bkrylov/comms.hpp"
#include "bkrylov/precond.hpp"
#include "bkrylov/report.hpp"
#include "bkrylov/salgebra.hpp"

namespace bkrylov {

/// The block CG family: the baseline adaptive method and its communication-
/// optimized variants. All are arithmetically equivalent; they differ in fused
/// reductions, overlap, and the auxiliary recurrences that pay for them.
enum class CgVariant { Classic, TwoReduction, OneReduction, Gropp, PartiallyPipelined, Ghysels };

std::string cg_variant_name(CgVariant v);
CgVariant parse_cg_variant(const std::string& text);

struct CgConfig {
  CgVariant variant = CgVariant::Classic;
  /// Re-orthonormalization tuning: the residual is re-orthonormalized when
  /// eta * kappa_D(alpha) exceeds 1/sqrt(eps_mach); eta = 0 disables it.
  double eta = 1e4;
  double eps_tol = 1e-6;
  bool relative = true;  ///< tolerance relative to the initial residual (per column)
  enum class NormKind { Frobenius, MaxColumn } norm_kind = NormKind::MaxColumn;
  int max_iter = 1000;
  /// Probabilistic block-self-adjointness check of (A, M) before solving.
  bool check_spd = false;

  /// Test hook, called on rank 0 once per iteration after the convergence
  /// rendezvous: (iter, X, Rbar, sigma, P) with P the direction used this step.
  std::function<void(int, const BlockVector&, const BlockVector&, const SElement&,
                     const BlockVector&)>
      on_iteration;
};

struct CgResult {
  BlockVector x;
  SolverReport report;
};

/// Block Conjugate Gradients over any *-subalgebra and comms world. A must be
/// symmetric positive definite, M a symmetric positive definite preconditioner.
/// Throws BreakdownError on singular coefficients (eta = 0) and NaN.
CgResult bcg_solve(const SparseOperator& a, const Preconditioner& m, const BlockVector& b,
                   const BlockVector& x0, AlgebraSpec alg, const CgConfig& cfg, CommWorld& world);

/// Chebyshev energy-error bound 2 ((sqrt(k)-1)/(sqrt(k)+1))^k * e0_norm.
double chebyshev_bound(double kappa, int k, double e0_norm);

struct RateCheckResult {
  double measured_rate = 0.0;
  int predicted_index = 0;  ///< ceil(p/q): eigenvalue index entering the rate bound
  double predicted_rate = 0.0;
};

/// Runs block-global BCG on a small operator with known spectrum and compares
/// the asymptotic rate against (sqrt(k)-1)/(sqrt(k)+1) with k = l_n / l_ceil(p/q).
RateCheckResult blockglobal_rate_check(const SparseOperator& a, const Preconditioner& m,
                                       const std::vector<double>& spectrum_ascending, int s, int p,
                                       std::uint64_t seed, int iters, CommWorld& world);

}  // namespace bkrylov
