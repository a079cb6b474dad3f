#pragma once

#include "bkrylov/comms.hpp"
#include "bkrylov/precond.hpp"
#include "bkrylov/report.hpp"

namespace bkrylov {

/// Orthogonalization strategy of the block Arnoldi process.
/// Modified: k+1 sequential reductions. Classical(#it): #it fused
/// orthogonalize+normalize passes (two are sufficient for stability).
/// Pipelined(r): dots r steps ahead of the updates, r+1 reductions in flight.
/// Localized: local modified Gram-Schmidt plus one tree reduce / back-propagate
/// pair over a persistent coefficient-basis tree.
struct OrthoStrategy {
  enum class Kind { Modified, Classical, Pipelined, Localized };
  Kind kind = Kind::Modified;
  int iters = 2;  ///< classical passes (1 or 2)
  int depth = 3;  ///< pipelined r >= 1

  static OrthoStrategy parse(const std::string& text);
  std::string name() const;
};

struct GmresConfig {
  OrthoStrategy ortho;
  int restart = 100;
  double eps_tol = 1e-6;
  bool relative = true;
  enum class NormKind { Frobenius, MaxColumn } norm_kind = NormKind::MaxColumn;
  int max_iter = 1000;
};

struct GmresResult {
  BlockVector x;
  SolverReport report;
};

/// Left-preconditioned block GMRes: minimizes the Frobenius norm of the
/// preconditioned residual over X0 + K_S^k, restarting at cfg.restart.
GmresResult bgmres_solve(const SparseOperator& a, const Preconditioner& m, const BlockVector& b,
                         const BlockVector& x0, AlgebraSpec alg, const GmresConfig& cfg,
                         CommWorld& world);

/// Diagnostic run of `steps` Arnoldi steps: globally orthonormal basis, raw
/// block Hessenberg columns (h[j] holds entries 0..j+1), and the count of
/// rank-deficiency injections by the normalizer.
struct ArnoldiProbe {
  std::vector<BlockVector> v;
  std::vector<std::vector<SElement>> h;
  int deficiency_events = 0;
  /// Localized strategy internals: the rank-local orthonormal blocks (only the
  /// owned rows of entry j are meaningful) and every rank's back-propagated
  /// coefficient vectors, for checking the distributed-factorization contract.
  std::vector<BlockVector> local_blocks;
  std::vector<std::vector<CoeffVec>> rank_zetas;
};

ArnoldiProbe arnoldi_probe(const SparseOperator& a, const Preconditioner& m, const BlockVector& r0,
                           AlgebraSpec alg, OrthoStrategy strat, int steps, CommWorld& world);

/// 2x2-block orthogonal transform eliminating the subdiagonal block of one
/// Hessenberg column (the block generalization of a Givens rotation).
struct BlockGivens {
  SElement q00, q01, q10, q11;  // orthogonal as a 2x2 block matrix
};

/// Full QR of [top; bottom]: returns the transform and the eliminated top block
/// rho with a nonnegative-diagonal convention.
std::pair<BlockGivens, SElement> block_givens(const SElement& top, const SElement& bottom);

/// In-place application of the transposed transform to a column pair.
void apply_givens_t(const BlockGivens& g, SElement& a, SElement& b);

}  // namespace bkrylov
