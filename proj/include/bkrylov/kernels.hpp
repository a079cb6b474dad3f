#pragma once

#include <vector>

#include "bkrylov/blockvector.hpp"
#include "bkrylov/precond.hpp"
#include "bkrylov/salgebra.hpp"
#include "bkrylov/sparse.hpp"

namespace bkrylov {

/// Flop / data-transfer accounting for the three block kernels. Units: flops and
/// 64-bit values (a column index is assumed to occupy one value, like a
/// coefficient). BOP adds 2sz flops and 2z+2sn transferred values; BDOT and
/// BAXPY add 2np^2q flops and 2ns / 3ns values.
struct KernelCounters {
  long long flops = 0;
  long long values_loaded = 0;
  long long values_stored = 0;
  long long bops = 0, bdots = 0, baxpys = 0;
  long long vector_updates = 0;  // solver-level block vector updates

  long long values_transferred() const { return values_loaded + values_stored; }

  KernelCounters operator-(const KernelCounters& o) const {
    KernelCounters d = *this;
    d.flops -= o.flops;
    d.values_loaded -= o.values_loaded;
    d.values_stored -= o.values_stored;
    d.bops -= o.bops;
    d.bdots -= o.bdots;
    d.baxpys -= o.baxpys;
    d.vector_updates -= o.vector_updates;
    return d;
  }
};

/// Rows of the block vectors are processed in fixed chunks; BDOT partial results
/// are combined pairwise over chunks so results do not depend on the degree of
/// parallelism (found experimentally in the reference work; kept configurable).
inline constexpr int kKernelChunkRows = 4;

// --- BOP: operator application -------------------------------------------------

/// y(rows) = A x, reading whichever rows of x the stencil touches.
void bop(const SparseOperator& a, const BlockVector& x, BlockVector& y, KernelCounters* c,
         RowRange rows);
/// y(rows) += sign * A x (same cost accounting as bop).
void bop_add(const SparseOperator& a, const BlockVector& x, BlockVector& y, double sign,
             KernelCounters* c, RowRange rows);
inline void bop(const SparseOperator& a, const BlockVector& x, BlockVector& y,
                KernelCounters* c = nullptr) {
  bop(a, x, y, c, y.all_rows());
}

// --- BDOT: block inner product --------------------------------------------------

/// Local contribution to <x,y>_S over `rows`, accumulated chunkwise with a fixed
/// pairwise combination tree. Global value = sum of per-rank contributions.
SElement bdot_partial(const BlockVector& x, const BlockVector& y, AlgebraSpec alg,
                      KernelCounters* c, RowRange rows);
inline SElement bdot(const BlockVector& x, const BlockVector& y, AlgebraSpec alg,
                     KernelCounters* c = nullptr) {
  return bdot_partial(x, y, alg, c, x.all_rows());
}

/// Per-column sums of squares of (x * sigma) over `rows` (sigma may be null for
/// the untransformed residual). Feeds the break-criterion norms.
std::vector<double> colsumsq_partial(const BlockVector& x, const SElement* sigma,
                                     KernelCounters* c, RowRange rows);

/// Frobenius inner product partial sum over `rows` (scalar BDOT).
double fdot_partial(const BlockVector& x, const BlockVector& y, KernelCounters* c, RowRange rows);

// --- BAXPY: block vector update -------------------------------------------------

/// y(rows) += x * coeff.
void baxpy(BlockVector& y, const BlockVector& x, const SElement& coeff, KernelCounters* c,
           RowRange rows);
/// y(rows) = y * coeff + x (fused right-scale and add; one vector update).
void baxpy_scale(BlockVector& y, const SElement& coeff, const BlockVector& x, KernelCounters* c,
                 RowRange rows);
/// y(rows) += alpha * x (scalar coefficient).
void saxpy(BlockVector& y, double alpha, const BlockVector& x, KernelCounters* c, RowRange rows);
/// y(rows) = y * coeff (right scale in place; one vector update).
void scale_right(BlockVector& y, const SElement& coeff, KernelCounters* c, RowRange rows);

// --- diagnostics -----------------------------------------------------------------

struct BsaReport {
  double max_residual = 0.0;  ///< max over trials of the normalized BSA defect
  int trials = 0;
};

/// Probabilistic block-self-adjointness check of M^{-1}A in the M-weighted block
/// product: compares <M^{-1}AX, MY>_S against <X, AY>_S for random X, Y.
BsaReport check_bsa(const SparseOperator& a, const Preconditioner& m, AlgebraSpec alg, int trials,
                    std::uint64_t seed = 17);

struct BlockGradeResult {
  int nu = 0;        ///< first k with dim K^k == dim K^{k+1}
  int xi = 0;        ///< first k with dim K^k < k * dim(S)
  bool nu_exact = true;  ///< false when kmax was hit (values are lower bounds)
  bool solution_in_span = false;  ///< solution-membership check when requested
};

/// Brute-force block grade of R with respect to A over the algebra span.
/// Diagnostic only: requires n*s <= 512 entries... small problems.
BlockGradeResult block_grade_bruteforce(const SparseOperator& a, const BlockVector& r,
                                        AlgebraSpec alg, int kmax,
                                        const BlockVector* xstar_minus_x0 = nullptr);

}  // namespace bkrylov
