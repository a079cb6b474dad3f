#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bkrylov/blockvector.hpp"
#include "bkrylov/common.hpp"

namespace bkrylov {

/// The five supported *-subalgebras of R^{s x s}. Parallel/Global are the p=1
/// special cases of BlockParallel/BlockGlobal; Block is BlockParallel with p=s.
enum class Variant { Parallel, Global, Block, BlockParallel, BlockGlobal };

std::string variant_name(Variant v);

/// Descriptor of a *-subalgebra: variant, number of right-hand sides s and
/// blocking parameter p (q = s/p column groups).
struct AlgebraSpec {
  Variant variant = Variant::Parallel;
  int s = 1;
  int p = 1;

  AlgebraSpec() = default;
  AlgebraSpec(Variant v, int s_, int p_);

  static AlgebraSpec parallel(int s) { return {Variant::Parallel, s, 1}; }
  static AlgebraSpec global(int s) { return {Variant::Global, s, 1}; }
  static AlgebraSpec block(int s) { return {Variant::Block, s, s}; }
  static AlgebraSpec block_parallel(int s, int p) { return {Variant::BlockParallel, s, p}; }
  static AlgebraSpec block_global(int s, int p) { return {Variant::BlockGlobal, s, p}; }

  /// Parse "p" | "g" | "b" | "bp:<p>" | "bg:<p>" for a given s.
  static AlgebraSpec parse(const std::string& text, int s);

  int q() const { return s / p; }

  /// True when the q diagonal blocks are coupled (replicated): Global / BlockGlobal.
  bool replicated() const { return variant == Variant::Global || variant == Variant::BlockGlobal; }

  /// Dimension of the subalgebra as a vector space.
  int dim() const { return replicated() ? p * p : p * p * q(); }

  bool operator==(const AlgebraSpec& o) const {
    return variant == o.variant && s == o.s && p == o.p;
  }
  bool operator!=(const AlgebraSpec& o) const { return !(*this == o); }

  std::string name() const;
};

/// A coefficient element of the *-subalgebra: dense s x s storage whose entries
/// outside the coupling pattern are exactly zero; for the replicated variants the
/// q diagonal p x p blocks are identical copies of one representative block.
class SElement {
public:
  SElement() = default;
  explicit SElement(AlgebraSpec a) : a_(a), d_(static_cast<size_t>(a.s) * a.s, 0.0) {}

  static SElement identity(AlgebraSpec a);
  /// Scalar multiple of the identity (always inside the pattern).
  static SElement scaled_identity(AlgebraSpec a, double value);

  const AlgebraSpec& algebra() const { return a_; }
  int s() const { return a_.s; }

  double& at(int i, int j) { return d_[static_cast<size_t>(i) * a_.s + j]; }
  double at(int i, int j) const { return d_[static_cast<size_t>(i) * a_.s + j]; }
  const std::vector<double>& raw() const { return d_; }
  std::vector<double>& raw() { return d_; }

  // --- coefficient arithmetic (results stay inside the pattern) ---
  SElement multiply(const SElement& rhs) const;      ///< this * rhs
  SElement add(const SElement& rhs) const;
  SElement sub(const SElement& rhs) const;
  SElement scaled(double f) const;
  SElement transposed() const;
  /// Inverse by per-block LU; throws SingularError with the offending pivot
  /// magnitude when a pivot falls below 1e3 * eps * ||c||_F.
  SElement inverse() const;

  void add_in_place(const SElement& rhs);
  void scale_in_place(double f);

  double frobenius_norm() const;
  double max_column_norm() const;
  std::vector<double> column_norms() const;
  double trace() const;

  /// Exact pattern check: zero outside the pattern, identical replicated blocks.
  bool pattern_ok() const;

  /// Max |entry| deviation from the identity (diagnostics).
  double deviation_from_identity() const;

  /// True when every diagonal entry is exactly zero-free... (strictly nonzero).
  bool diagonal_nonzero(double tol) const;

private:
  AlgebraSpec a_;
  std::vector<double> d_;
};

/// <X,Y>_S for the algebra `a` (dense reference path, no counters).
/// Block: X^T Y. Parallel: diag(X^T Y). BlockParallel: blockdiag(X_g^T Y_g).
/// BlockGlobal/Global: I_q (x) (1/q) sum_g X_g^T Y_g.
/// `rows` restricts the row range (local products of the SPMD layer).
SElement block_inner_product(const BlockVector& x, const BlockVector& y, AlgebraSpec a);
SElement block_inner_product(const BlockVector& x, const BlockVector& y, AlgebraSpec a,
                             RowRange rows);

/// Normalizer (scaling quotient): factors X = Q * sigma with <Q,Q>_S = I.
/// Householder QR per column group; BlockGlobal stacks the q groups and applies
/// the sqrt(q) convention. Defined for rank-deficient X (sigma singular, Q still
/// orthonormal). Rejects NaN/Inf input. Q replaces X in the in-place form.
SElement normalize_in_place(BlockVector& x, AlgebraSpec a);
SElement normalize_in_place(BlockVector& x, AlgebraSpec a, RowRange rows);
std::pair<BlockVector, SElement> normalize(const BlockVector& x, AlgebraSpec a);

/// Right multiplication Y = X * c restricted to `rows` (the BAXPY building block).
void apply_right(BlockVector& x, const SElement& c, RowRange rows);

/// Diagonally scaled condition number kappa(delta^{-1/2} c delta^{-1/2}),
/// delta = diag(c); equals 1 for diagonal matrices. Requires symmetric c with a
/// strictly positive diagonal (throws SingularError otherwise).
double kappa_diag_scaled(const SElement& c);

/// Pattern containment following the embedding lattice (p1 | p2 chains).
bool contains(AlgebraSpec small, AlgebraSpec big);

/// Re-expresses c in the containing algebra without changing its s x s matrix.
SElement embed(const SElement& c, AlgebraSpec big);

}  // namespace bkrylov
