#pragma once

#include <memory>
#include <string>

#include "bkrylov/blockvector.hpp"
#include "bkrylov/sparse.hpp"

namespace bkrylov {

/// Splitting / incomplete-factorization preconditioners applied columnwise to
/// block vectors. Jacobi and Identity act row-locally; SSOR and ILU0 run global
/// triangular recurrences.
class Preconditioner {
public:
  enum class Kind { Identity, Jacobi, SSOR, ILU0 };

  static Preconditioner identity();
  static Preconditioner jacobi(const SparseOperator& a);
  /// Symmetric SSOR: M = w/(2-w) * (D/w + L) D^{-1} (D/w + U), forward+backward sweep.
  static Preconditioner ssor(const SparseOperator& a, double omega = 1.0, int sweeps = 1);
  static Preconditioner ilu0(const SparseOperator& a);

  /// Parse "identity" | "jacobi" | "ssor[:omega[:sweeps]]" | "ilu0".
  static Preconditioner parse(const std::string& text, const SparseOperator& a);

  Kind kind() const { return kind_; }
  std::string name() const;
  bool row_local() const { return kind_ == Kind::Identity || kind_ == Kind::Jacobi; }

  /// y = M^{-1} x. Row-local kinds honor `rows`; recurrence kinds require the
  /// full range (the SPMD layer arranges that).
  void apply(const BlockVector& x, BlockVector& y, RowRange rows) const;
  void apply(const BlockVector& x, BlockVector& y) const { apply(x, y, x.all_rows()); }

  /// y = M x (forward application, used by the block self-adjointness check).
  void apply_forward(const BlockVector& x, BlockVector& y) const;

  /// Flop estimate of one apply over `nrows` rows (virtual-clock work model).
  double apply_flops(int nrows, int s) const;

  /// Sparsity of the combined ILU factors (diagnostics; empty unless ILU0).
  const SparseOperator& factors() const { return lu_; }

private:
  Preconditioner() = default;

  Kind kind_ = Kind::Identity;
  double omega_ = 1.0;
  int sweeps_ = 1;
  std::vector<double> diag_;  // Jacobi / SSOR diagonal
  SparseOperator a_;          // operator copy for SSOR sweeps / forward apply
  SparseOperator lu_;         // combined ILU0 factors (unit lower implicit)

  void apply_ssor_once(const BlockVector& x, BlockVector& y) const;
  void apply_ilu0(const BlockVector& x, BlockVector& y) const;
};

}  // namespace bkrylov
