#pragma once

#include <string>
#include <vector>

#include "bkrylov/blockvector.hpp"
#include "bkrylov/common.hpp"

namespace bkrylov {

/// Square sparse matrix in CSR format.
struct SparseOperator {
  int n = 0;
  std::vector<long> row_offsets;  // size n+1, nondecreasing
  std::vector<int> cols;          // size nnz, in [0, n)
  std::vector<double> vals;

  long nnz() const { return row_offsets.empty() ? 0 : row_offsets.back(); }

  /// Builds CSR from (row, col, value) triplets; duplicates are summed,
  /// columns sorted within each row.
  static SparseOperator from_triplets(int n, std::vector<std::tuple<int, int, double>> triplets);

  double diagonal_entry(int row) const;
  bool symmetric(double tol) const;
};

/// Reads a MatrixMarket coordinate file (real, general or symmetric).
/// Symmetric storage is expanded to full CSR. Pattern/complex/array headers are
/// rejected; malformed lines are reported with their line number.
SparseOperator load_matrixmarket(const std::string& path);

/// Writes coordinate/general with round-trip exact (%.17g) values.
void save_matrixmarket(const std::string& path, const SparseOperator& a);

/// 5-point Laplacian stencil on an m x m grid (Dirichlet), n = m^2.
SparseOperator generate_poisson2d(int m);

/// 1D biharmonic stencil [1 -4 6 -4 1]; SPD with condition ~ (n/pi)^4. Stands in
/// for the ill-conditioned SPD test matrices.
SparseOperator generate_biharmonic1d(int n);

/// Convection-diffusion -eps*Lap(u) + (bx,by).grad(u) on an m x m grid, central
/// differences, scaled by h^2; nonsymmetric for nonzero convection.
SparseOperator generate_convdiff2d(int m, double eps, double bx, double by);

/// Diagonal matrix from explicit entries (spectrum oracles in tests).
SparseOperator generate_diag(const std::vector<double>& d);

/// Named generator dispatch: "poisson2d:<m>", "biharmonic1d:<n>",
/// "convdiff2d:<m>[:<eps>[:<bx>[:<by>]]]".
SparseOperator generate(const std::string& spec);

/// Right-hand sides with i.i.d. uniform(-1,1) entries from the SplitMix64
/// counter PRNG; entry (i,j) depends only on (seed, i*s+j).
BlockVector generate_rhs(int n, int s, std::uint64_t seed);

}  // namespace bkrylov
