#pragma once

#include <vector>

namespace bkrylov::dense {

// Small dense helpers on row-major matrices. These back the *-subalgebra
// normalizers and diagnostics; sizes are O(s) so no BLAS is involved.

/// Thin Householder QR of the m x k matrix A (m >= 1). On return Q is m x k with
/// orthonormal columns and R is k x k upper triangular with nonnegative diagonal.
/// Rank-deficient columns yield (near-)zero rows of R; the corresponding Q columns
/// are completed with the reflectors' implicit orthogonal directions.
void householder_qr_thin(int m, int k, const double* a, double* q, double* r);

/// Full Householder QR: Q is m x m orthogonal, R is m x k upper trapezoidal,
/// diagonal of R nonnegative.
void householder_qr_full(int m, int k, const double* a, double* q, double* r);

/// Eigenvalues of a symmetric k x k matrix by cyclic Jacobi rotations, ascending.
std::vector<double> symmetric_eigenvalues(int k, const double* a);

/// In-place inversion of a k x k matrix by LU with partial pivoting.
/// Throws SingularError when a pivot falls below `pivot_tol`.
void invert(int k, double* a, double pivot_tol);

/// c = op(a) * op(b) for k x k row-major blocks (ta/tb transpose flags).
void gemm(int k, const double* a, bool ta, const double* b, bool tb, double* c);

}  // namespace bkrylov::dense
