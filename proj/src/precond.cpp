#include "bkrylov/precond.hpp"

#include <algorithm>
#include <cmath>

namespace bkrylov {

Preconditioner Preconditioner::identity() {
  Preconditioner m;
  m.kind_ = Kind::Identity;
  return m;
}

Preconditioner Preconditioner::jacobi(const SparseOperator& a) {
  Preconditioner m;
  m.kind_ = Kind::Jacobi;
  m.diag_.resize(a.n);
  for (int i = 0; i < a.n; ++i) {
    m.diag_[i] = a.diagonal_entry(i);
    if (m.diag_[i] == 0.0)
      throw ConfigError("jacobi: zero diagonal at row " + std::to_string(i));
  }
  return m;
}

Preconditioner Preconditioner::ssor(const SparseOperator& a, double omega, int sweeps) {
  if (omega <= 0.0 || omega >= 2.0) throw ConfigError("ssor: omega must be in (0,2)");
  if (sweeps < 1) throw ConfigError("ssor: sweeps must be >= 1");
  Preconditioner m;
  m.kind_ = Kind::SSOR;
  m.omega_ = omega;
  m.sweeps_ = sweeps;
  m.a_ = a;
  m.diag_.resize(a.n);
  for (int i = 0; i < a.n; ++i) {
    m.diag_[i] = a.diagonal_entry(i);
    if (m.diag_[i] == 0.0) throw ConfigError("ssor: zero diagonal at row " + std::to_string(i));
  }
  return m;
}

Preconditioner Preconditioner::ilu0(const SparseOperator& a) {
  Preconditioner m;
  m.kind_ = Kind::ILU0;
  m.lu_ = a;  // factor in place on A's sparsity, natural ordering, no pivoting
  auto& lu = m.lu_;
  std::vector<long> diag_idx(a.n, -1);
  for (int i = 0; i < a.n; ++i) {
    for (long k = lu.row_offsets[i]; k < lu.row_offsets[i + 1]; ++k)
      if (lu.cols[k] == i) diag_idx[i] = k;
    if (diag_idx[i] < 0) throw ConfigError("ilu0: missing diagonal at row " + std::to_string(i));
  }
  auto find_in_row = [&lu](int row, int col) -> long {
    long lo = lu.row_offsets[row], hi = lu.row_offsets[row + 1];
    auto it = std::lower_bound(lu.cols.begin() + lo, lu.cols.begin() + hi, col);
    if (it != lu.cols.begin() + hi && *it == col) return it - lu.cols.begin();
    return -1;
  };
  for (int i = 0; i < a.n; ++i) {
    for (long kk = lu.row_offsets[i]; kk < lu.row_offsets[i + 1]; ++kk) {
      const int k = lu.cols[kk];
      if (k >= i) break;
      const double dk = lu.vals[diag_idx[k]];
      if (dk == 0.0) throw ConfigError("ilu0: zero pivot at row " + std::to_string(k));
      const double f = lu.vals[kk] / dk;
      lu.vals[kk] = f;
      for (long jj = diag_idx[k] + 1; jj < lu.row_offsets[k + 1]; ++jj) {
        const long pos = find_in_row(i, lu.cols[jj]);
        if (pos >= 0) lu.vals[pos] -= f * lu.vals[jj];
      }
    }
    if (lu.vals[diag_idx[i]] == 0.0)
      throw ConfigError("ilu0: zero pivot at row " + std::to_string(i));
  }
  return m;
}

Preconditioner Preconditioner::parse(const std::string& text, const SparseOperator& a) {
  if (text == "identity" || text == "none") return identity();
  if (text == "jacobi") return jacobi(a);
  if (text == "ilu0") return ilu0(a);
  if (text.rfind("ssor", 0) == 0) {
    double omega = 1.0;
    int sweeps = 1;
    auto c1 = text.find(':');
    if (c1 != std::string::npos) {
      auto c2 = text.find(':', c1 + 1);
      omega = std::stod(text.substr(c1 + 1, c2 == std::string::npos ? std::string::npos : c2 - c1 - 1));
      if (c2 != std::string::npos) sweeps = std::stoi(text.substr(c2 + 1));
    }
    return ssor(a, omega, sweeps);
  }
  throw ConfigError("unknown preconditioner '" + text + "'");
}

std::string Preconditioner::name() const {
  switch (kind_) {
    case Kind::Identity: return "identity";
    case Kind::Jacobi: return "jacobi";
    case Kind::SSOR:
      return "ssor:" + std::to_string(omega_) + ":" + std::to_string(sweeps_);
    case Kind::ILU0: return "ilu0";
  }
  return "?";
}

void Preconditioner::apply(const BlockVector& x, BlockVector& y, RowRange rows) const {
  const int s = x.cols();
  switch (kind_) {
    case Kind::Identity:
      for (int i = rows.lo; i < rows.hi; ++i)
        for (int j = 0; j < s; ++j) y(i, j) = x(i, j);
      return;
    case Kind::Jacobi:
      for (int i = rows.lo; i < rows.hi; ++i) {
        const double inv = 1.0 / diag_[i];
        for (int j = 0; j < s; ++j) y(i, j) = x(i, j) * inv;
      }
      return;
    case Kind::SSOR: {
      if (rows.lo != 0 || rows.hi != x.rows())
        throw ConfigError("ssor apply requires the full row range");
      if (sweeps_ == 1) {
        apply_ssor_once(x, y);
        return;
      }
      BlockVector r(x.rows(), s), z(x.rows(), s);
      y.set_zero();
      for (int sweep = 0; sweep < sweeps_; ++sweep) {
        // r = x - A y
        for (int i = 0; i < x.rows(); ++i) {
          for (int j = 0; j < s; ++j) r(i, j) = x(i, j);
          for (long k = a_.row_offsets[i]; k < a_.row_offsets[i + 1]; ++k) {
            const double v = a_.vals[k];
            const double* yr = y.row(a_.cols[k]);
            for (int j = 0; j < s; ++j) r(i, j) -= v * yr[j];
          }
        }
        apply_ssor_once(r, z);
        for (int i = 0; i < x.rows(); ++i)
          for (int j = 0; j < s; ++j) y(i, j) += z(i, j);
      }
      return;
    }
    case Kind::ILU0:
      if (rows.lo != 0 || rows.hi != x.rows())
        throw ConfigError("ilu0 apply requires the full row range");
      apply_ilu0(x, y);
      return;
  }
}

void Preconditioner::apply_ssor_once(const BlockVector& x, BlockVector& y) const {
  const int n = a_.n, s = x.cols();
  const double w = omega_;
  // forward solve (D/w + L) u = x
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < s; ++j) y(i, j) = x(i, j);
    for (long k = a_.row_offsets[i]; k < a_.row_offsets[i + 1]; ++k) {
      const int c = a_.cols[k];
      if (c >= i) continue;
      const double v = a_.vals[k];
      const double* yr = y.row(c);
      for (int j = 0; j < s; ++j) y(i, j) -= v * yr[j];
    }
    const double inv = w / diag_[i];
    for (int j = 0; j < s; ++j) y(i, j) *= inv;
  }
  // scale by (2-w)/w * D
  for (int i = 0; i < n; ++i) {
    const double f = (2.0 - w) / w * diag_[i];
    for (int j = 0; j < s; ++j) y(i, j) *= f;
  }
  // backward solve (D/w + U) z = .
  for (int i = n - 1; i >= 0; --i) {
    for (long k = a_.row_offsets[i]; k < a_.row_offsets[i + 1]; ++k) {
      const int c = a_.cols[k];
      if (c <= i) continue;
      const double v = a_.vals[k];
      const double* yr = y.row(c);
      for (int j = 0; j < s; ++j) y(i, j) -= v * yr[j];
    }
    const double inv = w / diag_[i];
    for (int j = 0; j < s; ++j) y(i, j) *= inv;
  }
}

void Preconditioner::apply_ilu0(const BlockVector& x, BlockVector& y) const {
  const int n = lu_.n, s = x.cols();
  // L y = x with unit lower triangle
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < s; ++j) y(i, j) = x(i, j);
    for (long k = lu_.row_offsets[i]; k < lu_.row_offsets[i + 1]; ++k) {
      const int c = lu_.cols[k];
      if (c >= i) break;
      const double v = lu_.vals[k];
      const double* yr = y.row(c);
      for (int j = 0; j < s; ++j) y(i, j) -= v * yr[j];
    }
  }
  // U z = y
  for (int i = n - 1; i >= 0; --i) {
    double d = 1.0;
    for (long k = lu_.row_offsets[i + 1] - 1; k >= lu_.row_offsets[i]; --k) {
      const int c = lu_.cols[k];
      if (c < i) break;
      if (c == i) {
        d = lu_.vals[k];
        continue;
      }
      const double v = lu_.vals[k];
      const double* yr = y.row(c);
      for (int j = 0; j < s; ++j) y(i, j) -= v * yr[j];
    }
    const double inv = 1.0 / d;
    for (int j = 0; j < s; ++j) y(i, j) *= inv;
  }
}

void Preconditioner::apply_forward(const BlockVector& x, BlockVector& y) const {
  const int s = x.cols();
  switch (kind_) {
    case Kind::Identity:
      y = x;
      return;
    case Kind::Jacobi:
      for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < s; ++j) y(i, j) = x(i, j) * diag_[i];
      return;
    case Kind::SSOR: {
      if (sweeps_ != 1) throw ConfigError("apply_forward: multi-sweep ssor not supported");
      const int n = a_.n;
      const double w = omega_;
      BlockVector t(n, s);
      // t = (D/w + U) x
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < s; ++j) t(i, j) = diag_[i] / w * x(i, j);
        for (long k = a_.row_offsets[i]; k < a_.row_offsets[i + 1]; ++k) {
          const int c = a_.cols[k];
          if (c <= i) continue;
          for (int j = 0; j < s; ++j) t(i, j) += a_.vals[k] * x(c, j);
        }
      }
      // t <- w/(2-w) D^{-1} t
      for (int i = 0; i < n; ++i) {
        const double f = w / ((2.0 - w) * diag_[i]);
        for (int j = 0; j < s; ++j) t(i, j) *= f;
      }
      // y = (D/w + L) t
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < s; ++j) y(i, j) = diag_[i] / w * t(i, j);
        for (long k = a_.row_offsets[i]; k < a_.row_offsets[i + 1]; ++k) {
          const int c = a_.cols[k];
          if (c >= i) continue;
          for (int j = 0; j < s; ++j) y(i, j) += a_.vals[k] * t(c, j);
        }
      }
      return;
    }
    case Kind::ILU0: {
      const int n = lu_.n;
      BlockVector t(n, s);
      // t = U x
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < s; ++j) t(i, j) = 0.0;
        for (long k = lu_.row_offsets[i]; k < lu_.row_offsets[i + 1]; ++k) {
          const int c = lu_.cols[k];
          if (c < i) continue;
          for (int j = 0; j < s; ++j) t(i, j) += lu_.vals[k] * x(c, j);
        }
      }
      // y = L t (unit diagonal)
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < s; ++j) y(i, j) = t(i, j);
        for (long k = lu_.row_offsets[i]; k < lu_.row_offsets[i + 1]; ++k) {
          const int c = lu_.cols[k];
          if (c >= i) break;
          for (int j = 0; j < s; ++j) y(i, j) += lu_.vals[k] * t(c, j);
        }
      }
      return;
    }
  }
}

double Preconditioner::apply_flops(int nrows, int s) const {
  const double ns = static_cast<double>(nrows) * s;
  switch (kind_) {
    case Kind::Identity: return ns;  // modeled as one touch per value
    case Kind::Jacobi: return ns;
    case Kind::SSOR: {
      const double z = static_cast<double>(a_.nnz()) * nrows / std::max(1, a_.n);
      return sweeps_ * (4.0 * z + 2.0 * nrows) * s;
    }
    case Kind::ILU0: {
      const double z = static_cast<double>(lu_.nnz()) * nrows / std::max(1, lu_.n);
      return (4.0 * z + 2.0 * nrows) * s;
    }
  }
  return ns;
}

}  // namespace bkrylov
