#include "bkrylov/kernels.hpp"

#include <cmath>
#include <cstring>

namespace bkrylov {

namespace {

inline long nnz_in_rows(const SparseOperator& a, RowRange rows) {
  return a.row_offsets[rows.hi] - a.row_offsets[rows.lo];
}

inline void count_bop(KernelCounters* c, const SparseOperator& a, int s, RowRange rows) {
  if (!c) return;
  const long z = nnz_in_rows(a, rows);
  const long long ns = static_cast<long long>(rows.size()) * s;
  c->flops += 2ll * s * z;
  c->values_loaded += 2ll * z + ns;
  c->values_stored += ns;
  c->bops += 1;
}

inline void count_block_update(KernelCounters* c, const AlgebraSpec& alg, RowRange rows) {
  if (!c) return;
  const long long n = rows.size();
  c->flops += 2ll * n * alg.p * alg.p * alg.q();
  c->values_loaded += 2ll * n * alg.s;
  c->values_stored += n * alg.s;
  c->baxpys += 1;
  c->vector_updates += 1;
}

}  // namespace

void bop(const SparseOperator& a, const BlockVector& x, BlockVector& y, KernelCounters* c,
         RowRange rows) {
  if (a.n != x.rows() || x.rows() != y.rows() || x.cols() != y.cols())
    throw ConfigError("bop: dimension mismatch");
  const int s = x.cols();
  for (int i = rows.lo; i < rows.hi; ++i) {
    double* yr = y.row(i);
    std::memset(yr, 0, sizeof(double) * s);
    for (long k = a.row_offsets[i]; k < a.row_offsets[i + 1]; ++k) {
      const double v = a.vals[k];
      const double* xr = x.row(a.cols[k]);
      for (int j = 0; j < s; ++j) yr[j] += v * xr[j];
    }
  }
  count_bop(c, a, s, rows);
}

void bop_add(const SparseOperator& a, const BlockVector& x, BlockVector& y, double sign,
             KernelCounters* c, RowRange rows) {
  if (a.n != x.rows() || x.rows() != y.rows() || x.cols() != y.cols())
    throw ConfigError("bop_add: dimension mismatch");
  const int s = x.cols();
  for (int i = rows.lo; i < rows.hi; ++i) {
    double* yr = y.row(i);
    for (long k = a.row_offsets[i]; k < a.row_offsets[i + 1]; ++k) {
      const double v = sign * a.vals[k];
      const double* xr = x.row(a.cols[k]);
      for (int j = 0; j < s; ++j) yr[j] += v * xr[j];
    }
  }
  count_bop(c, a, s, rows);
}

namespace {

// Chunk-local accumulation payload: q blocks of p*p for the independent
// variants, one representative p*p block for the replicated ones.
void accumulate_chunk(const BlockVector& x, const BlockVector& y, const AlgebraSpec& alg, int lo,
                      int hi, std::vector<double>& part) {
  const int p = alg.p, q = alg.q();
  std::fill(part.begin(), part.end(), 0.0);
  if (alg.replicated()) {
    for (int r = lo; r < hi; ++r) {
      const double* xr = x.row(r);
      const double* yr = y.row(r);
      for (int g = 0; g < q; ++g)
        for (int i = 0; i < p; ++i) {
          const double xv = xr[g * p + i];
          for (int j = 0; j < p; ++j) part[i * p + j] += xv * yr[g * p + j];
        }
    }
  } else {
    for (int r = lo; r < hi; ++r) {
      const double* xr = x.row(r);
      const double* yr = y.row(r);
      for (int g = 0; g < q; ++g) {
        double* blk = part.data() + static_cast<size_t>(g) * p * p;
        for (int i = 0; i < p; ++i) {
          const double xv = xr[g * p + i];
          for (int j = 0; j < p; ++j) blk[i * p + j] += xv * yr[g * p + j];
        }
      }
    }
  }
}

}  // namespace

SElement bdot_partial(const BlockVector& x, const BlockVector& y, AlgebraSpec alg,
                      KernelCounters* c, RowRange rows) {
  if (x.cols() != alg.s || y.cols() != alg.s || x.rows() != y.rows())
    throw ConfigError("bdot: dimension mismatch");
  const int p = alg.p, q = alg.q();
  const size_t psz = alg.replicated() ? static_cast<size_t>(p) * p
                                      : static_cast<size_t>(q) * p * p;
  // pairwise (binary-counter) combination of chunk partials: the reduction order
  // is a fixed tree over chunks, independent of any parallel decomposition
  std::vector<std::pair<int, std::vector<double>>> stack;
  std::vector<double> part(psz);
  for (int lo = rows.lo; lo < rows.hi; lo += kKernelChunkRows) {
    const int hi = std::min(lo + kKernelChunkRows, rows.hi);
    accumulate_chunk(x, y, alg, lo, hi, part);
    int level = 0;
    std::vector<double> cur = part;
    while (!stack.empty() && stack.back().first == level) {
      const auto& prev = stack.back().second;
      for (size_t i = 0; i < psz; ++i) cur[i] += prev[i];
      stack.pop_back();
      ++level;
    }
    stack.emplace_back(level, std::move(cur));
  }
  std::vector<double> total(psz, 0.0);
  for (auto it = stack.rbegin(); it != stack.rend(); ++it)
    for (size_t i = 0; i < psz; ++i) total[i] += it->second[i];

  SElement out(alg);
  if (alg.replicated()) {
    const double inv_q = 1.0 / q;
    for (int g = 0; g < q; ++g)
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) out.at(g * p + i, g * p + j) = total[i * p + j] * inv_q;
  } else {
    for (int g = 0; g < q; ++g)
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
          out.at(g * p + i, g * p + j) = total[(static_cast<size_t>(g) * p + i) * p + j];
  }
  if (c) {
    const long long n = rows.size();
    c->flops += 2ll * n * p * p * q;
    c->values_loaded += 2ll * n * alg.s;
    c->bdots += 1;
  }
  return out;
}

std::vector<double> colsumsq_partial(const BlockVector& x, const SElement* sigma,
                                     KernelCounters* c, RowRange rows) {
  const int s = x.cols();
  std::vector<double> acc(s, 0.0);
  if (!sigma) {
    for (int r = rows.lo; r < rows.hi; ++r) {
      const double* xr = x.row(r);
      for (int j = 0; j < s; ++j) acc[j] += xr[j] * xr[j];
    }
    if (c) {
      c->flops += 2ll * rows.size() * s;
      c->values_loaded += static_cast<long long>(rows.size()) * s;
    }
    return acc;
  }
  const AlgebraSpec& alg = sigma->algebra();
  const int p = alg.p, q = alg.q();
  for (int r = rows.lo; r < rows.hi; ++r) {
    const double* xr = x.row(r);
    for (int g = 0; g < q; ++g)
      for (int j = 0; j < p; ++j) {
        double w = 0.0;
        for (int i = 0; i < p; ++i) w += xr[g * p + i] * sigma->at(g * p + i, g * p + j);
        acc[g * p + j] += w * w;
      }
  }
  if (c) {
    c->flops += 2ll * rows.size() * (p * p * q + s);
    c->values_loaded += static_cast<long long>(rows.size()) * s;
  }
  return acc;
}

double fdot_partial(const BlockVector& x, const BlockVector& y, KernelCounters* c, RowRange rows) {
  const int s = x.cols();
  double acc = 0.0;
  for (int r = rows.lo; r < rows.hi; ++r) {
    const double* xr = x.row(r);
    const double* yr = y.row(r);
    for (int j = 0; j < s; ++j) acc += xr[j] * yr[j];
  }
  if (c) {
    c->flops += 2ll * rows.size() * s;
    c->values_loaded += 2ll * rows.size() * s;
  }
  return acc;
}

void baxpy(BlockVector& y, const BlockVector& x, const SElement& coeff, KernelCounters* c,
           RowRange rows) {
  const AlgebraSpec& alg = coeff.algebra();
  if (x.cols() != alg.s || y.cols() != alg.s) throw ConfigError("baxpy: dimension mismatch");
  const int p = alg.p, q = alg.q();
  for (int r = rows.lo; r < rows.hi; ++r) {
    const double* xr = x.row(r);
    double* yr = y.row(r);
    for (int g = 0; g < q; ++g)
      for (int j = 0; j < p; ++j) {
        double acc = 0.0;
        for (int i = 0; i < p; ++i) acc += xr[g * p + i] * coeff.at(g * p + i, g * p + j);
        yr[g * p + j] += acc;
      }
  }
  count_block_update(c, alg, rows);
}

void baxpy_scale(BlockVector& y, const SElement& coeff, const BlockVector& x, KernelCounters* c,
                 RowRange rows) {
  const AlgebraSpec& alg = coeff.algebra();
  if (x.cols() != alg.s || y.cols() != alg.s) throw ConfigError("baxpy_scale: dimension mismatch");
  const int p = alg.p, q = alg.q();
  std::vector<double> tmp(p);
  for (int r = rows.lo; r < rows.hi; ++r) {
    const double* xr = x.row(r);
    double* yr = y.row(r);
    for (int g = 0; g < q; ++g) {
      for (int j = 0; j < p; ++j) {
        double acc = 0.0;
        for (int i = 0; i < p; ++i) acc += yr[g * p + i] * coeff.at(g * p + i, g * p + j);
        tmp[j] = acc;
      }
      for (int j = 0; j < p; ++j) yr[g * p + j] = tmp[j] + xr[g * p + j];
    }
  }
  count_block_update(c, alg, rows);
}

void saxpy(BlockVector& y, double alpha, const BlockVector& x, KernelCounters* c, RowRange rows) {
  const int s = y.cols();
  for (int r = rows.lo; r < rows.hi; ++r) {
    const double* xr = x.row(r);
    double* yr = y.row(r);
    for (int j = 0; j < s; ++j) yr[j] += alpha * xr[j];
  }
  if (c) {
    c->flops += 2ll * rows.size() * s;
    c->values_loaded += 2ll * rows.size() * s;
    c->values_stored += static_cast<long long>(rows.size()) * s;
    c->baxpys += 1;
    c->vector_updates += 1;
  }
}

void scale_right(BlockVector& y, const SElement& coeff, KernelCounters* c, RowRange rows) {
  apply_right(y, coeff, rows);
  if (c) {
    const AlgebraSpec& alg = coeff.algebra();
    const long long n = rows.size();
    c->flops += 2ll * n * alg.p * alg.p * alg.q();
    c->values_loaded += static_cast<long long>(n) * alg.s;
    c->values_stored += static_cast<long long>(n) * alg.s;
    c->baxpys += 1;
    c->vector_updates += 1;
  }
}

BsaReport check_bsa(const SparseOperator& a, const Preconditioner& m, AlgebraSpec alg, int trials,
                    std::uint64_t seed) {
  BsaReport rep;
  rep.trials = trials;
  const int n = a.n, s = alg.s;
  BlockVector ax(n, s), max_(n, s), ay(n, s), my(n, s);
  for (int t = 0; t < trials; ++t) {
    BlockVector x = generate_rhs(n, s, seed + 2 * t);
    BlockVector y = generate_rhs(n, s, seed + 2 * t + 1);
    bop(a, x, ax, nullptr);
    m.apply(ax, max_);
    m.apply_forward(y, my);
    bop(a, y, ay, nullptr);
    const SElement lhs = block_inner_product(max_, my, alg);
    const SElement rhs = block_inner_product(x, ay, alg);
    const double scale = lhs.frobenius_norm() + rhs.frobenius_norm() + 1e-300;
    rep.max_residual = std::max(rep.max_residual, lhs.sub(rhs).frobenius_norm() / scale);
  }
  return rep;
}

namespace {

// Basis of the subalgebra as s x s patterns (unit entries, replicated for the
// global variants).
std::vector<SElement> algebra_basis(AlgebraSpec alg) {
  std::vector<SElement> basis;
  const int p = alg.p, q = alg.q();
  if (alg.replicated()) {
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) {
        SElement e(alg);
        for (int g = 0; g < q; ++g) e.at(g * p + i, g * p + j) = 1.0;
        basis.push_back(e);
      }
  } else {
    for (int g = 0; g < q; ++g)
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
          SElement e(alg);
          e.at(g * p + i, g * p + j) = 1.0;
          basis.push_back(e);
        }
  }
  return basis;
}

}  // namespace

BlockGradeResult block_grade_bruteforce(const SparseOperator& a, const BlockVector& r,
                                        AlgebraSpec alg, int kmax,
                                        const BlockVector* xstar_minus_x0) {
  const int n = a.n, s = alg.s;
  if (static_cast<long>(n) * s > 512) throw ConfigError("block_grade_bruteforce: n*s > 512");
  const auto basis = algebra_basis(alg);
  const int dim_s = static_cast<int>(basis.size());
  const size_t len = static_cast<size_t>(n) * s;

  std::vector<std::vector<double>> ortho;  // orthonormal basis of the span so far
  auto try_add = [&](std::vector<double> v) {
    double orig = 0.0;
    for (double t : v) orig += t * t;
    orig = std::sqrt(orig);
    if (orig == 0.0) return false;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& b : ortho) {
        double d = 0.0;
        for (size_t i = 0; i < len; ++i) d += b[i] * v[i];
        for (size_t i = 0; i < len; ++i) v[i] -= d * b[i];
      }
    double nr = 0.0;
    for (double t : v) nr += t * t;
    nr = std::sqrt(nr);
    if (nr <= 1e-10 * orig) return false;
    for (size_t i = 0; i < len; ++i) v[i] /= nr;
    ortho.push_back(std::move(v));
    return true;
  };

  BlockGradeResult out;
  BlockVector cur = r;         // A^k R
  BlockVector next(n, s);
  int prev_dim = 0;
  out.nu = 0;
  out.xi = 0;
  bool nu_found = false, xi_found = false;
  std::vector<double> flat(len);
  for (int k = 1; k <= kmax + 1; ++k) {
    // add level k-1: span of A^{k-1} R c over the algebra basis
    for (const auto& e : basis) {
      BlockVector cand = cur;
      apply_right(cand, e, cand.all_rows());
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < s; ++j) flat[static_cast<size_t>(i) * s + j] = cand(i, j);
      try_add(flat);
    }
    const int dim_k = static_cast<int>(ortho.size());  // dim K^k
    if (!nu_found && dim_k == prev_dim) {
      out.nu = k - 1;
      nu_found = true;
    }
    if (!xi_found && dim_k < k * dim_s) {
      out.xi = k;
      xi_found = true;
    }
    if (nu_found && xi_found) break;
    prev_dim = dim_k;
    if (k <= kmax) {
      bop(a, cur, next, nullptr);
      std::swap(cur, next);
    }
  }
  if (!nu_found) {
    out.nu = kmax;
    out.nu_exact = false;
  }
  if (!xi_found) out.xi = kmax + 1;
  if (xstar_minus_x0) {
    std::vector<double> v(len);
    double orig = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < s; ++j) {
        v[static_cast<size_t>(i) * s + j] = (*xstar_minus_x0)(i, j);
        orig += (*xstar_minus_x0)(i, j) * (*xstar_minus_x0)(i, j);
      }
    orig = std::sqrt(orig);
    for (const auto& b : ortho) {
      double d = 0.0;
      for (size_t i = 0; i < len; ++i) d += b[i] * v[i];
      for (size_t i = 0; i < len; ++i) v[i] -= d * b[i];
    }
    double rem = 0.0;
    for (double t : v) rem += t * t;
    out.solution_in_span = std::sqrt(rem) <= 1e-8 * (orig + 1e-300);
  }
  return out;
}

}  // namespace bkrylov
