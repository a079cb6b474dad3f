#include "bkrylov/dense.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "bkrylov/common.hpp"

namespace bkrylov::dense {

namespace {

// Apply the reflector stored in v[j..m) to column c of the m x k row-major w.
inline void reflect_col(int m, int k, double* w, const double* v, int j, int c) {
  double dot = 0.0;
  for (int i = j; i < m; ++i) dot += v[i] * w[i * k + c];
  dot *= 2.0;
  for (int i = j; i < m; ++i) w[i * k + c] -= dot * v[i];
}

// QR of a copied into w (m x k). Reflectors returned in vs (one per step),
// vs[j] empty when the remaining column was exactly zero.
void factor(int m, int k, const double* a, double* w, std::vector<std::vector<double>>& vs) {
  std::memcpy(w, a, sizeof(double) * static_cast<size_t>(m) * k);
  const int steps = std::min(m, k);
  vs.assign(steps, {});
  for (int j = 0; j < steps; ++j) {
    double norm_x = 0.0;
    for (int i = j; i < m; ++i) norm_x += w[i * k + j] * w[i * k + j];
    norm_x = std::sqrt(norm_x);
    if (norm_x == 0.0) continue;  // rank-deficient column, no reflection
    auto& v = vs[j];
    v.assign(m, 0.0);
    for (int i = j; i < m; ++i) v[i] = w[i * k + j];
    v[j] += (w[j * k + j] >= 0.0 ? norm_x : -norm_x);
    double norm_v = 0.0;
    for (int i = j; i < m; ++i) norm_v += v[i] * v[i];
    norm_v = std::sqrt(norm_v);
    if (norm_v == 0.0) { v.clear(); continue; }
    for (int i = j; i < m; ++i) v[i] /= norm_v;
    for (int c = j; c < k; ++c) reflect_col(m, k, w, v.data(), j, c);
    // clean the eliminated entries exactly
    for (int i = j + 1; i < m; ++i) w[i * k + j] = 0.0;
  }
}

}  // namespace

void householder_qr_thin(int m, int k, const double* a, double* q, double* r) {
  std::vector<double> w(static_cast<size_t>(m) * k);
  std::vector<std::vector<double>> vs;
  factor(m, k, a, w.data(), vs);
  const int steps = std::min(m, k);
  // R = leading k x k of w (zero-filled below the triangle / past row m)
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) r[i * k + j] = (i <= j && i < m) ? w[i * k + j] : 0.0;
  // Q = H_0 ... H_{steps-1} applied to the first k identity columns
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) q[i * k + j] = (i == j) ? 1.0 : 0.0;
  for (int j = steps - 1; j >= 0; --j)
    if (!vs[j].empty())
      for (int c = 0; c < k; ++c) reflect_col(m, k, q, vs[j].data(), j, c);
  // sign convention: nonnegative diagonal of R
  for (int j = 0; j < std::min(m, k); ++j) {
    if (r[j * k + j] < 0.0) {
      for (int c = j; c < k; ++c) r[j * k + c] = -r[j * k + c];
      for (int i = 0; i < m; ++i) q[i * k + j] = -q[i * k + j];
    }
  }
}

void householder_qr_full(int m, int k, const double* a, double* q, double* r) {
  std::vector<double> w(static_cast<size_t>(m) * k);
  std::vector<std::vector<double>> vs;
  factor(m, k, a, w.data(), vs);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) r[i * k + j] = (i <= j) ? w[i * k + j] : 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) q[i * m + j] = (i == j) ? 1.0 : 0.0;
  for (int j = static_cast<int>(vs.size()) - 1; j >= 0; --j)
    if (!vs[j].empty())
      for (int c = 0; c < m; ++c) reflect_col(m, m, q, vs[j].data(), j, c);
  for (int j = 0; j < std::min(m, k); ++j) {
    if (r[j * k + j] < 0.0) {
      for (int c = j; c < k; ++c) r[j * k + c] = -r[j * k + c];
      for (int i = 0; i < m; ++i) q[i * m + j] = -q[i * m + j];
    }
  }
}

std::vector<double> symmetric_eigenvalues(int k, const double* a) {
  std::vector<double> m(a, a + static_cast<size_t>(k) * k);
  auto at = [&](int i, int j) -> double& { return m[i * k + j]; };
  double off = 0.0, scale = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      scale += std::abs(m[i * k + j]);
      if (i != j) off += m[i * k + j] * m[i * k + j];
    }
  const double tol = 1e-30 + 1e-28 * scale * scale;
  for (int sweep = 0; sweep < 64 && off > tol; ++sweep) {
    for (int p = 0; p < k - 1; ++p) {
      for (int q = p + 1; q < k; ++q) {
        const double apq = at(p, q);
        if (apq == 0.0) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int i = 0; i < k; ++i) {
          const double mip = at(i, p), miq = at(i, q);
          at(i, p) = c * mip - s * miq;
          at(i, q) = s * mip + c * miq;
        }
        for (int i = 0; i < k; ++i) {
          const double mpi = at(p, i), mqi = at(q, i);
          at(p, i) = c * mpi - s * mqi;
          at(q, i) = s * mpi + c * mqi;
        }
      }
    }
    off = 0.0;
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j)
        if (i != j) off += m[i * k + j] * m[i * k + j];
  }
  std::vector<double> ev(k);
  for (int i = 0; i < k; ++i) ev[i] = at(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

void invert(int k, double* a, double pivot_tol) {
  std::vector<int> perm(k);
  std::vector<double> lu(a, a + static_cast<size_t>(k) * k);
  for (int i = 0; i < k; ++i) perm[i] = i;
  for (int c = 0; c < k; ++c) {
    int piv = c;
    for (int i = c + 1; i < k; ++i)
      if (std::abs(lu[i * k + c]) > std::abs(lu[piv * k + c])) piv = i;
    if (std::abs(lu[piv * k + c]) < pivot_tol)
      throw SingularError("singular element in invert", std::abs(lu[piv * k + c]));
    if (piv != c) {
      for (int j = 0; j < k; ++j) std::swap(lu[c * k + j], lu[piv * k + j]);
      std::swap(perm[c], perm[piv]);
    }
    const double d = lu[c * k + c];
    for (int i = c + 1; i < k; ++i) {
      const double f = lu[i * k + c] / d;
      lu[i * k + c] = f;
      for (int j = c + 1; j < k; ++j) lu[i * k + j] -= f * lu[c * k + j];
    }
  }
  // solve for each unit vector
  std::vector<double> x(k), y(k);
  std::vector<double> inv(static_cast<size_t>(k) * k);
  for (int e = 0; e < k; ++e) {
    for (int i = 0; i < k; ++i) y[i] = (perm[i] == e) ? 1.0 : 0.0;
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < i; ++j) y[i] -= lu[i * k + j] * y[j];
    for (int i = k - 1; i >= 0; --i) {
      x[i] = y[i];
      for (int j = i + 1; j < k; ++j) x[i] -= lu[i * k + j] * x[j];
      x[i] /= lu[i * k + i];
    }
    for (int i = 0; i < k; ++i) inv[i * k + e] = x[i];
  }
  std::memcpy(a, inv.data(), sizeof(double) * static_cast<size_t>(k) * k);
}

void gemm(int k, const double* a, bool ta, const double* b, bool tb, double* c) {
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      double acc = 0.0;
      for (int l = 0; l < k; ++l) {
        const double av = ta ? a[l * k + i] : a[i * k + l];
        const double bv = tb ? b[j * k + l] : b[l * k + j];
        acc += av * bv;
      }
      c[i * k + j] = acc;
    }
}

}  // namespace bkrylov::dense
