#include "bkrylov/salgebra.hpp"

#include <cfloat>
#include <cmath>
#include <cstring>

#include "bkrylov/dense.hpp"

namespace bkrylov {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Parallel: return "parallel";
    case Variant::Global: return "global";
    case Variant::Block: return "block";
    case Variant::BlockParallel: return "block-parallel";
    case Variant::BlockGlobal: return "block-global";
  }
  return "?";
}

AlgebraSpec::AlgebraSpec(Variant v, int s_, int p_) : variant(v), s(s_), p(p_) {
  if (s <= 0) throw ConfigError("AlgebraSpec: s must be positive");
  if (v == Variant::Parallel || v == Variant::Global) p = 1;
  if (v == Variant::Block) p = s;
  if (p <= 0 || s % p != 0)
    throw ConfigError("AlgebraSpec: p=" + std::to_string(p) + " must divide s=" +
                      std::to_string(s));
}

AlgebraSpec AlgebraSpec::parse(const std::string& text, int s) {
  if (text == "p" || text == "parallel") return parallel(s);
  if (text == "g" || text == "global") return global(s);
  if (text == "b" || text == "block") return block(s);
  auto colon = text.find(':');
  if (colon != std::string::npos) {
    const std::string head = text.substr(0, colon);
    const int p = std::stoi(text.substr(colon + 1));
    if (head == "bp") return block_parallel(s, p);
    if (head == "bg") return block_global(s, p);
  }
  throw ConfigError("unknown algebra '" + text + "' (expected p|g|b|bp:<p>|bg:<p>)");
}

std::string AlgebraSpec::name() const {
  std::string n = variant_name(variant);
  if (variant == Variant::BlockParallel || variant == Variant::BlockGlobal)
    n += ":" + std::to_string(p);
  return n;
}

SElement SElement::identity(AlgebraSpec a) { return scaled_identity(a, 1.0); }

SElement SElement::scaled_identity(AlgebraSpec a, double value) {
  SElement e(a);
  for (int i = 0; i < a.s; ++i) e.at(i, i) = value;
  return e;
}

namespace {

// Iterate the independent diagonal blocks: one representative block for the
// replicated variants, q blocks otherwise.
inline int independent_blocks(const AlgebraSpec& a) { return a.replicated() ? 1 : a.q(); }

inline void replicate_blocks(SElement& e) {
  const AlgebraSpec& a = e.algebra();
  if (!a.replicated() || a.q() == 1) return;
  for (int g = 1; g < a.q(); ++g)
    for (int i = 0; i < a.p; ++i)
      for (int j = 0; j < a.p; ++j) e.at(g * a.p + i, g * a.p + j) = e.at(i, j);
}

}  // namespace

SElement SElement::multiply(const SElement& rhs) const {
  if (a_ != rhs.a_) throw ConfigError("SElement::multiply: algebra mismatch");
  SElement out(a_);
  const int p = a_.p;
  std::vector<double> ab(static_cast<size_t>(p) * p), bb(ab), cb(ab);
  for (int g = 0; g < independent_blocks(a_); ++g) {
    const int o = g * p;
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) {
        ab[i * p + j] = at(o + i, o + j);
        bb[i * p + j] = rhs.at(o + i, o + j);
      }
    dense::gemm(p, ab.data(), false, bb.data(), false, cb.data());
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) out.at(o + i, o + j) = cb[i * p + j];
  }
  replicate_blocks(out);
  return out;
}

SElement SElement::add(const SElement& rhs) const {
  if (a_ != rhs.a_) throw ConfigError("SElement::add: algebra mismatch");
  SElement out = *this;
  out.add_in_place(rhs);
  return out;
}

SElement SElement::sub(const SElement& rhs) const {
  if (a_ != rhs.a_) throw ConfigError("SElement::sub: algebra mismatch");
  SElement out = *this;
  for (size_t i = 0; i < d_.size(); ++i) out.d_[i] -= rhs.d_[i];
  return out;
}

SElement SElement::scaled(double f) const {
  SElement out = *this;
  out.scale_in_place(f);
  return out;
}

void SElement::add_in_place(const SElement& rhs) {
  for (size_t i = 0; i < d_.size(); ++i) d_[i] += rhs.d_[i];
}

void SElement::scale_in_place(double f) {
  for (double& v : d_) v *= f;
}

SElement SElement::transposed() const {
  SElement out(a_);
  const int p = a_.p;
  for (int g = 0; g < a_.q(); ++g)
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) out.at(g * p + i, g * p + j) = at(g * p + j, g * p + i);
  return out;
}

SElement SElement::inverse() const {
  const double tol = 1e3 * DBL_EPSILON * frobenius_norm();
  SElement out = *this;
  const int p = a_.p;
  std::vector<double> blk(static_cast<size_t>(p) * p);
  for (int g = 0; g < independent_blocks(a_); ++g) {
    const int o = g * p;
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) blk[i * p + j] = at(o + i, o + j);
    dense::invert(p, blk.data(), tol > 0.0 ? tol : DBL_MIN);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) out.at(o + i, o + j) = blk[i * p + j];
  }
  replicate_blocks(out);
  return out;
}

double SElement::frobenius_norm() const {
  double acc = 0.0;
  for (double v : d_) acc += v * v;
  return std::sqrt(acc);
}

double SElement::max_column_norm() const {
  double best = 0.0;
  for (int j = 0; j < a_.s; ++j) {
    double acc = 0.0;
    for (int i = 0; i < a_.s; ++i) acc += at(i, j) * at(i, j);
    best = std::max(best, acc);
  }
  return std::sqrt(best);
}

std::vector<double> SElement::column_norms() const {
  std::vector<double> out(a_.s, 0.0);
  for (int j = 0; j < a_.s; ++j) {
    double acc = 0.0;
    for (int i = 0; i < a_.s; ++i) acc += at(i, j) * at(i, j);
    out[j] = std::sqrt(acc);
  }
  return out;
}

double SElement::trace() const {
  double acc = 0.0;
  for (int i = 0; i < a_.s; ++i) acc += at(i, i);
  return acc;
}

bool SElement::pattern_ok() const {
  const int p = a_.p, s = a_.s;
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j)
      if (i / p != j / p && at(i, j) != 0.0) return false;
  if (a_.replicated()) {
    for (int g = 1; g < a_.q(); ++g)
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
          if (at(g * p + i, g * p + j) != at(i, j)) return false;
  }
  return true;
}

double SElement::deviation_from_identity() const {
  double best = 0.0;
  for (int i = 0; i < a_.s; ++i)
    for (int j = 0; j < a_.s; ++j) best = std::max(best, std::abs(at(i, j) - (i == j ? 1.0 : 0.0)));
  return best;
}

bool SElement::diagonal_nonzero(double tol) const {
  for (int i = 0; i < a_.s; ++i)
    if (std::abs(at(i, i)) <= tol) return false;
  return true;
}

SElement block_inner_product(const BlockVector& x, const BlockVector& y, AlgebraSpec a) {
  return block_inner_product(x, y, a, x.all_rows());
}

SElement block_inner_product(const BlockVector& x, const BlockVector& y, AlgebraSpec a,
                             RowRange rows) {
  if (x.cols() != a.s || y.cols() != a.s || x.rows() != y.rows())
    throw ConfigError("block_inner_product: dimension mismatch");
  SElement out(a);
  const int p = a.p, q = a.q();
  if (a.replicated()) {
    std::vector<double> rep(static_cast<size_t>(p) * p, 0.0);
    for (int r = rows.lo; r < rows.hi; ++r) {
      const double* xr = x.row(r);
      const double* yr = y.row(r);
      for (int g = 0; g < q; ++g)
        for (int i = 0; i < p; ++i)
          for (int j = 0; j < p; ++j) rep[i * p + j] += xr[g * p + i] * yr[g * p + j];
    }
    const double inv_q = 1.0 / q;
    for (int g = 0; g < q; ++g)
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) out.at(g * p + i, g * p + j) = rep[i * p + j] * inv_q;
  } else {
    for (int r = rows.lo; r < rows.hi; ++r) {
      const double* xr = x.row(r);
      const double* yr = y.row(r);
      for (int g = 0; g < q; ++g)
        for (int i = 0; i < p; ++i)
          for (int j = 0; j < p; ++j)
            out.at(g * p + i, g * p + j) += xr[g * p + i] * yr[g * p + j];
    }
  }
  return out;
}

SElement normalize_in_place(BlockVector& x, AlgebraSpec a) {
  return normalize_in_place(x, a, x.all_rows());
}

SElement normalize_in_place(BlockVector& x, AlgebraSpec a, RowRange rows) {
  if (x.cols() != a.s) throw ConfigError("normalize: column count != algebra s");
  const int m = rows.size(), p = a.p, q = a.q();
  for (int r = rows.lo; r < rows.hi; ++r)
    for (int j = 0; j < a.s; ++j)
      if (!std::isfinite(x(r, j))) throw ConfigError("normalize: non-finite input");
  SElement sigma(a);
  if (!a.replicated()) {
    if (m < p) throw ConfigError("normalize: fewer rows than block width");
    std::vector<double> slab(static_cast<size_t>(m) * p), qf(slab), rf(static_cast<size_t>(p) * p);
    for (int g = 0; g < q; ++g) {
      for (int r = 0; r < m; ++r)
        for (int j = 0; j < p; ++j) slab[r * p + j] = x(rows.lo + r, g * p + j);
      dense::householder_qr_thin(m, p, slab.data(), qf.data(), rf.data());
      for (int r = 0; r < m; ++r)
        for (int j = 0; j < p; ++j) x(rows.lo + r, g * p + j) = qf[r * p + j];
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) sigma.at(g * p + i, g * p + j) = rf[i * p + j];
    }
  } else {
    // stack the q column groups, factor once, sigma = I_q (x) rho/sqrt(q), Q *= sqrt(q)
    if (m * q < p) throw ConfigError("normalize: fewer stacked rows than block width");
    std::vector<double> slab(static_cast<size_t>(m) * q * p);
    std::vector<double> qf(slab.size()), rf(static_cast<size_t>(p) * p);
    for (int g = 0; g < q; ++g)
      for (int r = 0; r < m; ++r)
        for (int j = 0; j < p; ++j)
          slab[(static_cast<size_t>(g) * m + r) * p + j] = x(rows.lo + r, g * p + j);
    dense::householder_qr_thin(m * q, p, slab.data(), qf.data(), rf.data());
    const double rq = std::sqrt(static_cast<double>(q));
    for (int g = 0; g < q; ++g)
      for (int r = 0; r < m; ++r)
        for (int j = 0; j < p; ++j)
          x(rows.lo + r, g * p + j) = rq * qf[(static_cast<size_t>(g) * m + r) * p + j];
    for (int g = 0; g < q; ++g)
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) sigma.at(g * p + i, g * p + j) = rf[i * p + j] / rq;
  }
  return sigma;
}

std::pair<BlockVector, SElement> normalize(const BlockVector& x, AlgebraSpec a) {
  BlockVector q = x;
  SElement sigma = normalize_in_place(q, a);
  return {std::move(q), std::move(sigma)};
}

void apply_right(BlockVector& x, const SElement& c, RowRange rows) {
  const AlgebraSpec& a = c.algebra();
  if (x.cols() != a.s) throw ConfigError("apply_right: dimension mismatch");
  const int p = a.p, q = a.q();
  std::vector<double> tmp(p);
  for (int r = rows.lo; r < rows.hi; ++r) {
    double* xr = x.row(r);
    for (int g = 0; g < q; ++g) {
      for (int j = 0; j < p; ++j) {
        double acc = 0.0;
        for (int i = 0; i < p; ++i) acc += xr[g * p + i] * c.at(g * p + i, g * p + j);
        tmp[j] = acc;
      }
      for (int j = 0; j < p; ++j) xr[g * p + j] = tmp[j];
    }
  }
}

double kappa_diag_scaled(const SElement& c) {
  const AlgebraSpec& a = c.algebra();
  for (int i = 0; i < a.s; ++i)
    if (!(c.at(i, i) > 0.0))
      throw SingularError("kappa_diag_scaled: nonpositive diagonal entry", c.at(i, i));
  if (a.p == 1) return 1.0;  // diagonal pattern: scaled matrix is the identity
  const int p = a.p;
  double lo = HUGE_VAL, hi = 0.0;
  std::vector<double> blk(static_cast<size_t>(p) * p);
  const int nblocks = a.replicated() ? 1 : a.q();
  for (int g = 0; g < nblocks; ++g) {
    const int o = g * p;
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j)
        blk[i * p + j] = c.at(o + i, o + j) / std::sqrt(c.at(o + i, o + i) * c.at(o + j, o + j));
    for (double ev : dense::symmetric_eigenvalues(p, blk.data())) {
      lo = std::min(lo, std::abs(ev));
      hi = std::max(hi, std::abs(ev));
    }
  }
  if (lo == 0.0) return HUGE_VAL;
  return hi / lo;
}

namespace {

// Canonical (family, p): family 0 = block-parallel chain, 1 = block-global chain.
// Block and BlockGlobal(p=s) collapse to (0, s).
std::pair<int, int> canon(const AlgebraSpec& a) {
  switch (a.variant) {
    case Variant::Parallel: return {0, 1};
    case Variant::Global: return {1, 1};
    case Variant::Block: return {0, a.s};
    case Variant::BlockParallel: return {0, a.p};
    case Variant::BlockGlobal: return a.p == a.s ? std::pair<int, int>{0, a.s}
                                                 : std::pair<int, int>{1, a.p};
  }
  return {0, 1};
}

}  // namespace

bool contains(AlgebraSpec small, AlgebraSpec big) {
  if (small.s != big.s) throw ConfigError("contains: mismatched s");
  auto [fa, pa] = canon(small);
  auto [fb, pb] = canon(big);
  if (pb % pa != 0) return false;
  // BG(p1) <= BG(p2) and BG(p1) <= BP(p2) hold for p1 | p2; BP never embeds in a
  // proper BG (independent blocks cannot be forced identical).
  if (fa == 0 && fb == 1) return false;
  return true;
}

SElement embed(const SElement& c, AlgebraSpec big) {
  if (!contains(c.algebra(), big)) throw ConfigError("embed: algebra not contained");
  SElement out(big);
  for (int i = 0; i < big.s; ++i)
    for (int j = 0; j < big.s; ++j) out.at(i, j) = c.at(i, j);
  return out;
}

}  // namespace bkrylov
