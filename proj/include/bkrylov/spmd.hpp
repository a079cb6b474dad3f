#pragma once

#include "bkrylov/comms.hpp"
#include "bkrylov/kernels.hpp"
#include "bkrylov/precond.hpp"

namespace bkrylov::spmd {

// Rank-aware kernel wrappers: each rank computes its owned rows, charges its
// share of virtual work, and adds its share to the world's kernel counters.
// Logical per-op counts (bops/bdots/vector_updates) are incremented once, by
// rank 0. Kernels that read remote rows (operator application, recurrence-type
// preconditioners) are bracketed by barriers; everything else is row-local.

void bop(Rank& r, const SparseOperator& a, const BlockVector& x, BlockVector& y);
/// y = y*coeff + A x, fused so Gropp-style updates need no extra buffer.
void bop_scale_add(Rank& r, const SparseOperator& a, const BlockVector& x, BlockVector& y,
                   const SElement& coeff);
void residual(Rank& r, const SparseOperator& a, const BlockVector& b, const BlockVector& x,
              BlockVector& out);  ///< out = b - A x
void precond(Rank& r, const Preconditioner& m, const BlockVector& x, BlockVector& y);

/// Local BDOT contribution over owned rows (to be fused into a reduction payload).
SElement bdot_local(Rank& r, const BlockVector& x, const BlockVector& y, AlgebraSpec alg);
std::vector<double> colsumsq_local(Rank& r, const BlockVector& x, const SElement* sigma);
double fdot_local(Rank& r, const BlockVector& x, const BlockVector& y);

void baxpy(Rank& r, BlockVector& y, const BlockVector& x, const SElement& coeff);
void baxpy_scale(Rank& r, BlockVector& y, const SElement& coeff, const BlockVector& x);
void saxpy(Rank& r, BlockVector& y, double alpha, const BlockVector& x);
void copy(Rank& r, BlockVector& dst, const BlockVector& src);

// --- fused reduction payloads ------------------------------------------------

/// Incrementally packed allreduce payload: SElements and scalar groups.
class Payload {
public:
  void put(const SElement& e) { append(e.raw()); }
  void put(const std::vector<double>& v) { append(v); }
  void put(double v) { data_.push_back(v); }
  std::vector<double> take() { return std::move(data_); }

private:
  void append(const std::vector<double>& v) { data_.insert(data_.end(), v.begin(), v.end()); }
  std::vector<double> data_;
};

/// Sequential unpacker for the reduced payload.
class Unpacker {
public:
  explicit Unpacker(std::vector<double> data) : data_(std::move(data)) {}
  SElement get_element(AlgebraSpec alg) {
    SElement e(alg);
    const size_t n = e.raw().size();
    std::copy(data_.begin() + pos_, data_.begin() + pos_ + n, e.raw().begin());
    pos_ += n;
    return e;
  }
  std::vector<double> get_vector(size_t n) {
    std::vector<double> v(data_.begin() + pos_, data_.begin() + pos_ + n);
    pos_ += n;
    return v;
  }
  double get_scalar() { return data_[pos_++]; }

private:
  std::vector<double> data_;
  size_t pos_ = 0;
};

}  // namespace bkrylov::spmd
