#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "bkrylov/common.hpp"

namespace bkrylov {

/// Half-open row interval [lo, hi) owned by a logical rank.
struct RowRange {
  int lo = 0;
  int hi = 0;
  int size() const { return hi - lo; }
};

/// An n x s multivector in row-major storage (one row = one s-wide SIMD-style lane set).
class BlockVector {
public:
  BlockVector() = default;
  BlockVector(int n, int s) : n_(n), s_(s), d_(static_cast<size_t>(n) * s, 0.0) {
    if (n < 0 || s <= 0) throw ConfigError("BlockVector: invalid shape");
  }

  int rows() const { return n_; }
  int cols() const { return s_; }

  double& operator()(int i, int j) { return d_[static_cast<size_t>(i) * s_ + j]; }
  double operator()(int i, int j) const { return d_[static_cast<size_t>(i) * s_ + j]; }

  double* row(int i) { return d_.data() + static_cast<size_t>(i) * s_; }
  const double* row(int i) const { return d_.data() + static_cast<size_t>(i) * s_; }

  double* data() { return d_.data(); }
  const double* data() const { return d_.data(); }

  RowRange all_rows() const { return {0, n_}; }

  void set_zero() { std::memset(d_.data(), 0, d_.size() * sizeof(double)); }

  void copy_rows_from(const BlockVector& other, RowRange r) {
    std::memcpy(row(r.lo), other.row(r.lo), sizeof(double) * static_cast<size_t>(r.size()) * s_);
  }

  double frobenius_norm() const {
    double acc = 0.0;
    for (double v : d_) acc += v * v;
    return std::sqrt(acc);
  }

  bool finite() const {
    for (double v : d_)
      if (!std::isfinite(v)) return false;
    return true;
  }

private:
  int n_ = 0, s_ = 0;
  std::vector<double> d_;
};

}  // namespace bkrylov
