#include "bkrylov/spmd.hpp"

namespace bkrylov::spmd {

void bop(Rank& r, const SparseOperator& a, const BlockVector& x, BlockVector& y) {
  r.barrier();  // remote rows of x must be settled
  KernelCounters local;
  bkrylov::bop(a, x, y, &local, r.rows());
  r.charge_kernel(local);
  r.add_work_flops(static_cast<double>(local.flops));
  r.barrier();  // nobody may overwrite x before all ranks read it
}

void bop_scale_add(Rank& r, const SparseOperator& a, const BlockVector& x, BlockVector& y,
                   const SElement& coeff) {
  r.barrier();
  KernelCounters local;
  scale_right(y, coeff, &local, r.rows());
  bkrylov::bop_add(a, x, y, 1.0, &local, r.rows());
  r.charge_kernel(local);
  r.add_work_flops(static_cast<double>(local.flops));
  r.barrier();
}

void residual(Rank& r, const SparseOperator& a, const BlockVector& b, const BlockVector& x,
              BlockVector& out) {
  r.barrier();
  KernelCounters local;
  out.copy_rows_from(b, r.rows());
  bkrylov::bop_add(a, x, out, -1.0, &local, r.rows());
  r.charge_kernel(local);
  r.add_work_flops(static_cast<double>(local.flops));
  r.barrier();
}

void precond(Rank& r, const Preconditioner& m, const BlockVector& x, BlockVector& y) {
  KernelCounters local;
  if (m.row_local()) {
    m.apply(x, y, r.rows());
    local.flops = static_cast<long long>(m.apply_flops(r.rows().size(), x.cols()));
  } else {
    // global recurrence: computed once, work charged as every rank's 1/P share
    r.barrier();
    if (r.id() == 0) m.apply(x, y);
    local.flops = static_cast<long long>(m.apply_flops(x.rows(), x.cols()) / r.nranks());
    r.barrier();
  }
  local.values_loaded = static_cast<long long>(r.rows().size()) * x.cols();
  local.values_stored = local.values_loaded;
  r.charge_kernel(local);
  r.add_work_flops(static_cast<double>(local.flops));
}

SElement bdot_local(Rank& r, const BlockVector& x, const BlockVector& y, AlgebraSpec alg) {
  KernelCounters local;
  SElement e = bdot_partial(x, y, alg, &local, r.rows());
  r.charge_kernel(local);
  r.add_work_flops(static_cast<double>(local.flops));
  return e;
}

std::vector<double> colsumsq_local(Rank& r, const BlockVector& x, const SElement* sigma) {
  KernelCounters local;
  auto v = colsumsq_partial(x, sigma, &local, r.rows());
  r.charge_kernel(local);
  r.add_work_flops(static_cast<double>(local.flops));
  return v;
}

double fdot_local(Rank& r, const BlockVector& x, const BlockVector& y) {
  KernelCounters local;
  const double v = fdot_partial(x, y, &local, r.rows());
  r.charge_kernel(local);
  r.add_work_flops(static_cast<double>(local.flops));
  return v;
}

void baxpy(Rank& r, BlockVector& y, const BlockVector& x, const SElement& coeff) {
  KernelCounters local;
  bkrylov::baxpy(y, x, coeff, &local, r.rows());
  r.charge_kernel(local);
  r.add_work_flops(static_cast<double>(local.flops));
}

void baxpy_scale(Rank& r, BlockVector& y, const SElement& coeff, const BlockVector& x) {
  KernelCounters local;
  bkrylov::baxpy_scale(y, coeff, x, &local, r.rows());
  r.charge_kernel(local);
  r.add_work_flops(static_cast<double>(local.flops));
}

void saxpy(Rank& r, BlockVector& y, double alpha, const BlockVector& x) {
  KernelCounters local;
  bkrylov::saxpy(y, alpha, x, &local, r.rows());
  r.charge_kernel(local);
  r.add_work_flops(static_cast<double>(local.flops));
}

void copy(Rank& r, BlockVector& dst, const BlockVector& src) {
  dst.copy_rows_from(src, r.rows());
}

}  // namespace bkrylov::spmd
