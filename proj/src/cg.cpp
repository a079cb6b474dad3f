#include "bkrylov/cg.hpp"

#include <cfloat>
#include <cmath>

#include "bkrylov/spmd.hpp"

namespace bkrylov {

std::string cg_variant_name(CgVariant v) {
  switch (v) {
    case CgVariant::Classic: return "classic";
    case CgVariant::TwoReduction: return "2r";
    case CgVariant::OneReduction: return "1r";
    case CgVariant::Gropp: return "gropp";
    case CgVariant::PartiallyPipelined: return "ppbcg";
    case CgVariant::Ghysels: return "ghysels";
  }
  return "?";
}

CgVariant parse_cg_variant(const std::string& text) {
  if (text == "classic") return CgVariant::Classic;
  if (text == "2r") return CgVariant::TwoReduction;
  if (text == "1r") return CgVariant::OneReduction;
  if (text == "gropp") return CgVariant::Gropp;
  if (text == "ppbcg") return CgVariant::PartiallyPipelined;
  if (text == "ghysels") return CgVariant::Ghysels;
  throw ConfigError("unknown cg variant '" + text + "'");
}

double chebyshev_bound(double kappa, int k, double e0_norm) {
  if (kappa < 1.0) throw ConfigError("chebyshev_bound: kappa must be >= 1");
  const double r = (std::sqrt(kappa) - 1.0) / (std::sqrt(kappa) + 1.0);
  return 2.0 * std::pow(r, k) * e0_norm;
}

namespace {

// eta * kappa_D(alpha) is compared against 1/sqrt(eps_mach); kappa_D >= 1, so a
// literal sqrt(eps_mach) threshold would fire on every iteration for any eta.
constexpr double kReorthoThreshold = 6.7108864e7;  // 1/sqrt(eps_mach)

bool reortho_trigger(double eta, const SElement& alpha) {
  if (eta <= 0.0) return false;
  try {
    return eta * kappa_diag_scaled(alpha) > kReorthoThreshold;
  } catch (const SingularError&) {
    return true;  // loss of definiteness is the strongest possible signal
  }
}

struct Norms {
  std::vector<double> cols;
  double frob = 0.0;
  double maxcol = 0.0;
};

Norms norms_from_sumsq(const std::vector<double>& sumsq) {
  Norms n;
  n.cols.resize(sumsq.size());
  double acc = 0.0;
  for (size_t i = 0; i < sumsq.size(); ++i) {
    n.cols[i] = std::sqrt(sumsq[i]);
    acc += sumsq[i];
    n.maxcol = std::max(n.maxcol, n.cols[i]);
  }
  n.frob = std::sqrt(acc);
  return n;
}

Norms norms_from_sigma(const SElement& sigma) {
  Norms n;
  n.cols = sigma.column_norms();
  n.frob = sigma.frobenius_norm();
  for (double c : n.cols) n.maxcol = std::max(n.maxcol, c);
  return n;
}

struct ConvState {
  std::vector<double> col0;
  double frob0 = 0.0;
};

bool check_converged(const CgConfig& cfg, const ConvState& cs, const Norms& n) {
  if (cfg.norm_kind == CgConfig::NormKind::Frobenius) {
    const double base = cfg.relative && cs.frob0 > 0.0 ? cs.frob0 : 1.0;
    return n.frob <= cfg.eps_tol * base;
  }
  if (!cfg.relative) return n.maxcol <= cfg.eps_tol;
  double worst = 0.0;
  for (size_t i = 0; i < n.cols.size(); ++i) {
    const double base = cs.col0[i] > 0.0 ? cs.col0[i] : 1.0;
    worst = std::max(worst, n.cols[i] / base);
  }
  return worst <= cfg.eps_tol;
}

}  // namespace

CgResult bcg_solve(const SparseOperator& a, const Preconditioner& m, const BlockVector& b,
                   const BlockVector& x0, AlgebraSpec alg, const CgConfig& cfg, CommWorld& world) {
  if (b.cols() != alg.s || b.rows() != a.n || x0.rows() != a.n || x0.cols() != alg.s)
    throw ConfigError("bcg_solve: dimension mismatch");
  const int n = a.n, s = alg.s;
  const CgVariant v = cfg.variant;
  const bool short_rec = v != CgVariant::Classic && v != CgVariant::TwoReduction;

  if (cfg.check_spd) {
    const auto bsa = check_bsa(a, m, alg, 3);
    if (bsa.max_residual > 1e-8)
      throw ConfigError("operator/preconditioner pair fails the block self-adjointness check "
                        "(residual " +
                        std::to_string(bsa.max_residual) + ")");
  }

  // solver storage; the per-variant allocation count is audited (Table-exact)
  int nvec = 0;
  auto alloc = [&](BlockVector& bv) {
    bv = BlockVector(n, s);
    ++nvec;
  };
  BlockVector X, R, P, Q, Z, U, V, S, W, T;
  alloc(X);
  alloc(R);
  alloc(P);
  alloc(Q);  // doubles as Z for Classic / TwoReduction
  if (short_rec) alloc(Z);
  if (v == CgVariant::OneReduction) alloc(U);
  if (v == CgVariant::Gropp) alloc(V);  // preconditioned Q, then reused for A*Z
  if (v == CgVariant::PartiallyPipelined || v == CgVariant::Ghysels) {
    alloc(U);
    alloc(V);
    alloc(W);
  }
  if (v == CgVariant::Ghysels) {
    alloc(S);
    alloc(T);
  }

  SolverReport report;
  report.solver = "cg";
  report.variant = cg_variant_name(v);
  report.algebra = alg.name();
  report.block_vectors_allocated = nvec;

  const CommCounters comms0 = world.counters();
  const KernelCounters kern0 = world.kernel_counters();
  const double clock0 = world.clock_us(0);
  ConvState cs;
  bool conv_flag = false;

  world.run(n, [&](Rank& rank) {
    auto record = [&](int iter, const Norms& nm, bool reortho) {
      // two-barrier bracket: every rank is aligned and held while rank 0 takes
      // the snapshot, so record counters do not depend on scheduling order
      rank.barrier();
      if (rank.id() == 0) {
        IterRecord rec;
        rec.iter = iter;
        rec.frob = nm.frob;
        rec.maxcol = nm.maxcol;
        rec.reortho = reortho;
        rec.virt_us = world.clock_us(0) - clock0;
        rec.comms = world.counters() - comms0;
        rec.kernels = world.kernel_counters() - kern0;
        rec.col_norms = nm.cols;
        report.records.push_back(std::move(rec));
      }
      rank.barrier();
    };
    auto get_element = [&](Future& f) {
      SElement e(alg);
      e.raw() = f.get();
      return e;
    };
    auto invert_or_break = [&](const SElement& e, const char* what, int iter) {
      try {
        return e.inverse();
      } catch (const SingularError& err) {
        throw BreakdownError(std::string("singular ") + what + ": " + err.what() +
                                 (cfg.eta > 0.0 ? "" : " (re-orthonormalization disabled)"),
                             iter);
      }
    };

    spmd::copy(rank, X, x0);
    spmd::residual(rank, a, b, x0, R);
    const bool stabilized = cfg.eta > 0.0;
    SElement sigma = SElement::identity(alg);
    if (stabilized) {
      Future f = rank.inormalize(R, alg);
      sigma = get_element(f);
    }
    spmd::precond(rank, m, R, P);

    SElement rho(alg), alpha(alg);
    Norms n0;
    {
      spmd::Payload pay;
      pay.put(spmd::bdot_local(rank, P, R, alg));
      if (!stabilized) pay.put(spmd::colsumsq_local(rank, R, nullptr));
      spmd::Unpacker u(rank.allreduce_now(pay.take()));
      rho = u.get_element(alg);
      n0 = stabilized ? norms_from_sigma(sigma) : norms_from_sumsq(u.get_vector(s));
    }
    cs.col0 = n0.cols;
    cs.frob0 = n0.frob;

    if (short_rec) {
      spmd::bop(rank, a, P, Q);
      spmd::copy(rank, Z, P);
      if (v == CgVariant::PartiallyPipelined || v == CgVariant::Ghysels) {
        spmd::precond(rank, m, Q, V);
        if (v == CgVariant::Ghysels) {
          spmd::copy(rank, U, Q);
          spmd::bop(rank, a, V, S);
        }
      }
      if (v != CgVariant::Gropp) {
        spmd::Payload pay;
        pay.put(spmd::bdot_local(rank, P, Q, alg));
        spmd::Unpacker u(rank.allreduce_now(pay.take()));
        alpha = u.get_element(alg);
      }
    }
    record(0, n0, stabilized);

    for (int k = 0; k < cfg.max_iter; ++k) {
      bool reortho = false;
      SElement gamma = SElement::identity(alg);
      const SElement sigma_old = sigma;
      Norms nm;
      std::vector<double> colsq_loc;

      if (!short_rec) {
        // ---- Classic and TwoReduction ----
        spmd::bop(rank, a, P, Q);
        {
          spmd::Payload pay;
          pay.put(spmd::bdot_local(rank, P, Q, alg));
          spmd::Unpacker u(rank.allreduce_now(pay.take()));
          alpha = u.get_element(alg);
        }
        reortho = reortho_trigger(cfg.eta, alpha);
        const SElement lambda = invert_or_break(alpha, "alpha", k).multiply(rho);
        spmd::baxpy(rank, X, P, lambda.multiply(sigma_old));
        spmd::baxpy(rank, R, Q, lambda.scaled(-1.0));
        if (reortho) {
          Future f = rank.inormalize(R, alg);
          gamma = get_element(f);
          sigma = gamma.multiply(sigma);
          nm = norms_from_sigma(sigma);
        } else {
          colsq_loc = spmd::colsumsq_local(rank, R, stabilized ? &sigma : nullptr);
        }

        if (v == CgVariant::Classic) {
          if (!reortho) {
            spmd::Unpacker u(rank.allreduce_now(std::move(colsq_loc)));
            nm = norms_from_sumsq(u.get_vector(s));
          }
          record(k + 1, nm, reortho);
          if (cfg.on_iteration && rank.id() == 0) cfg.on_iteration(k, X, R, sigma, P);
          if (!std::isfinite(nm.frob)) throw BreakdownError("non-finite residual", k);
          if (check_converged(cfg, cs, nm)) {
            conv_flag = true;
            break;
          }
          spmd::precond(rank, m, R, Q);  // Z lives in Q's storage
          spmd::Payload pay;
          pay.put(spmd::bdot_local(rank, Q, R, alg));
          spmd::Unpacker u(rank.allreduce_now(pay.take()));
          const SElement rho_new = u.get_element(alg);
          const SElement beta =
              invert_or_break(rho, "rho", k).multiply(gamma.transposed()).multiply(rho_new);
          spmd::baxpy_scale(rank, P, beta, Q);
          rho = rho_new;
        } else {
          spmd::precond(rank, m, R, Q);
          spmd::Payload pay;
          pay.put(spmd::bdot_local(rank, Q, R, alg));
          if (!reortho) pay.put(colsq_loc);
          spmd::Unpacker u(rank.allreduce_now(pay.take()));
          const SElement rho_new = u.get_element(alg);
          if (!reortho) nm = norms_from_sumsq(u.get_vector(s));
          record(k + 1, nm, reortho);
          if (cfg.on_iteration && rank.id() == 0) cfg.on_iteration(k, X, R, sigma, P);
          if (!std::isfinite(nm.frob)) throw BreakdownError("non-finite residual", k);
          if (check_converged(cfg, cs, nm)) {
            conv_flag = true;
            break;
          }
          const SElement beta =
              invert_or_break(rho, "rho", k).multiply(gamma.transposed()).multiply(rho_new);
          spmd::baxpy_scale(rank, P, beta, Q);
          rho = rho_new;
        }
        continue;
      }

      // ---- short-recurrence variants ----
      if (v == CgVariant::Gropp) {
        spmd::Payload pay;
        pay.put(spmd::bdot_local(rank, P, Q, alg));
        Future fa = rank.iallreduce(pay.take());
        spmd::precond(rank, m, Q, V);  // overlapped with the alpha reduction
        spmd::Unpacker ua(fa.get());
        alpha = ua.get_element(alg);
      }
      reortho = reortho_trigger(cfg.eta, alpha);
      const SElement lambda = invert_or_break(alpha, "alpha", k).multiply(rho);
      spmd::baxpy(rank, R, Q, lambda.scaled(-1.0));
      if (reortho) {
        Future f = rank.inormalize(R, alg);
        gamma = get_element(f);
        sigma = gamma.multiply(sigma);
        nm = norms_from_sigma(sigma);
      } else {
        colsq_loc = spmd::colsumsq_local(rank, R, stabilized ? &sigma : nullptr);
      }
      spmd::baxpy(rank, X, P, lambda.multiply(sigma_old));

      // Z (and Ghysels' U) recurrences; on re-orthonormalization iterations the
      // preconditioner is applied directly instead
      if (v == CgVariant::OneReduction) {
        spmd::precond(rank, m, R, Z);
      } else if (reortho) {
        spmd::precond(rank, m, R, Z);
        if (v == CgVariant::Ghysels) spmd::bop(rank, a, Z, U);
      } else {
        spmd::baxpy(rank, Z, V, lambda.scaled(-1.0));
        if (v == CgVariant::Ghysels) spmd::baxpy(rank, U, S, lambda.scaled(-1.0));
      }

      if (v == CgVariant::Gropp) {
        spmd::Payload pay;
        pay.put(spmd::bdot_local(rank, Z, R, alg));
        if (!reortho) pay.put(colsq_loc);
        Future f = rank.iallreduce(pay.take());
        spmd::bop(rank, a, Z, V);  // A*Z in V's storage, overlapped
        spmd::Unpacker u(f.get());
        const SElement rho_new = u.get_element(alg);
        if (!reortho) nm = norms_from_sumsq(u.get_vector(s));
        record(k + 1, nm, reortho);
        if (cfg.on_iteration && rank.id() == 0) cfg.on_iteration(k, X, R, sigma, P);
        if (!std::isfinite(nm.frob)) throw BreakdownError("non-finite residual", k);
        if (check_converged(cfg, cs, nm)) {
          conv_flag = true;
          break;
        }
        const SElement beta =
            invert_or_break(rho, "rho", k).multiply(gamma.transposed()).multiply(rho_new);
        spmd::baxpy_scale(rank, P, beta, Z);
        spmd::baxpy_scale(rank, Q, beta, V);
        rho = rho_new;
      } else {
        if (v == CgVariant::OneReduction || v == CgVariant::PartiallyPipelined)
          spmd::bop(rank, a, Z, U);
        spmd::Payload pay;
        pay.put(spmd::bdot_local(rank, Z, R, alg));
        pay.put(spmd::bdot_local(rank, Z, U, alg));
        if (!reortho) pay.put(colsq_loc);
        Future f = rank.iallreduce(pay.take());
        if (v == CgVariant::PartiallyPipelined) {
          spmd::precond(rank, m, U, W);  // overlapped
        } else if (v == CgVariant::Ghysels) {
          spmd::precond(rank, m, U, W);  // overlapped
          spmd::bop(rank, a, W, T);      // overlapped
        }
        spmd::Unpacker u(f.get());
        const SElement rho_new = u.get_element(alg);
        const SElement delta = u.get_element(alg);
        if (!reortho) nm = norms_from_sumsq(u.get_vector(s));
        record(k + 1, nm, reortho);
        if (cfg.on_iteration && rank.id() == 0) cfg.on_iteration(k, X, R, sigma, P);
        if (!std::isfinite(nm.frob)) throw BreakdownError("non-finite residual", k);
        if (check_converged(cfg, cs, nm)) {
          conv_flag = true;
          break;
        }
        const SElement beta =
            invert_or_break(rho, "rho", k).multiply(gamma.transposed()).multiply(rho_new);
        spmd::baxpy_scale(rank, P, beta, Z);
        spmd::baxpy_scale(rank, Q, beta, U);
        if (v == CgVariant::PartiallyPipelined || v == CgVariant::Ghysels)
          spmd::baxpy_scale(rank, V, beta, W);
        if (v == CgVariant::Ghysels) spmd::baxpy_scale(rank, S, beta, T);
        alpha = delta.sub(beta.transposed().multiply(alpha).multiply(beta));
        rho = rho_new;
      }
    }
  });

  report.converged = conv_flag;
  report.comms_total = world.counters() - comms0;
  report.kernels_total = world.kernel_counters() - kern0;
  report.virt_time_us = world.clock_us(0) - clock0;
  report.finish();
  return {std::move(X), std::move(report)};
}

RateCheckResult blockglobal_rate_check(const SparseOperator& a, const Preconditioner& m,
                                       const std::vector<double>& spectrum_ascending, int s, int p,
                                       std::uint64_t seed, int iters, CommWorld& world) {
  RateCheckResult out;
  const AlgebraSpec alg = AlgebraSpec::block_global(s, p);
  const int q = alg.q();
  out.predicted_index = (p + q - 1) / q;  // ceil(p/q)
  const double lmin = spectrum_ascending[out.predicted_index - 1];
  const double lmax = spectrum_ascending.back();
  const double khat = lmax / lmin;
  out.predicted_rate = (std::sqrt(khat) - 1.0) / (std::sqrt(khat) + 1.0);

  CgConfig cfg;
  cfg.variant = CgVariant::Classic;
  cfg.eps_tol = 0.0;
  cfg.relative = false;
  cfg.max_iter = iters;
  BlockVector bb = generate_rhs(a.n, s, seed);
  BlockVector x0(a.n, s);
  auto res = bcg_solve(a, m, bb, x0, alg, cfg, world);
  const auto& recs = res.report.records;
  const size_t h0 = recs.size() / 2;
  const double num = recs.back().frob, den = recs[h0].frob;
  const int span = recs.back().iter - recs[h0].iter;
  out.measured_rate = (den > 0.0 && span > 0) ? std::pow(num / den, 1.0 / span) : 0.0;
  return out;
}

}  // namespace bkrylov
