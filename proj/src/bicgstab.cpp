#include "bkrylov/bicgstab.hpp"

#include <cmath>

#include "bkrylov/spmd.hpp"

namespace bkrylov {

namespace {

constexpr double kReorthoThreshold = 6.7108864e7;  // 1/sqrt(eps_mach), cf. cg.cpp

bool reortho_trigger(double eta, const SElement& gram) {
  if (eta <= 0.0) return false;
  try {
    return eta * kappa_diag_scaled(gram) > kReorthoThreshold;
  } catch (const SingularError&) {
    return true;
  }
}

struct Norms {
  std::vector<double> cols;
  double frob = 0.0, maxcol = 0.0;
};

Norms norms_from_sumsq(const std::vector<double>& sumsq) {
  Norms n;
  n.cols.resize(sumsq.size());
  double acc = 0.0;
  for (size_t i = 0; i < sumsq.size(); ++i) {
    n.cols[i] = std::sqrt(std::max(0.0, sumsq[i]));
    acc += std::max(0.0, sumsq[i]);
    n.maxcol = std::max(n.maxcol, n.cols[i]);
  }
  n.frob = std::sqrt(acc);
  return n;
}

// Residual norms of Shat*sigma derived from the communicated Gram chi = <Shat,Shat>_S:
// columns of sigma^T chi sigma give the squared column norms exactly.
Norms norms_from_gram(const SElement& chi, const SElement& sigma) {
  const SElement m = sigma.transposed().multiply(chi).multiply(sigma);
  std::vector<double> sumsq(m.s());
  for (int i = 0; i < m.s(); ++i) sumsq[i] = m.at(i, i);
  return norms_from_sumsq(sumsq);
}

}  // namespace

BicgstabResult bbicgstab_solve(const SparseOperator& a, const Preconditioner& m,
                               const BlockVector& b, const BlockVector& x0, AlgebraSpec alg,
                               const BicgstabConfig& cfg, CommWorld& world) {
  if (b.cols() != alg.s || b.rows() != a.n || x0.rows() != a.n || x0.cols() != alg.s)
    throw ConfigError("bbicgstab_solve: dimension mismatch");
  const int n = a.n, s = alg.s;
  const bool pipelined = cfg.variant == BicgstabConfig::Variant::Pipelined;

  int nvec = 0;
  auto alloc = [&](BlockVector& bv) {
    bv = BlockVector(n, s);
    ++nvec;
  };
  // R doubles as S (the intermediate residual overwrites it in place)
  BlockVector X, R, P, Q, Z, T, V, U, W, Shadow;
  alloc(X);
  alloc(R);
  alloc(P);
  alloc(Q);
  alloc(Z);
  alloc(T);
  alloc(V);
  alloc(U);
  alloc(Shadow);
  if (pipelined) alloc(W);

  SolverReport report;
  report.solver = "bicgstab";
  report.variant = pipelined ? "pipelined" : "adaptive";
  report.algebra = alg.name();
  report.block_vectors_allocated = nvec;

  const CommCounters comms0 = world.counters();
  const KernelCounters kern0 = world.kernel_counters();
  const double clock0 = world.clock_us(0);
  bool conv_flag = false;

  world.run(n, [&](Rank& rank) {
    auto record = [&](int iter, const Norms& nm, bool reortho) {
      // two-barrier bracket: snapshots are scheduler-invariant (see cg.cpp)
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
        throw BreakdownError(std::string("singular ") + what + ": " + err.what(), iter);
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
    if (cfg.shadow == BicgstabConfig::ShadowChoice::PreconditionedInitialResidual) {
      spmd::copy(rank, Shadow, P);
    } else {
      Shadow.copy_rows_from(generate_rhs(n, s, cfg.shadow_seed), rank.rows());
    }
    spmd::copy(rank, V, P);

    // chi = <R,R>, the shadow pairing check, and the initial norms in one sweep
    SElement chi(alg);
    Norms n0;
    {
      spmd::Payload pay;
      pay.put(spmd::bdot_local(rank, R, R, alg));
      pay.put(spmd::bdot_local(rank, Shadow, R, alg));
      if (!stabilized) pay.put(spmd::colsumsq_local(rank, R, nullptr));
      spmd::Unpacker u(rank.allreduce_now(pay.take()));
      chi = u.get_element(alg);
      const SElement pairing = u.get_element(alg);
      if (pairing.frobenius_norm() <= 1e-14 * (chi.frobenius_norm() + 1e-300))
        throw BreakdownError("shadow residual is orthogonal to the initial residual", 0);
      n0 = stabilized ? norms_from_gram(chi, sigma) : norms_from_sumsq(u.get_vector(s));
    }
    std::vector<double> col0 = n0.cols;
    const double frob0 = n0.frob;
    auto converged = [&](const Norms& nm) {
      if (cfg.norm_kind == BicgstabConfig::NormKind::Frobenius) {
        const double base = cfg.relative && frob0 > 0.0 ? frob0 : 1.0;
        return nm.frob <= cfg.eps_tol * base;
      }
      if (!cfg.relative) return nm.maxcol <= cfg.eps_tol;
      double worst = 0.0;
      for (size_t i = 0; i < nm.cols.size(); ++i)
        worst = std::max(worst, nm.cols[i] / (col0[i] > 0.0 ? col0[i] : 1.0));
      return worst <= cfg.eps_tol;
    };
    record(0, n0, stabilized);

    for (int k = 0; k < cfg.max_iter; ++k) {
      spmd::bop(rank, a, P, Q);
      SElement shadow_q(alg), shadow_r(alg);
      bool reortho = false;
      if (pipelined) {
        // group 1: the lambda products, overlapped with Z = M^{-1} Q
        spmd::Payload pay;
        pay.put(spmd::bdot_local(rank, Shadow, Q, alg));
        pay.put(spmd::bdot_local(rank, Shadow, R, alg));
        Future f = rank.iallreduce(pay.take());
        spmd::precond(rank, m, Q, Z);
        spmd::Unpacker u(f.get());
        shadow_q = u.get_element(alg);
        shadow_r = u.get_element(alg);
        reortho = reortho_trigger(cfg.eta, chi);  // lagged Gram from group 2
      } else {
        // blocking group: lambda products plus the fresh re-ortho Gram
        spmd::Payload pay;
        pay.put(spmd::bdot_local(rank, Shadow, Q, alg));
        pay.put(spmd::bdot_local(rank, Shadow, R, alg));
        pay.put(spmd::bdot_local(rank, R, R, alg));
        spmd::Unpacker u(rank.allreduce_now(pay.take()));
        shadow_q = u.get_element(alg);
        shadow_r = u.get_element(alg);
        const SElement gram = u.get_element(alg);
        reortho = reortho_trigger(cfg.eta, gram);
        spmd::precond(rank, m, Q, Z);
      }
      const SElement shadow_q_inv = invert_or_break(shadow_q, "<shadow, A P>", k);
      const SElement lambda = shadow_q_inv.multiply(shadow_r);
      spmd::baxpy(rank, R, Q, lambda.scaled(-1.0));      // R now holds S
      spmd::baxpy(rank, X, P, lambda.multiply(sigma));   // X^{k+1/2}
      SElement gamma = SElement::identity(alg);
      if (reortho) {
        Future f = rank.inormalize(R, alg);
        gamma = get_element(f);
        sigma = gamma.multiply(sigma);
        spmd::precond(rank, m, R, T);  // apply M directly to the normalized S
      } else {
        spmd::copy(rank, T, V);
        spmd::baxpy(rank, T, Z, lambda.scaled(-1.0));
      }
      spmd::bop(rank, a, T, U);

      double w_num = 0.0, w_den = 0.0;
      SElement shadow_u(alg);
      Norms nm;
      if (pipelined) {
        // group 2: the omega Grams, the beta product and chi fused in one
        // reduction, overlapped with W = M^{-1} U. Omega comes from the traces
        // (normality), and the k+1 residual Gram is reconstructed as
        // chi - w*<U,S> - w*<U,S>^T + w^2*<U,U>, so the reported norms need no
        // extra synchronization.
        spmd::Payload pay;
        pay.put(spmd::bdot_local(rank, U, R, alg));
        pay.put(spmd::bdot_local(rank, U, U, alg));
        pay.put(spmd::bdot_local(rank, Shadow, U, alg));
        pay.put(spmd::bdot_local(rank, R, R, alg));
        Future f = rank.iallreduce(pay.take());
        spmd::precond(rank, m, U, W);
        spmd::Unpacker u(f.get());
        const SElement g_us = u.get_element(alg);
        const SElement g_uu = u.get_element(alg);
        shadow_u = u.get_element(alg);
        chi = u.get_element(alg);
        w_num = g_us.trace();
        w_den = g_uu.trace();
        const double omega = w_den == 0.0 ? 0.0 : w_num / w_den;
        SElement gram_r = chi.sub(g_us.scaled(omega)).sub(g_us.transposed().scaled(omega));
        gram_r.add_in_place(g_uu.scaled(omega * omega));
        nm = norms_from_gram(gram_r, sigma);
      } else {
        spmd::Payload pay;
        pay.put(spmd::fdot_local(rank, U, R));
        pay.put(spmd::fdot_local(rank, U, U));
        spmd::Unpacker u(rank.allreduce_now(pay.take()));
        w_num = u.get_scalar();
        w_den = u.get_scalar();
      }
      // w_den = 0 means A M^{-1} S vanished; legal only when S itself converged
      // (checked below), otherwise it is a stagnation breakdown
      const bool stagnated = w_den == 0.0;
      const double omega = stagnated ? 0.0 : w_num / w_den;

      spmd::baxpy(rank, X, T, sigma.scaled(omega));  // X^{k+1}, sigma^{k+1} frame
      spmd::saxpy(rank, R, -omega, U);               // R^{k+1} = S - omega U

      if (!pipelined) {
        // blocking group: beta product fused with the break-check norms
        spmd::Payload pay;
        pay.put(spmd::bdot_local(rank, Shadow, U, alg));
        pay.put(spmd::colsumsq_local(rank, R, stabilized ? &sigma : nullptr));
        spmd::Unpacker u(rank.allreduce_now(pay.take()));
        shadow_u = u.get_element(alg);
        nm = norms_from_sumsq(u.get_vector(s));
      }
      record(k + 1, nm, reortho);
      if (cfg.on_iteration && rank.id() == 0) cfg.on_iteration(k, X, R, sigma);
      if (!std::isfinite(nm.frob)) throw BreakdownError("non-finite residual", k);
      if (converged(nm)) {
        conv_flag = true;
        break;
      }
      if (stagnated) throw BreakdownError("stagnation: <A M^{-1} S, A M^{-1} S> = 0", k);

      const SElement beta = shadow_q_inv.multiply(shadow_u).scaled(-1.0);
      if (pipelined) {
        spmd::copy(rank, V, T);
        spmd::saxpy(rank, V, -omega, W);  // V^{k+1} = T - omega W
      } else {
        spmd::precond(rank, m, R, V);  // V^{k+1} = M^{-1} R^{k+1}
      }
      spmd::saxpy(rank, P, -omega, Z);
      spmd::baxpy_scale(rank, P, beta, V);  // P = V + (P - omega Z) beta
    }
  });

  report.converged = conv_flag;
  report.comms_total = world.counters() - comms0;
  report.kernels_total = world.kernel_counters() - kern0;
  report.virt_time_us = world.clock_us(0) - clock0;
  report.finish();
  return {std::move(X), std::move(report)};
}

SyncCountAudit sync_count_audit(const SolverReport& report) {
  SyncCountAudit audit;
  const auto& recs = report.records;
  if (recs.size() < 3) return audit;
  // skip the startup iterations; re-orthonormalization iterations add a
  // normalizer collective but no extra reduction groups
  bool first = true;
  for (size_t k = 2; k < recs.size(); ++k) {
    const auto d = recs[k].comms - recs[k - 1].comms;
    const int groups = static_cast<int>(d.reductions_started);
    if (first) {
      audit.min_groups_per_iter = audit.max_groups_per_iter = groups;
      audit.all_overlapped = true;
      first = false;
    }
    audit.min_groups_per_iter = std::min(audit.min_groups_per_iter, groups);
    audit.max_groups_per_iter = std::max(audit.max_groups_per_iter, groups);
    audit.all_overlapped = audit.all_overlapped && d.overlapped_reductions == groups;
    audit.iterations_sampled++;
  }
  return audit;
}

}  // namespace bkrylov
