#include "bkrylov/gmres.hpp"

#include <cmath>
#include <deque>

#include "bkrylov/dense.hpp"
#include "bkrylov/spmd.hpp"

namespace bkrylov {

OrthoStrategy OrthoStrategy::parse(const std::string& text) {
  OrthoStrategy s;
  if (text == "modified" || text == "mgs") {
    s.kind = Kind::Modified;
    return s;
  }
  if (text == "localized") {
    s.kind = Kind::Localized;
    return s;
  }
  if (text.rfind("classical", 0) == 0) {
    s.kind = Kind::Classical;
    auto c = text.find(':');
    s.iters = c == std::string::npos ? 2 : std::stoi(text.substr(c + 1));
    if (s.iters < 1 || s.iters > 2) throw ConfigError("classical iterations must be 1 or 2");
    return s;
  }
  if (text.rfind("pipelined", 0) == 0) {
    s.kind = Kind::Pipelined;
    auto c = text.find(':');
    s.depth = c == std::string::npos ? 3 : std::stoi(text.substr(c + 1));
    if (s.depth < 1) throw ConfigError("pipelined depth must be >= 1");
    return s;
  }
  throw ConfigError("unknown orthogonalization '" + text + "'");
}

std::string OrthoStrategy::name() const {
  switch (kind) {
    case Kind::Modified: return "modified";
    case Kind::Classical: return "classical:" + std::to_string(iters);
    case Kind::Pipelined: return "pipelined:" + std::to_string(depth);
    case Kind::Localized: return "localized";
  }
  return "?";
}

std::pair<BlockGivens, SElement> block_givens(const SElement& top, const SElement& bottom) {
  const AlgebraSpec alg = top.algebra();
  const int p = alg.p, q = alg.q();
  BlockGivens g{SElement(alg), SElement(alg), SElement(alg), SElement(alg)};
  SElement rho(alg);
  const int groups = alg.replicated() ? 1 : q;
  std::vector<double> stack(static_cast<size_t>(2 * p) * p);
  std::vector<double> qf(static_cast<size_t>(2 * p) * 2 * p), rf(static_cast<size_t>(2 * p) * p);
  for (int gr = 0; gr < groups; ++gr) {
    const int o = gr * p;
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) {
        stack[static_cast<size_t>(i) * p + j] = top.at(o + i, o + j);
        stack[static_cast<size_t>(p + i) * p + j] = bottom.at(o + i, o + j);
      }
    dense::householder_qr_full(2 * p, p, stack.data(), qf.data(), rf.data());
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) {
        g.q00.at(o + i, o + j) = qf[static_cast<size_t>(i) * 2 * p + j];
        g.q01.at(o + i, o + j) = qf[static_cast<size_t>(i) * 2 * p + p + j];
        g.q10.at(o + i, o + j) = qf[static_cast<size_t>(p + i) * 2 * p + j];
        g.q11.at(o + i, o + j) = qf[static_cast<size_t>(p + i) * 2 * p + p + j];
        rho.at(o + i, o + j) = rf[static_cast<size_t>(i) * p + j];
      }
  }
  if (alg.replicated()) {
    auto rep = [&](SElement& e) {
      for (int gr = 1; gr < q; ++gr)
        for (int i = 0; i < p; ++i)
          for (int j = 0; j < p; ++j) e.at(gr * p + i, gr * p + j) = e.at(i, j);
    };
    rep(g.q00);
    rep(g.q01);
    rep(g.q10);
    rep(g.q11);
    rep(rho);
  }
  return {std::move(g), std::move(rho)};
}

void apply_givens_t(const BlockGivens& g, SElement& a, SElement& b) {
  SElement na = g.q00.transposed().multiply(a).add(g.q10.transposed().multiply(b));
  SElement nb = g.q01.transposed().multiply(a).add(g.q11.transposed().multiply(b));
  a = std::move(na);
  b = std::move(nb);
}

namespace {

// gamma's diagonal entries carry the fresh directions' magnitudes; compare
// them against the candidate's overall scale (the whole Hessenberg column).
bool deficient(const SElement& gamma, double column_scale) {
  const double scale = std::max(gamma.frobenius_norm(), column_scale);
  for (int i = 0; i < gamma.s(); ++i)
    if (std::abs(gamma.at(i, i)) <= 1e-13 * scale) return true;
  return false;
}

double column_scale_of(const std::vector<SElement>& h) {
  double s = 0.0;
  for (const auto& e : h) s = std::max(s, e.frobenius_norm());
  return s;
}

// One Arnoldi process over shared basis storage. Each rank keeps its own copy
// of the replicated coefficients; for the localized strategy the shared storage
// holds the rank-local orthonormal blocks instead of global basis vectors.
struct Arnoldi {
  const SparseOperator& a;
  const Preconditioner& m;
  AlgebraSpec alg;
  OrthoStrategy strat;
  std::vector<BlockVector>& vs;  // basis storage, size >= kmax+2
  BlockVector& w;                // operator/preconditioner scratch
  BlockVector& g;                // assembled-vector scratch (localized)
  ReductionTree* tree = nullptr;

  std::vector<CoeffVec> zetas = {};  // per-rank local factors (localized)
  int k = -1;                        // index of the last basis vector
  int deficiency_events = 0;

  SElement get_element(Rank& rank, Future& f) {
    SElement e(alg);
    e.raw() = f.get();
    (void)rank;
    return e;
  }

  // Normalizes vs[0] (already holding M^{-1}R^0) and returns sigma^0.
  SElement init(Rank& rank) {
    k = 0;
    zetas.clear();
    if (strat.kind == OrthoStrategy::Kind::Localized) {
      SElement local = normalize_in_place(vs[0], alg, rank.rows());
      rank.add_work_flops(2.0 * rank.rows().size() * alg.s * alg.s);
      CoeffVec rho = rank.localized_reduce(*tree, {local});
      zetas.push_back(rank.localized_backprop(*tree));
      return rho[0];
    }
    Future f = rank.inormalize(vs[0], alg);
    return get_element(rank, f);
  }

  // Appends basis vector k+1; returns the raw Hessenberg column (k+2 entries).
  std::vector<SElement> step(Rank& rank) {
    const int kk = k;
    BlockVector& cand = vs[kk + 1];
    if (strat.kind == OrthoStrategy::Kind::Localized) {
      // assemble the global orthonormal vector from the local blocks
      const RowRange rr = rank.rows();
      for (int i = rr.lo; i < rr.hi; ++i)
        for (int j = 0; j < alg.s; ++j) g(i, j) = 0.0;
      for (int i = 0; i <= kk; ++i) spmd::baxpy(rank, g, vs[i], zetas[kk][i]);
      spmd::bop(rank, a, g, w);
      spmd::precond(rank, m, w, cand);
      // local modified Gram-Schmidt + local normalizer
      CoeffVec rfac;
      rfac.reserve(kk + 2);
      for (int i = 0; i <= kk; ++i) {
        KernelCounters lc;
        SElement c = bdot_partial(vs[i], cand, alg, &lc, rr);
        rank.charge_kernel(lc);
        rank.add_work_flops(static_cast<double>(lc.flops));
        spmd::baxpy(rank, cand, vs[i], c.scaled(-1.0));
        rfac.push_back(std::move(c));
      }
      SElement local = normalize_in_place(cand, alg, rr);
      rank.add_work_flops(2.0 * rr.size() * alg.s * alg.s);
      rfac.push_back(std::move(local));
      CoeffVec rho = rank.localized_reduce(*tree, rfac);
      zetas.push_back(rank.localized_backprop(*tree));
      if (deficient(rho[kk + 1], column_scale_of(rho))) deficiency_events++;
      ++k;
      return rho;
    }

    spmd::bop(rank, a, vs[kk], w);
    spmd::precond(rank, m, w, cand);
    std::vector<SElement> h(kk + 2, SElement(alg));

    if (strat.kind == OrthoStrategy::Kind::Modified) {
      for (int j = 0; j <= kk; ++j) {
        spmd::Payload pay;
        pay.put(spmd::bdot_local(rank, vs[j], cand, alg));
        spmd::Unpacker u(rank.allreduce_now(pay.take()));
        h[j] = u.get_element(alg);
        spmd::baxpy(rank, cand, vs[j], h[j].scaled(-1.0));
      }
      Future f = rank.inormalize(cand, alg);
      h[kk + 1] = get_element(rank, f);
    } else if (strat.kind == OrthoStrategy::Kind::Classical) {
      SElement gamma_acc = SElement::identity(alg);
      for (int pass = 0; pass < strat.iters; ++pass) {
        spmd::Payload pay;
        for (int j = 0; j <= kk; ++j) pay.put(spmd::bdot_local(rank, vs[j], cand, alg));
        spmd::Unpacker u(rank.allreduce_now(pay.take()));
        std::vector<SElement> c(kk + 1, SElement(alg));
        for (int j = 0; j <= kk; ++j) c[j] = u.get_element(alg);
        for (int j = 0; j <= kk; ++j) spmd::baxpy(rank, cand, vs[j], c[j].scaled(-1.0));
        Future f = rank.inormalize(cand, alg);
        const SElement gamma = get_element(rank, f);
        for (int j = 0; j <= kk; ++j) h[j].add_in_place(c[j].multiply(gamma_acc));
        gamma_acc = gamma.multiply(gamma_acc);
      }
      h[kk + 1] = gamma_acc;
    } else {  // Pipelined(r)
      const int r = strat.depth;
      std::vector<Future> futs(kk + 1);
      for (int j = 0; j <= kk; ++j) {
        spmd::Payload pay;
        pay.put(spmd::bdot_local(rank, vs[j], cand, alg));
        futs[j] = rank.iallreduce(pay.take());
        if (j >= r) {
          spmd::Unpacker u(futs[j - r].get());
          h[j - r] = u.get_element(alg);
          spmd::baxpy(rank, cand, vs[j - r], h[j - r].scaled(-1.0));
        }
      }
      for (int j = std::max(0, kk + 1 - r); j <= kk; ++j) {
        spmd::Unpacker u(futs[j].get());
        h[j] = u.get_element(alg);
        spmd::baxpy(rank, cand, vs[j], h[j].scaled(-1.0));
      }
      Future f = rank.inormalize(cand, alg);
      h[kk + 1] = get_element(rank, f);
    }
    if (deficient(h[kk + 1], column_scale_of(h))) deficiency_events++;
    ++k;
    return h;
  }

  // X += sum_j basis_j * coeff_j for the kdone solution coefficients.
  void accumulate_solution(Rank& rank, BlockVector& x, const std::vector<SElement>& coeff) {
    const int kdone = static_cast<int>(coeff.size());
    if (strat.kind == OrthoStrategy::Kind::Localized) {
      for (int i = 0; i < kdone; ++i) {
        SElement c(alg);
        for (int j = i; j < kdone; ++j) c.add_in_place(zetas[j][i].multiply(coeff[j]));
        spmd::baxpy(rank, x, vs[i], c);
      }
      return;
    }
    for (int j = 0; j < kdone; ++j) spmd::baxpy(rank, x, vs[j], coeff[j]);
  }
};

struct Norms {
  std::vector<double> cols;
  double frob = 0.0, maxcol = 0.0;
};

Norms norms_from_sigma(const SElement& sigma) {
  Norms n;
  n.cols = sigma.column_norms();
  n.frob = sigma.frobenius_norm();
  for (double c : n.cols) n.maxcol = std::max(n.maxcol, c);
  return n;
}

}  // namespace

GmresResult bgmres_solve(const SparseOperator& a, const Preconditioner& m, const BlockVector& b,
                         const BlockVector& x0, AlgebraSpec alg, const GmresConfig& cfg,
                         CommWorld& world) {
  if (b.cols() != alg.s || b.rows() != a.n || x0.rows() != a.n || x0.cols() != alg.s)
    throw ConfigError("bgmres_solve: dimension mismatch");
  const int n = a.n;
  const int kmax = std::min(cfg.restart, cfg.max_iter);
  if (kmax < 1) throw ConfigError("bgmres_solve: restart/max_iter must be >= 1");

  // basis memory is preallocated for the restart length
  std::vector<BlockVector> vs(kmax + 1, BlockVector(n, alg.s));
  BlockVector w(n, alg.s), g(n, alg.s);
  BlockVector X = x0;
  ReductionTree tree(world.ranks(), alg);

  SolverReport report;
  report.solver = "gmres";
  report.variant = cfg.ortho.name();
  report.algebra = alg.name();
  report.block_vectors_allocated = static_cast<int>(vs.size()) + 3;

  const CommCounters comms0 = world.counters();
  const KernelCounters kern0 = world.kernel_counters();
  const double clock0 = world.clock_us(0);
  bool conv_flag = false;
  int restarts = 0;

  world.run(n, [&](Rank& rank) {
    auto record = [&](int iter, const Norms& nm) {
      // two-barrier bracket: snapshots are scheduler-invariant (see cg.cpp)
      rank.barrier();
      if (rank.id() == 0) {
        IterRecord rec;
        rec.iter = iter;
        rec.frob = nm.frob;
        rec.maxcol = nm.maxcol;
        rec.virt_us = world.clock_us(0) - clock0;
        rec.comms = world.counters() - comms0;
        rec.kernels = world.kernel_counters() - kern0;
        rec.col_norms = nm.cols;
        report.records.push_back(std::move(rec));
      }
      rank.barrier();
    };

    Arnoldi ar{a, m, alg, cfg.ortho, vs, w, g, &tree};
    std::vector<double> col0;
    double frob0 = 0.0;
    auto converged = [&](const Norms& nm) {
      if (cfg.norm_kind == GmresConfig::NormKind::Frobenius) {
        const double base = cfg.relative && frob0 > 0.0 ? frob0 : 1.0;
        return nm.frob <= cfg.eps_tol * base;
      }
      if (!cfg.relative) return nm.maxcol <= cfg.eps_tol;
      double worst = 0.0;
      for (size_t i = 0; i < nm.cols.size(); ++i)
        worst = std::max(worst, nm.cols[i] / (col0[i] > 0.0 ? col0[i] : 1.0));
      return worst <= cfg.eps_tol;
    };

    bool done = false;
    int iters_here = 0;
    while (!done && iters_here < cfg.max_iter) {
      // (re)start: preconditioned residual into vs[0]
      rank.barrier();
      if (rank.id() == 0 && cfg.ortho.kind == OrthoStrategy::Kind::Localized) tree.reset();
      rank.barrier();
      spmd::residual(rank, a, b, X, w);
      spmd::precond(rank, m, w, vs[0]);
      SElement sigma0 = ar.init(rank);
      std::vector<SElement> sigmas{sigma0};
      std::vector<std::vector<SElement>> hcols;  // triangulated columns
      std::vector<BlockGivens> givens;

      {
        const Norms nm = norms_from_sigma(sigma0);
        if (col0.empty()) {
          col0 = nm.cols;
          frob0 = nm.frob;
          record(0, nm);
        }
        if (converged(nm)) {  // also exits a restart whose residual is already done
          conv_flag = done = true;
          break;
        }
      }

      int kdone = 0;
      for (int k = 0; k < kmax && iters_here < cfg.max_iter; ++k) {
        std::vector<SElement> h = ar.step(rank);
        ++iters_here;
        for (int j = 0; j < k; ++j) apply_givens_t(givens[j], h[j], h[j + 1]);
        auto [gv, rho] = block_givens(h[k], h[k + 1]);
        h[k] = rho;
        h.pop_back();
        givens.push_back(std::move(gv));
        SElement snew(alg);
        apply_givens_t(givens.back(), sigmas[k], snew);
        sigmas.push_back(std::move(snew));
        hcols.push_back(std::move(h));
        kdone = k + 1;

        const Norms nm = norms_from_sigma(sigmas[k + 1]);
        record(iters_here, nm);
        if (!std::isfinite(nm.frob)) throw BreakdownError("non-finite residual", iters_here);
        if (converged(nm)) {
          conv_flag = done = true;
          break;
        }
      }

      // back-substitution over the triangulated system, then the update
      if (kdone > 0) {
        std::vector<SElement> zeta(sigmas.begin(), sigmas.begin() + kdone);
        for (int l = kdone - 1; l >= 0; --l) {
          for (int j = l + 1; j < kdone; ++j)
            zeta[l] = zeta[l].sub(hcols[j][l].multiply(zeta[j]));
          try {
            zeta[l] = hcols[l][l].inverse().multiply(zeta[l]);
          } catch (const SingularError& e) {
            throw BreakdownError(std::string("singular Hessenberg diagonal in ")
                                     .append("back-substitution: ")
                                     .append(e.what()),
                                 iters_here);
          }
        }
        ar.accumulate_solution(rank, X, zeta);
      }
      if (!done) {
        if (iters_here >= cfg.max_iter) break;
        if (rank.id() == 0) ++restarts;
      }
    }
  });

  report.converged = conv_flag;
  report.comms_total = world.counters() - comms0;
  report.kernels_total = world.kernel_counters() - kern0;
  report.virt_time_us = world.clock_us(0) - clock0;
  report.restarts = restarts;
  report.finish();
  return {std::move(X), std::move(report)};
}

ArnoldiProbe arnoldi_probe(const SparseOperator& a, const Preconditioner& m, const BlockVector& r0,
                           AlgebraSpec alg, OrthoStrategy strat, int steps, CommWorld& world) {
  const int n = a.n;
  ArnoldiProbe probe;
  std::vector<BlockVector> vs(steps + 2, BlockVector(n, alg.s));
  BlockVector w(n, alg.s), g(n, alg.s);
  ReductionTree tree(world.ranks(), alg);
  std::vector<BlockVector> assembled;  // localized: globally assembled basis
  probe.rank_zetas.resize(world.ranks());

  world.run(n, [&](Rank& rank) {
    Arnoldi ar{a, m, alg, strat, vs, w, g, &tree};
    vs[0].copy_rows_from(r0, rank.rows());
    ar.init(rank);
    for (int k = 0; k < steps; ++k) {
      auto h = ar.step(rank);
      if (rank.id() == 0) probe.h.push_back(std::move(h));
    }
    if (strat.kind == OrthoStrategy::Kind::Localized) {
      // assemble the global basis for diagnostics
      rank.barrier();
      if (rank.id() == 0) assembled.assign(steps + 1, BlockVector(n, alg.s));
      rank.barrier();
      for (int j = 0; j <= steps; ++j) {
        const RowRange rr = rank.rows();
        for (int i = rr.lo; i < rr.hi; ++i)
          for (int c = 0; c < alg.s; ++c) assembled[j](i, c) = 0.0;
        for (int i = 0; i <= j; ++i) baxpy(assembled[j], vs[i], ar.zetas[j][i], nullptr, rr);
        rank.barrier();
      }
    }
    if (rank.id() == 0) probe.deficiency_events = ar.deficiency_events;
    if (strat.kind == OrthoStrategy::Kind::Localized) probe.rank_zetas[rank.id()] = ar.zetas;
  });
  if (strat.kind == OrthoStrategy::Kind::Localized) {
    probe.v = std::move(assembled);
    probe.local_blocks.assign(vs.begin(), vs.begin() + steps + 1);
  } else {
    probe.v.assign(vs.begin(), vs.begin() + steps + 1);
  }
  return probe;
}

}  // namespace bkrylov
