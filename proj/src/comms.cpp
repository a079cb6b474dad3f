#include "bkrylov/comms.hpp"

#include <algorithm>
#include <cmath>

#include "bkrylov/dense.hpp"

namespace bkrylov {

double LatencyModel::t_red(int ranks) const {
  if (ranks <= 1) return 0.0;
  if (fixed >= 0.0) return fixed;
  return coeff * std::log2(static_cast<double>(ranks));
}

LatencyModel LatencyModel::parse(const std::string& text) {
  LatencyModel m;
  if (text.empty() || text == "log2p" || text == "default") return m;
  if (text.rfind("log2p:", 0) == 0) {
    m.coeff = std::stod(text.substr(6));
    return m;
  }
  if (text.rfind("fixed:", 0) == 0) {
    m.fixed = std::stod(text.substr(6));
    return m;
  }
  throw ConfigError("unknown latency model '" + text + "' (log2p[:coeff] | fixed:<us>)");
}

std::string LatencyModel::name() const {
  if (fixed >= 0.0) return "fixed:" + std::to_string(fixed);
  return "log2p:" + std::to_string(coeff);
}

OverlapPolicy OverlapPolicy::parse(const std::string& text) {
  OverlapPolicy p;
  if (text.empty() || text == "full") {
    p.factor = 1.0;
  } else if (text == "none") {
    p.factor = 0.0;
  } else {
    p.factor = std::stod(text);
  }
  if (p.factor < 0.0 || p.factor > 1.0) throw ConfigError("overlap factor must be in [0,1]");
  return p;
}

std::string OverlapPolicy::name() const {
  if (factor == 1.0) return "full";
  if (factor == 0.0) return "none";
  return std::to_string(factor);
}

CommCounters CommCounters::operator-(const CommCounters& o) const {
  CommCounters d = *this;
  d.reductions_started -= o.reductions_started;
  d.reductions_waited -= o.reductions_waited;
  d.overlapped_reductions -= o.overlapped_reductions;
  d.normalizes -= o.normalizes;
  d.tree_reduce_sweeps -= o.tree_reduce_sweeps;
  d.tree_backprop_sweeps -= o.tree_backprop_sweeps;
  d.broadcast_sweeps -= o.broadcast_sweeps;
  d.barriers -= o.barriers;
  d.messages -= o.messages;
  return d;
}

// ---------------------------------------------------------------------------
// slot / scheduler machinery
// ---------------------------------------------------------------------------

struct CommWorld::Slot {
  enum class Type { Reduce, Barrier, Normalize, TreeReduce, TreeBackprop };

  Type type;
  size_t payload_size = 0;
  const void* aux = nullptr;
  double latency = 0.0;

  int joined = 0;
  bool complete = false;
  double max_join_clock = 0.0;

  std::vector<std::vector<double>> contrib;
  std::vector<double> result;
  std::vector<double> start_clock, work_at_start;
  std::vector<char> waited, rank_overlapped;
  int waited_count = 0;

  // normalize extras
  BlockVector* nx = nullptr;
  AlgebraSpec nalg;
  std::vector<SElement> nsigma, ntau;

  // localized tree extras
  ReductionTree* tree = nullptr;
  std::vector<CoeffVec> tin;
};

struct CommWorld::Impl {
  std::mutex mu;
  std::condition_variable cv;

  CommCounters cnt;
  KernelCounters kcnt;
  std::vector<double> clock, work_us;
  std::vector<int> outstanding;

  // per-run state
  int n_rows = 0;
  std::vector<std::unique_ptr<Slot>> slots;
  std::vector<size_t> next_slot;
  enum class TState { Ready, Blocked, Done };
  std::vector<TState> tstate;
  std::vector<Slot*> blocked_on;
  int current = -1;
  int done_count = 0;
  bool aborting = false;
  std::exception_ptr error;
};

namespace {

using Slot = CommWorld::Slot;
using Impl = CommWorld::Impl;

const char* type_name(Slot::Type t) {
  switch (t) {
    case Slot::Type::Reduce: return "iallreduce";
    case Slot::Type::Barrier: return "barrier";
    case Slot::Type::Normalize: return "inormalize";
    case Slot::Type::TreeReduce: return "localized_reduce";
    case Slot::Type::TreeBackprop: return "localized_backprop";
  }
  return "?";
}

int pick_ready(const std::vector<Impl::TState>& st, int policy) {
  const int p = static_cast<int>(st.size());
  if (policy == 0) {
    for (int r = 0; r < p; ++r)
      if (st[r] == Impl::TState::Ready) return r;
  } else {
    for (int r = p - 1; r >= 0; --r)
      if (st[r] == Impl::TState::Ready) return r;
  }
  return -1;
}

// Hands the baton to the next runnable rank; declares deadlock when no rank can
// make progress. Caller holds the mutex.
void transfer_baton(Impl& im, int policy) {
  const int nxt = pick_ready(im.tstate, policy);
  if (nxt >= 0) {
    im.current = nxt;
    im.cv.notify_all();
    return;
  }
  if (im.done_count == static_cast<int>(im.tstate.size())) {
    im.current = -1;
    im.cv.notify_all();
    return;
  }
  std::string who;
  for (size_t r = 0; r < im.tstate.size(); ++r)
    if (im.tstate[r] == Impl::TState::Blocked)
      who += " rank" + std::to_string(r) + "@slot" + std::to_string(im.next_slot[r] - 1);
  im.aborting = true;
  if (!im.error)
    im.error = std::make_exception_ptr(
        CommError("deadlock: every live rank is blocked on an incomplete collective;" + who));
  im.cv.notify_all();
}

// Joins the caller's next collective slot, creating it on first arrival.
// Returns the slot index. Caller holds the mutex.
size_t join_slot(Impl& im, const CommWorld::Config& cfg, int rank, Slot::Type type,
                 size_t payload, const void* aux, double latency) {
  if (im.aborting) throw CommError("world aborting");
  const size_t idx = im.next_slot[rank]++;
  if (idx == im.slots.size()) {
    auto s = std::make_unique<Slot>();
    const int P = cfg.ranks;
    s->type = type;
    s->payload_size = payload;
    s->aux = aux;
    s->latency = latency;
    s->contrib.resize(P);
    s->start_clock.assign(P, 0.0);
    s->work_at_start.assign(P, 0.0);
    s->waited.assign(P, 0);
    s->rank_overlapped.assign(P, 0);
    s->nsigma.resize(P);
    s->ntau.resize(P);
    s->tin.resize(P);
    im.slots.push_back(std::move(s));
    switch (type) {
      case Slot::Type::Reduce:
        im.cnt.reductions_started++;
        im.cnt.broadcast_sweeps++;  // an allreduce is one up-sweep + one broadcast
        break;
      case Slot::Type::Barrier: im.cnt.barriers++; break;
      case Slot::Type::Normalize:
        im.cnt.normalizes++;
        im.cnt.tree_backprop_sweeps++;  // TSQR back-scatters the Q factors
        break;
      case Slot::Type::TreeReduce:
        im.cnt.tree_reduce_sweeps++;
        im.cnt.broadcast_sweeps++;  // the root broadcasts rho to all ranks
        break;
      case Slot::Type::TreeBackprop: im.cnt.tree_backprop_sweeps++; break;
    }
  } else if (idx > im.slots.size()) {
    throw CommError("internal: slot sequencing");
  }
  Slot& s = *im.slots[idx];
  if (s.type != type || s.payload_size != payload || s.aux != aux)
    throw CommError(std::string("SPMD discipline violated: rank ") + std::to_string(rank) +
                    " issued " + type_name(type) + "(" + std::to_string(payload) +
                    ") where slot " + std::to_string(idx) + " is " + type_name(s.type) + "(" +
                    std::to_string(s.payload_size) + ")");
  s.joined++;
  s.start_clock[rank] = im.clock[rank];
  s.work_at_start[rank] = im.work_us[rank];
  s.max_join_clock = std::max(s.max_join_clock, im.clock[rank]);
  return idx;
}

void wake_blocked(Impl& im, Slot& s) {
  for (size_t r = 0; r < im.blocked_on.size(); ++r)
    if (im.blocked_on[r] == &s) {
      im.tstate[r] = Impl::TState::Ready;
      im.blocked_on[r] = nullptr;
    }
}

// Pairwise tree sum of the per-rank contributions (fixed combination order).
void complete_reduce(Impl& im, Slot& s, int ranks) {
  std::vector<std::vector<double>> items = s.contrib;
  while (items.size() > 1) {
    std::vector<std::vector<double>> next;
    for (size_t i = 0; i < items.size(); i += 2) {
      if (i + 1 < items.size())
        for (size_t k = 0; k < items[i].size(); ++k) items[i][k] += items[i + 1][k];
      next.push_back(std::move(items[i]));
    }
    items = std::move(next);
  }
  s.result = std::move(items[0]);
  s.complete = true;
  im.cnt.messages += 2ll * (ranks - 1);
}

// Stacked QR over coefficient entries: the inputs form a vertical stack of m
// elements of S; outputs satisfy sum_i Q_i^T Q_i = I with R upper triangular in
// S. Backs the TSQR combination and the localized-Arnoldi tree nodes.
void coeffvec_qr(const std::vector<const SElement*>& in, AlgebraSpec alg,
                 std::vector<SElement>& qout, SElement& rout) {
  const int m = static_cast<int>(in.size());
  const int p = alg.p, q = alg.q();
  qout.assign(m, SElement(alg));
  rout = SElement(alg);
  const int groups = alg.replicated() ? 1 : q;
  std::vector<double> slab(static_cast<size_t>(m) * p * p);
  std::vector<double> qf(slab.size()), rf(static_cast<size_t>(p) * p);
  for (int g = 0; g < groups; ++g) {
    const int o = g * p;
    for (int e = 0; e < m; ++e)
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
          slab[(static_cast<size_t>(e) * p + i) * p + j] = in[e]->at(o + i, o + j);
    dense::householder_qr_thin(m * p, p, slab.data(), qf.data(), rf.data());
    for (int e = 0; e < m; ++e)
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
          qout[e].at(o + i, o + j) = qf[(static_cast<size_t>(e) * p + i) * p + j];
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) rout.at(o + i, o + j) = rf[i * p + j];
  }
  if (alg.replicated()) {
    for (int g = 1; g < q; ++g)
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
          for (int e = 0; e < m; ++e) qout[e].at(g * p + i, g * p + j) = qout[e].at(i, j);
          rout.at(g * p + i, g * p + j) = rout.at(i, j);
        }
  }
}

// Blocks the rank until the slot completes, then performs the per-rank clock /
// overlap accounting exactly once. Caller holds `lk`.
void wait_slot_locked(CommWorld& world, Impl& im, std::unique_lock<std::mutex>& lk, Slot& s,
                      int rank) {
  while (!s.complete) {
    if (im.aborting) throw CommError(std::string("aborted waiting on ") + type_name(s.type));
    im.tstate[rank] = Impl::TState::Blocked;
    im.blocked_on[rank] = &s;
    transfer_baton(im, world.config().sched_policy);
    im.cv.wait(lk, [&] { return (im.current == rank && s.complete) || im.aborting; });
    if (im.aborting) throw CommError(std::string("aborted waiting on ") + type_name(s.type));
  }
  if (s.waited[rank]) return;
  s.waited[rank] = 1;
  s.waited_count++;
  const double w = im.work_us[rank] - s.work_at_start[rank];
  const double tred = s.latency;
  const double hidden = std::min(w, world.config().overlap.factor * tred);
  im.clock[rank] = std::max(im.clock[rank], s.max_join_clock) + (tred - hidden);
  s.rank_overlapped[rank] = w > 0.0 ? 1 : 0;
  if (s.type == Slot::Type::Reduce) {
    im.outstanding[rank]--;
    if (s.waited_count == world.ranks()) {
      im.cnt.reductions_waited++;
      bool all = true;
      for (char f : s.rank_overlapped) all = all && (f != 0);
      if (all) im.cnt.overlapped_reductions++;
    }
  }
  if (s.type == Slot::Type::Normalize && world.ranks() > 1) {
    // trailing Q update: own rows times the back-scattered factor
    const long n = im.n_rows;
    const long P = world.ranks();
    const RowRange rr{static_cast<int>(rank * n / P), static_cast<int>((rank + 1) * n / P)};
    apply_right(*s.nx, s.ntau[rank], rr);
    const AlgebraSpec& a = s.nalg;
    const double fl = 2.0 * rr.size() * a.p * a.p * a.q();
    im.kcnt.flops += static_cast<long long>(fl);
    im.clock[rank] += fl * world.config().work.us_per_flop;
    im.work_us[rank] += fl * world.config().work.us_per_flop;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// ReductionTree / CommWorld basics
// ---------------------------------------------------------------------------

ReductionTree::ReductionTree(int ranks_, AlgebraSpec alg) : ranks(ranks_), algebra(alg) {}

void ReductionTree::reset() {
  iterations = 0;
  nodes.clear();
  last_zeta.clear();
  last_rho.clear();
}

CommWorld::CommWorld(Config cfg) : cfg_(cfg), impl_(std::make_unique<Impl>()) {
  if (cfg_.ranks < 1) throw ConfigError("CommWorld: ranks must be >= 1");
  impl_->clock.assign(cfg_.ranks, 0.0);
  impl_->work_us.assign(cfg_.ranks, 0.0);
  impl_->outstanding.assign(cfg_.ranks, 0);
}

CommWorld::~CommWorld() = default;

CommCounters CommWorld::counters() const {
  std::lock_guard lk(impl_->mu);
  return impl_->cnt;
}

KernelCounters CommWorld::kernel_counters() const {
  std::lock_guard lk(impl_->mu);
  return impl_->kcnt;
}

void CommWorld::reset_max_outstanding() {
  std::lock_guard lk(impl_->mu);
  impl_->cnt.max_outstanding = 0;
}

double CommWorld::clock_us(int rank) const {
  std::lock_guard lk(impl_->mu);
  return impl_->clock[rank];
}

double CommWorld::max_clock_us() const {
  std::lock_guard lk(impl_->mu);
  double m = 0.0;
  for (double c : impl_->clock) m = std::max(m, c);
  return m;
}

void CommWorld::run(int n_rows, const std::function<void(Rank&)>& task) {
  Impl& im = *impl_;
  {
    std::lock_guard lk(im.mu);
    im.n_rows = n_rows;
    im.slots.clear();
    im.next_slot.assign(cfg_.ranks, 0);
    im.tstate.assign(cfg_.ranks, Impl::TState::Ready);
    im.blocked_on.assign(cfg_.ranks, nullptr);
    im.done_count = 0;
    im.aborting = false;
    im.error = nullptr;
    std::fill(im.outstanding.begin(), im.outstanding.end(), 0);
    im.current = pick_ready(im.tstate, cfg_.sched_policy);
  }
  std::vector<std::thread> threads;
  threads.reserve(cfg_.ranks);
  for (int r = 0; r < cfg_.ranks; ++r) {
    threads.emplace_back([this, r, &task, &im] {
      {
        std::unique_lock lk(im.mu);
        im.cv.wait(lk, [&] { return im.current == r || im.aborting; });
        if (im.aborting) {
          im.tstate[r] = Impl::TState::Done;
          ++im.done_count;
          im.cv.notify_all();
          return;
        }
      }
      Rank rank(this, r);
      try {
        task(rank);
        std::lock_guard lk(im.mu);
        im.tstate[r] = Impl::TState::Done;
        ++im.done_count;
        transfer_baton(im, cfg_.sched_policy);
      } catch (...) {
        std::lock_guard lk(im.mu);
        if (!im.error) im.error = std::current_exception();
        im.aborting = true;
        im.tstate[r] = Impl::TState::Done;
        ++im.done_count;
        im.cv.notify_all();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (im.error) {
    auto err = im.error;
    im.error = nullptr;
    std::rethrow_exception(err);
  }
}

// ---------------------------------------------------------------------------
// Rank collectives (entered with the baton held by the calling rank)
// ---------------------------------------------------------------------------

int Rank::nranks() const { return world_->ranks(); }

RowRange Rank::rows() const {
  const long n = world_->impl_->n_rows;
  const long p = world_->ranks();
  return {static_cast<int>(id_ * n / p), static_cast<int>((id_ + 1) * n / p)};
}

double Rank::now_us() const { return world_->clock_us(id_); }

void Rank::add_work_us(double us) {
  std::lock_guard lk(world_->impl_->mu);
  world_->impl_->clock[id_] += us;
  world_->impl_->work_us[id_] += us;
}

void Rank::add_work_flops(double flops) { add_work_us(flops * world_->cfg_.work.us_per_flop); }

void Rank::charge_kernel(const KernelCounters& local) {
  std::lock_guard lk(world_->impl_->mu);
  KernelCounters& kc = world_->impl_->kcnt;
  kc.flops += local.flops;
  kc.values_loaded += local.values_loaded;
  kc.values_stored += local.values_stored;
  if (id_ == 0) {
    kc.bops += local.bops;
    kc.bdots += local.bdots;
    kc.baxpys += local.baxpys;
    kc.vector_updates += local.vector_updates;
  }
}

Future Rank::iallreduce(std::vector<double> local) {
  auto& im = *world_->impl_;
  std::lock_guard lk(im.mu);
  const size_t idx = join_slot(im, world_->cfg_, id_, Slot::Type::Reduce, local.size(), nullptr,
                               world_->t_red());
  Slot& s = *im.slots[idx];
  s.contrib[id_] = std::move(local);
  if (s.joined == world_->ranks()) {
    complete_reduce(im, s, world_->ranks());
    wake_blocked(im, s);
  }
  im.outstanding[id_]++;
  im.cnt.max_outstanding = std::max(im.cnt.max_outstanding, im.outstanding[id_]);
  return Future(world_, static_cast<int>(idx), id_);
}

Future::Future(Future&& o) noexcept
    : world_(o.world_), slot_(o.slot_), rank_(o.rank_), consumed_(o.consumed_) {
  o.world_ = nullptr;
}

Future& Future::operator=(Future&& o) noexcept {
  world_ = o.world_;
  slot_ = o.slot_;
  rank_ = o.rank_;
  consumed_ = o.consumed_;
  o.world_ = nullptr;
  return *this;
}

bool Future::ready() const {
  if (!world_) throw CommError("ready() on invalid future");
  std::lock_guard lk(world_->impl_->mu);
  return world_->impl_->slots[slot_]->complete;
}

void Future::wait() {
  if (!world_) throw CommError("wait() on invalid future");
  auto& im = *world_->impl_;
  std::unique_lock lk(im.mu);
  wait_slot_locked(*world_, im, lk, *im.slots[slot_], rank_);
}

std::vector<double> Future::get() {
  if (!world_) throw CommError("get() on invalid future");
  if (consumed_) throw CommError("get() on already-consumed future");
  wait();
  consumed_ = true;
  std::lock_guard lk(world_->impl_->mu);
  return world_->impl_->slots[slot_]->result;
}

std::vector<double> Rank::allreduce_now(std::vector<double> local) {
  Future f = iallreduce(std::move(local));
  return f.get();
}

void Rank::barrier() {
  auto& im = *world_->impl_;
  std::unique_lock lk(im.mu);
  const size_t idx = join_slot(im, world_->cfg_, id_, Slot::Type::Barrier, 0, nullptr, 0.0);
  Slot& s = *im.slots[idx];
  if (s.joined == world_->ranks()) {
    s.complete = true;
    wake_blocked(im, s);
  }
  wait_slot_locked(*world_, im, lk, s, id_);
}

Future Rank::inormalize(BlockVector& x, AlgebraSpec alg) {
  // local factorization happens now, in caller time
  const RowRange rr = rows();
  SElement local = normalize_in_place(x, alg, rr);
  const double fl = 2.0 * rr.size() * alg.s * alg.s;
  add_work_flops(fl);

  auto& im = *world_->impl_;
  std::lock_guard lk(im.mu);
  im.kcnt.flops += static_cast<long long>(fl);
  const size_t idx =
      join_slot(im, world_->cfg_, id_, Slot::Type::Normalize, 0, &x, world_->t_red());
  Slot& s = *im.slots[idx];
  s.nx = &x;
  s.nalg = alg;
  s.nsigma[id_] = std::move(local);
  if (s.joined == world_->ranks()) {
    const int P = world_->ranks();
    if (P == 1) {
      s.result = s.nsigma[0].raw();
    } else {
      // pairwise tree over the local R factors; tau accumulates each rank's
      // trailing multiplier left-to-right up the levels
      struct Item {
        SElement sig;
        std::vector<int> ranks;
      };
      std::vector<Item> items;
      items.reserve(P);
      for (int r = 0; r < P; ++r) items.push_back({s.nsigma[r], {r}});
      for (int r = 0; r < P; ++r) s.ntau[r] = SElement::identity(alg);
      while (items.size() > 1) {
        std::vector<Item> next;
        for (size_t i = 0; i < items.size(); i += 2) {
          if (i + 1 < items.size()) {
            std::vector<SElement> qparts;
            SElement rfac(alg);
            coeffvec_qr({&items[i].sig, &items[i + 1].sig}, alg, qparts, rfac);
            for (int r : items[i].ranks) s.ntau[r] = s.ntau[r].multiply(qparts[0]);
            for (int r : items[i + 1].ranks) s.ntau[r] = s.ntau[r].multiply(qparts[1]);
            Item merged{std::move(rfac), items[i].ranks};
            merged.ranks.insert(merged.ranks.end(), items[i + 1].ranks.begin(),
                                items[i + 1].ranks.end());
            next.push_back(std::move(merged));
          } else {
            next.push_back(std::move(items[i]));
          }
        }
        items = std::move(next);
      }
      s.result = items[0].sig.raw();
      im.cnt.messages += 2ll * (P - 1);
    }
    s.complete = true;
    wake_blocked(im, s);
  }
  return Future(world_, static_cast<int>(idx), id_);
}

// ---------------------------------------------------------------------------
// localized Arnoldi tree collectives
// ---------------------------------------------------------------------------

namespace {

// One reduction node (up-sweep): project the stacked child vectors onto the
// stored basis, subtract, normalize the remainder, extend the basis.
CoeffVec node_step(ReductionTree& t, ReductionTree::Node& node, CoeffVec in0, CoeffVec in1) {
  const AlgebraSpec alg = t.algebra;
  const int len = static_cast<int>(in0.size());
  CoeffVec rho(len, SElement(alg));
  for (int i = 0; i < len - 1; ++i) {
    const CoeffVec& z0 = node.basis0[i];
    const CoeffVec& z1 = node.basis1[i];
    SElement r_i(alg);
    for (size_t j = 0; j < z0.size(); ++j) {
      r_i.add_in_place(z0[j].transposed().multiply(in0[j]));
      r_i.add_in_place(z1[j].transposed().multiply(in1[j]));
      t.selement_products += 2;
    }
    for (size_t j = 0; j < z0.size(); ++j) {
      in0[j] = in0[j].sub(z0[j].multiply(r_i));
      in1[j] = in1[j].sub(z1[j].multiply(r_i));
      t.selement_products += 2;
    }
    rho[i] = std::move(r_i);
  }
  std::vector<const SElement*> stacked;
  stacked.reserve(2 * static_cast<size_t>(len));
  for (const auto& e : in0) stacked.push_back(&e);
  for (const auto& e : in1) stacked.push_back(&e);
  std::vector<SElement> qparts;
  SElement rfac(alg);
  coeffvec_qr(stacked, alg, qparts, rfac);
  t.selement_products += 2 * len;
  node.basis0.emplace_back(qparts.begin(), qparts.begin() + len);
  node.basis1.emplace_back(qparts.begin() + len, qparts.end());
  rho[len - 1] = std::move(rfac);
  return rho;
}

// Down-sweep expansion: out[j] = sum_i basis[i][j] * rho_in[i].
CoeffVec node_expand(ReductionTree& t, const std::vector<CoeffVec>& basis, const CoeffVec& rho_in) {
  const AlgebraSpec alg = t.algebra;
  const int len = static_cast<int>(rho_in.size());
  CoeffVec out(len, SElement(alg));
  for (int i = 0; i < len; ++i) {
    const CoeffVec& z = basis[i];
    for (size_t j = 0; j < z.size(); ++j) {
      out[j].add_in_place(z[j].multiply(rho_in[i]));
      t.selement_products += 1;
    }
  }
  return out;
}

void complete_tree_reduce(Impl& im, Slot& s, int ranks) {
  ReductionTree& t = *s.tree;
  std::vector<CoeffVec> items(s.tin.begin(), s.tin.end());
  size_t cursor = 0;
  const bool first = t.iterations == 0;
  while (items.size() > 1) {
    std::vector<CoeffVec> next;
    for (size_t i = 0; i < items.size(); i += 2) {
      if (i + 1 < items.size()) {
        if (first) t.nodes.emplace_back();
        ReductionTree::Node& node = t.nodes[cursor++];
        next.push_back(node_step(t, node, std::move(items[i]), std::move(items[i + 1])));
      } else {
        next.push_back(std::move(items[i]));
      }
    }
    items = std::move(next);
  }
  t.last_rho = std::move(items[0]);
  t.iterations++;
  im.cnt.messages += 2ll * (ranks - 1);  // up-sweep sends + rho broadcast
  s.complete = true;
}

void complete_tree_backprop(Impl& im, Slot& s, int ranks) {
  ReductionTree& t = *s.tree;
  const AlgebraSpec alg = t.algebra;
  const int len = t.iterations;
  // mirror the up-sweep structure: item counts and node index ranges per level
  std::vector<int> level_counts;
  std::vector<std::pair<size_t, size_t>> node_ranges;
  {
    size_t begin = 0;
    int cnt = ranks;
    while (cnt > 1) {
      level_counts.push_back(cnt);
      const size_t pairs = static_cast<size_t>(cnt) / 2;
      node_ranges.emplace_back(begin, begin + pairs);
      begin += pairs;
      cnt = static_cast<int>(pairs) + (cnt % 2);
    }
  }
  CoeffVec unit(len, SElement(alg));
  unit[len - 1] = SElement::identity(alg);
  std::vector<CoeffVec> cur{std::move(unit)};
  for (int lvl = static_cast<int>(node_ranges.size()) - 1; lvl >= 0; --lvl) {
    const int in_count = level_counts[lvl];
    std::vector<CoeffVec> expanded(in_count);
    const size_t pairs = node_ranges[lvl].second - node_ranges[lvl].first;
    for (size_t pr = 0; pr < pairs; ++pr) {
      ReductionTree::Node& node = t.nodes[node_ranges[lvl].first + pr];
      expanded[2 * pr] = node_expand(t, node.basis0, cur[pr]);
      expanded[2 * pr + 1] = node_expand(t, node.basis1, cur[pr]);
    }
    if (in_count % 2 == 1) expanded[in_count - 1] = std::move(cur[pairs]);
    cur = std::move(expanded);
  }
  t.last_zeta.assign(ranks, {});
  for (int r = 0; r < ranks; ++r) t.last_zeta[r] = std::move(cur[r]);
  im.cnt.messages += ranks - 1;
  s.complete = true;
}

}  // namespace

CoeffVec Rank::localized_reduce(ReductionTree& tree, const CoeffVec& local_rfactor) {
  auto& im = *world_->impl_;
  if (tree.ranks != world_->ranks()) throw CommError("localized_reduce: tree built for wrong P");
  if (static_cast<int>(local_rfactor.size()) != tree.iterations + 1)
    throw CommError("localized_reduce: R-factor length desynchronized from tree state");
  std::unique_lock lk(im.mu);
  const size_t idx = join_slot(im, world_->cfg_, id_, Slot::Type::TreeReduce,
                               local_rfactor.size(), &tree, world_->t_red());
  Slot& s = *im.slots[idx];
  s.tree = &tree;
  s.tin[id_] = local_rfactor;
  if (s.joined == world_->ranks()) {
    complete_tree_reduce(im, s, world_->ranks());
    wake_blocked(im, s);
  }
  wait_slot_locked(*world_, im, lk, s, id_);
  return tree.last_rho;
}

CoeffVec Rank::localized_backprop(ReductionTree& tree) {
  auto& im = *world_->impl_;
  if (tree.iterations == 0) throw CommError("localized_backprop: no preceding reduce");
  std::unique_lock lk(im.mu);
  const size_t idx = join_slot(im, world_->cfg_, id_, Slot::Type::TreeBackprop, 0, &tree,
                               world_->t_red() / 2.0);
  Slot& s = *im.slots[idx];
  s.tree = &tree;
  if (s.joined == world_->ranks()) {
    if (world_->ranks() == 1) {
      // the rank's local basis is the global one
      CoeffVec unit(tree.iterations, SElement(tree.algebra));
      unit[tree.iterations - 1] = SElement::identity(tree.algebra);
      tree.last_zeta.assign(1, std::move(unit));
      s.complete = true;
    } else {
      complete_tree_backprop(im, s, world_->ranks());
    }
    wake_blocked(im, s);
  }
  wait_slot_locked(*world_, im, lk, s, id_);
  return tree.last_zeta[id_];
}

// ---------------------------------------------------------------------------
// drivers
// ---------------------------------------------------------------------------

std::vector<OverlapReport> overlap_benchmark(CommWorld& world) {
  std::vector<OverlapReport> rows;
  world.run(world.ranks(), [&](Rank& r) {
    auto measure = [&](double work_us) {
      const double t0 = r.now_us();
      Future f = r.iallreduce({1.0});
      if (work_us > 0.0) r.add_work_us(work_us);
      f.wait();
      return r.now_us() - t0;
    };
    const double tbase = measure(0.0);
    if (tbase <= 0.0) {
      if (r.id() == 0) rows.push_back({0, 0, 0, 0, 0});
      return;
    }
    double w = tbase / 4.0;
    for (int i = 0; i < 64; ++i) {
      const double titer = measure(w);
      if (r.id() == 0) {
        OverlapReport row;
        row.t_base = tbase;
        row.t_work = w;
        row.t_iter = titer;
        row.t_ovhd = titer - w;
        row.t_avail = tbase - row.t_ovhd;
        rows.push_back(row);
      }
      if (titer > 2.0 * tbase) break;
      w *= 2.0;
    }
  });
  return rows;
}

SElement tsqr(CommWorld& world, BlockVector& x, AlgebraSpec alg) {
  SElement sigma(alg);
  world.run(x.rows(), [&](Rank& r) {
    Future f = r.inormalize(x, alg);
    auto raw = f.get();
    if (r.id() == 0) sigma.raw() = raw;
  });
  return sigma;
}

}  // namespace bkrylov
