// SPDX-License-Identifier: Apache-2.0
#include "asopt/asyncsched.hpp"

#include <chrono>

#include "asopt/tensor_bytes.hpp"

namespace asopt {

WorkerPool::WorkerPool(int threads) {
    const int n = std::max(1, threads);
    threads_.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) threads_.emplace_back([this] { worker_loop(); });
}

WorkerPool::~WorkerPool() { stop(); }

void WorkerPool::enqueue(Job job) {
    {
        std::lock_guard lk(mu_);
        if (stop_) throw WorkerPoolDownError("worker pool is stopped");
        jobs_.push(std::move(job));
    }
    cv_.notify_one();
}

void WorkerPool::stop() {
    {
        std::lock_guard lk(mu_);
        if (stop_) return;
        stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_)
        if (t.joinable()) t.join();
}

bool WorkerPool::stopped() const {
    std::lock_guard lk(mu_);
    return stop_;
}

int WorkerPool::queue_depth() const {
    std::lock_guard lk(mu_);
    return static_cast<int>(jobs_.size());
}

void WorkerPool::worker_loop() {
    while (true) {
        Job job;
        {
            std::unique_lock lk(mu_);
            cv_.wait(lk, [&] { return stop_ || !jobs_.empty(); });
            if (jobs_.empty()) return;  // stopping and drained
            job = std::move(jobs_.front());
            jobs_.pop();
        }
        job();
    }
}

ShadowScheduler::ShadowScheduler(WorkerPool& pool, OptimizerConfig opt, SchedulerConfig cfg,
                                 int rank, std::uint64_t seed, SimClock* clock,
                                 TraceBuffer* trace, TierStore* store)
    : pool_(pool),
      opt_(std::move(opt)),
      cfg_(std::move(cfg)),
      rank_(rank),
      clock_(clock),
      trace_(trace),
      store_(store),
      // Identical jitter stream on every rank keeps install schedules
      // rank-uniform; the dispatch order per rank is identical by symmetry.
      jitter_rng_(seed * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull) {
    if (cfg_.staleness_S < 0) throw ConfigInvalidError("staleness_S must be >= 0");
    if (cfg_.pf < 1) throw ConfigInvalidError("pf must be >= 1");
}

void ShadowScheduler::emit(std::int64_t step, TraceEventKind kind, const std::string& block,
                           std::uint64_t version, double t_us) {
    if (trace_) trace_->emit(step, kind, block, version, t_us);
}

FreshnessRecord& ShadowScheduler::fresh(const std::string& block_id) {
    auto it = freshness_.find(block_id);
    if (it == freshness_.end()) {
        FreshnessRecord rec;
        rec.block_id = block_id;
        it = freshness_.emplace(block_id, std::move(rec)).first;
    }
    return it->second;
}

const FreshnessRecord& ShadowScheduler::freshness(const std::string& block_id) const {
    auto it = freshness_.find(block_id);
    if (it == freshness_.end())
        throw MissingKeyError("asyncsched: no freshness record for " + block_id);
    return it->second;
}

PoolStats ShadowScheduler::stats() const {
    PoolStats s = stats_;
    s.pending = static_cast<int>(pending_.size());
    s.queue_depth = pool_.queue_depth();
    return s;
}

bool ShadowScheduler::maybe_dispatch(PrecondBlock& block, std::int64_t step) {
    if (step % cfg_.pf != 0) return false;
    const std::string id = block.spec.id();
    if (pending_.count(id)) {
        stats_.coalesced += 1;
        return false;
    }
    if (pool_.stopped()) throw WorkerPoolDownError("asyncsched: dispatch after pool stop");

    FactorSnapshot snap = snapshot_factors(block);
    double cost_steps = cfg_.inject_job_delay_steps;
    if (cfg_.inject_job_delay_jitter_steps > 0.0) {
        std::uniform_real_distribution<double> dist(0.0, cfg_.inject_job_delay_jitter_steps);
        cost_steps += dist(jitter_rng_);
    }
    Pending p;
    p.dispatch_step = step;
    p.dispatch_sim_us = clock_ ? clock_->now_us : 0.0;
    p.completion_sim_us = p.dispatch_sim_us + cost_steps * cfg_.step_compute_us;
    p.snapshot_checksum = snap.checksum;
    OptimizerConfig opt = opt_;
    p.result = pool_.submit([snapshot = std::move(snap), opt]() {
        // Checksum recomputed on the worker: snapshot isolation means the
        // training thread's further factor updates cannot be visible here.
        const std::uint64_t hl = matrix_checksum(snapshot.factor_l.full());
        const std::uint64_t at_start =
            matrix_checksum(snapshot.factor_r.full()) ^ (hl * 0x9e3779b97f4a7c15ull);
        return std::make_pair(compute_refresh(snapshot, opt), at_start);
    });
    emit(step, TraceEventKind::Dispatch, id, block.version, clock_ ? clock_->now_us : 0.0);
    fresh(id).dispatch_step_of_pending = step;
    pending_.emplace(id, std::move(p));
    stats_.dispatched += 1;
    return true;
}

void ShadowScheduler::install(PrecondBlock& block, Pending pending, std::int64_t step) {
    const std::string id = block.spec.id();
    auto [result, checksum_at_start] = pending.result.get();  // may block on the real worker
    stats_.completed += 1;
    if (checksum_at_start != pending.snapshot_checksum)
        throw AuditError("asyncsched: snapshot mutated between dispatch and job start for " + id);

    emit(pending.dispatch_step, TraceEventKind::JobStart, id, block.version,
         pending.dispatch_sim_us);
    emit(step, TraceEventKind::JobDone, id, block.version, pending.completion_sim_us);

    install_refresh(block, std::move(result), step);
    if (clock_) clock_->advance(cfg_.install_cost_us);

    FreshnessRecord& rec = fresh(id);
    rec.installed_version = block.version;
    rec.last_install_step = step;
    rec.installed_snapshot_step = pending.dispatch_step;
    rec.dispatch_step_of_pending.reset();

    if (store_) {
        // Write back in place to the host-resident state, then stage the
        // refreshed tensors toward the hot tier for the next consumer.
        const bool soap = opt_.method == Method::Soap;
        const TensorRole left = soap ? TensorRole::BasisL : TensorRole::InvFactorL;
        const TensorRole right = soap ? TensorRole::BasisR : TensorRole::InvFactorR;
        const Matd l =
            soap ? block.basis_l.vectors : block.inv_l.full();
        const Matd r =
            soap ? block.basis_r.vectors : block.inv_r.full();
        auto lb = matrix_bytes(l);
        auto rb = matrix_bytes(r);
        store_->put(TierKey{id, left}, lb, TierTag::Host);
        store_->put(TierKey{id, right}, rb, TierTag::Host);
        block.residency[left] = TierTag::Host;
        block.residency[right] = TierTag::Host;
        store_->prefetch(TierKey{id, left}, TierTag::Hot);
        store_->prefetch(TierKey{id, right}, TierTag::Hot);
        queued_prefetches_.push_back({TierKey{id, left}, id, step});
        queued_prefetches_.push_back({TierKey{id, right}, id, step});
        emit(step, TraceEventKind::Prefetch, id, block.version, clock_ ? clock_->now_us : 0.0);
    }
    emit(step, TraceEventKind::Install, id, block.version, clock_ ? clock_->now_us : 0.0);
    stats_.installed += 1;
    pending_.erase(id);
}

double ShadowScheduler::staleness_barrier(PrecondBlock& block, std::int64_t step) {
    const std::string id = block.spec.id();
    auto it = pending_.find(id);
    if (it == pending_.end()) return 0.0;
    Pending& p = it->second;

    const std::int64_t age = step - p.dispatch_step;
    // Before the first install the block consumes its identity factors, so
    // only the pending job's age (and S=0's fully synchronous contract)
    // can force a wait; afterwards the consumed-snapshot age must also stay
    // within (S+1)*pf even when coalescing stretched the dispatch gap.
    const bool stale_consumer =
        block.version > 0 &&
        step - freshness(id).installed_snapshot_step > (cfg_.staleness_S + 1) * cfg_.pf;
    const bool wait = cfg_.staleness_S == 0 || age > cfg_.staleness_S || stale_consumer;
    if (!wait) return 0.0;

    if (pool_.stopped()) throw WorkerPoolDownError("asyncsched: barrier with pool down");
    const double now = clock_ ? clock_->now_us : 0.0;
    const double waited = std::max(0.0, p.completion_sim_us - now);
    emit(step, TraceEventKind::BarrierWaitBegin, id, block.version, now);
    if (clock_) clock_->advance(waited);
    Pending taken = std::move(it->second);
    pending_.erase(it);
    install(block, std::move(taken), step);
    emit(step, TraceEventKind::BarrierWaitEnd, id, block.version,
         clock_ ? clock_->now_us : 0.0);
    stats_.barrier_waits += 1;
    stats_.wait_total_us += waited;
    return waited;
}

void ShadowScheduler::on_hook(const HookEvent& ev, std::span<PrecondBlock*> module_blocks) {
    switch (ev.kind) {
        case HookEvent::Kind::ForwardPost: {
            if (!store_) return;
            // Deterministic drain: only transfers enqueued before this step
            // count as ready, and we wait out the (real) link time for them.
            int budget = cfg_.drain_budget;
            while (budget > 0 && !queued_prefetches_.empty() &&
                   queued_prefetches_.front().enqueue_step < ev.step) {
                QueuedPrefetch q = queued_prefetches_.front();
                queued_prefetches_.pop_front();
                for (int spins = 0; spins < 200000; ++spins) {
                    store_->drain_ready(cfg_.drain_budget);
                    const EntryView view = store_->inspect(q.key);
                    if (!view.staged_pending && !view.staged_ready) break;
                    std::this_thread::sleep_for(std::chrono::microseconds(50));
                }
                const std::uint64_t version = fresh(q.block_id).installed_version;
                emit(ev.step, TraceEventKind::Drain, q.block_id, version,
                     clock_ ? clock_->now_us : 0.0);
                budget -= 1;
            }
            break;
        }
        case HookEvent::Kind::BackwardPre: {
            if (!store_) return;
            for (PrecondBlock* block : module_blocks) {
                const std::string id = block->spec.id();
                const bool soap = opt_.method == Method::Soap;
                for (TensorRole role :
                     {soap ? TensorRole::BasisL : TensorRole::InvFactorL,
                      soap ? TensorRole::BasisR : TensorRole::InvFactorR}) {
                    const TierKey key{id, role};
                    if (!store_->contains(key)) continue;
                    if (store_->inspect(key).tier == TierTag::Cold) {
                        store_->prefetch(key, TierTag::Host);
                        queued_prefetches_.push_back({key, id, ev.step});
                        block->residency[role] = TierTag::Cold;
                        emit(ev.step, TraceEventKind::Prefetch, id, block->version,
                             clock_ ? clock_->now_us : 0.0);
                    }
                }
            }
            break;
        }
        case HookEvent::Kind::StepEnd: {
            const double now = clock_ ? clock_->now_us : 0.0;
            // Collect jobs whose simulated completion has passed; installs
            // swap whole tensors, so a step never sees a partial refresh.
            std::vector<std::string> ready;
            for (auto& [id, p] : pending_)
                if (p.completion_sim_us <= now) ready.push_back(id);
            std::sort(ready.begin(), ready.end());
            for (const auto& id : ready) {
                PrecondBlock* block = nullptr;
                for (PrecondBlock* b : module_blocks)
                    if (b->spec.id() == id) block = b;
                if (!block) continue;  // caller did not pass this block
                auto node = pending_.extract(id);
                install(*block, std::move(node.mapped()), ev.step);
            }
            if (store_) store_->advance_step(ev.step);
            break;
        }
    }
}

}  // namespace asopt
