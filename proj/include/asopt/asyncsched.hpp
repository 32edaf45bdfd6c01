// SPDX-License-Identifier: Apache-2.0
//
// The shadow pipeline: a host worker pool executing factor refreshes on
// snapshots, per-block pending-job tracking with coalescing, hook-driven
// staging against the tier store, and the bounded-staleness barrier.
//
// Job timing is deterministic: a job dispatched at simulated time T with an
// injected cost C becomes installable at T + C on the simulated clock. The
// worker pool still computes results on real threads; the simulated clock
// only gates visibility, so runs are reproducible bit-for-bit while the
// machinery stays genuinely concurrent.
#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <optional>
#include <queue>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "asopt/precond.hpp"
#include "asopt/tierstore.hpp"
#include "asopt/trace.hpp"

namespace asopt {

struct SimClock {
    double now_us = 0.0;
    void advance(double us) { now_us += us; }
};

struct HookEvent {
    enum class Kind { ForwardPost, BackwardPre, StepEnd };
    Kind kind = Kind::StepEnd;
    int module_id = -1;
    std::int64_t step = 0;
};

struct StalenessPolicy {
    std::int64_t max_age_steps = 5;  // S
    std::int64_t pf = 10;
};

struct SchedulerConfig {
    std::int64_t staleness_S = 5;
    std::int64_t pf = 10;
    int pool_size = 0;  // 0: min(block count, hardware concurrency)
    double inject_job_delay_steps = 0.0;
    double inject_job_delay_jitter_steps = 0.0;
    int drain_budget = 4;  // transfers installed per ForwardPost
    double step_compute_us = 1000.0;
    double install_cost_us = 0.0;
};

struct PoolStats {
    std::uint64_t dispatched = 0;
    std::uint64_t completed = 0;
    std::uint64_t installed = 0;
    std::uint64_t coalesced = 0;
    std::uint64_t barrier_waits = 0;
    double wait_total_us = 0.0;
    int pending = 0;      // jobs dispatched but not yet installed
    int queue_depth = 0;  // jobs not yet picked up by a pool worker
};

struct FreshnessRecord {
    std::string block_id;
    std::uint64_t installed_version = 0;
    std::optional<std::int64_t> dispatch_step_of_pending;
    std::int64_t last_install_step = -1;
    std::int64_t installed_snapshot_step = -1;
};

class WorkerPool {
  public:
    explicit WorkerPool(int threads);
    ~WorkerPool();
    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;

    using Job = std::function<void()>;

    template <class F>
    auto submit(F&& fn) -> std::future<std::invoke_result_t<F>> {
        using R = std::invoke_result_t<F>;
        auto task = std::make_shared<std::packaged_task<R()>>(std::forward<F>(fn));
        enqueue([task] { (*task)(); });
        return task->get_future();
    }

    void stop();
    bool stopped() const;
    int thread_count() const { return static_cast<int>(threads_.size()); }
    int queue_depth() const;

  private:
    void enqueue(Job job);
    void worker_loop();

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::queue<Job> jobs_;
    std::vector<std::thread> threads_;
    bool stop_ = false;
};

/// Per-rank scheduler driving one rank's blocks through the shadow pipeline.
/// TierStore and TraceBuffer are optional (unit tests run without them).
class ShadowScheduler {
  public:
    ShadowScheduler(WorkerPool& pool, OptimizerConfig opt, SchedulerConfig cfg, int rank,
                    std::uint64_t seed, SimClock* clock, TraceBuffer* trace = nullptr,
                    TierStore* store = nullptr);

    /// Snapshot + enqueue iff step % pf == 0 and no job is pending for the
    /// block (coalescing). Returns whether a job was dispatched.
    bool maybe_dispatch(PrecondBlock& block, std::int64_t step);

    /// Bounded-staleness barrier; returns the simulated wait in µs.
    /// Waits (and installs the pending job) when:
    ///   - S == 0: any pending job (fully synchronous boundary case),
    ///   - the pending job's age exceeds S,
    ///   - the block has no installed version yet (bootstrap),
    ///   - the installed snapshot would otherwise age past (S+1)·pf.
    double staleness_barrier(PrecondBlock& block, std::int64_t step);

    /// ForwardPost: drain staged transfers. BackwardPre: page-in cold
    /// inverse state for the module's blocks. StepEnd: install jobs whose
    /// simulated completion has passed.
    void on_hook(const HookEvent& ev, std::span<PrecondBlock*> module_blocks);

    const FreshnessRecord& freshness(const std::string& block_id) const;
    PoolStats stats() const;

  private:
    struct Pending {
        std::int64_t dispatch_step = 0;
        double dispatch_sim_us = 0.0;
        double completion_sim_us = 0.0;
        std::uint64_t snapshot_checksum = 0;
        std::future<std::pair<RefreshResult, std::uint64_t>> result;
    };

    void install(PrecondBlock& block, Pending pending, std::int64_t step);
    void emit(std::int64_t step, TraceEventKind kind, const std::string& block,
              std::uint64_t version, double t_us);
    FreshnessRecord& fresh(const std::string& block_id);

    WorkerPool& pool_;
    OptimizerConfig opt_;
    SchedulerConfig cfg_;
    int rank_;
    SimClock* clock_;
    TraceBuffer* trace_;
    TierStore* store_;
    std::mt19937_64 jitter_rng_;  // seeded identically on every rank
    std::unordered_map<std::string, Pending> pending_;
    std::unordered_map<std::string, FreshnessRecord> freshness_;
    struct QueuedPrefetch {
        TierKey key;
        std::string block_id;
        std::int64_t enqueue_step = 0;
    };
    std::deque<QueuedPrefetch> queued_prefetches_;
    PoolStats stats_;
};

}  // namespace asopt
