// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
// the process exits nonzero if any criterion fails.
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <thread>
#include <vector>

#include "asopt/coherence.hpp"
#include "asopt/harness.hpp"
#include "asopt/metrics.hpp"
#include "asopt/tensor_bytes.hpp"
#include "asopt/tierstore.hpp"
#include "support/reference_opt.hpp"
#include "support/test_util.hpp"

using namespace asopt;
namespace fs = std::filesystem;

namespace {

int failures = 0;

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, detail.c_str());
    std::fflush(stdout);
    if (!pass) failures += 1;
}

void run_criterion(int n, const std::function<std::pair<bool, std::string>()>& fn) {
    try {
        auto [pass, detail] = fn();
        report(n, pass, detail);
    } catch (const std::exception& e) {
        report(n, false, std::string("exception: ") + e.what());
    }
}

fs::path scratch_dir() {
    static fs::path dir = [] {
        auto p = fs::temp_directory_path() /
                 ("acceptance_" + std::to_string(std::random_device{}()));
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

// --------------------------------------------------------------------------
// 1. Inverse-root correctness across dims, 200 random SPD matrices.
std::pair<bool, std::string> criterion1() {
    Timer timer;
    const std::vector<Index> dims = {2, 8, 32, 128, 256};
    int checked = 0;
    double worst = 0.0;
    for (Index dim : dims) {
        for (int i = 0; i < 40; ++i) {
            auto m = testutil::random_spd(dim, 1000 + static_cast<std::uint64_t>(dim) * 100 +
                                                   static_cast<std::uint64_t>(i));
            const double eps = 1e-9;
            auto root = inv_root(m, 4, eps);
            Matd damped = m.full() + eps * Matd::Identity(dim, dim);
            Matd p2 = root.full() * root.full();
            Matd residual = p2 * p2 * damped - Matd::Identity(dim, dim);
            const double err = residual.cwiseAbs().maxCoeff();
            worst = std::max(worst, err / static_cast<double>(dim));
            if (err >= 1e-6 * static_cast<double>(dim))
                return {false, "residual " + std::to_string(err) + " at dim " +
                                   std::to_string(dim)};
            ++checked;
        }
    }
    const double secs = timer.seconds();
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "inverse-root operator check, %d matrices, worst %.2e of 1e-6*dim, %.1fs",
                  checked, worst, secs);
    return {checked == 200 && secs < 60.0, buf};
}

// --------------------------------------------------------------------------
// 2. Synchronous-oracle equivalence: S=0, pf in {1,10}, Shampoo and SOAP.
std::pair<bool, std::string> criterion2() {
    Timer timer;
    double worst = 0.0;
    for (Method method : {Method::Shampoo, Method::Soap}) {
        for (std::int64_t pf : {1, 10}) {
            RunConfig cfg;
            cfg.seed = 33;
            cfg.optimizer = OptimizerConfig::defaults_for(method);
            cfg.optimizer.lr = 3e-3;
            cfg.optimizer.precondition_frequency = pf;
            cfg.async_cfg.staleness_S = 0;
            cfg.net.ranks = 1;
            cfg.task.classes = 16;
            cfg.task.batch_size = 24;
            cfg.task.steps = 200;
            cfg.model.layer_dims = {32, 48, 16};
            cfg.model.activation = Activation::Tanh;

            std::vector<std::vector<Matd>> ref;
            ref.reserve(200);
            testref::reference_run(cfg,
                                   [&](std::int64_t, const std::vector<Matd>& p, double) {
                                       ref.push_back(p);
                                   });
            std::atomic<double> max_diff{0.0};
            run_training(cfg, "", [&](std::int64_t step, const std::vector<Matd>& p, double) {
                double d = 0.0;
                for (size_t i = 0; i < p.size(); ++i)
                    d = std::max(d, (p[i] - ref[static_cast<size_t>(step)][i])
                                        .cwiseAbs()
                                        .maxCoeff());
                double cur = max_diff.load();
                while (d > cur && !max_diff.compare_exchange_weak(cur, d)) {
                }
            });
            worst = std::max(worst, max_diff.load());
            if (max_diff.load() > 1e-10)
                return {false, to_string(method) + " pf=" + std::to_string(pf) +
                                   " diverged by " + std::to_string(max_diff.load())};
        }
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "S=0 trajectories match the reference elementwise, worst %.2e, %.1fs",
                  worst, timer.seconds());
    return {timer.seconds() < 120.0, buf};
}

// --------------------------------------------------------------------------
// 3. Bounded-staleness trace audit over randomized schedules.
std::pair<bool, std::string> criterion3() {
    struct Sched {
        std::int64_t S, pf;
        double delay, jitter;
    };
    const std::vector<Sched> schedules = {
        {0, 10, 0.0, 0.0}, {1, 1, 2.0, 1.0},  {3, 5, 1.5, 1.5},
        {5, 10, 3.0, 0.0}, {10, 2, 0.5, 2.5}, {1, 10, 2.0, 0.8},
    };
    std::int64_t assertions = 0, violations = 0, coalescing = 0;
    int run_idx = 0;
    for (const auto& sched : schedules) {
        RunConfig cfg;
        cfg.seed = 500 + static_cast<std::uint64_t>(run_idx);
        cfg.optimizer = OptimizerConfig::defaults_for(Method::Shampoo);
        cfg.optimizer.lr = 1e-3;
        cfg.optimizer.precondition_frequency = sched.pf;
        cfg.async_cfg.staleness_S = sched.S;
        cfg.async_cfg.inject_job_delay_steps = sched.delay;
        cfg.async_cfg.inject_job_delay_jitter_steps = sched.jitter;
        cfg.task.classes = 6;
        cfg.task.batch_size = 8;
        cfg.task.steps = 500;
        cfg.model.layer_dims = {10, 12, 6};
        const auto dir = scratch_dir() / ("audit_" + std::to_string(run_idx));
        run_training(cfg, dir.string());
        TraceFile trace = parse_trace_file((dir / "trace.jsonl").string());
        StalenessAudit audit = audit_staleness(trace, sched.S, sched.pf, cfg.task.steps);
        assertions += audit.assertions;
        violations += audit.violations;
        coalescing += audit.coalescing_violations;
        ++run_idx;
    }
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "%lld trace assertions across %zu randomized schedules, %lld age violations, "
                  "%lld coalescing violations",
                  static_cast<long long>(assertions), schedules.size(),
                  static_cast<long long>(violations), static_cast<long long>(coalescing));
    return {assertions >= 1000 && violations == 0 && coalescing == 0, buf};
}

// --------------------------------------------------------------------------
// 4. Spike flattening: sync spike_ratio >= 3, async <= 1.3, losses in band.
std::pair<bool, std::string> criterion4() {
    auto base = [] {
        RunConfig cfg;
        cfg.seed = 77;
        cfg.optimizer = OptimizerConfig::defaults_for(Method::Soap);
        cfg.optimizer.lr = 1e-2;
        cfg.optimizer.precondition_frequency = 10;
        cfg.async_cfg.inject_job_delay_steps = 5.0;  // 5x step compute
        cfg.task.classes = 4;
        cfg.task.batch_size = 32;
        cfg.task.steps = 500;
        cfg.task.label_noise = 0.25;  // nonzero loss floor
        cfg.model.layer_dims = {8, 16, 4};
        cfg.sim.step_compute_us = 1000.0;
        cfg.sim.install_cost_us = 10.0;
        return cfg;
    }();

    RunConfig sync_cfg = base;
    sync_cfg.async_cfg.staleness_S = 0;
    RunConfig async_cfg = base;
    async_cfg.async_cfg.staleness_S = 5;
    const auto sync_dir = scratch_dir() / "spike_sync";
    const auto async_dir = scratch_dir() / "spike_async";
    RunSummary sync_run = run_training(sync_cfg, sync_dir.string());
    RunSummary async_run = run_training(async_cfg, async_dir.string());

    const SpikeStats sync_stats =
        spike_stats(load_series_csv((sync_dir / "series.csv").string()));
    const SpikeStats async_stats =
        spike_stats(load_series_csv((async_dir / "series.csv").string()));
    const double rel_gap =
        std::abs(sync_run.final_eval_loss - async_run.final_eval_loss) /
        std::max(sync_run.final_eval_loss, async_run.final_eval_loss);

    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "sync spike_ratio %.2f (need >=3), async %.3f (need <=1.3), loss gap %.2f%%",
                  sync_stats.spike_ratio, async_stats.spike_ratio, 100.0 * rel_gap);
    return {sync_stats.spike_ratio >= 3.0 && async_stats.spike_ratio <= 1.3 && rel_gap <= 0.02,
            buf};
}

// --------------------------------------------------------------------------
// 5. Staleness sweep: waits nonincreasing, plateau, eval losses in band.
std::pair<bool, std::string> criterion5() {
    RunConfig cfg;
    cfg.seed = 88;
    cfg.optimizer = OptimizerConfig::defaults_for(Method::Soap);
    cfg.optimizer.lr = 1e-2;
    cfg.optimizer.precondition_frequency = 10;
    cfg.async_cfg.inject_job_delay_steps = 3.4;
    cfg.task.classes = 4;
    cfg.task.batch_size = 32;
    cfg.task.steps = 500;
    cfg.task.label_noise = 0.25;
    cfg.model.layer_dims = {8, 16, 4};

    RunConfig sync_cfg = cfg;
    sync_cfg.async_cfg.staleness_S = 0;
    const double sync_loss = run_training(sync_cfg).final_eval_loss;

    auto rows = sweep(cfg, SweepAxis::Staleness, {1, 2, 3, 5, 10},
                      (scratch_dir() / "ssweep").string());
    bool nonincreasing = true;
    for (size_t i = 1; i < rows.size(); ++i)
        if (rows[i].exposed_wait_us > rows[i - 1].exposed_wait_us + 1e-9) nonincreasing = false;
    const double w5 = rows[3].exposed_wait_us;
    const double w10 = rows[4].exposed_wait_us;
    const bool plateau = w5 <= 1.1 * w10 + 1e-9;

    double lo = sync_loss, hi = sync_loss;
    for (const auto& r : rows) {
        lo = std::min(lo, r.final_eval_loss);
        hi = std::max(hi, r.final_eval_loss);
    }
    const double band = (hi - lo) / hi;
    const double band_limit = cfg.report.loss_band_rel;

    char buf[240];
    std::snprintf(buf, sizeof(buf),
                  "wait(S)/us = {%.0f,%.0f,%.0f,%.0f,%.0f}, plateau w5<=1.1*w10 %s, "
                  "eval-loss band %.2f%% (incl. S=0)",
                  rows[0].exposed_wait_us, rows[1].exposed_wait_us, rows[2].exposed_wait_us,
                  rows[3].exposed_wait_us, rows[4].exposed_wait_us, plateau ? "yes" : "no",
                  100.0 * band);
    return {nonincreasing && plateau && band <= band_limit, buf};
}

// --------------------------------------------------------------------------
// 6. Coherence correctness and volume.
std::pair<bool, std::string> criterion6() {
    // (a) Post-sync agreement and weighted-mean correctness on divergent
    // replicas, including an uneven layout.
    const std::vector<std::vector<std::vector<int>>> layouts = {
        {{0, 1}, {2, 3}}, {{0, 1, 2}, {3}}, {{0, 1}, {2, 3}, {4, 5}}};
    for (const auto& layout : layouts) {
        TopologyConfig tc;
        tc.explicit_nodes = layout;
        TopologyGraph topo = discover_topology(tc);
        const int n = topo.world_size();
        NetConfig net;
        net.ranks = n;
        net.nodes = topo.node_count();
        Communicator comm(net, topo);
        CoherenceController ctrl(comm, CoherenceBudget{1});

        std::vector<Vecd> replicas;
        Vecd mean = Vecd::Zero(24);
        for (int r = 0; r < n; ++r) {
            Vecd v(24);
            std::mt19937_64 rng(900 + static_cast<std::uint64_t>(r));
            std::normal_distribution<double> dist;
            for (Index i = 0; i < 24; ++i) v[i] = dist(rng);
            mean += v;
            replicas.push_back(std::move(v));
        }
        mean /= static_cast<double>(n);

        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(static_cast<size_t>(n));
        for (int r = 0; r < n; ++r)
            threads.emplace_back([&, r] {
                try {
                    ctrl.hierarchical_sync(r, "blk", 0, replicas[static_cast<size_t>(r)]);
                } catch (...) {
                    errors[static_cast<size_t>(r)] = std::current_exception();
                }
            });
        for (auto& t : threads) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);

        for (int r = 1; r < n; ++r)
            if (!(replicas[static_cast<size_t>(r)] == replicas[0]))
                return {false, "replicas not bit-identical after sync"};
        if ((replicas[0] - mean).cwiseAbs().maxCoeff() >= 1e-12)
            return {false, "synced value deviates from the size-weighted mean"};
    }

    // (b) Selective-sync volume over 400 steps.
    for (std::int64_t budget : {2, 4, 8}) {
        TopologyConfig tc;
        tc.nodes = 1;
        tc.ranks = 2;
        TopologyGraph topo = discover_topology(tc);
        NetConfig net;
        net.ranks = 2;
        net.nodes = 1;
        Communicator comm(net, topo);
        CoherenceController ctrl(comm, CoherenceBudget{budget});
        ctrl.registry().track("a", 0);
        std::vector<Vecd> replicas(2, Vecd::Constant(4, 1.0));
        std::atomic<int> synced{0};
        const std::int64_t T = 400;
        for (std::int64_t step = 0; step < T; ++step) {
            std::vector<std::thread> threads;
            for (int r = 0; r < 2; ++r)
                threads.emplace_back([&, r] {
                    auto accessor = [&](const std::string&) -> Eigen::Ref<Vecd> {
                        return replicas[static_cast<size_t>(r)];
                    };
                    auto rep = ctrl.coherence_tick(r, step, accessor);
                    if (r == 0) synced += static_cast<int>(rep.synced.size());
                });
            for (auto& t : threads) t.join();
        }
        const std::int64_t expect = T / budget;
        if (std::abs(synced.load() - expect) > 1)
            return {false, "sync count " + std::to_string(synced.load()) + " not within +-1 of " +
                               std::to_string(expect) + " for B=" + std::to_string(budget)};
    }

    // (c) Hierarchy advantage versus the flat ring all-reduce oracle.
    const std::uint64_t z = 4096;
    for (auto [nodes, per] : std::vector<std::pair<int, int>>{{2, 2}, {2, 4}, {4, 2}, {4, 4}, {3, 3}}) {
        TopologyConfig tc;
        tc.nodes = nodes;
        tc.ranks = nodes * per;
        TopologyGraph topo = discover_topology(tc);
        NetConfig net;
        const SyncVolume hier = hierarchical_sync_volume(topo, z, net);
        const OpCharge flat = ring_allreduce_bytes(Group::world(nodes * per), topo, z);
        if (!(hier.inter_bytes < flat.inter_bytes))
            return {false, "hierarchy inter bytes not below the ring oracle at " +
                               std::to_string(nodes) + "x" + std::to_string(per)};
    }
    return {true, "post-sync agreement exact, volume floor(T/B)+-1, hierarchy beats flat ring"};
}

// --------------------------------------------------------------------------
// 7. Normalized loss-reduction efficiency arithmetic.
std::pair<bool, std::string> criterion7() {
    const double l_init = std::log(32128.0);
    EfficiencyInput baseline{l_init - 3.0942, l_init, 1.000};
    EfficiencyInput native{l_init - 3.0562 * 1.171, l_init, 1.171};
    const double eta_baseline = compute_eta(baseline);
    const double eta_native = compute_eta(native);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "eta(1.000)=%.4f vs 3.0942, eta(1.171)=%.4f vs 3.0562, l_final %.3f/%.3f",
                  eta_baseline, eta_native, baseline.l_final, native.l_final);
    return {std::abs(eta_baseline - 3.0942) < 1e-3 && std::abs(eta_native - 3.0562) < 1e-3 &&
                std::abs(baseline.l_final - 7.283) < 1e-3 &&
                std::abs(native.l_final - 6.798) < 1e-3,
            buf};
}

// --------------------------------------------------------------------------
// 8. Optimizer ranking oners the ill-conditioned quadratic.
std::pair<bool, std::string> criterion8() {
    Timer timer;
    TaskConfig tc;
    tc.kind = TaskKind::IllConditionedQuadratic;
    tc.quadratic_rows = 8;
    tc.quadratic_cols = 6;
    tc.quadratic_cond = 1e4;
    tc.quadratic_scale = 0.3;
    tc.teacher_seed = 2024;
    ModelConfig mc;
    mc.layer_dims = {8, 6};
    mc.activation = Activation::Identity;
    Task task = Task::make(tc, mc);

    const double target = 1e-6;
    const int cap = 12000;
    auto steps_to_target = [&](Method method, double lr) {
        OptimizerConfig cfg = OptimizerConfig::defaults_for(method);
        cfg.lr = lr;
        cfg.precondition_frequency = 1;
        if (method == Method::Shampoo) cfg.accumulation = Accumulation::Ema;
        Matd w = Matd::Zero(8, 6);
        auto block = PrecondBlock::create(partition_param("w", 8, 6, 2048)[0], method);
        AdamState adam = AdamState::zeros(8, 6);
        for (int s = 0; s < cap; ++s) {
            if (task.quadratic_loss(w) <= target) return s;
            Matd g = task.quadratic_grad(w);
            Matd update;
            if (method == Method::AdamW) {
                update = adamw_step(adam, g, cfg);
            } else {
                accumulate_factors(block, g, cfg);
                install_refresh(block, compute_refresh(snapshot_factors(block), cfg), s);
                update = method == Method::Shampoo ? precondition_shampoo(block, g)
                                                   : precondition_soap(block, g, cfg);
            }
            apply_update(w, update, cfg);
        }
        return cap;
    };
    auto best = [&](Method m) {
        int b = cap;
        for (double lr : {1e-3, 3e-3, 1e-2}) b = std::min(b, steps_to_target(m, lr));
        return b;
    };
    const int adamw = best(Method::AdamW);
    const int shampoo = best(Method::Shampoo);
    const int soap = best(Method::Soap);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "steps to 1e-6: adamw=%d shampoo=%d soap=%d (cap %d), %.1fs", adamw, shampoo,
                  soap, cap, timer.seconds());
    return {shampoo < adamw && soap < adamw && shampoo < cap && soap < cap &&
                timer.seconds() < 60.0,
            buf};
}

// --------------------------------------------------------------------------
// 9. Tier-store model test.
std::pair<bool, std::string> criterion9() {
    Timer timer;
    StoreConfig cfg;
    cfg.cold_path = (scratch_dir() / "model.cold").string();
    cfg.hot_capacity_bytes = 64 * 1024;
    cfg.host_capacity_bytes = 128 * 1024;
    TierStore store(cfg);

    std::mt19937_64 rng(424242);
    std::map<std::string, std::vector<std::byte>> oracle;
    std::vector<std::string> names;
    for (int i = 0; i < 20; ++i) names.push_back("blk" + std::to_string(i));
    auto payload = [&](size_t n) {
        std::vector<std::byte> v(n);
        for (auto& b : v) b = static_cast<std::byte>(rng() & 0xff);
        return v;
    };

    std::int64_t byte_checks = 0;
    for (int op = 0; op < 100000; ++op) {
        const TierKey key{names[rng() % names.size()], TensorRole::InvFactorL};
        const auto choice = rng() % 100;
        try {
            if (choice < 30) {
                auto bytes = payload(64 + rng() % 1500);
                const auto tier = static_cast<TierTag>(rng() % 3);
                store.put(key, bytes, tier);
                oracle[key.block_id] = std::move(bytes);
            } else if (choice < 62) {
                if (oracle.count(key.block_id)) {
                    auto [got, tier] = store.get(key);
                    if (got != oracle[key.block_id])
                        return {false, "byte mismatch for " + key.block_id};
                    ++byte_checks;
                }
            } else if (choice < 72) {
                store.demote(key, rng() % 2 ? TierTag::Host : TierTag::Cold);
            } else if (choice < 80) {
                store.promote(key, rng() % 2 ? TierTag::Host : TierTag::Hot);
            } else if (choice < 86) {
                store.flush(key);
                store.reclaim(key);
            } else if (choice < 94) {
                store.prefetch(key, rng() % 2 ? TierTag::Host : TierTag::Hot);
            } else {
                store.drain_ready(static_cast<int>(rng() % 4));
            }
        } catch (const Error&) {
            // Expected per-operation failures (missing keys, pinned, layout,
            // capacity) are part of the schedule.
        }
        const auto g = store.gauges();
        if (g.hot_bytes > cfg.hot_capacity_bytes || g.host_bytes > cfg.host_capacity_bytes)
            return {false, "capacity violated at op " + std::to_string(op)};
        if (op % 8192 == 0) store.audit();
    }
    for (const auto& [name, bytes] : oracle) {
        auto [got, tier] = store.get(TierKey{name, TensorRole::InvFactorL});
        if (got != bytes) return {false, "final byte mismatch for " + name};
        ++byte_checks;
    }
    store.audit();
    const auto counters = store.counters();
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "1e5 ops, %lld byte comparisons, %llu checksummed cold reads, zero capacity "
                  "violations, %.1fs",
                  static_cast<long long>(byte_checks),
                  static_cast<unsigned long long>(counters.file_reads), timer.seconds());
    return {timer.seconds() < 30.0 && counters.file_reads > 0, buf};
}

// --------------------------------------------------------------------------
// 10. Reproducibility: bit-identical artifacts for equal seeds.
std::pair<bool, std::string> criterion10() {
    RunConfig cfg;
    cfg.seed = 99;
    cfg.optimizer = OptimizerConfig::defaults_for(Method::Soap);
    cfg.optimizer.lr = 3e-3;
    cfg.optimizer.precondition_frequency = 10;
    cfg.async_cfg.staleness_S = 3;
    cfg.async_cfg.inject_job_delay_steps = 1.5;
    cfg.async_cfg.inject_job_delay_jitter_steps = 1.0;
    cfg.net.ranks = 4;
    cfg.net.nodes = 2;
    cfg.coherence_budget_B = 6;
    cfg.task.classes = 8;
    cfg.task.batch_size = 16;
    cfg.task.steps = 120;
    cfg.model.layer_dims = {12, 16, 8};

    const auto dir_a = scratch_dir() / "repro_a";
    const auto dir_b = scratch_dir() / "repro_b";
    run_training(cfg, dir_a.string());
    run_training(cfg, dir_b.string());

    const bool loss_equal = slurp(dir_a / "loss.csv") == slurp(dir_b / "loss.csv");
    const bool trace_equal = slurp(dir_a / "trace.jsonl") == slurp(dir_b / "trace.jsonl");
    const bool series_equal = slurp(dir_a / "series.csv") == slurp(dir_b / "series.csv");
    char buf[160];
    std::snprintf(buf, sizeof(buf), "loss.csv %s, trace.jsonl %s, series.csv %s",
                  loss_equal ? "identical" : "DIFFERS", trace_equal ? "identical" : "DIFFERS",
                  series_equal ? "identical" : "DIFFERS");
    return {loss_equal && trace_equal && series_equal, buf};
}

}  // namespace

int main() {
    run_criterion(1, criterion1);
    run_criterion(2, criterion2);
    run_criterion(3, criterion3);
    run_criterion(4, criterion4);
    run_criterion(5, criterion5);
    run_criterion(6, criterion6);
    run_criterion(7, criterion7);
    run_criterion(8, criterion8);
    run_criterion(9, criterion9);
    run_criterion(10, criterion10);

    std::error_code ec;
    fs::remove_all(scratch_dir(), ec);
    if (failures > 0) {
        std::printf("%d criteria FAILED\n", failures);
        return 1;
    }
    std::printf("all 10 acceptance criteria passed\n");
    return 0;
}
