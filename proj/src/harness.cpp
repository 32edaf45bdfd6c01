// SPDX-License-Identifier: Apache-2.0
#include "asopt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <span>
#include <thread>

#include <unistd.h>

#include "asopt/tensor_bytes.hpp"

namespace asopt {

namespace {

std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a + 0x9e3779b97f4a7c15ull + (b << 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

Matd gaussian_matrix(Index rows, Index cols, std::uint64_t seed, double scale) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    Matd m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = scale * dist(rng);
    return m;
}

SymMatrix<double> seeded_spd(Index dim, std::uint64_t seed) {
    Matd a = gaussian_matrix(dim, dim, seed, 1.0);
    Matd m = (a * a.transpose()) / static_cast<double>(dim);
    m += 1e-3 * Matd::Identity(dim, dim);
    return SymMatrix<double>(Matd((m + m.transpose()) / 2.0));
}

/// Symmetric factor with two-tier clustered spectrum (values in
/// {cond^-1/4, 1}) and a random orthogonal eigenbasis.
Matd clustered_factor(Index dim, double quarter_cond_low, std::uint64_t seed) {
    Matd q = sym_eig(seeded_spd(dim, seed)).vectors;
    Vecd s(dim);
    for (Index i = 0; i < dim; ++i) s[i] = (i < dim / 2) ? quarter_cond_low : 1.0;
    return q * s.asDiagonal() * q.transpose();
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

Model Model::init(const ModelConfig& cfg) {
    if (cfg.layer_dims.size() < 2)
        throw ConfigInvalidError("model needs at least input and output dims");
    Model m;
    m.activation_ = cfg.activation;
    for (size_t i = 0; i + 1 < cfg.layer_dims.size(); ++i) {
        const Index fan_in = cfg.layer_dims[i];
        const Index fan_out = cfg.layer_dims[i + 1];
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        m.weights_.push_back(
            gaussian_matrix(fan_in, fan_out, mix64(cfg.seed, 0xA0 + i), scale));
    }
    return m;
}

Matd Model::apply_layer(int layer, const Matd& input, Matd* z_out) const {
    const Matd z = input * weights_[static_cast<size_t>(layer)];
    if (z_out) *z_out = z;
    if (layer + 1 == layer_count() || activation_ == Activation::Identity) return z;
    return z.array().tanh().matrix();
}

Matd Model::forward(const Matd& x, ForwardCache* cache) const {
    Matd h = x;
    if (cache) {
        cache->inputs.clear();
        cache->preactivations.clear();
    }
    for (int i = 0; i < layer_count(); ++i) {
        if (cache) cache->inputs.push_back(h);
        Matd z;
        h = apply_layer(i, h, cache ? &z : nullptr);
        if (cache) cache->preactivations.push_back(std::move(z));
    }
    return h;
}

Matd Model::backward_layer(int layer, const ForwardCache& cache, Matd& dz) const {
    const auto li = static_cast<size_t>(layer);
    Matd grad = cache.inputs[li].transpose() * dz;
    if (layer > 0) {
        Matd dh = dz * weights_[li].transpose();
        if (activation_ == Activation::Tanh) {
            const Matd& z = cache.preactivations[li - 1];
            dz = dh.cwiseProduct(
                (1.0 - z.array().tanh().square()).matrix());
        } else {
            dz = std::move(dh);
        }
    }
    return grad;
}

std::vector<Matd> Model::backward(const ForwardCache& cache, Matd dz_last) const {
    std::vector<Matd> grads(static_cast<size_t>(layer_count()));
    Matd dz = std::move(dz_last);
    for (int i = layer_count() - 1; i >= 0; --i)
        grads[static_cast<size_t>(i)] = backward_layer(i, cache, dz);
    return grads;
}

// ---------------------------------------------------------------------------
// Task

Task Task::make(const TaskConfig& cfg, const ModelConfig& model_cfg) {
    Task t;
    t.cfg_ = cfg;
    t.input_dim_ = model_cfg.layer_dims.front();
    if (cfg.kind == TaskKind::SyntheticClassifier) {
        ModelConfig teacher_cfg = model_cfg;
        teacher_cfg.seed = cfg.teacher_seed;
        t.teacher_ = Model::init(teacher_cfg);
    } else {
        const Index rows = cfg.quadratic_rows;
        const Index cols = cfg.quadratic_cols;
        const double lo = std::pow(cfg.quadratic_cond, -0.25);
        t.qa_ = clustered_factor(rows, lo, mix64(cfg.teacher_seed, 11));
        t.qb_ = clustered_factor(cols, lo, mix64(cfg.teacher_seed, 13));
        Matd w_star =
            gaussian_matrix(rows, cols, mix64(cfg.teacher_seed, 17), cfg.quadratic_scale);
        t.qc_ = t.qa_ * w_star * t.qb_;
    }
    return t;
}

Task::Batch Task::batch(std::uint64_t seed, std::int64_t step, int rank, int ranks) const {
    Batch b;
    if (cfg_.kind != TaskKind::SyntheticClassifier) return b;
    const Index shard = cfg_.batch_size / ranks;
    const Index first = shard * rank;
    b.x.resize(shard, input_dim_);
    for (Index i = 0; i < shard; ++i) {
        const Index row = first + i;
        std::mt19937_64 rng(
            mix64(mix64(seed, static_cast<std::uint64_t>(step + 2)), //
                  static_cast<std::uint64_t>(row + 1)));
        std::normal_distribution<double> dist(0.0, 1.0);
        for (Index j = 0; j < input_dim_; ++j) b.x(i, j) = dist(rng);
    }
    const Matd teacher_logits = teacher_.forward(b.x);
    b.labels.resize(static_cast<size_t>(shard));
    for (Index i = 0; i < shard; ++i) {
        Index best = 0;
        teacher_logits.row(i).maxCoeff(&best);
        int label = static_cast<int>(best);
        if (cfg_.label_noise > 0.0) {
            const Index row = first + i;
            std::mt19937_64 noise_rng(mix64(mix64(seed, 0x6e6f6973ull),
                                            static_cast<std::uint64_t>(
                                                (step + 2) * 1000003 + row)));
            std::uniform_real_distribution<double> coin(0.0, 1.0);
            if (coin(noise_rng) < cfg_.label_noise)
                label = static_cast<int>(noise_rng() % static_cast<std::uint64_t>(cfg_.classes));
        }
        b.labels[static_cast<size_t>(i)] = label;
    }
    return b;
}

Task::Batch Task::eval_batch(std::uint64_t seed) const {
    return batch(mix64(seed, 14), -1, 0, 1);
}

double Task::ce_loss(const Matd& logits, const std::vector<int>& labels) {
    double total = 0.0;
    for (Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        const double lse = std::log((logits.row(i).array() - m).exp().sum()) + m;
        total += lse - logits(i, labels[static_cast<size_t>(i)]);
    }
    return total / static_cast<double>(logits.rows());
}

Matd Task::ce_dlogits(const Matd& logits, const std::vector<int>& labels) {
    Matd d(logits.rows(), logits.cols());
    for (Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        Eigen::ArrayXd e = (logits.row(i).array() - m).exp();
        d.row(i) = (e / e.sum()).matrix();
        d(i, labels[static_cast<size_t>(i)]) -= 1.0;
    }
    return d / static_cast<double>(logits.rows());
}

double Task::quadratic_loss(const Matd& w) const {
    return 0.5 * (qa_ * w * qb_ - qc_).squaredNorm();
}

Matd Task::quadratic_grad(const Matd& w) const {
    return qa_.transpose() * (qa_ * w * qb_ - qc_) * qb_.transpose();
}

// ---------------------------------------------------------------------------
// Shared step helpers

double clip_scale(const Vecd& flat_grads, double clip_norm) {
    const double norm = flat_grads.norm();
    if (norm <= clip_norm || norm == 0.0) return 1.0;
    return clip_norm / norm;
}

double warmup_scale(std::int64_t step, std::int64_t total_steps) {
    const std::int64_t warmup = std::max<std::int64_t>(1, total_steps / 20);
    if (step + 1 >= warmup) return 1.0;
    return static_cast<double>(step + 1) / static_cast<double>(warmup);
}

// ---------------------------------------------------------------------------
// run_training

namespace {

constexpr double kClipNorm = 1.0;

struct ParamState {
    bool use_adamw = false;
    AdamState adam;
    std::vector<PrecondBlock> blocks;
};

struct RankOutput {
    std::vector<StepRow> rows;
    std::vector<SyncTraceRow> sync_rows;
    double final_eval_loss = 0.0;
    PoolStats pool;
    IoCounters tier;
    CoherenceTotals coherence;
};

Index total_flat_size(const std::vector<Matd>& params) {
    Index n = 0;
    for (const auto& p : params) n += p.size();
    return n;
}

std::string resolved_cold_path(const RunConfig& cfg, const std::string& out_dir, int rank) {
    static std::atomic<std::uint64_t> counter{0};
    std::string base = cfg.tier.cold_path;
    if (base.empty()) {
        if (!out_dir.empty()) {
            base = (std::filesystem::path(out_dir) / "cold").string();
        } else {
            base = (std::filesystem::temp_directory_path() /
                    ("asopt_cold_" + std::to_string(::getpid()) + "_" +
                     std::to_string(counter.fetch_add(1))))
                       .string();
        }
    }
    return base + ".rank" + std::to_string(rank);
}

}  // namespace

RunSummary run_training(const RunConfig& cfg_in, const std::string& out_dir,
                        const StepObserver& observer, const RankObserver& rank_observer) {
    RunConfig cfg = cfg_in;
    cfg.async_cfg.pf = cfg.optimizer.precondition_frequency;
    // Job delays are denominated in per-rank step-compute units so
    // "inject_job_delay_steps = k" spans about k optimizer steps.
    const double rank_fraction =
        cfg.task.kind == TaskKind::IllConditionedQuadratic
            ? 1.0
            : 1.0 / static_cast<double>(std::max(1, cfg.net.ranks));
    cfg.async_cfg.step_compute_us = cfg.sim.step_compute_us * rank_fraction;
    cfg.async_cfg.install_cost_us = cfg.sim.install_cost_us;
    if (cfg.topology.explicit_nodes.empty()) {
        cfg.topology.nodes = cfg.net.nodes;
        cfg.topology.ranks = cfg.net.ranks;
    }
    cfg.validate();

    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    const int ranks = cfg.net.ranks;
    TopologyGraph topo = discover_topology(cfg.topology);
    if (topo.world_size() != ranks)
        throw ConfigInvalidError("topology world size disagrees with net.ranks");
    Communicator comm(cfg.net, topo);
    CoherenceBudget budget;
    if (cfg.coherence_budget_B > 0) budget.steps = cfg.coherence_budget_B;
    CoherenceController coherence(comm, budget);

    // Block layout is identical on every rank; pool sized from it.
    Model layout_model = Model::init(cfg.model);
    int total_blocks = 0;
    for (const auto& w : layout_model.weights())
        total_blocks += static_cast<int>(
            partition_param("p", w.rows(), w.cols(), cfg.optimizer.block_dim_limit).size());
    int pool_size = cfg.async_cfg.pool_size;
    if (pool_size <= 0)
        pool_size = std::max(1, std::min<int>(total_blocks,
                                              static_cast<int>(std::thread::hardware_concurrency())));
    WorkerPool pool(pool_size);

    std::vector<TraceBuffer> traces;
    traces.reserve(static_cast<size_t>(ranks));
    for (int r = 0; r < ranks; ++r) traces.emplace_back(r);

    std::vector<std::unique_ptr<TierStore>> stores(static_cast<size_t>(ranks));
    for (int r = 0; r < ranks; ++r) {
        StoreConfig sc = cfg.tier;
        sc.cold_path = resolved_cold_path(cfg, out_dir, r);
        stores[static_cast<size_t>(r)] = std::make_unique<TierStore>(sc);
    }

    std::vector<RankOutput> outputs(static_cast<size_t>(ranks));
    std::vector<std::exception_ptr> errors(static_cast<size_t>(ranks));
    const Group world = Group::world(ranks);
    const auto wall_start = std::chrono::steady_clock::now();

    auto run_rank = [&](int rank) {
        Model model = Model::init(cfg.model);
        Task task = Task::make(cfg.task, cfg.model);
        SimClock clock;
        TraceBuffer& trace = traces[static_cast<size_t>(rank)];
        TierStore& store = *stores[static_cast<size_t>(rank)];
        ShadowScheduler scheduler(pool, cfg.optimizer, cfg.async_cfg, rank, cfg.seed, &clock,
                                  &trace, &store);
        RankOutput& out = outputs[static_cast<size_t>(rank)];

        const bool preconditioned = cfg.optimizer.method != Method::AdamW;
        const bool quadratic = cfg.task.kind == TaskKind::IllConditionedQuadratic;
        std::vector<ParamState> states(model.weights().size());
        std::vector<PrecondBlock*> all_blocks;
        std::vector<std::vector<PrecondBlock*>> blocks_of_layer(model.weights().size());
        for (size_t p = 0; p < model.weights().size(); ++p) {
            const Matd& w = model.weights()[p];
            ParamState& st = states[p];
            st.use_adamw = !preconditioned || w.rows() == 1 || w.cols() == 1;
            if (st.use_adamw) {
                st.adam = AdamState::zeros(w.rows(), w.cols());
                continue;
            }
            auto specs = partition_param("w" + std::to_string(p), w.rows(), w.cols(),
                                         cfg.optimizer.block_dim_limit);
            for (auto& spec : specs) {
                st.blocks.push_back(PrecondBlock::create(spec, cfg.optimizer.method));
            }
            for (auto& block : st.blocks) {
                const std::string id = block.spec.id();
                // Training-path factor statistics stay pinned hot; the
                // refreshed inverse state is written back host-side.
                auto fl = matrix_bytes(block.factor_l.full());
                auto fr = matrix_bytes(block.factor_r.full());
                store.put(TierKey{id, TensorRole::FactorL}, fl, TierTag::Hot);
                store.put(TierKey{id, TensorRole::FactorR}, fr, TierTag::Hot);
                store.pin(TierKey{id, TensorRole::FactorL});
                store.pin(TierKey{id, TensorRole::FactorR});
                coherence.track_block(id, 0);
                all_blocks.push_back(&block);
                blocks_of_layer[p].push_back(&block);
            }
        }

        std::vector<Matd> grads(model.weights().size());
        const double shard_fraction = quadratic ? 1.0 : 1.0 / static_cast<double>(ranks);
        const Index flat_n = total_flat_size(model.weights());

        for (std::int64_t step = 0; step < cfg.task.steps; ++step) {
            const double t0 = clock.now_us;
            double shard_loss = 0.0;

            if (quadratic) {
                Matd& w = model.weights()[0];
                scheduler.on_hook({HookEvent::Kind::ForwardPost, 0, step},
                                  std::span<PrecondBlock*>(all_blocks));
                shard_loss = task.quadratic_loss(w);
                scheduler.on_hook({HookEvent::Kind::BackwardPre, 0, step},
                                  std::span<PrecondBlock*>(blocks_of_layer[0]));
                grads[0] = task.quadratic_grad(w);
            } else {
                Task::Batch b = task.batch(cfg.seed, step, rank, ranks);
                Model::ForwardCache cache;
                Matd h = b.x;
                for (int layer = 0; layer < model.layer_count(); ++layer) {
                    cache.inputs.push_back(h);
                    Matd z;
                    h = model.apply_layer(layer, h, &z);
                    cache.preactivations.push_back(std::move(z));
                    scheduler.on_hook({HookEvent::Kind::ForwardPost, layer, step},
                                      std::span<PrecondBlock*>(blocks_of_layer[static_cast<size_t>(layer)]));
                }
                shard_loss = Task::ce_loss(h, b.labels);
                Matd dz = Task::ce_dlogits(h, b.labels);
                for (int layer = model.layer_count() - 1; layer >= 0; --layer) {
                    scheduler.on_hook({HookEvent::Kind::BackwardPre, layer, step},
                                      std::span<PrecondBlock*>(blocks_of_layer[static_cast<size_t>(layer)]));
                    grads[static_cast<size_t>(layer)] = model.backward_layer(layer, cache, dz);
                }
            }
            clock.advance(cfg.sim.step_compute_us * shard_fraction);
            const double t1 = clock.now_us;

            // One rendezvous: all gradients plus the shard loss.
            Vecd flat(flat_n + 1);
            Index off = 0;
            for (const auto& g : grads) {
                flat.segment(off, g.size()) = Eigen::Map<const Vecd>(g.data(), g.size());
                off += g.size();
            }
            flat[flat_n] = shard_loss;
            const OpCharge charge = comm.allreduce_avg(world, rank, flat);
            clock.advance(static_cast<double>(charge.latency_us));
            const double loss = flat[flat_n];
            off = 0;
            for (auto& g : grads) {
                g = Eigen::Map<const Matd>(flat.data() + off, g.rows(), g.cols());
                off += g.size();
            }
            const double t2 = clock.now_us;

            const double gscale = clip_scale(flat.head(flat_n), kClipNorm);
            const double lr_scale = warmup_scale(step, cfg.task.steps);
            double waited_us = 0.0;

            for (size_t p = 0; p < model.weights().size(); ++p) {
                Matd& w = model.weights()[p];
                const Matd g = gscale * grads[p];
                ParamState& st = states[p];
                if (st.use_adamw) {
                    const Matd update = adamw_step(st.adam, g, cfg.optimizer);
                    apply_update(w, update, cfg.optimizer, lr_scale);
                    continue;
                }
                for (auto& block : st.blocks) {
                    const auto& spec = block.spec;
                    const Matd gblk = g.block(spec.row_begin, spec.col_begin, spec.rows(),
                                              spec.cols());
                    accumulate_factors(block, gblk, cfg.optimizer);
                    scheduler.maybe_dispatch(block, step);
                    waited_us += scheduler.staleness_barrier(block, step);
                    // Until the shadow pipeline lands the first refresh, the
                    // block's identity factors pass the gradient through.
                    Matd update;
                    if (block.version == 0) {
                        update = cfg.optimizer.method == Method::Shampoo
                                     ? Matd(gblk)
                                     : soap_scaled_step(block, gblk, cfg.optimizer);
                    } else {
                        update = cfg.optimizer.method == Method::Shampoo
                                     ? precondition_shampoo(block, gblk)
                                     : precondition_soap(block, gblk, cfg.optimizer);
                    }
                    Eigen::Ref<Matd> wblk =
                        w.block(spec.row_begin, spec.col_begin, spec.rows(), spec.cols());
                    apply_update(wblk, update, cfg.optimizer, lr_scale);
                }
            }
            const double t3 = clock.now_us;

            scheduler.on_hook({HookEvent::Kind::StepEnd, -1, step},
                              std::span<PrecondBlock*>(all_blocks));
            const double t4 = clock.now_us;

            if (budget.enabled() && preconditioned) {
                std::map<std::string, Vecd> buffers;
                std::map<std::string, PrecondBlock*> by_id;
                for (PrecondBlock* b : all_blocks) by_id[b->spec.id()] = b;
                auto accessor = [&](const std::string& id) -> Eigen::Ref<Vecd> {
                    auto it = buffers.find(id);
                    if (it == buffers.end())
                        it = buffers
                                 .emplace(id, replicated_state(*by_id.at(id),
                                                               cfg.optimizer.method))
                                 .first;
                    return it->second;
                };
                SyncReport report = coherence.coherence_tick(rank, step, accessor);
                clock.advance(static_cast<double>(report.volume.latency_us));
                for (const auto& id : report.synced) {
                    PrecondBlock* b = by_id.at(id);
                    load_replicated_state(*b, cfg.optimizer.method, buffers.at(id));
                    // Write back the reconciled host-resident state.
                    const bool soap = cfg.optimizer.method == Method::Soap;
                    const Matd l = soap ? b->basis_l.vectors : b->inv_l.full();
                    const Matd r = soap ? b->basis_r.vectors : b->inv_r.full();
                    auto lb = matrix_bytes(l);
                    auto rb = matrix_bytes(r);
                    store.put(TierKey{id, soap ? TensorRole::BasisL : TensorRole::InvFactorL},
                              lb, TierTag::Host);
                    store.put(TierKey{id, soap ? TensorRole::BasisR : TensorRole::InvFactorR},
                              rb, TierTag::Host);
                }
                if (rank == 0) {
                    for (PrecondBlock* b : all_blocks) {
                        const std::string id = b->spec.id();
                        const bool synced = std::find(report.synced.begin(), report.synced.end(),
                                                      id) != report.synced.end();
                        SyncTraceRow row;
                        row.step = step;
                        row.block_id = id;
                        row.hit = !synced;
                        if (synced) {
                            const auto z = static_cast<std::uint64_t>(
                                               replicated_state(*b, cfg.optimizer.method).size()) *
                                           sizeof(double);
                            const SyncVolume v = hierarchical_sync_volume(topo, z, cfg.net);
                            row.intra_bytes = v.intra_bytes;
                            row.inter_bytes = v.inter_bytes;
                            out.coherence.synced += 1;
                            out.coherence.intra_bytes += v.intra_bytes;
                            out.coherence.inter_bytes += v.inter_bytes;
                        } else {
                            out.coherence.hits += 1;
                        }
                        out.sync_rows.push_back(std::move(row));
                    }
                }
            }
            const double t5 = clock.now_us;

            StepRow row;
            row.step = step;
            row.loss = loss;
            row.sim_us = t5;
            row.compute_us = t1 - t0;
            row.collective_us = (t2 - t1) + (t5 - t4);
            row.barrier_wait_us = waited_us;
            row.install_us = (t3 - t2 - waited_us) + (t4 - t3);
            out.rows.push_back(row);

            if (rank == 0 && observer) observer(step, model.weights(), loss);
            if (rank_observer) rank_observer(rank, step, model.weights());
        }

        comm.barrier(world, rank);
        if (rank == 0) {
            if (quadratic) {
                out.final_eval_loss = task.quadratic_loss(model.weights()[0]);
            } else {
                Task::Batch eb = task.eval_batch(cfg.seed);
                out.final_eval_loss = Task::ce_loss(model.forward(eb.x), eb.labels);
            }
        }
        out.pool = scheduler.stats();
        out.tier = store.counters();
        store.audit();
    };

    std::vector<std::thread> threads;
    for (int r = 0; r < ranks; ++r)
        threads.emplace_back([&, r] {
            try {
                run_rank(r);
            } catch (...) {
                errors[static_cast<size_t>(r)] = std::current_exception();
            }
        });
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    RunSummary summary;
    summary.ranks = ranks;
    summary.steps = outputs[0].rows;
    summary.initial_loss = summary.steps.front().loss;
    summary.final_train_loss = summary.steps.back().loss;
    summary.final_eval_loss = outputs[0].final_eval_loss;
    summary.total_sim_us = summary.steps.back().sim_us;
    summary.net = comm.ledger_snapshot();
    summary.coherence = outputs[0].coherence;
    summary.pool = outputs[0].pool;
    summary.tier = outputs[0].tier;
    summary.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();

    if (!out_dir.empty()) {
        const auto dir = std::filesystem::path(out_dir);
        save_run_config(cfg_in, (dir / "config.json").string());

        std::ofstream loss_csv(dir / "loss.csv", std::ios::binary | std::ios::trunc);
        loss_csv << "step,loss,simulated_time_us\n";
        char buf[160];
        for (const auto& row : summary.steps) {
            std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g\n",
                          static_cast<long long>(row.step), row.loss, row.sim_us);
            loss_csv << buf;
        }

        std::ofstream series(dir / "series.csv", std::ios::binary | std::ios::trunc);
        series << "step,total_us,compute_us,collective_us,barrier_wait_us,install_us\n";
        double prev = 0.0;
        for (const auto& row : summary.steps) {
            std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                          static_cast<long long>(row.step), row.sim_us - prev, row.compute_us,
                          row.collective_us, row.barrier_wait_us, row.install_us);
            series << buf;
            prev = row.sim_us;
        }

        std::vector<const TraceBuffer*> bufs;
        for (const auto& t : traces) bufs.push_back(&t);
        write_trace_file((dir / "trace.jsonl").string(), bufs, outputs[0].sync_rows);
    }
    return summary;
}

// ---------------------------------------------------------------------------
// gradient_check

double gradient_check(const ModelConfig& model_cfg, const TaskConfig& task_cfg,
                      std::uint64_t seed) {
    Model model = Model::init(model_cfg);
    Task task = Task::make(task_cfg, model_cfg);

    auto loss_of = [&]() {
        if (task_cfg.kind == TaskKind::IllConditionedQuadratic)
            return task.quadratic_loss(model.weights()[0]);
        Task::Batch b = task.batch(seed, 0, 0, 1);
        return Task::ce_loss(model.forward(b.x), b.labels);
    };

    std::vector<Matd> analytic;
    if (task_cfg.kind == TaskKind::IllConditionedQuadratic) {
        analytic.push_back(task.quadratic_grad(model.weights()[0]));
    } else {
        Task::Batch b = task.batch(seed, 0, 0, 1);
        Model::ForwardCache cache;
        Matd logits = model.forward(b.x, &cache);
        analytic = model.backward(cache, Task::ce_dlogits(logits, b.labels));
    }

    const double h = 1e-5;
    double max_rel = 0.0;
    for (size_t p = 0; p < model.weights().size(); ++p) {
        Matd& w = model.weights()[p];
        for (Index i = 0; i < w.rows(); ++i) {
            for (Index j = 0; j < w.cols(); ++j) {
                const double keep = w(i, j);
                w(i, j) = keep + h;
                const double up = loss_of();
                w(i, j) = keep - h;
                const double down = loss_of();
                w(i, j) = keep;
                const double numeric = (up - down) / (2.0 * h);
                const double a = analytic[p](i, j);
                const double rel = std::abs(a - numeric) / (std::max(std::abs(a), std::abs(numeric)) + 1e-8);
                max_rel = std::max(max_rel, rel);
            }
        }
    }
    return max_rel;
}

// ---------------------------------------------------------------------------
// sweep

SweepAxis sweep_axis_from_string(const std::string& s) {
    if (s == "staleness") return SweepAxis::Staleness;
    if (s == "nodes") return SweepAxis::Nodes;
    if (s == "budget") return SweepAxis::Budget;
    throw ConfigInvalidError("unknown sweep axis: " + s);
}

std::vector<SweepRow> sweep(const RunConfig& base, SweepAxis axis,
                            const std::vector<double>& values, const std::string& out_root) {
    std::vector<SweepRow> rows;
    const char* axis_name = axis == SweepAxis::Staleness ? "staleness"
                            : axis == SweepAxis::Nodes   ? "nodes"
                                                         : "budget";
    for (double v : values) {
        RunConfig cfg = base;
        switch (axis) {
            case SweepAxis::Staleness:
                cfg.async_cfg.staleness_S = static_cast<std::int64_t>(v);
                break;
            case SweepAxis::Nodes: {
                const int per = std::max(1, base.net.ranks / std::max(1, base.net.nodes));
                cfg.net.nodes = static_cast<int>(v);
                cfg.net.ranks = cfg.net.nodes * per;
                cfg.topology.nodes = cfg.net.nodes;
                cfg.topology.ranks = cfg.net.ranks;
                break;
            }
            case SweepAxis::Budget:
                cfg.coherence_budget_B = static_cast<std::int64_t>(v);
                break;
        }
        std::string out_dir;
        if (!out_root.empty()) {
            out_dir = (std::filesystem::path(out_root) /
                       (std::string(axis_name) + "_" + std::to_string(static_cast<long long>(v))))
                          .string();
        }
        RunSummary s = run_training(cfg, out_dir);
        SweepRow row;
        row.value = v;
        row.total_sim_us = s.total_sim_us;
        row.final_eval_loss = s.final_eval_loss;
        row.bytes_moved = s.net.bytes_intra + s.net.bytes_inter + s.coherence.intra_bytes +
                          s.coherence.inter_bytes;
        for (const auto& r : s.steps) row.exposed_wait_us += r.barrier_wait_us;
        rows.push_back(row);
    }
    if (!out_root.empty()) {
        std::filesystem::create_directories(out_root);
        write_sweep_csv(rows, axis_name,
                        (std::filesystem::path(out_root) / "sweep.csv").string());
    }
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& axis_name,
                     const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << axis_name << ",total_sim_us,final_eval_loss,bytes_moved,exposed_wait_us\n";
    char buf[200];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%llu,%.17g\n", r.value,
                      r.total_sim_us, r.final_eval_loss,
                      static_cast<unsigned long long>(r.bytes_moved), r.exposed_wait_us);
        f << buf;
    }
}

}  // namespace asopt
