// SPDX-License-Identifier: Apache-2.0
//
// Deterministic training harness: model and task definitions, a
// data-parallel loop across simulated ranks (threads meeting at simnet
// rendezvous), hook-event emission, and the wiring of the optimizer state
// machines, shadow scheduler, tier store, and coherence layer into
// end-to-end runs.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "asopt/asyncsched.hpp"
#include "asopt/coherence.hpp"
#include "asopt/precond.hpp"
#include "asopt/simnet.hpp"
#include "asopt/tierstore.hpp"

namespace asopt {

enum class TaskKind { IllConditionedQuadratic, SyntheticClassifier };
enum class Activation { Identity, Tanh };

struct TaskConfig {
    TaskKind kind = TaskKind::SyntheticClassifier;
    int classes = 10;
    std::uint64_t teacher_seed = 7;
    Index batch_size = 32;
    std::int64_t steps = 200;
    /// Fraction of labels replaced uniformly at random; gives the loss a
    /// nonzero floor so converged runs are comparable on a relative scale.
    double label_noise = 0.0;
    // Quadratic task parameters: f(W) = 0.5*||A W B - C||_F^2 with two-tier
    // clustered spectra giving an overall Hessian condition number `cond`.
    Index quadratic_rows = 16;
    Index quadratic_cols = 12;
    double quadratic_cond = 1e4;
    double quadratic_scale = 0.3;
};

struct ModelConfig {
    std::vector<Index> layer_dims = {16, 32, 10};
    Activation activation = Activation::Tanh;
    std::uint64_t seed = 1;
};

struct SimCostConfig {
    double step_compute_us = 1000.0;  // full-batch single-rank compute cost
    double install_cost_us = 10.0;
};

struct ReportConfig {
    double loss_band_rel = 0.02;
    std::int64_t vocab = 0;  // 0: L_init measured at step 0
};

struct RunConfig {
    std::uint64_t seed = 1;
    OptimizerConfig optimizer;
    SchedulerConfig async_cfg;
    std::int64_t coherence_budget_B = 0;  // 0 = coherence disabled
    NetConfig net;
    TopologyConfig topology;
    StoreConfig tier;
    TaskConfig task;
    ModelConfig model;
    SimCostConfig sim;
    ReportConfig report;

    void validate() const;
};

nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);

/// Feed-forward model over matrix parameters only (no biases); the last
/// layer is linear, inner layers apply the configured activation.
class Model {
  public:
    static Model init(const ModelConfig& cfg);

    struct ForwardCache {
        std::vector<Matd> inputs;          // h_i per layer
        std::vector<Matd> preactivations;  // z_i per layer
    };

    int layer_count() const { return static_cast<int>(weights_.size()); }
    std::vector<Matd>& weights() { return weights_; }
    const std::vector<Matd>& weights() const { return weights_; }
    Activation activation() const { return activation_; }

    /// z = input·W_i, output = act(z) for inner layers, z for the last.
    Matd apply_layer(int layer, const Matd& input, Matd* z_out) const;
    Matd forward(const Matd& x, ForwardCache* cache = nullptr) const;

    /// dz of layer i -> weight gradient and dz of layer i-1.
    Matd backward_layer(int layer, const ForwardCache& cache, Matd& dz) const;
    std::vector<Matd> backward(const ForwardCache& cache, Matd dz_last) const;

  private:
    std::vector<Matd> weights_;
    Activation activation_ = Activation::Tanh;
};

class Task {
  public:
    static Task make(const TaskConfig& cfg, const ModelConfig& model_cfg);

    struct Batch {
        Matd x;
        std::vector<int> labels;
    };

    TaskKind kind() const { return cfg_.kind; }
    const TaskConfig& config() const { return cfg_; }

    /// Shard of the global batch for one rank; row r of the global batch is
    /// generated from (seed, step, r) alone, so the global data stream does
    /// not depend on the rank count.
    Batch batch(std::uint64_t seed, std::int64_t step, int rank, int ranks) const;
    Batch eval_batch(std::uint64_t seed) const;

    static double ce_loss(const Matd& logits, const std::vector<int>& labels);
    static Matd ce_dlogits(const Matd& logits, const std::vector<int>& labels);

    double quadratic_loss(const Matd& w) const;
    Matd quadratic_grad(const Matd& w) const;
    const Matd& quadratic_a() const { return qa_; }
    const Matd& quadratic_b() const { return qb_; }

  private:
    TaskConfig cfg_;
    Model teacher_;
    Index input_dim_ = 0;
    Matd qa_, qb_, qc_;
};

/// min(1, clip_norm/||flat||); shared with the reference implementation so
/// both sides compute bit-identical scales.
double clip_scale(const Vecd& flat_grads, double clip_norm);

/// Linear warmup over the first 5% of steps.
double warmup_scale(std::int64_t step, std::int64_t total_steps);

struct StepRow {
    std::int64_t step = 0;
    double loss = 0.0;
    double sim_us = 0.0;  // cumulative simulated time at StepEnd
    double compute_us = 0.0;
    double collective_us = 0.0;
    double barrier_wait_us = 0.0;
    double install_us = 0.0;
};

struct CoherenceTotals {
    std::uint64_t synced = 0;
    std::uint64_t hits = 0;
    std::uint64_t intra_bytes = 0;
    std::uint64_t inter_bytes = 0;
};

struct RunSummary {
    std::vector<StepRow> steps;
    double initial_loss = 0.0;
    double final_train_loss = 0.0;
    double final_eval_loss = 0.0;
    double total_sim_us = 0.0;
    double wall_seconds = 0.0;
    CostLedger net;
    CoherenceTotals coherence;
    PoolStats pool;
    IoCounters tier;
    int ranks = 1;
};

/// Called on rank 0 at the end of every step with the post-update
/// parameters. Runs on the rank-0 worker thread.
using StepObserver =
    std::function<void(std::int64_t step, const std::vector<Matd>& params, double loss)>;

/// Called on every rank at the end of every step; used by tests to check
/// cross-rank trajectory agreement. Runs on each rank's worker thread.
using RankObserver =
    std::function<void(int rank, std::int64_t step, const std::vector<Matd>& params)>;

/// Runs the full data-parallel training loop. When out_dir is nonempty,
/// writes config.json, loss.csv, series.csv and trace.jsonl there.
RunSummary run_training(const RunConfig& cfg, const std::string& out_dir = "",
                        const StepObserver& observer = {},
                        const RankObserver& rank_observer = {});

/// Central-difference gradient validation; returns the max relative error.
double gradient_check(const ModelConfig& model_cfg, const TaskConfig& task_cfg,
                      std::uint64_t seed);

enum class SweepAxis { Staleness, Nodes, Budget };

SweepAxis sweep_axis_from_string(const std::string& s);

struct SweepRow {
    double value = 0.0;
    double total_sim_us = 0.0;
    double final_eval_loss = 0.0;
    std::uint64_t bytes_moved = 0;
    double exposed_wait_us = 0.0;
};

/// One run per axis value with shared seeds; per-run outputs land under
/// out_root/<axis>_<value> when out_root is nonempty.
std::vector<SweepRow> sweep(const RunConfig& base, SweepAxis axis,
                            const std::vector<double>& values,
                            const std::string& out_root = "");

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& axis_name,
                     const std::string& path);

}  // namespace asopt
