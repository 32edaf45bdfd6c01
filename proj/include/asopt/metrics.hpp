// SPDX-License-Identifier: Apache-2.0
//
// Trace analysis and reporting: step-time spike statistics, exposed
// preconditioning-time breakdown, communication volume, energy-proxy
// accounting, the normalized loss-reduction efficiency metric, and the
// bounded-staleness trace audit.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "asopt/trace.hpp"

namespace asopt {

struct StepTimeRow {
    std::int64_t step = 0;
    double total_us = 0.0;
    double compute_us = 0.0;
    double collective_us = 0.0;
    double barrier_wait_us = 0.0;
    double install_us = 0.0;
};

struct StepTimeTrace {
    std::vector<StepTimeRow> rows;
    bool annotated = true;  // barrier/install columns present
};

struct SpikeStats {
    double median = 0.0;
    double p99 = 0.0;
    double max = 0.0;
    double spike_ratio = 0.0;  // max / median
};

/// Exact order statistics over per-step totals.
SpikeStats spike_stats(const StepTimeTrace& trace);

struct ExposureRow {
    std::int64_t step = 0;
    double exposed_us = 0.0;  // barrier wait + install at a pf boundary
};

/// Exposed preconditioning time per pf-boundary step.
std::vector<ExposureRow> exposure_breakdown(const StepTimeTrace& trace, std::int64_t pf);

struct EnergyModel {
    double trainer_compute_watts = 60.0;
    double trainer_idle_watts = 15.0;
    double worker_compute_watts = 5.0;
    double worker_idle_watts = 1.0;
    bool simulated = true;  // rates are a proxy, not hardware telemetry
};

struct EnergyBreakdown {
    double trainer_joules = 0.0;
    double worker_joules = 0.0;
    double total_joules = 0.0;
};

/// Energy proxy from simulated time attribution: trainers are active during
/// compute/collective/install and idle while the barrier waits; pool workers
/// are active for the injected job cost and otherwise idle.
EnergyBreakdown energy_from_trace(const StepTimeTrace& trace, int ranks, int pool_workers,
                                  double job_active_us_total, const EnergyModel& model);

struct EfficiencyInput {
    double l_final = 0.0;
    double l_init = 0.0;
    double e_ratio = 1.0;  // E_i / E_baseline
};

/// Normalized loss-reduction efficiency: (L_init - L_final) / E_ratio.
double compute_eta(const EfficiencyInput& input);

// Run-directory loaders.
struct LossCurve {
    std::vector<std::int64_t> steps;
    std::vector<double> losses;
    std::vector<double> sim_us;
};

LossCurve load_loss_csv(const std::string& path);
StepTimeTrace load_series_csv(const std::string& path);

/// Bounded-staleness audit over a run trace: every preconditioner
/// consumption must satisfy consume_step - snapshot_step <= (S+1)*pf, and a
/// block may never have more than one non-installed job in flight.
struct StalenessAudit {
    std::int64_t assertions = 0;
    std::int64_t violations = 0;
    std::int64_t max_consumed_age = 0;
    std::int64_t coalescing_violations = 0;
};

StalenessAudit audit_staleness(const TraceFile& trace, std::int64_t staleness_S,
                               std::int64_t pf, std::int64_t steps);

struct RunReportRow {
    std::string name;
    double final_loss = 0.0;
    double total_sim_us = 0.0;
    double spike_ratio = 0.0;
    double exposed_wait_us = 0.0;
    std::uint64_t intra_bytes = 0;
    std::uint64_t inter_bytes = 0;
    std::optional<double> eta;
};

/// Aggregates run directories (each with loss.csv/series.csv/trace.jsonl)
/// into summary.md and a plot-ready series.csv under out_dir. The baseline
/// run, when named, anchors the energy ratio for the efficiency column.
void write_report(const std::vector<std::string>& run_dirs, const std::string& baseline_name,
                  const std::string& out_dir, const EnergyModel& model = {});

}  // namespace asopt
