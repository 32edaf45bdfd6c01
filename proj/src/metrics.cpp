// SPDX-License-Identifier: Apache-2.0
#include "asopt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "asopt/errors.hpp"

namespace asopt {

namespace {

double percentile(std::vector<double> sorted, double q) {
    if (sorted.empty()) throw EmptyTraceError("metrics: empty sample");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<size_t>(std::floor(pos));
    const auto hi = static_cast<size_t>(std::ceil(pos));
    const double frac = pos - std::floor(pos);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

}  // namespace

SpikeStats spike_stats(const StepTimeTrace& trace) {
    if (trace.rows.empty()) throw EmptyTraceError("spike_stats: empty trace");
    std::vector<double> totals;
    totals.reserve(trace.rows.size());
    for (const auto& r : trace.rows) totals.push_back(r.total_us);
    std::sort(totals.begin(), totals.end());
    SpikeStats s;
    s.median = percentile(totals, 0.5);
    s.p99 = percentile(totals, 0.99);
    s.max = totals.back();
    s.spike_ratio = s.median > 0.0 ? s.max / s.median : 0.0;
    return s;
}

std::vector<ExposureRow> exposure_breakdown(const StepTimeTrace& trace, std::int64_t pf) {
    if (!trace.annotated)
        throw MissingAnnotationsError("exposure_breakdown: trace lacks barrier/install spans");
    if (pf < 1) throw ConfigInvalidError("exposure_breakdown: pf must be >= 1");
    std::vector<ExposureRow> out;
    for (const auto& r : trace.rows) {
        if (r.step % pf != 0) continue;
        out.push_back(ExposureRow{r.step, r.barrier_wait_us + r.install_us});
    }
    return out;
}

EnergyBreakdown energy_from_trace(const StepTimeTrace& trace, int ranks, int pool_workers,
                                  double job_active_us_total, const EnergyModel& model) {
    double total_us = 0.0, active_us = 0.0, idle_us = 0.0;
    for (const auto& r : trace.rows) {
        total_us += r.total_us;
        idle_us += r.barrier_wait_us;
        active_us += r.total_us - r.barrier_wait_us;
    }
    EnergyBreakdown e;
    e.trainer_joules = 1e-6 * static_cast<double>(ranks) *
                       (active_us * model.trainer_compute_watts +
                        idle_us * model.trainer_idle_watts);
    const double worker_idle =
        std::max(0.0, static_cast<double>(pool_workers) * total_us - job_active_us_total);
    e.worker_joules = 1e-6 * (job_active_us_total * model.worker_compute_watts +
                              worker_idle * model.worker_idle_watts);
    e.total_joules = e.trainer_joules + e.worker_joules;
    return e;
}

double compute_eta(const EfficiencyInput& input) {
    if (input.e_ratio <= 0.0)
        throw NonpositiveRatioError("compute_eta: energy ratio must be positive");
    return (input.l_init - input.l_final) / input.e_ratio;
}

LossCurve load_loss_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw MissingRunsError("metrics: cannot open " + path);
    LossCurve out;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != 3) throw IoError("metrics: malformed loss.csv row: " + line);
        out.steps.push_back(std::stoll(cells[0]));
        out.losses.push_back(std::stod(cells[1]));
        out.sim_us.push_back(std::stod(cells[2]));
    }
    return out;
}

StepTimeTrace load_series_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw MissingRunsError("metrics: cannot open " + path);
    StepTimeTrace out;
    std::string line;
    std::getline(f, line);
    const auto header = split_csv_line(line);
    out.annotated = header.size() >= 6;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() < 2) throw IoError("metrics: malformed series.csv row: " + line);
        StepTimeRow r;
        r.step = std::stoll(cells[0]);
        r.total_us = std::stod(cells[1]);
        if (out.annotated) {
            r.compute_us = std::stod(cells[2]);
            r.collective_us = std::stod(cells[3]);
            r.barrier_wait_us = std::stod(cells[4]);
            r.install_us = std::stod(cells[5]);
        }
        out.rows.push_back(r);
    }
    return out;
}

StalenessAudit audit_staleness(const TraceFile& trace, std::int64_t staleness_S,
                               std::int64_t pf, std::int64_t steps) {
    StalenessAudit audit;
    struct BlockState {
        std::vector<std::int64_t> dispatch_steps;  // FIFO of snapshot steps
        std::int64_t pending = 0;
        std::int64_t installed_snapshot = -1;
        std::int64_t next_snapshot_after_consume = -1;  // StepEnd install
        std::int64_t last_consume_checked = -1;
    };
    std::map<std::string, BlockState> blocks;
    std::map<int, bool> in_barrier;

    const std::int64_t bound = (staleness_S + 1) * pf;
    std::int64_t current_step = trace.events.empty() ? 0 : trace.events.front().step;

    auto consume_all = [&](std::int64_t step) {
        // Preconditioner consumption for every initialized block at `step`,
        // using the version visible between barrier installs and StepEnd
        // installs.
        for (auto& [id, st] : blocks) {
            if (st.installed_snapshot < 0) continue;
            audit.assertions += 1;
            const std::int64_t age = step - st.installed_snapshot;
            audit.max_consumed_age = std::max(audit.max_consumed_age, age);
            if (age > bound) audit.violations += 1;
            st.last_consume_checked = step;
        }
        // StepEnd installs become visible for the next step.
        for (auto& [id, st] : blocks) {
            if (st.next_snapshot_after_consume >= 0) {
                st.installed_snapshot = st.next_snapshot_after_consume;
                st.next_snapshot_after_consume = -1;
            }
        }
    };

    for (const auto& e : trace.events) {
        if (e.step != current_step) {
            for (std::int64_t s = current_step; s < e.step; ++s) consume_all(s);
            current_step = e.step;
        }
        BlockState& st = blocks[e.block_id.empty() ? "-" : e.block_id];
        switch (e.event) {
            case TraceEventKind::Dispatch:
                st.pending += 1;
                st.dispatch_steps.push_back(e.step);
                audit.assertions += 1;
                if (st.pending > 1) audit.coalescing_violations += 1;
                break;
            case TraceEventKind::Install: {
                std::int64_t snapshot = e.step;
                if (!st.dispatch_steps.empty()) {
                    snapshot = st.dispatch_steps.front();
                    st.dispatch_steps.erase(st.dispatch_steps.begin());
                }
                st.pending = std::max<std::int64_t>(0, st.pending - 1);
                if (in_barrier[e.worker]) {
                    st.installed_snapshot = snapshot;  // visible to this step
                } else {
                    st.next_snapshot_after_consume = snapshot;
                }
                break;
            }
            case TraceEventKind::BarrierWaitBegin:
                in_barrier[e.worker] = true;
                break;
            case TraceEventKind::BarrierWaitEnd:
                in_barrier[e.worker] = false;
                break;
            default:
                break;
        }
    }
    if (!trace.events.empty()) {
        consume_all(current_step);
        for (std::int64_t s = current_step + 1; s < steps; ++s) consume_all(s);
    }
    return audit;
}

void write_report(const std::vector<std::string>& run_dirs, const std::string& baseline_name,
                  const std::string& out_dir, const EnergyModel& model) {
    if (run_dirs.empty()) throw MissingRunsError("report: no run directories given");
    namespace fs = std::filesystem;
    struct Loaded {
        RunReportRow row;
        LossCurve loss;
        StepTimeTrace series;
        EnergyBreakdown energy;
    };
    std::vector<Loaded> runs;
    for (const auto& dir : run_dirs) {
        if (!fs::exists(fs::path(dir) / "loss.csv"))
            throw MissingRunsError("report: " + dir + " has no loss.csv");
        Loaded l;
        l.row.name = fs::path(dir).filename().string();
        l.loss = load_loss_csv((fs::path(dir) / "loss.csv").string());
        l.series = load_series_csv((fs::path(dir) / "series.csv").string());
        if (l.loss.losses.empty()) throw EmptyTraceError("report: empty loss curve in " + dir);
        l.row.final_loss = l.loss.losses.back();
        l.row.total_sim_us = l.loss.sim_us.back();
        l.row.spike_ratio = spike_stats(l.series).spike_ratio;
        for (const auto& r : l.series.rows) l.row.exposed_wait_us += r.barrier_wait_us;
        double job_active_us = 0.0;
        const auto trace_path = fs::path(dir) / "trace.jsonl";
        if (fs::exists(trace_path)) {
            TraceFile t = parse_trace_file(trace_path.string());
            for (const auto& row : t.sync_rows) {
                l.row.intra_bytes += row.intra_bytes;
                l.row.inter_bytes += row.inter_bytes;
            }
            // Worker-pool active time from the job spans of worker 0.
            std::map<std::string, std::int64_t> started;
            for (const auto& e : t.events) {
                if (e.worker != 0) continue;
                if (e.event == TraceEventKind::JobStart) started[e.block_id] = e.t_micros;
                if (e.event == TraceEventKind::JobDone) {
                    auto it = started.find(e.block_id);
                    if (it != started.end()) {
                        job_active_us += static_cast<double>(e.t_micros - it->second);
                        started.erase(it);
                    }
                }
            }
        }
        l.energy = energy_from_trace(l.series, 1, 1, job_active_us, model);
        runs.push_back(std::move(l));
    }

    const Loaded* baseline = nullptr;
    for (const auto& l : runs)
        if (l.row.name == baseline_name) baseline = &l;
    if (baseline) {
        const double l_init = runs.front().loss.losses.front();
        for (auto& l : runs) {
            EfficiencyInput in;
            in.l_init = l_init;
            in.l_final = l.row.final_loss;
            in.e_ratio = l.energy.total_joules / baseline->energy.total_joules;
            l.row.eta = compute_eta(in);
        }
    }

    fs::create_directories(out_dir);
    std::ofstream md(fs::path(out_dir) / "summary.md", std::ios::trunc);
    md << "# Run summary\n\n";
    md << "| run | final loss | total sim (s) | spike ratio | exposed wait (s) | intra bytes | "
          "inter bytes | eta |\n";
    md << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& l : runs) {
        md << "| " << l.row.name << " | " << l.row.final_loss << " | "
           << l.row.total_sim_us / 1e6 << " | " << l.row.spike_ratio << " | "
           << l.row.exposed_wait_us / 1e6 << " | " << l.row.intra_bytes << " | "
           << l.row.inter_bytes << " | ";
        if (l.row.eta)
            md << *l.row.eta;
        else
            md << "-";
        md << " |\n";
    }

    std::ofstream series(fs::path(out_dir) / "series.csv", std::ios::trunc);
    series << "run,step,loss,total_us,barrier_wait_us,install_us\n";
    for (const auto& l : runs) {
        for (size_t i = 0; i < l.loss.steps.size(); ++i) {
            const auto& r = i < l.series.rows.size() ? l.series.rows[i] : StepTimeRow{};
            series << l.row.name << "," << l.loss.steps[i] << "," << l.loss.losses[i] << ","
                   << r.total_us << "," << r.barrier_wait_us << "," << r.install_us << "\n";
        }
    }
}

}  // namespace asopt
