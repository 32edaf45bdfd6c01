// SPDX-License-Identifier: Apache-2.0
//
// CLI for the asynchronous second-order optimizer runtime.
//   asopt train --config c.json --out runs/a
//   asopt sweep --config c.json --axis staleness --values 1,2,3,5,10 --out runs/sweep
//   asopt bench-spikes --config c.json --job-cost 5x --out runs/spikes
//   asopt report --dir runs/ [--baseline adamw]
// Exit codes: 0 success, 2 config error, 3 invariant-audit failure.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "asopt/harness.hpp"
#include "asopt/metrics.hpp"

namespace fs = std::filesystem;
using namespace asopt;

namespace {

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
    if (out.empty()) throw ConfigInvalidError("empty --values list");
    return out;
}

double parse_multiplier(std::string s) {
    if (!s.empty() && (s.back() == 'x' || s.back() == 'X')) s.pop_back();
    return std::stod(s);
}

void print_summary(const RunSummary& s) {
    std::printf("steps=%zu final_train_loss=%.6g eval_loss=%.6g sim_time_s=%.3f wall_s=%.2f\n",
                s.steps.size(), s.final_train_loss, s.final_eval_loss, s.total_sim_us / 1e6,
                s.wall_seconds);
    std::printf("pool: dispatched=%llu installed=%llu coalesced=%llu wait_total_s=%.3f\n",
                static_cast<unsigned long long>(s.pool.dispatched),
                static_cast<unsigned long long>(s.pool.installed),
                static_cast<unsigned long long>(s.pool.coalesced), s.pool.wait_total_us / 1e6);
    std::printf("net: intra=%llu inter=%llu bytes; coherence: synced=%llu hits=%llu\n",
                static_cast<unsigned long long>(s.net.bytes_intra),
                static_cast<unsigned long long>(s.net.bytes_inter),
                static_cast<unsigned long long>(s.coherence.synced),
                static_cast<unsigned long long>(s.coherence.hits));
}

int run_train(const std::string& config_path, const std::string& out_dir) {
    RunConfig cfg = load_run_config(config_path);
    RunSummary s = run_training(cfg, out_dir);
    print_summary(s);
    return 0;
}

int run_sweep(const std::string& config_path, const std::string& axis_str,
              const std::string& values_csv, const std::string& out_dir) {
    RunConfig cfg = load_run_config(config_path);
    const SweepAxis axis = sweep_axis_from_string(axis_str);
    auto rows = sweep(cfg, axis, parse_values(values_csv), out_dir);
    std::printf("%-10s %14s %14s %14s %14s\n", axis_str.c_str(), "sim_time_s", "eval_loss",
                "bytes_moved", "wait_s");
    for (const auto& r : rows)
        std::printf("%-10g %14.3f %14.6g %14llu %14.3f\n", r.value, r.total_sim_us / 1e6,
                    r.final_eval_loss, static_cast<unsigned long long>(r.bytes_moved),
                    r.exposed_wait_us / 1e6);
    return 0;
}

int run_bench_spikes(const std::string& config_path, const std::string& job_cost,
                     const std::string& out_dir) {
    RunConfig cfg = load_run_config(config_path);
    cfg.async_cfg.inject_job_delay_steps = parse_multiplier(job_cost);

    RunConfig sync_cfg = cfg;
    sync_cfg.async_cfg.staleness_S = 0;
    RunConfig async_cfg = cfg;
    async_cfg.async_cfg.staleness_S = 5;

    RunSummary sync_run = run_training(sync_cfg, out_dir.empty() ? "" : out_dir + "/sync");
    RunSummary async_run = run_training(async_cfg, out_dir.empty() ? "" : out_dir + "/async");

    auto ratio = [](const RunSummary& s) {
        StepTimeTrace t;
        for (const auto& row : s.steps) {
            StepTimeRow r;
            r.step = row.step;
            double prev = r.step == 0 ? 0.0 : s.steps[static_cast<size_t>(r.step) - 1].sim_us;
            r.total_us = row.sim_us - prev;
            r.barrier_wait_us = row.barrier_wait_us;
            r.install_us = row.install_us;
            t.rows.push_back(r);
        }
        return spike_stats(t);
    };
    const SpikeStats sync_stats = ratio(sync_run);
    const SpikeStats async_stats = ratio(async_run);
    std::printf("sync  (S=0): median=%.0fus max=%.0fus spike_ratio=%.3f final_loss=%.6g\n",
                sync_stats.median, sync_stats.max, sync_stats.spike_ratio,
                sync_run.final_eval_loss);
    std::printf("async (S=5): median=%.0fus max=%.0fus spike_ratio=%.3f final_loss=%.6g\n",
                async_stats.median, async_stats.max, async_stats.spike_ratio,
                async_run.final_eval_loss);
    return 0;
}

int run_report(const std::string& dir, const std::string& baseline) {
    std::vector<std::string> run_dirs;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "loss.csv"))
            run_dirs.push_back(entry.path().string());
    }
    std::sort(run_dirs.begin(), run_dirs.end());
    write_report(run_dirs, baseline, dir);
    std::printf("wrote %s/summary.md (%zu runs)\n", dir.c_str(), run_dirs.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"asynchronous second-order optimizer runtime"};
    app.require_subcommand(1);

    std::string config_path, out_dir, axis, values, job_cost = "5x", dir, baseline;

    auto* train = app.add_subcommand("train", "run one training configuration");
    train->add_option("--config", config_path)->required();
    train->add_option("--out", out_dir)->default_val("run_out");

    auto* sw = app.add_subcommand("sweep", "run a parameter sweep");
    sw->add_option("--config", config_path)->required();
    sw->add_option("--axis", axis)->required()->check(CLI::IsMember({"staleness", "nodes", "budget"}));
    sw->add_option("--values", values)->required();
    sw->add_option("--out", out_dir)->default_val("sweep_out");

    auto* bench = app.add_subcommand("bench-spikes", "compare S=0 vs S=5 step-time spikes");
    bench->add_option("--config", config_path)->required();
    bench->add_option("--job-cost", job_cost);
    bench->add_option("--out", out_dir)->default_val("spikes_out");

    auto* rep = app.add_subcommand("report", "aggregate run directories");
    rep->add_option("--dir", dir)->required();
    rep->add_option("--baseline", baseline);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(train)) return run_train(config_path, out_dir);
        if (app.got_subcommand(sw)) return run_sweep(config_path, axis, values, out_dir);
        if (app.got_subcommand(bench)) return run_bench_spikes(config_path, job_cost, out_dir);
        if (app.got_subcommand(rep)) return run_report(dir, baseline);
    } catch (const ConfigInvalidError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const AuditError& e) {
        std::cerr << "invariant audit failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
