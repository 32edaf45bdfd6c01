// SPDX-License-Identifier: Apache-2.0
#include <fstream>

#include "asopt/harness.hpp"

namespace asopt {

namespace {

using nlohmann::json;

template <class T>
void read_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

std::string task_kind_to_string(TaskKind k) {
    return k == TaskKind::IllConditionedQuadratic ? "IllConditionedQuadratic"
                                                  : "SyntheticClassifier";
}

TaskKind task_kind_from_string(const std::string& s) {
    if (s == "IllConditionedQuadratic") return TaskKind::IllConditionedQuadratic;
    if (s == "SyntheticClassifier") return TaskKind::SyntheticClassifier;
    throw ConfigInvalidError("unknown task kind: " + s);
}

std::string activation_to_string(Activation a) {
    return a == Activation::Identity ? "Identity" : "Tanh";
}

Activation activation_from_string(const std::string& s) {
    if (s == "Identity") return Activation::Identity;
    if (s == "Tanh") return Activation::Tanh;
    throw ConfigInvalidError("unknown activation: " + s);
}

}  // namespace

void RunConfig::validate() const {
    optimizer.validate();
    if (async_cfg.pf != optimizer.precondition_frequency)
        throw ConfigInvalidError("async.pf must equal optimizer.precondition_frequency");
    if (async_cfg.staleness_S < 0) throw ConfigInvalidError("staleness_S must be >= 0");
    if (coherence_budget_B < 0) throw ConfigInvalidError("coherence budget_B must be >= 0");
    if (net.ranks < 1 || net.nodes < 1) throw ConfigInvalidError("net.ranks/nodes must be >= 1");
    if (task.steps < 1) throw ConfigInvalidError("task.steps must be >= 1");
    if (task.kind == TaskKind::SyntheticClassifier) {
        if (model.layer_dims.size() < 2)
            throw ConfigInvalidError("model.layer_dims needs at least input and output");
        if (model.layer_dims.back() != task.classes)
            throw ConfigInvalidError("model output dim must equal task.classes");
        if (task.batch_size < 1 || task.batch_size % net.ranks != 0)
            throw ConfigInvalidError("task.batch_size must be a positive multiple of net.ranks");
    } else {
        if (task.quadratic_rows < 2 || task.quadratic_cols < 2)
            throw ConfigInvalidError("quadratic dims must be >= 2");
        if (task.quadratic_cond < 1.0) throw ConfigInvalidError("quadratic cond must be >= 1");
        if (model.layer_dims != std::vector<Index>{task.quadratic_rows, task.quadratic_cols})
            throw ConfigInvalidError(
                "quadratic task requires model.layer_dims == [quadratic_rows, quadratic_cols]");
    }
    if (sim.step_compute_us < 0 || sim.install_cost_us < 0)
        throw ConfigInvalidError("sim costs must be nonnegative");
    if (report.loss_band_rel <= 0) throw ConfigInvalidError("report.loss_band_rel must be > 0");
}

json run_config_to_json(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["optimizer"] = {{"method", to_string(cfg.optimizer.method)},
                      {"lr", cfg.optimizer.lr},
                      {"beta1", cfg.optimizer.beta1},
                      {"beta2", cfg.optimizer.beta2},
                      {"eps", cfg.optimizer.eps},
                      {"weight_decay", cfg.optimizer.weight_decay},
                      {"precondition_frequency", cfg.optimizer.precondition_frequency},
                      {"accumulation", to_string(cfg.optimizer.accumulation)},
                      {"damping", cfg.optimizer.damping},
                      {"block_dim_limit", cfg.optimizer.block_dim_limit}};
    j["async"] = {{"staleness_S", cfg.async_cfg.staleness_S},
                  {"pf", cfg.async_cfg.pf},
                  {"pool_size", cfg.async_cfg.pool_size},
                  {"inject_job_delay_steps", cfg.async_cfg.inject_job_delay_steps},
                  {"inject_job_delay_jitter_steps", cfg.async_cfg.inject_job_delay_jitter_steps},
                  {"drain_budget", cfg.async_cfg.drain_budget}};
    j["coherence"] = {{"budget_B", cfg.coherence_budget_B}};
    j["net"] = {{"ranks", cfg.net.ranks},
                {"nodes", cfg.net.nodes},
                {"intra_latency_us", cfg.net.intra_latency_us},
                {"inter_latency_us", cfg.net.inter_latency_us},
                {"intra_bw", cfg.net.intra_bw},
                {"inter_bw", cfg.net.inter_bw},
                {"rendezvous_timeout_ms", cfg.net.rendezvous_timeout_ms}};
    if (!cfg.topology.explicit_nodes.empty())
        j["topology"] = {{"nodes", cfg.topology.explicit_nodes}};
    j["tier"] = {{"hot_capacity_bytes", cfg.tier.hot_capacity_bytes},
                 {"host_capacity_bytes", cfg.tier.host_capacity_bytes},
                 {"cold_path", cfg.tier.cold_path},
                 {"transfer_bandwidth_bytes_per_sec", cfg.tier.transfer_bandwidth_bytes_per_sec},
                 {"transfer_latency_us", cfg.tier.transfer_latency_us}};
    j["task"] = {{"kind", task_kind_to_string(cfg.task.kind)},
                 {"classes", cfg.task.classes},
                 {"teacher_seed", cfg.task.teacher_seed},
                 {"batch_size", cfg.task.batch_size},
                 {"steps", cfg.task.steps},
                 {"label_noise", cfg.task.label_noise},
                 {"quadratic_rows", cfg.task.quadratic_rows},
                 {"quadratic_cols", cfg.task.quadratic_cols},
                 {"quadratic_cond", cfg.task.quadratic_cond},
                 {"quadratic_scale", cfg.task.quadratic_scale}};
    j["model"] = {{"layer_dims", cfg.model.layer_dims},
                  {"activation", activation_to_string(cfg.model.activation)},
                  {"seed", cfg.model.seed}};
    j["sim"] = {{"step_compute_us", cfg.sim.step_compute_us},
                {"install_cost_us", cfg.sim.install_cost_us}};
    j["report"] = {{"loss_band_rel", cfg.report.loss_band_rel}, {"vocab", cfg.report.vocab}};
    return j;
}

RunConfig run_config_from_json(const json& j) {
    RunConfig cfg;
    read_if(j, "seed", cfg.seed);
    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        if (o.contains("method")) cfg.optimizer = OptimizerConfig::defaults_for(
                                      method_from_string(o.at("method").get<std::string>()));
        read_if(o, "lr", cfg.optimizer.lr);
        read_if(o, "beta1", cfg.optimizer.beta1);
        read_if(o, "beta2", cfg.optimizer.beta2);
        read_if(o, "eps", cfg.optimizer.eps);
        read_if(o, "weight_decay", cfg.optimizer.weight_decay);
        read_if(o, "precondition_frequency", cfg.optimizer.precondition_frequency);
        if (o.contains("accumulation"))
            cfg.optimizer.accumulation =
                accumulation_from_string(o.at("accumulation").get<std::string>());
        read_if(o, "damping", cfg.optimizer.damping);
        read_if(o, "block_dim_limit", cfg.optimizer.block_dim_limit);
    }
    cfg.async_cfg.pf = cfg.optimizer.precondition_frequency;
    if (j.contains("async")) {
        const json& a = j.at("async");
        read_if(a, "staleness_S", cfg.async_cfg.staleness_S);
        read_if(a, "pf", cfg.async_cfg.pf);
        read_if(a, "pool_size", cfg.async_cfg.pool_size);
        read_if(a, "inject_job_delay_steps", cfg.async_cfg.inject_job_delay_steps);
        read_if(a, "inject_job_delay_jitter_steps", cfg.async_cfg.inject_job_delay_jitter_steps);
        read_if(a, "drain_budget", cfg.async_cfg.drain_budget);
    }
    if (j.contains("coherence")) read_if(j.at("coherence"), "budget_B", cfg.coherence_budget_B);
    if (j.contains("net")) {
        const json& n = j.at("net");
        read_if(n, "ranks", cfg.net.ranks);
        read_if(n, "nodes", cfg.net.nodes);
        read_if(n, "intra_latency_us", cfg.net.intra_latency_us);
        read_if(n, "inter_latency_us", cfg.net.inter_latency_us);
        read_if(n, "intra_bw", cfg.net.intra_bw);
        read_if(n, "inter_bw", cfg.net.inter_bw);
        read_if(n, "rendezvous_timeout_ms", cfg.net.rendezvous_timeout_ms);
    }
    cfg.topology.nodes = cfg.net.nodes;
    cfg.topology.ranks = cfg.net.ranks;
    if (j.contains("topology"))
        read_if(j.at("topology"), "nodes", cfg.topology.explicit_nodes);
    if (j.contains("tier")) {
        const json& t = j.at("tier");
        read_if(t, "hot_capacity_bytes", cfg.tier.hot_capacity_bytes);
        read_if(t, "host_capacity_bytes", cfg.tier.host_capacity_bytes);
        read_if(t, "cold_path", cfg.tier.cold_path);
        read_if(t, "transfer_bandwidth_bytes_per_sec", cfg.tier.transfer_bandwidth_bytes_per_sec);
        read_if(t, "transfer_latency_us", cfg.tier.transfer_latency_us);
    }
    if (j.contains("task")) {
        const json& t = j.at("task");
        if (t.contains("kind")) cfg.task.kind = task_kind_from_string(t.at("kind").get<std::string>());
        read_if(t, "classes", cfg.task.classes);
        read_if(t, "teacher_seed", cfg.task.teacher_seed);
        read_if(t, "batch_size", cfg.task.batch_size);
        read_if(t, "steps", cfg.task.steps);
        read_if(t, "label_noise", cfg.task.label_noise);
        read_if(t, "quadratic_rows", cfg.task.quadratic_rows);
        read_if(t, "quadratic_cols", cfg.task.quadratic_cols);
        read_if(t, "quadratic_cond", cfg.task.quadratic_cond);
        read_if(t, "quadratic_scale", cfg.task.quadratic_scale);
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        read_if(m, "layer_dims", cfg.model.layer_dims);
        if (m.contains("activation"))
            cfg.model.activation = activation_from_string(m.at("activation").get<std::string>());
        read_if(m, "seed", cfg.model.seed);
    }
    if (j.contains("sim")) {
        read_if(j.at("sim"), "step_compute_us", cfg.sim.step_compute_us);
        read_if(j.at("sim"), "install_cost_us", cfg.sim.install_cost_us);
    }
    if (j.contains("report")) {
        read_if(j.at("report"), "loss_band_rel", cfg.report.loss_band_rel);
        read_if(j.at("report"), "vocab", cfg.report.vocab);
    }
    cfg.async_cfg.step_compute_us = cfg.sim.step_compute_us;
    cfg.async_cfg.install_cost_us = cfg.sim.install_cost_us;
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigInvalidError("cannot open config " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigInvalidError(std::string("config parse error: ") + e.what());
    }
    return run_config_from_json(j);
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write config " + path);
    f << run_config_to_json(cfg).dump(2) << "\n";
}

}  // namespace asopt
