// SPDX-License-Identifier: Apache-2.0
#include "asopt/coherence.hpp"

#include <algorithm>

namespace asopt {

void CoherenceRegistry::track(const std::string& block_id, std::int64_t step) {
    if (records_.count(block_id)) return;
    records_[block_id] = CoherenceRecord{block_id, 0, step};
    order_.push_back(block_id);
}

const CoherenceRecord& CoherenceRegistry::record(const std::string& block_id) const {
    auto it = records_.find(block_id);
    if (it == records_.end())
        throw MissingKeyError("coherence: untracked block " + block_id);
    return it->second;
}

void CoherenceRegistry::mark_synced(const std::string& block_id, std::int64_t step) {
    auto it = records_.find(block_id);
    if (it == records_.end())
        throw MissingKeyError("coherence: untracked block " + block_id);
    if (step < it->second.last_sync_step)
        throw AuditError("coherence: last_sync_step would move backwards for " + block_id);
    // All ranks share one registry here, so max(version)+1 collapses to +1.
    it->second.version += 1;
    it->second.last_sync_step = step;
}

std::vector<std::string> select_stale(const CoherenceRegistry& registry, std::int64_t step,
                                      const CoherenceBudget& budget) {
    std::vector<std::string> out;
    if (!budget.enabled()) return out;
    for (const auto& id : registry.tracked()) {
        const auto& rec = registry.record(id);
        if (step - rec.last_sync_step >= budget.steps) out.push_back(id);
    }
    return out;
}

SyncVolume hierarchical_sync_volume(const TopologyGraph& topo, std::uint64_t bytes,
                                    const NetConfig& net) {
    SyncVolume v;
    std::uint64_t intra_phase_lat = 0;
    for (int n = 0; n < topo.node_count(); ++n) {
        const auto members = topo.node_members(n);
        const auto k = static_cast<std::uint64_t>(members.size());
        if (k < 2) continue;
        v.intra_bytes += 2 * bytes * (k - 1);  // node-local average (star)
        v.intra_bytes += bytes * (k - 1);      // broadcast back to peers
        std::uint64_t l = net.intra_latency_us;
        if (net.intra_bw > 0.0)
            l += static_cast<std::uint64_t>(1e6 * 2.0 * static_cast<double>(bytes) / net.intra_bw);
        intra_phase_lat = std::max(intra_phase_lat, l);
    }
    const auto nodes = static_cast<std::uint64_t>(topo.node_count());
    std::uint64_t inter_phase_lat = 0;
    if (nodes >= 2) {
        v.inter_bytes += 2 * bytes * (nodes - 1);  // representative average
        inter_phase_lat = net.inter_latency_us;
        if (net.inter_bw > 0.0)
            inter_phase_lat += static_cast<std::uint64_t>(
                1e6 * 2.0 * static_cast<double>(bytes) / net.inter_bw);
    }
    // Phase 1 and phase 3 both pay the intra path; phases serialize.
    v.latency_us = 2 * intra_phase_lat + inter_phase_lat;
    return v;
}

CoherenceController::CoherenceController(Communicator& comm, CoherenceBudget budget)
    : comm_(comm), budget_(budget) {}

void CoherenceController::track_block(const std::string& block_id, std::int64_t step) {
    std::lock_guard lk(registry_mu_);
    registry_.track(block_id, step);
}

SyncVolume CoherenceController::hierarchical_sync(int rank, const std::string& block_id,
                                                  std::int64_t step, Eigen::Ref<Vecd> replica) {
    (void)block_id;
    (void)step;
    const TopologyGraph& topo = comm_.topology();
    const int node = topo.node_of(rank);
    const auto node_members = topo.node_members(node);
    const auto node_size = static_cast<double>(node_members.size());

    if (node_members.size() > 1) {
        comm_.allreduce_avg(Group::of(node_members), rank, replica);
    }
    if (topo.node_count() > 1 && topo.is_representative(rank)) {
        comm_.allreduce_avg(Group::of(topo.representatives()), rank, replica, node_size);
    }
    if (node_members.size() > 1) {
        const int rep = topo.representatives()[static_cast<size_t>(node)];
        comm_.broadcast(Group::of(node_members), rep, rank, replica);
    }
    return hierarchical_sync_volume(topo, static_cast<std::uint64_t>(replica.size()) *
                                              sizeof(double),
                                    comm_.config());
}

SyncReport CoherenceController::coherence_tick(int rank, std::int64_t step,
                                               const ReplicaAccessor& replicas) {
    SyncReport report;
    report.step = step;
    std::vector<std::string> stale;
    {
        std::lock_guard lk(registry_mu_);
        stale = select_stale(registry_, step, budget_);
        report.tracked = static_cast<int>(registry_.tracked().size());
    }
    report.cache_hits = report.tracked - static_cast<int>(stale.size());
    if (stale.empty()) return report;

    const Group world = Group::world(comm_.topology().world_size());
    for (const auto& id : stale) {
        SyncVolume v = hierarchical_sync(rank, id, step, replicas(id));
        report.volume.intra_bytes += v.intra_bytes;
        report.volume.inter_bytes += v.inter_bytes;
        report.volume.latency_us += v.latency_us;
        report.synced.push_back(id);
    }
    comm_.barrier(world, rank);
    if (rank == 0) {
        std::lock_guard lk(registry_mu_);
        for (const auto& id : stale) registry_.mark_synced(id, step);
    }
    comm_.barrier(world, rank);
    return report;
}

}  // namespace asopt
