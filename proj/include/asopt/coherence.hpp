// SPDX-License-Identifier: Apache-2.0
//
// Topology-aware bounded-staleness coherence for replicated host-resident
// preconditioner blocks: per-block (version, last-sync-step) registry,
// selective sync decision, and hierarchical average-and-broadcast over
// simnet groups (node-local average, size-weighted average across node
// representatives, broadcast back to local peers).
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "asopt/simnet.hpp"
#include "asopt/topology.hpp"

namespace asopt {

struct CoherenceRecord {
    std::string block_id;
    std::uint64_t version = 0;
    std::int64_t last_sync_step = 0;
};

struct CoherenceBudget {
    std::int64_t steps = kNever;  // B: max steps between syncs per block

    static constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::max();
    bool enabled() const { return steps != kNever; }
};

class CoherenceRegistry {
  public:
    void track(const std::string& block_id, std::int64_t step);
    const CoherenceRecord& record(const std::string& block_id) const;
    /// Deterministic (insertion) order.
    const std::vector<std::string>& tracked() const { return order_; }
    void mark_synced(const std::string& block_id, std::int64_t step);

  private:
    std::map<std::string, CoherenceRecord> records_;
    std::vector<std::string> order_;
};

/// Blocks due for synchronization: step - last_sync_step >= B, giving a sync
/// period of exactly B steps per block.
std::vector<std::string> select_stale(const CoherenceRegistry& registry, std::int64_t step,
                                      const CoherenceBudget& budget);

struct SyncVolume {
    std::uint64_t intra_bytes = 0;
    std::uint64_t inter_bytes = 0;
    std::uint64_t latency_us = 0;
};

/// Analytic per-sync volume/latency for a block of `bytes` payload under the
/// three-phase hierarchy; identical on every rank by construction.
SyncVolume hierarchical_sync_volume(const TopologyGraph& topo, std::uint64_t bytes,
                                    const NetConfig& net);

struct SyncReport {
    std::int64_t step = 0;
    std::vector<std::string> synced;
    int cache_hits = 0;
    int tracked = 0;
    SyncVolume volume;
};

/// Callback giving one rank's host-resident replica buffer for a block.
using ReplicaAccessor = std::function<Eigen::Ref<Vecd>(const std::string& block_id)>;

class CoherenceController {
  public:
    CoherenceController(Communicator& comm, CoherenceBudget budget);

    CoherenceRegistry& registry() { return registry_; }
    const CoherenceBudget& budget() const { return budget_; }

    /// Thread-safe registration; rank threads may race during setup.
    void track_block(const std::string& block_id, std::int64_t step);

    /// Averages one block's replicas within each node, size-weighted across
    /// node representatives, then broadcasts back to local peers. Every rank
    /// of the world must call this collectively. Returns the analytic volume.
    SyncVolume hierarchical_sync(int rank, const std::string& block_id, std::int64_t step,
                                 Eigen::Ref<Vecd> replica);

    /// StepEnd entry point for every rank: selects stale blocks, syncs them
    /// in deterministic order, updates the registry once, and reports.
    SyncReport coherence_tick(int rank, std::int64_t step, const ReplicaAccessor& replicas);

  private:
    Communicator& comm_;
    CoherenceBudget budget_;
    CoherenceRegistry registry_;
    std::mutex registry_mu_;
};

}  // namespace asopt
