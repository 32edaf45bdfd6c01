// SPDX-License-Identifier: Apache-2.0
//
// In-process multi-worker substrate: group collectives (weighted all-reduce
// average, broadcast, barrier) over threads, with per-cost-class byte and
// simulated-latency accounting. Workers are threads meeting at
// generation-counted rendezvous points; results are bit-deterministic given
// a fixed schedule (reduction order is ascending member rank).
#pragma once

#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <vector>

#include "asopt/densela.hpp"
#include "asopt/errors.hpp"
#include "asopt/topology.hpp"

namespace asopt {

enum class CostModel { Star, Ring };

struct NetConfig {
    int ranks = 1;
    int nodes = 1;
    std::uint64_t intra_latency_us = 0;
    std::uint64_t inter_latency_us = 0;
    double intra_bw = 0.0;  // bytes/sec; 0 = unthrottled
    double inter_bw = 0.0;
    std::int64_t rendezvous_timeout_ms = 30000;
    CostModel model = CostModel::Star;
};

struct CostLedger {
    std::uint64_t bytes_intra = 0;
    std::uint64_t bytes_inter = 0;
    std::uint64_t latency_us = 0;
};

/// Per-operation charge, identical on every participating rank.
struct OpCharge {
    std::uint64_t intra_bytes = 0;
    std::uint64_t inter_bytes = 0;
    std::uint64_t latency_us = 0;
};

struct Group {
    std::vector<int> members;  // sorted, distinct

    static Group of(std::vector<int> ranks);
    static Group world(int n);
    bool contains(int rank) const;
    int index_of(int rank) const;
    std::string signature() const;
};

/// Analytic byte charges for one all-reduce under either algorithm model;
/// the ring form doubles as the flat-collective oracle for the hierarchy
/// advantage checks.
OpCharge star_allreduce_bytes(const Group& g, const TopologyGraph& topo, std::uint64_t bytes);
OpCharge ring_allreduce_bytes(const Group& g, const TopologyGraph& topo, std::uint64_t bytes);
OpCharge star_broadcast_bytes(const Group& g, const TopologyGraph& topo, int root,
                              std::uint64_t bytes);

class Communicator {
  public:
    Communicator(NetConfig cfg, TopologyGraph topo);

    /// Weighted mean over the group; every member returns with the identical
    /// buffer. Blocking rendezvous for the group's threads.
    OpCharge allreduce_avg(const Group& g, int rank, Eigen::Ref<Vecd> data, double weight = 1.0);

    /// Every member returns with root's bytes.
    OpCharge broadcast(const Group& g, int root, int rank, Eigen::Ref<Vecd> data);

    OpCharge barrier(const Group& g, int rank);

    CostLedger ledger_snapshot() const;
    const TopologyGraph& topology() const { return topo_; }
    const NetConfig& config() const { return cfg_; }

    /// Test hook: collectives naming this rank fail with GroupFailure.
    void mark_unreachable(int rank);

  private:
    enum class OpKind { Allreduce, Broadcast, Barrier };

    struct Slot {
        std::mutex m;
        std::condition_variable cv;
        std::uint64_t gen = 0;
        int arrived = 0;
        std::vector<const double*> src;
        std::vector<double> weights;
        Vecd result;
        int root = -1;
    };

    Slot& slot_for(const Group& g);
    OpCharge run_op(OpKind kind, const Group& g, int rank, Eigen::Ref<Vecd> data, double weight,
                    int root);
    OpCharge charge_for(OpKind kind, const Group& g, std::uint64_t bytes, int root = -1) const;

    NetConfig cfg_;
    TopologyGraph topo_;
    mutable std::mutex slots_mu_;
    std::map<std::string, std::unique_ptr<Slot>> slots_;
    std::set<int> unreachable_;
    mutable std::mutex ledger_mu_;
    CostLedger ledger_;
};

}  // namespace asopt
