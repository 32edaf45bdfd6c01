// SPDX-License-Identifier: Apache-2.0
#include "asopt/simnet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace asopt {

Group Group::of(std::vector<int> ranks) {
    if (ranks.empty()) throw InvalidLayoutError("group: empty member list");
    std::sort(ranks.begin(), ranks.end());
    for (size_t i = 1; i < ranks.size(); ++i)
        if (ranks[i] == ranks[i - 1]) throw InvalidLayoutError("group: duplicate member");
    Group g;
    g.members = std::move(ranks);
    return g;
}

Group Group::world(int n) {
    std::vector<int> all(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
    return of(std::move(all));
}

bool Group::contains(int rank) const {
    return std::binary_search(members.begin(), members.end(), rank);
}

int Group::index_of(int rank) const {
    auto it = std::lower_bound(members.begin(), members.end(), rank);
    if (it == members.end() || *it != rank)
        throw InvalidLayoutError("group: rank not a member: " + std::to_string(rank));
    return static_cast<int>(it - members.begin());
}

std::string Group::signature() const {
    std::string s;
    for (int r : members) {
        s += std::to_string(r);
        s += ',';
    }
    return s;
}

OpCharge star_allreduce_bytes(const Group& g, const TopologyGraph& topo, std::uint64_t bytes) {
    OpCharge c;
    const int root = g.members.front();
    for (int m : g.members) {
        if (m == root) continue;
        // Gather + scatter phases: bytes each way on the root<->member edge.
        if (topo.edge_class(root, m) == CostClass::IntraNode)
            c.intra_bytes += 2 * bytes;
        else
            c.inter_bytes += 2 * bytes;
    }
    return c;
}

OpCharge ring_allreduce_bytes(const Group& g, const TopologyGraph& topo, std::uint64_t bytes) {
    OpCharge c;
    const size_t n = g.members.size();
    if (n < 2) return c;
    // Reduce-scatter + all-gather: each directed ring edge carries
    // 2*(n-1) chunks of bytes/n.
    const double per_edge = 2.0 * static_cast<double>(n - 1) *
                            (static_cast<double>(bytes) / static_cast<double>(n));
    for (size_t i = 0; i < n; ++i) {
        const int a = g.members[i];
        const int b = g.members[(i + 1) % n];
        const auto amount = static_cast<std::uint64_t>(std::llround(per_edge));
        if (topo.edge_class(a, b) == CostClass::IntraNode)
            c.intra_bytes += amount;
        else
            c.inter_bytes += amount;
    }
    return c;
}

OpCharge star_broadcast_bytes(const Group& g, const TopologyGraph& topo, int root,
                              std::uint64_t bytes) {
    OpCharge c;
    for (int m : g.members) {
        if (m == root) continue;
        if (topo.edge_class(root, m) == CostClass::IntraNode)
            c.intra_bytes += bytes;
        else
            c.inter_bytes += bytes;
    }
    return c;
}

Communicator::Communicator(NetConfig cfg, TopologyGraph topo)
    : cfg_(std::move(cfg)), topo_(std::move(topo)) {
    if (cfg_.ranks != topo_.world_size())
        throw InvalidLayoutError("simnet: ranks disagree with topology world size");
}

Communicator::Slot& Communicator::slot_for(const Group& g) {
    std::lock_guard lk(slots_mu_);
    auto& slot = slots_[g.signature()];
    if (!slot) {
        slot = std::make_unique<Slot>();
        slot->src.resize(g.members.size(), nullptr);
        slot->weights.resize(g.members.size(), 0.0);
    }
    return *slot;
}

OpCharge Communicator::charge_for(OpKind kind, const Group& g, std::uint64_t bytes,
                                  int root) const {
    OpCharge c;
    if (g.members.size() < 2) return c;
    if (root < 0) root = g.members.front();
    switch (kind) {
        case OpKind::Allreduce:
            c = cfg_.model == CostModel::Star ? star_allreduce_bytes(g, topo_, bytes)
                                              : ring_allreduce_bytes(g, topo_, bytes);
            break;
        case OpKind::Broadcast:
            c = star_broadcast_bytes(g, topo_, root, bytes);
            break;
        case OpKind::Barrier:
            break;
    }
    // Latency model: per cost class, per-op latency plus the serialized
    // per-edge payload over that class's bandwidth; classes proceed in
    // parallel, so the op takes the slower of the two.
    bool uses_intra = false, uses_inter = false;
    for (int m : g.members) {
        if (m == root) continue;
        (topo_.edge_class(root, m) == CostClass::IntraNode ? uses_intra : uses_inter) = true;
    }
    const std::uint64_t per_edge = kind == OpKind::Barrier ? 0 : 2 * bytes;
    std::uint64_t lat = 0;
    if (uses_intra) {
        std::uint64_t l = cfg_.intra_latency_us;
        if (cfg_.intra_bw > 0.0)
            l += static_cast<std::uint64_t>(1e6 * static_cast<double>(per_edge) / cfg_.intra_bw);
        lat = std::max(lat, l);
    }
    if (uses_inter) {
        std::uint64_t l = cfg_.inter_latency_us;
        if (cfg_.inter_bw > 0.0)
            l += static_cast<std::uint64_t>(1e6 * static_cast<double>(per_edge) / cfg_.inter_bw);
        lat = std::max(lat, l);
    }
    c.latency_us = lat;
    return c;
}

OpCharge Communicator::run_op(OpKind kind, const Group& g, int rank, Eigen::Ref<Vecd> data,
                              double weight, int root) {
    if (!g.contains(rank)) throw InvalidLayoutError("simnet: caller not in group");
    {
        std::lock_guard lk(slots_mu_);
        for (int m : g.members)
            if (unreachable_.count(m))
                throw GroupFailureError("simnet: rank unreachable: " + std::to_string(m));
    }
    const auto n = static_cast<int>(g.members.size());
    const std::uint64_t bytes = static_cast<std::uint64_t>(data.size()) * sizeof(double);
    OpCharge charge = charge_for(kind, g, bytes, root);

    if (n == 1) return charge;  // singleton: identity, zero cost

    Slot& slot = slot_for(g);
    std::unique_lock lk(slot.m);
    const int idx = g.index_of(rank);
    slot.src[static_cast<size_t>(idx)] = data.data();
    slot.weights[static_cast<size_t>(idx)] = weight;
    if (kind == OpKind::Broadcast && rank == root) slot.root = idx;
    const std::uint64_t my_gen = slot.gen;

    if (++slot.arrived == n) {
        switch (kind) {
            case OpKind::Allreduce: {
                Vecd acc = Vecd::Zero(data.size());
                double wsum = 0.0;
                for (int i = 0; i < n; ++i) {
                    const auto ui = static_cast<size_t>(i);
                    acc += slot.weights[ui] *
                           Eigen::Map<const Vecd>(slot.src[ui], data.size());
                    wsum += slot.weights[ui];
                }
                if (wsum <= 0.0) throw ShapeMismatchError("simnet: nonpositive weight sum");
                slot.result = acc / wsum;
                break;
            }
            case OpKind::Broadcast: {
                if (slot.root < 0) throw InvalidLayoutError("simnet: broadcast root absent");
                slot.result =
                    Eigen::Map<const Vecd>(slot.src[static_cast<size_t>(slot.root)], data.size());
                break;
            }
            case OpKind::Barrier:
                break;
        }
        slot.root = -1;
        slot.arrived = 0;
        slot.gen += 1;
        {
            std::lock_guard glk(ledger_mu_);
            ledger_.bytes_intra += charge.intra_bytes;
            ledger_.bytes_inter += charge.inter_bytes;
            ledger_.latency_us += charge.latency_us;
        }
        slot.cv.notify_all();
    } else {
        // wait_until over the system clock: equivalent timeout semantics,
        // and unlike wait_for it maps to the pthread wait that sanitizers
        // model correctly.
        const bool done = slot.cv.wait_until(
            lk,
            std::chrono::system_clock::now() +
                std::chrono::milliseconds(cfg_.rendezvous_timeout_ms),
            [&] { return slot.gen != my_gen; });
        if (!done)
            throw RendezvousTimeoutError("simnet: rendezvous timed out for group " +
                                         g.signature());
    }
    if (kind != OpKind::Barrier) data = slot.result;
    return charge;
}

OpCharge Communicator::allreduce_avg(const Group& g, int rank, Eigen::Ref<Vecd> data,
                                     double weight) {
    return run_op(OpKind::Allreduce, g, rank, data, weight, -1);
}

OpCharge Communicator::broadcast(const Group& g, int root, int rank, Eigen::Ref<Vecd> data) {
    if (!g.contains(root)) throw InvalidLayoutError("simnet: broadcast root not in group");
    return run_op(OpKind::Broadcast, g, rank, data, 1.0, root);
}

OpCharge Communicator::barrier(const Group& g, int rank) {
    Vecd dummy(0);
    return run_op(OpKind::Barrier, g, rank, dummy, 1.0, -1);
}

CostLedger Communicator::ledger_snapshot() const {
    std::lock_guard lk(ledger_mu_);
    return ledger_;
}

void Communicator::mark_unreachable(int rank) {
    std::lock_guard lk(slots_mu_);
    unreachable_.insert(rank);
}

}  // namespace asopt
