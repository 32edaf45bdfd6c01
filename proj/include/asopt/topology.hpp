// SPDX-License-Identifier: Apache-2.0
//
// Rank/node membership with per-edge communication cost classes. Declared
// from config rather than discovered from the environment.
#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "asopt/errors.hpp"

namespace asopt {

enum class CostClass { IntraNode, InterNode };

struct TopologyConfig {
    int nodes = 1;
    int ranks = 1;
    /// Optional explicit layout, e.g. {{0,1,2},{3}}; overrides nodes/ranks.
    std::vector<std::vector<int>> explicit_nodes;
};

class TopologyGraph {
  public:
    TopologyGraph() : node_of_{0} {}

    explicit TopologyGraph(std::vector<int> node_of) : node_of_(std::move(node_of)) {
        if (node_of_.empty()) throw InvalidLayoutError("topology: no ranks");
        nodes_ = 1 + *std::max_element(node_of_.begin(), node_of_.end());
        std::vector<int> counts(static_cast<size_t>(nodes_), 0);
        for (int n : node_of_) {
            if (n < 0) throw InvalidLayoutError("topology: negative node id");
            counts[static_cast<size_t>(n)] += 1;
        }
        for (int c : counts)
            if (c == 0) throw InvalidLayoutError("topology: empty node");
        representatives_.assign(static_cast<size_t>(nodes_), -1);
        for (int r = 0; r < world_size(); ++r) {
            int& rep = representatives_[static_cast<size_t>(node_of_[static_cast<size_t>(r)])];
            if (rep < 0) rep = r;  // minimum rank within the node
        }
    }

    int world_size() const { return static_cast<int>(node_of_.size()); }
    int node_count() const { return nodes_; }

    int node_of(int rank) const {
        check_rank(rank);
        return node_of_[static_cast<size_t>(rank)];
    }

    const std::vector<int>& representatives() const { return representatives_; }

    bool is_representative(int rank) const {
        return representatives_[static_cast<size_t>(node_of(rank))] == rank;
    }

    std::vector<int> node_members(int node) const {
        std::vector<int> out;
        for (int r = 0; r < world_size(); ++r)
            if (node_of_[static_cast<size_t>(r)] == node) out.push_back(r);
        return out;
    }

    CostClass edge_class(int a, int b) const {
        return node_of(a) == node_of(b) ? CostClass::IntraNode : CostClass::InterNode;
    }

  private:
    void check_rank(int rank) const {
        if (rank < 0 || rank >= world_size())
            throw InvalidLayoutError("topology: rank out of range: " + std::to_string(rank));
    }

    std::vector<int> node_of_;
    std::vector<int> representatives_;
    int nodes_ = 1;
};

inline TopologyGraph discover_topology(const TopologyConfig& cfg) {
    if (!cfg.explicit_nodes.empty()) {
        std::set<int> seen;
        int max_rank = -1;
        for (const auto& node : cfg.explicit_nodes) {
            if (node.empty()) throw InvalidLayoutError("topology: empty node in layout");
            for (int r : node) {
                if (!seen.insert(r).second)
                    throw InvalidLayoutError("topology: duplicate rank " + std::to_string(r));
                max_rank = std::max(max_rank, r);
            }
        }
        if (max_rank + 1 != static_cast<int>(seen.size()))
            throw InvalidLayoutError("topology: ranks are not contiguous from 0");
        std::vector<int> node_of(seen.size(), -1);
        for (size_t n = 0; n < cfg.explicit_nodes.size(); ++n)
            for (int r : cfg.explicit_nodes[n]) node_of[static_cast<size_t>(r)] = static_cast<int>(n);
        return TopologyGraph(std::move(node_of));
    }
    if (cfg.nodes < 1 || cfg.ranks < 1)
        throw InvalidLayoutError("topology: nodes and ranks must be positive");
    if (cfg.ranks % cfg.nodes != 0)
        throw InvalidLayoutError("topology: ranks must divide evenly across nodes");
    std::vector<int> node_of(static_cast<size_t>(cfg.ranks));
    const int per = cfg.ranks / cfg.nodes;
    for (int r = 0; r < cfg.ranks; ++r) node_of[static_cast<size_t>(r)] = r / per;
    return TopologyGraph(std::move(node_of));
}

}  // namespace asopt
