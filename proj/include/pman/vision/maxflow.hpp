#pragma once

#include <cstddef>
#include <vector>

namespace pman::vision {

struct FlowEdge {
    int from = 0;
    int to = 0;
    double capacity = 0.0;
};

struct FlowNetwork {
    int node_count = 0;
    int source = 0;
    int sink = 1;
    std::vector<FlowEdge> edges;

    FlowNetwork() = default;
    FlowNetwork(int nodes, int s, int t) : node_count(nodes), source(s), sink(t) {}
    void add_edge(int from, int to, double capacity) { edges.push_back({from, to, capacity}); }
    void validate() const;
};

struct MinCut {
    double flow = 0.0;
    std::vector<char> source_side;  // per node
    double cut_capacity(const FlowNetwork& net) const;
};

/// Dinic's algorithm. Deterministic: edges are explored in insertion order.
MinCut max_flow_min_cut(const FlowNetwork& net);

}  // namespace pman::vision
