#include "pman/vision/maxflow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>

#include "pman/error.hpp"

namespace pman::vision {

void FlowNetwork::validate() const {
    if (node_count < 2) throw ValidationError("flow network: need at least two nodes");
    if (source == sink) throw ValidationError("flow network: source equals sink");
    auto in_range = [&](int v) { return v >= 0 && v < node_count; };
    if (!in_range(source) || !in_range(sink)) throw ValidationError("flow network: terminal out of range");
    for (const auto& e : edges) {
        if (!in_range(e.from) || !in_range(e.to)) throw ValidationError("flow network: edge endpoint out of range");
        if (!(e.capacity >= 0.0) || !std::isfinite(e.capacity)) {
            throw ValidationError("flow network: capacity must be finite and non-negative");
        }
    }
}

double MinCut::cut_capacity(const FlowNetwork& net) const {
    double c = 0.0;
    for (const auto& e : net.edges) {
        if (source_side[static_cast<std::size_t>(e.from)] && !source_side[static_cast<std::size_t>(e.to)]) c += e.capacity;
    }
    return c;
}

namespace {

class Dinic {
public:
    explicit Dinic(const FlowNetwork& net) : n_(static_cast<std::size_t>(net.node_count)) {
        arcs_.reserve(net.edges.size() * 2);
        for (const auto& e : net.edges) {
            if (e.from == e.to) continue;
            add_arc(e.from, e.to, e.capacity);
            add_arc(e.to, e.from, 0.0);
        }
        // adjacency in insertion order
        adj_.assign(n_, {});
        for (std::size_t a = 0; a < arcs_.size(); ++a) adj_[static_cast<std::size_t>(arcs_[a].from)].push_back(static_cast<int>(a));
    }

    double run(int s, int t) {
        double flow = 0.0;
        while (bfs(s, t)) {
            next_.assign(n_, 0);
            for (;;) {
                const double f = dfs(s, t, std::numeric_limits<double>::infinity());
                if (f <= 0.0) break;
                flow += f;
            }
        }
        return flow;
    }

    std::vector<char> reachable(int s) const {
        std::vector<char> seen(n_, 0);
        std::vector<int> stack{s};
        seen[static_cast<std::size_t>(s)] = 1;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int a : adj_[static_cast<std::size_t>(u)]) {
                const auto& arc = arcs_[static_cast<std::size_t>(a)];
                if (arc.residual > 0.0 && !seen[static_cast<std::size_t>(arc.to)]) {
                    seen[static_cast<std::size_t>(arc.to)] = 1;
                    stack.push_back(arc.to);
                }
            }
        }
        return seen;
    }

private:
    struct Arc {
        int from, to;
        double residual;
    };

    void add_arc(int u, int v, double c) { arcs_.push_back({u, v, c}); }

    bool bfs(int s, int t) {
        level_.assign(n_, -1);
        std::queue<int> q;
        level_[static_cast<std::size_t>(s)] = 0;
        q.push(s);
        while (!q.empty()) {
            const int u = q.front();
            q.pop();
            for (int a : adj_[static_cast<std::size_t>(u)]) {
                const auto& arc = arcs_[static_cast<std::size_t>(a)];
                if (arc.residual > 0.0 && level_[static_cast<std::size_t>(arc.to)] < 0) {
                    level_[static_cast<std::size_t>(arc.to)] = level_[static_cast<std::size_t>(u)] + 1;
                    q.push(arc.to);
                }
            }
        }
        return level_[static_cast<std::size_t>(t)] >= 0;
    }

    // Iterative blocking-flow search; recursion depth would follow path
    // length, which on image grids can reach the pixel count.
    double dfs(int s, int t, double limit) {
        std::vector<int> path;  // arc indices
        int u = s;
        for (;;) {
            if (u == t) {
                double f = limit;
                for (int a : path) f = std::min(f, arcs_[static_cast<std::size_t>(a)].residual);
                for (int a : path) {
                    arcs_[static_cast<std::size_t>(a)].residual -= f;
                    arcs_[static_cast<std::size_t>(a ^ 1)].residual += f;
                }
                return f;
            }
            auto& it = next_[static_cast<std::size_t>(u)];
            const auto& out = adj_[static_cast<std::size_t>(u)];
            bool advanced = false;
            for (; it < out.size(); ++it) {
                const auto& arc = arcs_[static_cast<std::size_t>(out[it])];
                if (arc.residual > 0.0 && level_[static_cast<std::size_t>(arc.to)] == level_[static_cast<std::size_t>(u)] + 1) {
                    path.push_back(out[it]);
                    u = arc.to;
                    advanced = true;
                    break;
                }
            }
            if (advanced) continue;
            // dead end: prune u from this phase and retreat
            level_[static_cast<std::size_t>(u)] = -1;
            if (path.empty()) return 0.0;
            u = arcs_[static_cast<std::size_t>(path.back())].from;
            path.pop_back();
            ++next_[static_cast<std::size_t>(u)];
        }
    }

    std::size_t n_;
    std::vector<Arc> arcs_;
    std::vector<std::vector<int>> adj_;
    std::vector<int> level_;
    std::vector<std::size_t> next_;
};

}  // namespace

MinCut max_flow_min_cut(const FlowNetwork& net) {
    net.validate();
    Dinic d(net);
    MinCut cut;
    cut.flow = d.run(net.source, net.sink);
    cut.source_side = d.reachable(net.source);
    return cut;
}

}  // namespace pman::vision
