#include "pman/pmnet/blocks.hpp"

#include <algorithm>

namespace pman::pmnet {

int mam_hidden(int channels, int reduction, int min_hidden) { return std::max(channels / reduction, min_hidden); }

NodeId mam_combine(ad::Graph& g, NodeId f, NodeId channel, NodeId spatial) {
    return g.mul(g.add_scalar(g.mul(channel, spatial), 1.0), f);
}

MamNodes mam(model::LayerBuilder& b, NodeId f, const std::string& name, int c) {
    auto& g = b.g;
    const int hidden = mam_hidden(c);
    auto mlp = [&](NodeId v) {
        const NodeId h = g.relu(b.linear(v, name + ".mlp1", c, hidden));
        return b.linear(h, name + ".mlp2", hidden, c);
    };
    const NodeId avg = g.reshape(g.global_avg_pool(f), {0, -1});
    const NodeId mx = g.reshape(g.global_max_pool(f), {0, -1});
    const NodeId channel = g.reshape(g.sigmoid(g.add(mlp(avg), mlp(mx))), {0, 0, 1, 1});

    const int q = std::max(c / 4, 1);
    std::vector<NodeId> branches;
    for (int d = 1; d <= 3; ++d) {
        branches.push_back(g.relu(b.conv(f, name + ".dil" + std::to_string(d), c, q, 3, 1, -1, d, true)));
    }
    NodeId s = g.concat(branches, 1);
    s = g.relu(b.conv(s, name + ".sp1", 3 * q, q, 3, 1, -1, 1, true));
    s = g.relu(b.conv(s, name + ".sp2", q, q, 3, 1, -1, 1, true));
    const NodeId spatial = g.sigmoid(b.conv(s, name + ".sp3", q, 1, 1, 1, 0, 1, true));
    return {channel, spatial, mam_combine(g, f, channel, spatial)};
}

NodeId teacher_input(ad::Graph& g, NodeId f, NodeId weight, NodeId box) { return g.roi_resize(f, weight, box); }

NodeId student_pool(ad::Graph& g, NodeId map) { return g.reshape(g.global_avg_pool(map), {0, -1}); }

NodeId teacher_pool(ad::Graph& g, NodeId map) { return g.reshape(g.global_max_pool(map), {0, -1}); }

}  // namespace pman::pmnet
