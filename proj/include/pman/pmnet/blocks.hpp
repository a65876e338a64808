#pragma once

#include <string>

#include "pman/model/layers.hpp"

namespace pman::pmnet {

using ad::NodeId;

struct MamNodes {
    NodeId channel;  // [B,c,1,1] after sigmoid
    NodeId spatial;  // [B,1,h,w] after sigmoid
    NodeId out;
};

/// Hidden width of the channel-attention perceptron.
int mam_hidden(int channels, int reduction = 16, int min_hidden = 8);

/// Multi-scale attention: shared-MLP channel attention over GAP and GMP,
/// dilated (1,2,3) spatial attention, output (C*S + 1) * F.
MamNodes mam(model::LayerBuilder& b, NodeId f, const std::string& name, int channels);

/// (C * S + 1) * F with broadcasting.
NodeId mam_combine(ad::Graph& g, NodeId f, NodeId channel, NodeId spatial);

/// Mask-weighted crop of F to the part box, resized back to F's size.
/// weight: [B,1,h,w]; box: [B,4] as (y0, x0, y1, x1), inclusive.
NodeId teacher_input(ad::Graph& g, NodeId f, NodeId weight, NodeId box);

/// GAP / GMP flattened to [B,C].
NodeId student_pool(ad::Graph& g, NodeId map);
NodeId teacher_pool(ad::Graph& g, NodeId map);

}  // namespace pman::pmnet
