#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pman/ad/graph.hpp"
#include "pman/ad/parameters.hpp"
#include "pman/vision/image.hpp"

namespace pman::model {

using ad::NodeId;

/// Adds layers to a graph and creates their parameters on first use. A
/// parameter's initial value depends only on (seed, name), so construction
/// order never changes the initial model.
class LayerBuilder {
public:
    LayerBuilder(ad::Graph& graph, ad::ParameterStore<float>& store, std::uint64_t seed)
        : g(graph), store_(store), seed_(seed) {}

    /// "Same" padding when pad < 0.
    NodeId conv(NodeId x, const std::string& name, int cin, int cout, int k, int stride = 1,
                int pad = -1, int dilation = 1, bool bias = false);
    NodeId conv_transpose(NodeId x, const std::string& name, int cin, int cout, int k, int stride,
                          int pad, bool bias = false);
    NodeId bn(NodeId x, const std::string& name, int channels);
    NodeId linear(NodeId x, const std::string& name, int in, int out, bool bias = true,
                  double init_std = -1.0);
    /// [N,C,1,1] -> [N,C]
    NodeId flatten(NodeId x) { return g.reshape(x, {0, -1}); }

    NodeId param(const std::string& name, const ad::Shape& shape, double init_std, double fill = 0.0);

    ad::Graph& g;

private:
    ad::ParameterStore<float>& store_;
    std::uint64_t seed_;
};

struct BackboneConfig {
    int stem_width = 16;
    int stem_stride = 2;
    std::vector<int> widths{32, 64, 64};
    std::vector<int> strides{2, 2, 1};

    int total_stride() const;
    int out_channels() const { return widths.back(); }
    void validate() const;
};

/// conv3x3-bn-relu-conv3x3-bn plus projection shortcut when the shape changes.
NodeId res_block(LayerBuilder& b, NodeId x, const std::string& name, int cin, int cout, int stride);

/// Stem followed by stages [0, stage_end).
NodeId backbone_trunk(LayerBuilder& b, NodeId image, const BackboneConfig& cfg, std::size_t stage_end,
                      const std::string& prefix = "backbone");

/// Per-channel normalised NCHW batch.
ad::Tensor<float> images_to_tensor(std::span<const vision::RgbImage> images);

/// 64-bit FNV-1a, used to derive stable per-name seeds.
std::uint64_t fnv1a(std::string_view s);

}  // namespace pman::model
