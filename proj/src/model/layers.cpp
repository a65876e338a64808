#include "pman/model/layers.hpp"

#include <cmath>
#include <random>

#include "pman/error.hpp"

namespace pman::model {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

NodeId LayerBuilder::param(const std::string& name, const ad::Shape& shape, double init_std, double fill) {
    if (!store_.has(name)) {
        ad::Tensor<float> t(shape, static_cast<float>(fill));
        if (init_std > 0.0) {
            std::mt19937_64 rng(seed_ ^ fnv1a(name));
            std::normal_distribution<double> nd(0.0, init_std);
            for (auto& v : t.values()) v = static_cast<float>(nd(rng));
        }
        store_.add(name, std::move(t));
    } else if (store_.get(name).shape() != shape) {
        throw InvariantError("parameter '" + name + "' reused with shape " + ad::shape_str(shape) +
                             ", stored " + ad::shape_str(store_.get(name).shape()));
    }
    return g.param(name);
}

NodeId LayerBuilder::conv(NodeId x, const std::string& name, int cin, int cout, int k, int stride, int pad,
                          int dilation, bool bias) {
    const auto uk = static_cast<std::size_t>(k);
    const NodeId w = param(name + ".w", {static_cast<std::size_t>(cout), static_cast<std::size_t>(cin), uk, uk},
                           std::sqrt(2.0 / (cin * k * k)));
    std::optional<NodeId> bn;
    if (bias) bn = param(name + ".b", {static_cast<std::size_t>(cout)}, 0.0);
    ad::ConvAttrs at;
    at.stride = stride;
    at.pad = pad < 0 ? dilation * (k - 1) / 2 : pad;
    at.dilation = dilation;
    return g.conv2d(x, w, bn, at, name);
}

NodeId LayerBuilder::conv_transpose(NodeId x, const std::string& name, int cin, int cout, int k, int stride,
                                    int pad, bool bias) {
    const auto uk = static_cast<std::size_t>(k);
    const NodeId w = param(name + ".w", {static_cast<std::size_t>(cin), static_cast<std::size_t>(cout), uk, uk},
                           std::sqrt(2.0 / (cin * k * k / (stride * stride))));
    std::optional<NodeId> bn;
    if (bias) bn = param(name + ".b", {static_cast<std::size_t>(cout)}, 0.0);
    ad::ConvAttrs at;
    at.stride = stride;
    at.pad = pad;
    return g.conv_transpose2d(x, w, bn, at, name);
}

NodeId LayerBuilder::bn(NodeId x, const std::string& name, int channels) {
    const auto c = static_cast<std::size_t>(channels);
    const NodeId gamma = param(name + ".gamma", {c}, 0.0, 1.0);
    const NodeId beta = param(name + ".beta", {c}, 0.0, 0.0);
    if (!store_.has_buffer(name + ".running_mean")) {
        store_.add_buffer(name + ".running_mean", ad::Tensor<float>({c}, 0.0f));
        store_.add_buffer(name + ".running_var", ad::Tensor<float>({c}, 1.0f));
    }
    return g.batch_norm(x, gamma, beta, name);
}

NodeId LayerBuilder::linear(NodeId x, const std::string& name, int in, int out, bool bias, double init_std) {
    const double sd = init_std > 0 ? init_std : std::sqrt(2.0 / in);
    const NodeId w = param(name + ".w", {static_cast<std::size_t>(out), static_cast<std::size_t>(in)}, sd);
    std::optional<NodeId> b;
    if (bias) b = param(name + ".b", {static_cast<std::size_t>(out)}, 0.0);
    return g.linear(x, w, b);
}

int BackboneConfig::total_stride() const {
    int s = stem_stride;
    for (int v : strides) s *= v;
    return s;
}

void BackboneConfig::validate() const {
    if (widths.empty() || widths.size() != strides.size()) {
        throw ValidationError("backbone: widths and strides must be non-empty and of equal length");
    }
    if (stem_width < 1 || stem_stride < 1) throw ValidationError("backbone: bad stem");
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (widths[i] < 1 || strides[i] < 1 || strides[i] > 2) {
            throw ValidationError("backbone: stage widths must be positive and strides 1 or 2");
        }
    }
    if (strides.back() != 1) throw ValidationError("backbone: the final stage must use stride 1");
}

NodeId res_block(LayerBuilder& b, NodeId x, const std::string& name, int cin, int cout, int stride) {
    NodeId y = b.g.relu(b.bn(b.conv(x, name + ".conv1", cin, cout, 3, stride), name + ".bn1", cout));
    y = b.bn(b.conv(y, name + ".conv2", cout, cout, 3), name + ".bn2", cout);
    NodeId shortcut = x;
    if (cin != cout || stride != 1) {
        shortcut = b.bn(b.conv(x, name + ".proj", cin, cout, 1, stride, 0), name + ".proj_bn", cout);
    }
    return b.g.relu(b.g.add(y, shortcut));
}

NodeId backbone_trunk(LayerBuilder& b, NodeId image, const BackboneConfig& cfg, std::size_t stage_end,
                      const std::string& prefix) {
    NodeId x = b.g.relu(b.bn(b.conv(image, prefix + ".stem", 3, cfg.stem_width, 3, cfg.stem_stride),
                             prefix + ".stem_bn", cfg.stem_width));
    int cin = cfg.stem_width;
    for (std::size_t i = 0; i < stage_end; ++i) {
        x = res_block(b, x, prefix + ".stage" + std::to_string(i + 1), cin, cfg.widths[i], cfg.strides[i]);
        cin = cfg.widths[i];
    }
    return x;
}

ad::Tensor<float> images_to_tensor(std::span<const vision::RgbImage> images) {
    if (images.empty()) throw ValidationError("empty image batch");
    const int W = images[0].width, H = images[0].height;
    const std::size_t plane = static_cast<std::size_t>(W) * H;
    ad::Tensor<float> t({images.size(), 3, static_cast<std::size_t>(H), static_cast<std::size_t>(W)});
    for (std::size_t n = 0; n < images.size(); ++n) {
        const auto& img = images[n];
        if (img.width != W || img.height != H) {
            throw ValidationError("image batch mixes sizes " + std::to_string(W) + "x" + std::to_string(H) +
                                  " and " + std::to_string(img.width) + "x" + std::to_string(img.height));
        }
        for (std::size_t p = 0; p < plane; ++p)
            for (std::size_t c = 0; c < 3; ++c)
                t[(n * 3 + c) * plane + p] = (img.pixels[p * 3 + c] / 255.0f - 0.5f) / 0.25f;
    }
    return t;
}

}  // namespace pman::model
