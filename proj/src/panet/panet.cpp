#include "pman/panet/panet.hpp"

#include <bit>
#include <cmath>

#include "pman/ad/executor.hpp"
#include "pman/error.hpp"

namespace pman::panet {

using ad::NodeId;

void PanetConfig::validate() const {
    backbone.validate();
    const int s = backbone.total_stride();
    if (input_size < 8 || input_size % s != 0) {
        throw ValidationError("panet: input size " + std::to_string(input_size) + " is not a multiple of stride " +
                              std::to_string(s));
    }
    if (!std::has_single_bit(static_cast<unsigned>(s)) || s > 16) {
        throw ValidationError("panet: backbone stride must be a power of two no larger than 16");
    }
    if (num_ids < 1) throw ValidationError("panet: need at least one identity");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw ValidationError("panet: label smoothing in [0,1)");
}

NodeId pcr(ad::Graph& g, NodeId x, int h, int w) {
    const NodeId flat = g.reshape(x, {0, 0, -1});
    const NodeId sim = g.softmax(g.matmul(flat, flat, false, true), 2);
    const NodeId att = g.softmax(g.matmul(sim, flat), 2);
    return g.reshape(att, {0, 0, h, w});
}

Panet::Panet(const PanetConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    build(seed);
}

void Panet::build(std::uint64_t seed) {
    model::LayerBuilder b(graph_, params_, seed);
    auto& g = graph_;
    const auto& bb = config_.backbone;
    const int C = bb.out_channels();
    const int fs = config_.feature_size();

    g.set_scope("encoder");
    const NodeId image = g.input("image");
    const NodeId X = model::backbone_trunk(b, image, bb, bb.widths.size());
    g.set_scope("pcr");
    const NodeId Xhat = pcr(g, X, fs, fs);

    g.set_scope("classifier");
    NodeId pooled;
    if (config_.pcr_in_training) {
        pooled = g.scale(g.mean(g.mul(Xhat, X), {2, 3}, false), static_cast<double>(fs) * fs);
    } else {
        pooled = b.flatten(g.global_avg_pool(X));
    }
    const NodeId logits = b.linear(pooled, "classifier.fc", C, config_.num_ids, true, 0.01);

    g.set_scope("decoder");
    const int ups = std::countr_zero(static_cast<unsigned>(bb.total_stride()));
    NodeId y = X;
    int cin = C;
    for (int i = 0; i < 4; ++i) {
        const std::string name = "decoder.up" + std::to_string(i + 1);
        const int cout = i == 3 ? 1 : std::max(cin / 2, 8);
        if (i < ups) {
            y = b.conv_transpose(y, name, cin, cout, 4, 2, 1, i == 3);
        } else {
            y = b.conv_transpose(y, name, cin, cout, 3, 1, 1, i == 3);
        }
        if (i < 3) y = g.relu(b.bn(y, name + "_bn", cout));
        cin = cout;
    }
    const NodeId seg = g.sigmoid(y);

    g.set_scope("loss");
    const NodeId loss_id = g.cross_entropy(logits, g.input("labels"), config_.label_smoothing);
    const NodeId loss_seg = g.mse(seg, g.input("pseudo"));
    g.set_scope("");

    g.mark_output("X", X);
    g.mark_output("Xhat", Xhat);
    g.mark_output("seg", seg);
    g.mark_output("logits", logits);
    g.mark_output("loss_id", loss_id);
    g.mark_output("loss_seg", loss_seg);
    g.mark_output("loss", g.add(loss_id, loss_seg));
}

Panet::Outputs Panet::infer(std::span<const vision::RgbImage> images) const {
    for (const auto& img : images) {
        if (img.width != config_.input_size || img.height != config_.input_size) {
            throw ValidationError("panet: expected " + std::to_string(config_.input_size) + "x" +
                                  std::to_string(config_.input_size) + " input, got " + std::to_string(img.width) +
                                  "x" + std::to_string(img.height));
        }
    }
    auto params = params_;  // eval mode never writes, but the executor takes a mutable store
    ad::Executor<float> ex(graph_, params, ad::Mode::Eval);
    auto out = ex.forward({{"image", model::images_to_tensor(images)}}, {"X", "Xhat", "seg"});
    return {std::move(out.at("X")), std::move(out.at("Xhat")), std::move(out.at("seg"))};
}

namespace {
ad::Tensor<float> ints(const std::vector<int>& v) {
    ad::Tensor<float> t({v.size()});
    for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<float>(v[i]);
    return t;
}
std::vector<int> to_ints(const ad::Tensor<float>& t) {
    std::vector<int> v(t.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<int>(std::lround(t[i]));
    return v;
}
const ad::Tensor<float>& need(const ad::TensorMap& m, const std::string& k) {
    auto it = m.find(k);
    if (it == m.end()) throw ValidationError("checkpoint is missing '" + k + "'");
    return it->second;
}
}  // namespace

ad::TensorMap Panet::to_tensor_map() const {
    auto m = ad::to_tensor_map(params_);
    m["meta:model"] = ints({1});
    m["meta:input_size"] = ints({config_.input_size});
    m["meta:stem"] = ints({config_.backbone.stem_width, config_.backbone.stem_stride});
    m["meta:widths"] = ints(config_.backbone.widths);
    m["meta:strides"] = ints(config_.backbone.strides);
    m["meta:num_ids"] = ints({config_.num_ids});
    m["meta:pcr_in_training"] = ints({config_.pcr_in_training ? 1 : 0});
    m["meta:label_smoothing"] = ad::Tensor<float>::scalar(static_cast<float>(config_.label_smoothing));
    return m;
}

Panet Panet::from_tensor_map(const ad::TensorMap& m) {
    if (to_ints(need(m, "meta:model")) != std::vector<int>{1}) throw ValidationError("checkpoint is not a PANet");
    PanetConfig c;
    c.input_size = to_ints(need(m, "meta:input_size")).at(0);
    const auto stem = to_ints(need(m, "meta:stem"));
    c.backbone.stem_width = stem.at(0);
    c.backbone.stem_stride = stem.at(1);
    c.backbone.widths = to_ints(need(m, "meta:widths"));
    c.backbone.strides = to_ints(need(m, "meta:strides"));
    c.num_ids = to_ints(need(m, "meta:num_ids")).at(0);
    c.pcr_in_training = to_ints(need(m, "meta:pcr_in_training")).at(0) != 0;
    c.label_smoothing = need(m, "meta:label_smoothing")[0];
    Panet p(c, 0);
    ad::load_into(p.params_, m);
    return p;
}

vision::BinaryMask refined_foreground(const ad::Tensor<float>& seg, std::size_t index) {
    if (seg.rank() != 4 || seg.dim(1) != 1) throw ShapeError("refined_foreground: expects [B,1,H,W]");
    const int H = static_cast<int>(seg.dim(2)), W = static_cast<int>(seg.dim(3));
    vision::BinaryMask m(W, H);
    const std::size_t off = index * static_cast<std::size_t>(W * H);
    for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = seg[off + i] >= 0.5f;
    return m;
}

}  // namespace pman::panet
