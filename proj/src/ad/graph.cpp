#include "pman/ad/graph.hpp"

#include <algorithm>
#include <set>

#include "pman/error.hpp"

namespace pman::ad {

std::string_view op_name(OpKind kind) {
    switch (kind) {
        case OpKind::Input: return "input";
        case OpKind::Param: return "param";
        case OpKind::Conv2d: return "conv2d";
        case OpKind::ConvTranspose2d: return "conv_transpose2d";
        case OpKind::MatMul: return "matmul";
        case OpKind::Softmax: return "softmax";
        case OpKind::GlobalAvgPool: return "global_avg_pool";
        case OpKind::GlobalMaxPool: return "global_max_pool";
        case OpKind::MaskedMaxPool: return "masked_max_pool";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::AddScalar: return "add_scalar";
        case OpKind::Scale: return "scale";
        case OpKind::Relu: return "relu";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::BatchNorm: return "batch_norm";
        case OpKind::Resize: return "resize";
        case OpKind::Crop: return "crop";
        case OpKind::RoiResize: return "roi_resize";
        case OpKind::Concat: return "concat";
        case OpKind::Mean: return "mean";
        case OpKind::Sum: return "sum";
        case OpKind::L2Normalize: return "l2_normalize";
        case OpKind::Linear: return "linear";
        case OpKind::Reshape: return "reshape";
        case OpKind::CrossEntropy: return "cross_entropy";
        case OpKind::TripletHard: return "triplet_hard";
        case OpKind::PartTransfer: return "part_transfer";
        case OpKind::MeanSquaredError: return "mse";
        case OpKind::HulCombine: return "hul_combine";
    }
    return "?";
}

void Graph::check_id(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
        throw InvariantError("graph: node id " + std::to_string(id) + " does not exist");
    }
}

NodeId Graph::push(OpKind kind, std::vector<NodeId> inputs, OpAttrs attrs, std::string label) {
    for (NodeId id : inputs) check_id(id);
    std::string name = std::move(label);
    if (name.empty()) name = std::string(op_name(kind));
    if (!scope_.empty()) name = scope_ + "/" + name;
    nodes_.push_back(Node{kind, std::move(inputs), std::move(attrs), std::move(name)});
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::input(const std::string& name) {
    if (auto it = inputs_.find(name); it != inputs_.end()) return it->second;
    nodes_.push_back(Node{OpKind::Input, {}, NoAttrs{}, name});
    const auto id = static_cast<NodeId>(nodes_.size() - 1);
    inputs_[name] = id;
    return id;
}

NodeId Graph::param(const std::string& name) {
    // Re-requesting a name returns the same slot; this is how branches share weights.
    if (auto it = params_.find(name); it != params_.end()) return it->second;
    nodes_.push_back(Node{OpKind::Param, {}, NoAttrs{}, name});
    const auto id = static_cast<NodeId>(nodes_.size() - 1);
    params_[name] = id;
    return id;
}

NodeId Graph::conv2d(NodeId x, NodeId w, std::optional<NodeId> b, ConvAttrs attrs,
                     std::string label) {
    std::vector<NodeId> in{x, w};
    if (b) in.push_back(*b);
    return push(OpKind::Conv2d, std::move(in), attrs, std::move(label));
}

NodeId Graph::conv_transpose2d(NodeId x, NodeId w, std::optional<NodeId> b, ConvAttrs attrs,
                               std::string label) {
    std::vector<NodeId> in{x, w};
    if (b) in.push_back(*b);
    return push(OpKind::ConvTranspose2d, std::move(in), attrs, std::move(label));
}

NodeId Graph::matmul(NodeId a, NodeId b, bool trans_a, bool trans_b) {
    return push(OpKind::MatMul, {a, b}, MatMulAttrs{trans_a, trans_b});
}

NodeId Graph::softmax(NodeId x, int axis) { return push(OpKind::Softmax, {x}, AxisAttrs{axis}); }
NodeId Graph::global_avg_pool(NodeId x) { return push(OpKind::GlobalAvgPool, {x}, NoAttrs{}); }
NodeId Graph::global_max_pool(NodeId x) { return push(OpKind::GlobalMaxPool, {x}, NoAttrs{}); }
NodeId Graph::masked_max_pool(NodeId x, NodeId mask) {
    return push(OpKind::MaskedMaxPool, {x, mask}, NoAttrs{});
}
NodeId Graph::add(NodeId a, NodeId b) { return push(OpKind::Add, {a, b}, NoAttrs{}); }
NodeId Graph::sub(NodeId a, NodeId b) { return push(OpKind::Sub, {a, b}, NoAttrs{}); }
NodeId Graph::mul(NodeId a, NodeId b) { return push(OpKind::Mul, {a, b}, NoAttrs{}); }
NodeId Graph::add_scalar(NodeId x, double c) { return push(OpKind::AddScalar, {x}, ScalarAttrs{c}); }
NodeId Graph::scale(NodeId x, double c) { return push(OpKind::Scale, {x}, ScalarAttrs{c}); }
NodeId Graph::relu(NodeId x) { return push(OpKind::Relu, {x}, NoAttrs{}); }
NodeId Graph::sigmoid(NodeId x) { return push(OpKind::Sigmoid, {x}, NoAttrs{}); }

NodeId Graph::batch_norm(NodeId x, NodeId gamma, NodeId beta, std::string buffer_prefix,
                         double eps, double momentum) {
    return push(OpKind::BatchNorm, {x, gamma, beta},
                BatchNormAttrs{eps, momentum, std::move(buffer_prefix)});
}

NodeId Graph::resize(NodeId x, int out_h, int out_w) {
    return push(OpKind::Resize, {x}, ResizeAttrs{out_h, out_w});
}

NodeId Graph::crop(NodeId x, int y0, int x0, int h, int w) {
    return push(OpKind::Crop, {x}, CropAttrs{y0, x0, h, w});
}

NodeId Graph::roi_resize(NodeId x, NodeId weight, NodeId box) {
    return push(OpKind::RoiResize, {x, weight, box}, NoAttrs{});
}

NodeId Graph::concat(const std::vector<NodeId>& xs, int axis) {
    if (xs.empty()) throw InvariantError("concat of zero tensors");
    return push(OpKind::Concat, xs, AxisAttrs{axis});
}

NodeId Graph::mean(NodeId x, std::vector<int> axes, bool keepdims) {
    return push(OpKind::Mean, {x}, AxesAttrs{std::move(axes), keepdims});
}

NodeId Graph::sum(NodeId x) { return push(OpKind::Sum, {x}, NoAttrs{}); }
NodeId Graph::l2_normalize(NodeId x) { return push(OpKind::L2Normalize, {x}, NoAttrs{}); }

NodeId Graph::linear(NodeId x, NodeId w, std::optional<NodeId> b) {
    std::vector<NodeId> in{x, w};
    if (b) in.push_back(*b);
    return push(OpKind::Linear, std::move(in), NoAttrs{});
}

NodeId Graph::reshape(NodeId x, std::vector<long> shape) {
    return push(OpKind::Reshape, {x}, ReshapeAttrs{std::move(shape)});
}

NodeId Graph::cross_entropy(NodeId logits, NodeId labels, double smoothing) {
    return push(OpKind::CrossEntropy, {logits, labels}, CrossEntropyAttrs{smoothing});
}

NodeId Graph::triplet_hard(NodeId emb, NodeId labels, double margin) {
    return push(OpKind::TripletHard, {emb, labels}, TripletAttrs{margin});
}

NodeId Graph::part_transfer(NodeId student, NodeId teacher, bool squared) {
    return push(OpKind::PartTransfer, {student, teacher}, PartTransferAttrs{squared});
}

NodeId Graph::mse(NodeId a, NodeId b) { return push(OpKind::MeanSquaredError, {a, b}, NoAttrs{}); }

NodeId Graph::hul_combine(NodeId l_g, NodeId l_s, NodeId l_t, NodeId log_var) {
    return push(OpKind::HulCombine, {l_g, l_s, l_t, log_var}, NoAttrs{});
}

void Graph::mark_output(const std::string& name, NodeId id) {
    check_id(id);
    outputs_[name] = id;
}

NodeId Graph::output(const std::string& name) const {
    auto it = outputs_.find(name);
    if (it == outputs_.end()) throw InvariantError("graph has no output named '" + name + "'");
    return it->second;
}

std::vector<std::string> Graph::params_feeding(NodeId id) const {
    check_id(id);
    std::vector<char> seen(nodes_.size(), 0);
    std::vector<NodeId> stack{id};
    std::set<std::string> names;
    while (!stack.empty()) {
        const NodeId cur = stack.back();
        stack.pop_back();
        if (seen[static_cast<std::size_t>(cur)]) continue;
        seen[static_cast<std::size_t>(cur)] = 1;
        const Node& n = node(cur);
        if (n.kind == OpKind::Param) names.insert(n.name);
        for (NodeId in : n.inputs) stack.push_back(in);
    }
    return {names.begin(), names.end()};
}

}  // namespace pman::ad
