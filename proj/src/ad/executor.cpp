#include "pman/ad/executor.hpp"

#include <algorithm>
#include <cmath>

#include "ad/ops.hpp"
#include "pman/error.hpp"

namespace pman::ad {

// ---------------------------------------------------------------- ParameterStore

template <typename T>
Tensor<T>& ParameterStore<T>::add(const std::string& name, Tensor<T> value) {
    if (params_.count(name)) throw InvariantError("duplicate parameter '" + name + "'");
    value.set_requires_grad(true);
    return params_[name] = std::move(value);
}

template <typename T>
Tensor<T>& ParameterStore<T>::add_buffer(const std::string& name, Tensor<T> value) {
    if (buffers_.count(name)) throw InvariantError("duplicate buffer '" + name + "'");
    value.set_requires_grad(false);
    return buffers_[name] = std::move(value);
}

template <typename T>
Tensor<T>& ParameterStore<T>::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw InvariantError("unknown parameter '" + name + "'");
    return it->second;
}

template <typename T>
const Tensor<T>& ParameterStore<T>::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw InvariantError("unknown parameter '" + name + "'");
    return it->second;
}

template <typename T>
Tensor<T>& ParameterStore<T>::buffer(const std::string& name) {
    auto it = buffers_.find(name);
    if (it == buffers_.end()) throw InvariantError("unknown buffer '" + name + "'");
    return it->second;
}

template <typename T>
const Tensor<T>& ParameterStore<T>::buffer(const std::string& name) const {
    auto it = buffers_.find(name);
    if (it == buffers_.end()) throw InvariantError("unknown buffer '" + name + "'");
    return it->second;
}

template <typename T>
std::vector<std::string> ParameterStore<T>::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& kv : params_) out.push_back(kv.first);
    return out;
}

template <typename T>
std::size_t ParameterStore<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& kv : params_) n += kv.second.numel();
    return n;
}

template <typename T>
void ParameterStore<T>::zero_grads() {
    for (auto& kv : params_) kv.second.zero_grad();
}

template class ParameterStore<float>;
template class ParameterStore<double>;

// ---------------------------------------------------------------- Executor

namespace {

template <typename T>
Tensor<T> run_forward(ops::Fwd<T>& c) {
    using namespace ops;
    switch (c.node.kind) {
        case OpKind::Conv2d: return fwd_conv2d(c);
        case OpKind::ConvTranspose2d: return fwd_conv_transpose2d(c);
        case OpKind::MatMul: return fwd_matmul(c);
        case OpKind::Softmax: return fwd_softmax(c);
        case OpKind::GlobalAvgPool: return fwd_global_avg_pool(c);
        case OpKind::GlobalMaxPool: return fwd_global_max_pool(c);
        case OpKind::MaskedMaxPool: return fwd_masked_max_pool(c);
        case OpKind::Add: return fwd_add(c);
        case OpKind::Sub: return fwd_sub(c);
        case OpKind::Mul: return fwd_mul(c);
        case OpKind::AddScalar: return fwd_add_scalar(c);
        case OpKind::Scale: return fwd_scale(c);
        case OpKind::Relu: return fwd_relu(c);
        case OpKind::Sigmoid: return fwd_sigmoid(c);
        case OpKind::BatchNorm: return fwd_batch_norm(c);
        case OpKind::Resize: return fwd_resize(c);
        case OpKind::Crop: return fwd_crop(c);
        case OpKind::RoiResize: return fwd_roi_resize(c);
        case OpKind::Concat: return fwd_concat(c);
        case OpKind::Mean: return fwd_mean(c);
        case OpKind::Sum: return fwd_sum(c);
        case OpKind::L2Normalize: return fwd_l2_normalize(c);
        case OpKind::Linear: return fwd_linear(c);
        case OpKind::Reshape: return fwd_reshape(c);
        case OpKind::CrossEntropy: return fwd_cross_entropy(c);
        case OpKind::TripletHard: return fwd_triplet_hard(c);
        case OpKind::PartTransfer: return fwd_part_transfer(c);
        case OpKind::MeanSquaredError: return fwd_mse(c);
        case OpKind::HulCombine: return fwd_hul_combine(c);
        case OpKind::Input:
        case OpKind::Param: break;
    }
    throw InvariantError("no forward kernel for " + std::string(op_name(c.node.kind)));
}

template <typename T>
void run_backward(ops::Bwd<T>& c) {
    using namespace ops;
    switch (c.node.kind) {
        case OpKind::Conv2d: return bwd_conv2d(c);
        case OpKind::ConvTranspose2d: return bwd_conv_transpose2d(c);
        case OpKind::MatMul: return bwd_matmul(c);
        case OpKind::Softmax: return bwd_softmax(c);
        case OpKind::GlobalAvgPool: return bwd_global_avg_pool(c);
        case OpKind::GlobalMaxPool: return bwd_global_max_pool(c);
        case OpKind::MaskedMaxPool: return bwd_masked_max_pool(c);
        case OpKind::Add: return bwd_add(c);
        case OpKind::Sub: return bwd_sub(c);
        case OpKind::Mul: return bwd_mul(c);
        case OpKind::AddScalar: return bwd_add_scalar(c);
        case OpKind::Scale: return bwd_scale(c);
        case OpKind::Relu: return bwd_relu(c);
        case OpKind::Sigmoid: return bwd_sigmoid(c);
        case OpKind::BatchNorm: return bwd_batch_norm(c);
        case OpKind::Resize: return bwd_resize(c);
        case OpKind::Crop: return bwd_crop(c);
        case OpKind::RoiResize: return bwd_roi_resize(c);
        case OpKind::Concat: return bwd_concat(c);
        case OpKind::Mean: return bwd_mean(c);
        case OpKind::Sum: return bwd_sum(c);
        case OpKind::L2Normalize: return bwd_l2_normalize(c);
        case OpKind::Linear: return bwd_linear(c);
        case OpKind::Reshape: return bwd_reshape(c);
        case OpKind::CrossEntropy: return bwd_cross_entropy(c);
        case OpKind::TripletHard: return bwd_triplet_hard(c);
        case OpKind::PartTransfer: return bwd_part_transfer(c);
        case OpKind::MeanSquaredError: return bwd_mse(c);
        case OpKind::HulCombine: return bwd_hul_combine(c);
        case OpKind::Input:
        case OpKind::Param: return;
    }
}

// Inputs of these ops at the given positions never receive gradients
// (labels, masks, boxes).
bool is_constant_operand(OpKind kind, std::size_t pos) {
    switch (kind) {
        case OpKind::MaskedMaxPool: return pos == 1;
        case OpKind::RoiResize: return pos >= 1;
        case OpKind::CrossEntropy:
        case OpKind::TripletHard: return pos == 1;
        default: return false;
    }
}

}  // namespace

template <typename T>
Executor<T>::Executor(const Graph& graph, ParameterStore<T>& params, Mode mode)
    : graph_(graph), params_(params), mode_(mode), input_wants_grad_(graph.size(), 0) {}

template <typename T>
void Executor<T>::set_input_requires_grad(const std::string& name, bool on) {
    auto it = graph_.inputs().find(name);
    if (it == graph_.inputs().end()) throw InvariantError("graph has no input named '" + name + "'");
    input_wants_grad_[static_cast<std::size_t>(it->second)] = on ? 1 : 0;
}

template <typename T>
std::map<std::string, Tensor<T>> Executor<T>::forward(
    const std::map<std::string, Tensor<T>>& inputs, const std::vector<std::string>& outputs) {
    const std::size_t n = graph_.size();
    std::vector<std::string> wanted = outputs;
    if (wanted.empty()) {
        for (const auto& kv : graph_.outputs()) wanted.push_back(kv.first);
    }
    // Mark the nodes the requested outputs depend on.
    std::vector<char> needed(n, 0);
    for (const auto& name : wanted) needed[static_cast<std::size_t>(graph_.output(name))] = 1;
    for (std::size_t i = n; i-- > 0;) {
        if (!needed[i]) continue;
        for (NodeId in : graph_.nodes()[i].inputs) needed[static_cast<std::size_t>(in)] = 1;
    }

    values_.assign(n, Tensor<T>{});
    aux_.assign(n, {});
    iaux_.assign(n, {});
    computed_.assign(n, 0);
    grads_.clear();
    backward_done_ = false;

    for (std::size_t i = 0; i < n; ++i) {
        if (!needed[i]) continue;
        const Node& node = graph_.nodes()[i];
        if (node.kind == OpKind::Input) {
            auto it = inputs.find(node.name);
            if (it == inputs.end()) throw ValidationError("graph input '" + node.name + "' is not bound");
            values_[i] = it->second;
        } else if (node.kind == OpKind::Param) {
            if (!params_.has(node.name)) throw InvariantError("parameter '" + node.name + "' is missing");
            values_[i] = params_.get(node.name);
        } else {
            ops::Fwd<T> ctx{node, {}, mode_, params_, aux_[i], iaux_[i]};
            ctx.in.reserve(node.inputs.size());
            for (NodeId in : node.inputs) ctx.in.push_back(&values_[static_cast<std::size_t>(in)]);
            values_[i] = run_forward(ctx);
        }
        if (!values_[i].all_finite()) {
            throw NonFiniteError("non-finite value produced at node #" + std::to_string(i) + " '" +
                                 node.name + "' (" + std::string(op_name(node.kind)) + ")");
        }
        computed_[i] = 1;
    }
    forward_done_ = true;

    std::map<std::string, Tensor<T>> out;
    for (const auto& name : wanted) out[name] = values_[static_cast<std::size_t>(graph_.output(name))];
    return out;
}

template <typename T>
void Executor<T>::backward(const std::map<std::string, Tensor<T>>& output_grads) {
    if (!forward_done_) throw InvariantError("backward called before forward");
    const std::size_t n = graph_.size();

    std::vector<char> wants(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!computed_[i]) continue;
        const Node& node = graph_.nodes()[i];
        if (node.kind == OpKind::Param) {
            wants[i] = 1;
        } else if (node.kind == OpKind::Input) {
            wants[i] = input_wants_grad_[i];
        } else {
            for (std::size_t k = 0; k < node.inputs.size(); ++k) {
                if (!is_constant_operand(node.kind, k) && wants[static_cast<std::size_t>(node.inputs[k])]) {
                    wants[i] = 1;
                }
            }
        }
    }

    grads_.assign(n, {});
    for (const auto& [name, g] : output_grads) {
        const auto id = static_cast<std::size_t>(graph_.output(name));
        if (!computed_[id]) throw InvariantError("output '" + name + "' was not computed by forward");
        if (g.numel() != values_[id].numel()) {
            throw ShapeError("gradient for output '" + name + "' has shape " + shape_str(g.shape()) +
                             ", output has " + shape_str(values_[id].shape()));
        }
        auto& dst = grads_[id];
        if (dst.empty()) dst.assign(g.numel(), T{0});
        for (std::size_t k = 0; k < g.numel(); ++k) dst[k] += g[k];
    }

    for (std::size_t i = n; i-- > 0;) {
        if (grads_[i].empty() || !wants[i]) continue;
        const Node& node = graph_.nodes()[i];
        if (node.kind == OpKind::Input || node.kind == OpKind::Param) continue;
        ops::Bwd<T> ctx{node, {}, values_[i], grads_[i], {}, mode_, aux_[i], iaux_[i]};
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
            const auto in = static_cast<std::size_t>(node.inputs[k]);
            ctx.in.push_back(&values_[in]);
            if (wants[in] && !is_constant_operand(node.kind, k)) {
                if (grads_[in].empty()) grads_[in].assign(values_[in].numel(), T{0});
                ctx.gin.push_back(&grads_[in]);
            } else {
                ctx.gin.push_back(nullptr);
            }
        }
        // A node listed twice as an input shares one gradient buffer; the
        // kernels accumulate, so this is correct.
        run_backward(ctx);
    }
    backward_done_ = true;
}

template <typename T>
void Executor<T>::backward(const std::string& scalar_output) {
    if (!forward_done_) throw InvariantError("backward called before forward");
    const auto id = static_cast<std::size_t>(graph_.output(scalar_output));
    if (values_[id].numel() != 1) {
        throw ShapeError("output '" + scalar_output + "' is not a scalar: " + shape_str(values_[id].shape()));
    }
    backward({{scalar_output, Tensor<T>::scalar(T{1})}});
}

template <typename T>
const Tensor<T>& Executor<T>::value(NodeId id) const {
    const auto i = static_cast<std::size_t>(id);
    if (i >= computed_.size() || !computed_[i]) {
        throw InvariantError("node #" + std::to_string(id) + " has no value; run forward first");
    }
    return values_[i];
}

template <typename T>
const Tensor<T>& Executor<T>::output(const std::string& name) const {
    return value(graph_.output(name));
}

template <typename T>
Tensor<T> Executor<T>::param_grad(const std::string& name) const {
    if (!backward_done_) throw InvariantError("no gradients: backward has not run");
    auto it = graph_.params().find(name);
    const Tensor<T>& p = params_.get(name);
    Tensor<T> g(p.shape());
    if (it != graph_.params().end()) {
        const auto& src = grads_[static_cast<std::size_t>(it->second)];
        if (!src.empty()) std::copy(src.begin(), src.end(), g.values().begin());
    }
    return g;
}

template <typename T>
std::map<std::string, Tensor<T>> Executor<T>::param_grads() const {
    std::map<std::string, Tensor<T>> out;
    for (const auto& name : params_.names()) out.emplace(name, param_grad(name));
    return out;
}

template <typename T>
Tensor<T> Executor<T>::input_grad(const std::string& name) const {
    if (!backward_done_) throw InvariantError("no gradients: backward has not run");
    auto it = graph_.inputs().find(name);
    if (it == graph_.inputs().end()) throw InvariantError("graph has no input named '" + name + "'");
    const auto id = static_cast<std::size_t>(it->second);
    Tensor<T> g(values_[id].shape());
    const auto& src = grads_[id];
    if (!src.empty()) std::copy(src.begin(), src.end(), g.values().begin());
    return g;
}

template class Executor<float>;
template class Executor<double>;

}  // namespace pman::ad
