#pragma once

// Static computation graph. A model builds its graph once; executors bind
// concrete input tensors and a parameter store to it and run forward and
// backward passes. Nodes are stored in creation order, which is always a
// topological order because a node may only reference existing nodes.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pman/ad/tensor.hpp"

namespace pman::ad {

using NodeId = int;

enum class OpKind {
    Input,          // named external tensor
    Param,          // named trainable tensor in the parameter store
    Conv2d,         // x[N,Ci,H,W], w[Co,Ci,kh,kw], (b[Co])
    ConvTranspose2d,// x[N,Ci,H,W], w[Ci,Co,kh,kw], (b[Co])
    MatMul,         // a[M,K] b[K,N], or batched a[B,M,K] b[B,K,N]
    Softmax,        // along one axis
    GlobalAvgPool,  // [N,C,H,W] -> [N,C,1,1]
    GlobalMaxPool,  // [N,C,H,W] -> [N,C,1,1]
    MaskedMaxPool,  // x[N,C,H,W], mask[N,1,H,W] -> [N,C,1,1]
    Add,            // broadcasting over size-1 dims
    Sub,            // broadcasting over size-1 dims
    Mul,            // broadcasting over size-1 dims
    AddScalar,
    Scale,
    Relu,
    Sigmoid,
    BatchNorm,      // x[N,C] or [N,C,H,W], gamma[C], beta[C]
    Resize,         // bilinear, [N,C,H,W] -> [N,C,h,w]
    Crop,           // static window over the last two axes
    RoiResize,      // x[N,C,H,W], weight[N,1,H,W], box[N,4] -> [N,C,H,W]
    Concat,
    Mean,           // over chosen axes
    Sum,            // all elements -> [1]
    L2Normalize,    // along axis 1 of [N,D]
    Linear,         // x[N,in], w[out,in], (b[out])
    Reshape,
    CrossEntropy,   // logits[N,M], labels[N] -> [1]
    TripletHard,    // emb[N,D], labels[N] -> [1]
    PartTransfer,   // student[N,C,H,W], teacher[N,C,H,W] -> [1]
    MeanSquaredError,
    HulCombine,     // l_g, l_s, l_t, s[3] -> [1]
};

std::string_view op_name(OpKind kind);

struct NoAttrs {};
struct ConvAttrs {
    int stride = 1;
    int pad = 0;
    int dilation = 1;
    int output_padding = 0;  // transposed convolution only
};
struct AxisAttrs {
    int axis = -1;
};
struct AxesAttrs {
    std::vector<int> axes;
    bool keepdims = true;
};
struct ScalarAttrs {
    double value = 0.0;
};
struct MatMulAttrs {
    bool trans_a = false;
    bool trans_b = false;
};
struct BatchNormAttrs {
    double eps = 1e-5;
    double momentum = 0.1;
    std::string buffer_prefix;  // "<prefix>.running_mean" / ".running_var"
};
struct ResizeAttrs {
    int out_h = 0;
    int out_w = 0;
};
struct CropAttrs {
    int y0 = 0, x0 = 0, h = 0, w = 0;
};
struct ReshapeAttrs {
    // 0 copies the input dimension at that position, -1 is inferred.
    std::vector<long> shape;
};
struct CrossEntropyAttrs {
    double smoothing = 0.0;
};
struct TripletAttrs {
    double margin = 0.0;
};
struct PartTransferAttrs {
    bool squared = false;
};

using OpAttrs = std::variant<NoAttrs, ConvAttrs, AxisAttrs, AxesAttrs, ScalarAttrs, MatMulAttrs,
                             BatchNormAttrs, ResizeAttrs, CropAttrs, ReshapeAttrs,
                             CrossEntropyAttrs, TripletAttrs, PartTransferAttrs>;

struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    OpAttrs attrs;
    std::string name;  // input/param name, or a diagnostic label
};

class Graph {
public:
    NodeId input(const std::string& name);
    NodeId param(const std::string& name);

    NodeId conv2d(NodeId x, NodeId w, std::optional<NodeId> b, ConvAttrs attrs,
                  std::string label = {});
    NodeId conv_transpose2d(NodeId x, NodeId w, std::optional<NodeId> b, ConvAttrs attrs,
                            std::string label = {});
    NodeId matmul(NodeId a, NodeId b, bool trans_a = false, bool trans_b = false);
    NodeId softmax(NodeId x, int axis);
    NodeId global_avg_pool(NodeId x);
    NodeId global_max_pool(NodeId x);
    NodeId masked_max_pool(NodeId x, NodeId mask);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId add_scalar(NodeId x, double c);
    NodeId scale(NodeId x, double c);
    NodeId relu(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId batch_norm(NodeId x, NodeId gamma, NodeId beta, std::string buffer_prefix,
                      double eps = 1e-5, double momentum = 0.1);
    NodeId resize(NodeId x, int out_h, int out_w);
    NodeId crop(NodeId x, int y0, int x0, int h, int w);
    NodeId roi_resize(NodeId x, NodeId weight, NodeId box);
    NodeId concat(const std::vector<NodeId>& xs, int axis);
    NodeId mean(NodeId x, std::vector<int> axes, bool keepdims = true);
    NodeId sum(NodeId x);
    NodeId l2_normalize(NodeId x);
    NodeId linear(NodeId x, NodeId w, std::optional<NodeId> b);
    NodeId reshape(NodeId x, std::vector<long> shape);
    NodeId cross_entropy(NodeId logits, NodeId labels, double smoothing);
    NodeId triplet_hard(NodeId emb, NodeId labels, double margin);
    NodeId part_transfer(NodeId student, NodeId teacher, bool squared);
    NodeId mse(NodeId a, NodeId b);
    NodeId hul_combine(NodeId l_g, NodeId l_s, NodeId l_t, NodeId log_var);

    /// Names a node as a graph output.
    void mark_output(const std::string& name, NodeId id);

    const std::vector<Node>& nodes() const { return nodes_; }
    const Node& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return nodes_.size(); }

    const std::map<std::string, NodeId>& outputs() const { return outputs_; }
    NodeId output(const std::string& name) const;
    bool has_output(const std::string& name) const { return outputs_.count(name) != 0; }

    const std::map<std::string, NodeId>& inputs() const { return inputs_; }
    const std::map<std::string, NodeId>& params() const { return params_; }

    /// Every parameter name reachable from the given node.
    std::vector<std::string> params_feeding(NodeId id) const;

    /// Labels subsequent nodes "<scope>/<op>" for error messages.
    void set_scope(std::string scope) { scope_ = std::move(scope); }
    const std::string& scope() const { return scope_; }

private:
    NodeId push(OpKind kind, std::vector<NodeId> inputs, OpAttrs attrs, std::string label = {});
    void check_id(NodeId id) const;

    std::vector<Node> nodes_;
    std::map<std::string, NodeId> inputs_;
    std::map<std::string, NodeId> params_;
    std::map<std::string, NodeId> outputs_;
    std::string scope_;
};

}  // namespace pman::ad
