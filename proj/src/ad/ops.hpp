#pragma once

// Forward and backward kernels for every primitive. Internal to the library.

#include <string>
#include <vector>

#include "pman/ad/executor.hpp"
#include "pman/ad/graph.hpp"
#include "pman/ad/parameters.hpp"
#include "pman/ad/tensor.hpp"
#include "pman/error.hpp"

namespace pman::ad::ops {

template <typename T>
struct Fwd {
    const Node& node;
    std::vector<const Tensor<T>*> in;
    Mode mode;
    ParameterStore<T>& store;
    std::vector<T>& aux;
    std::vector<std::size_t>& iaux;
};

template <typename T>
struct Bwd {
    const Node& node;
    std::vector<const Tensor<T>*> in;
    const Tensor<T>& out;
    const std::vector<T>& gout;
    std::vector<std::vector<T>*> gin;  // nullptr where no gradient is needed
    Mode mode;
    const std::vector<T>& aux;
    const std::vector<std::size_t>& iaux;
};

[[noreturn]] void shape_fail(const Node& node, const std::string& what);

template <typename T>
const Tensor<T>& arg(const Fwd<T>& c, std::size_t i) {
    return *c.in[i];
}

inline std::size_t norm_axis(const Node& node, int axis, std::size_t rank) {
    const long a = axis < 0 ? static_cast<long>(rank) + axis : axis;
    if (a < 0 || a >= static_cast<long>(rank)) shape_fail(node, "axis out of range");
    return static_cast<std::size_t>(a);
}

#define PMAN_DECLARE_OP(name)                \
    template <typename T>                    \
    Tensor<T> fwd_##name(Fwd<T>& c);         \
    template <typename T>                    \
    void bwd_##name(Bwd<T>& c);

PMAN_DECLARE_OP(conv2d)
PMAN_DECLARE_OP(conv_transpose2d)
PMAN_DECLARE_OP(global_avg_pool)
PMAN_DECLARE_OP(global_max_pool)
PMAN_DECLARE_OP(masked_max_pool)
PMAN_DECLARE_OP(resize)
PMAN_DECLARE_OP(crop)
PMAN_DECLARE_OP(roi_resize)

PMAN_DECLARE_OP(matmul)
PMAN_DECLARE_OP(softmax)
PMAN_DECLARE_OP(add)
PMAN_DECLARE_OP(sub)
PMAN_DECLARE_OP(mul)
PMAN_DECLARE_OP(add_scalar)
PMAN_DECLARE_OP(scale)
PMAN_DECLARE_OP(relu)
PMAN_DECLARE_OP(sigmoid)
PMAN_DECLARE_OP(batch_norm)
PMAN_DECLARE_OP(concat)
PMAN_DECLARE_OP(mean)
PMAN_DECLARE_OP(sum)
PMAN_DECLARE_OP(l2_normalize)
PMAN_DECLARE_OP(linear)
PMAN_DECLARE_OP(reshape)

PMAN_DECLARE_OP(cross_entropy)
PMAN_DECLARE_OP(triplet_hard)
PMAN_DECLARE_OP(part_transfer)
PMAN_DECLARE_OP(mse)
PMAN_DECLARE_OP(hul_combine)

#undef PMAN_DECLARE_OP

#define PMAN_INSTANTIATE_OP(name)                                 \
    template Tensor<float> fwd_##name<float>(Fwd<float> & c);     \
    template void bwd_##name<float>(Bwd<float> & c);              \
    template Tensor<double> fwd_##name<double>(Fwd<double> & c);  \
    template void bwd_##name<double>(Bwd<double> & c);

}  // namespace pman::ad::ops
