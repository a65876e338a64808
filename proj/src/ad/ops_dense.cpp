// Elementwise, reduction, normalization and matrix ops.

#include <algorithm>
#include <cmath>

#include "ad/ops.hpp"
#include "pman/simd/gemm.hpp"

namespace pman::ad::ops {

void shape_fail(const Node& node, const std::string& what) {
    throw ShapeError(std::string(op_name(node.kind)) + " '" + node.name + "': " + what);
}

// ---------------------------------------------------------------- matmul

namespace {

struct MatDims {
    std::size_t batch, M, N, K;
};

template <typename T>
MatDims matmul_dims(const Node& node, const Tensor<T>& a, const Tensor<T>& b,
                    const MatMulAttrs& at) {
    if (a.rank() != b.rank() || (a.rank() != 2 && a.rank() != 3)) {
        shape_fail(node, "operands " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const std::size_t off = a.rank() - 2;
    const std::size_t batch = a.rank() == 3 ? a.dim(0) : 1;
    if (a.rank() == 3 && b.dim(0) != batch) {
        shape_fail(node, "batch mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    const std::size_t M = at.trans_a ? a.dim(off + 1) : a.dim(off);
    const std::size_t Ka = at.trans_a ? a.dim(off) : a.dim(off + 1);
    const std::size_t Kb = at.trans_b ? b.dim(off + 1) : b.dim(off);
    const std::size_t N = at.trans_b ? b.dim(off) : b.dim(off + 1);
    if (Ka != Kb) {
        shape_fail(node, "inner dimensions differ: " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    return {batch, M, N, Ka};
}

}  // namespace

template <typename T>
Tensor<T> fwd_matmul(Fwd<T>& c) {
    const auto& a = arg(c, 0);
    const auto& b = arg(c, 1);
    const auto& at = std::get<MatMulAttrs>(c.node.attrs);
    const MatDims d = matmul_dims(c.node, a, b, at);
    Tensor<T> out(a.rank() == 3 ? Shape{d.batch, d.M, d.N} : Shape{d.M, d.N});
    const std::size_t lda = a.dim(a.rank() - 1), ldb = b.dim(b.rank() - 1);
    const std::size_t sa = a.numel() / d.batch, sb = b.numel() / d.batch;
    for (std::size_t i = 0; i < d.batch; ++i) {
        simd::gemm<T>(at.trans_a, at.trans_b, d.M, d.N, d.K, a.data().data() + i * sa, lda,
                      b.data().data() + i * sb, ldb, out.data().data() + i * d.M * d.N, d.N,
                      false);
    }
    return out;
}

template <typename T>
void bwd_matmul(Bwd<T>& c) {
    const auto& a = *c.in[0];
    const auto& b = *c.in[1];
    const auto& at = std::get<MatMulAttrs>(c.node.attrs);
    const MatDims d = matmul_dims(c.node, a, b, at);
    const std::size_t lda = a.dim(a.rank() - 1), ldb = b.dim(b.rank() - 1);
    const std::size_t sa = a.numel() / d.batch, sb = b.numel() / d.batch;
    for (std::size_t i = 0; i < d.batch; ++i) {
        const T* g = c.gout.data() + i * d.M * d.N;
        const T* ap = a.data().data() + i * sa;
        const T* bp = b.data().data() + i * sb;
        if (c.gin[0]) {
            T* ga = c.gin[0]->data() + i * sa;
            if (!at.trans_a) {  // dA = G op(B)^T  (M x K)
                simd::gemm<T>(false, !at.trans_b, d.M, d.K, d.N, g, d.N, bp, ldb, ga, lda, true);
            } else {  // dA = op(B) G^T  (K x M)
                simd::gemm<T>(at.trans_b, true, d.K, d.M, d.N, bp, ldb, g, d.N, ga, lda, true);
            }
        }
        if (c.gin[1]) {
            T* gb = c.gin[1]->data() + i * sb;
            if (!at.trans_b) {  // dB = op(A)^T G  (K x N)
                simd::gemm<T>(!at.trans_a, false, d.K, d.N, d.M, ap, lda, g, d.N, gb, ldb, true);
            } else {  // dB = G^T op(A)  (N x K)
                simd::gemm<T>(true, at.trans_a, d.N, d.K, d.M, g, d.N, ap, lda, gb, ldb, true);
            }
        }
    }
}

// ---------------------------------------------------------------- softmax

namespace {
struct AxisSplit {
    std::size_t outer, len, inner;
};
AxisSplit split_axis(const Shape& s, std::size_t axis) {
    AxisSplit r{1, s[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}
}  // namespace

template <typename T>
Tensor<T> fwd_softmax(Fwd<T>& c) {
    const auto& x = arg(c, 0);
    const std::size_t axis = norm_axis(c.node, std::get<AxisAttrs>(c.node.attrs).axis, x.rank());
    const AxisSplit s = split_axis(x.shape(), axis);
    Tensor<T> out(x.shape());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.len * s.inner + in;
            T mx = x[base];
            for (std::size_t k = 1; k < s.len; ++k) mx = std::max(mx, x[base + k * s.inner]);
            T z{0};
            for (std::size_t k = 0; k < s.len; ++k) {
                const T e = std::exp(x[base + k * s.inner] - mx);
                out[base + k * s.inner] = e;
                z += e;
            }
            for (std::size_t k = 0; k < s.len; ++k) out[base + k * s.inner] /= z;
        }
    }
    return out;
}

template <typename T>
void bwd_softmax(Bwd<T>& c) {
    if (!c.gin[0]) return;
    const auto& y = c.out;
    const std::size_t axis = norm_axis(c.node, std::get<AxisAttrs>(c.node.attrs).axis, y.rank());
    const AxisSplit s = split_axis(y.shape(), axis);
    auto& gx = *c.gin[0];
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.len * s.inner + in;
            T dot{0};
            for (std::size_t k = 0; k < s.len; ++k) {
                const std::size_t i = base + k * s.inner;
                dot += c.gout[i] * y[i];
            }
            for (std::size_t k = 0; k < s.len; ++k) {
                const std::size_t i = base + k * s.inner;
                gx[i] += y[i] * (c.gout[i] - dot);
            }
        }
    }
}

// ---------------------------------------------------------------- broadcasting binary ops

namespace {

Shape broadcast_shape(const Node& node, const Shape& a, const Shape& b) {
    if (a.size() != b.size()) {
        shape_fail(node, "rank mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
    Shape out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i] && a[i] != 1 && b[i] != 1) {
            shape_fail(node, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        }
        out[i] = std::max(a[i], b[i]);
    }
    return out;
}

std::vector<std::size_t> bcast_strides(const Shape& s, const Shape& out) {
    std::vector<std::size_t> st(s.size(), 0);
    std::size_t acc = 1;
    for (std::size_t i = s.size(); i-- > 0;) {
        st[i] = (s[i] == 1 && out[i] != 1) ? 0 : acc;
        acc *= s[i];
    }
    return st;
}

// Calls fn(out_index, a_index, b_index) for every output element.
template <typename Fn>
void for_each_bcast(const Shape& out, const Shape& a, const Shape& b, Fn fn) {
    const std::size_t n = shape_numel(out);
    if (a == out && b == out) {
        for (std::size_t i = 0; i < n; ++i) fn(i, i, i);
        return;
    }
    const auto sa = bcast_strides(a, out);
    const auto sb = bcast_strides(b, out);
    const std::size_t rank = out.size();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t i = 0; i < n; ++i) {
        fn(i, ia, ib);
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < out[d]) break;
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

}  // namespace

template <typename T>
Tensor<T> fwd_add(Fwd<T>& c) {
    const auto& a = arg(c, 0);
    const auto& b = arg(c, 1);
    Tensor<T> out(broadcast_shape(c.node, a.shape(), b.shape()));
    for_each_bcast(out.shape(), a.shape(), b.shape(),
                   [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = a[ia] + b[ib]; });
    return out;
}

template <typename T>
void bwd_add(Bwd<T>& c) {
    for_each_bcast(c.out.shape(), c.in[0]->shape(), c.in[1]->shape(),
                   [&](std::size_t i, std::size_t ia, std::size_t ib) {
                       if (c.gin[0]) (*c.gin[0])[ia] += c.gout[i];
                       if (c.gin[1]) (*c.gin[1])[ib] += c.gout[i];
                   });
}

template <typename T>
Tensor<T> fwd_sub(Fwd<T>& c) {
    const auto& a = arg(c, 0);
    const auto& b = arg(c, 1);
    Tensor<T> out(broadcast_shape(c.node, a.shape(), b.shape()));
    for_each_bcast(out.shape(), a.shape(), b.shape(),
                   [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = a[ia] - b[ib]; });
    return out;
}

template <typename T>
void bwd_sub(Bwd<T>& c) {
    for_each_bcast(c.out.shape(), c.in[0]->shape(), c.in[1]->shape(),
                   [&](std::size_t i, std::size_t ia, std::size_t ib) {
                       if (c.gin[0]) (*c.gin[0])[ia] += c.gout[i];
                       if (c.gin[1]) (*c.gin[1])[ib] -= c.gout[i];
                   });
}

template <typename T>
Tensor<T> fwd_mul(Fwd<T>& c) {
    const auto& a = arg(c, 0);
    const auto& b = arg(c, 1);
    Tensor<T> out(broadcast_shape(c.node, a.shape(), b.shape()));
    for_each_bcast(out.shape(), a.shape(), b.shape(),
                   [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = a[ia] * b[ib]; });
    return out;
}

template <typename T>
void bwd_mul(Bwd<T>& c) {
    const auto& a = *c.in[0];
    const auto& b = *c.in[1];
    for_each_bcast(c.out.shape(), a.shape(), b.shape(),
                   [&](std::size_t i, std::size_t ia, std::size_t ib) {
                       if (c.gin[0]) (*c.gin[0])[ia] += c.gout[i] * b[ib];
                       if (c.gin[1]) (*c.gin[1])[ib] += c.gout[i] * a[ia];
                   });
}

// ---------------------------------------------------------------- unary

template <typename T>
Tensor<T> fwd_add_scalar(Fwd<T>& c) {
    Tensor<T> out = arg(c, 0);
    out.set_requires_grad(false);
    const T k = static_cast<T>(std::get<ScalarAttrs>(c.node.attrs).value);
    for (auto& v : out.values()) v += k;
    return out;
}

template <typename T>
void bwd_add_scalar(Bwd<T>& c) {
    if (!c.gin[0]) return;
    for (std::size_t i = 0; i < c.gout.size(); ++i) (*c.gin[0])[i] += c.gout[i];
}

template <typename T>
Tensor<T> fwd_scale(Fwd<T>& c) {
    Tensor<T> out = arg(c, 0);
    out.set_requires_grad(false);
    const T k = static_cast<T>(std::get<ScalarAttrs>(c.node.attrs).value);
    for (auto& v : out.values()) v *= k;
    return out;
}

template <typename T>
void bwd_scale(Bwd<T>& c) {
    if (!c.gin[0]) return;
    const T k = static_cast<T>(std::get<ScalarAttrs>(c.node.attrs).value);
    for (std::size_t i = 0; i < c.gout.size(); ++i) (*c.gin[0])[i] += c.gout[i] * k;
}

template <typename T>
Tensor<T> fwd_relu(Fwd<T>& c) {
    Tensor<T> out = arg(c, 0);
    out.set_requires_grad(false);
    for (auto& v : out.values()) v = v > T{0} ? v : T{0};
    return out;
}

template <typename T>
void bwd_relu(Bwd<T>& c) {
    if (!c.gin[0]) return;
    const auto& x = *c.in[0];
    for (std::size_t i = 0; i < c.gout.size(); ++i)
        if (x[i] > T{0}) (*c.gin[0])[i] += c.gout[i];
}

template <typename T>
Tensor<T> fwd_sigmoid(Fwd<T>& c) {
    Tensor<T> out = arg(c, 0);
    out.set_requires_grad(false);
    for (auto& v : out.values()) {
        if (v >= T{0}) {
            v = T{1} / (T{1} + std::exp(-v));
        } else {
            const T e = std::exp(v);
            v = e / (T{1} + e);
        }
    }
    return out;
}

template <typename T>
void bwd_sigmoid(Bwd<T>& c) {
    if (!c.gin[0]) return;
    const auto& y = c.out;
    for (std::size_t i = 0; i < c.gout.size(); ++i)
        (*c.gin[0])[i] += c.gout[i] * y[i] * (T{1} - y[i]);
}

// ---------------------------------------------------------------- batch norm

template <typename T>
Tensor<T> fwd_batch_norm(Fwd<T>& c) {
    const auto& x = arg(c, 0);
    const auto& gamma = arg(c, 1);
    const auto& beta = arg(c, 2);
    const auto& at = std::get<BatchNormAttrs>(c.node.attrs);
    if (x.rank() != 2 && x.rank() != 4) shape_fail(c.node, "input " + shape_str(x.shape()));
    const std::size_t N = x.dim(0), C = x.dim(1);
    const std::size_t plane = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
    if (gamma.numel() != C || beta.numel() != C) {
        shape_fail(c.node, "affine parameters " + shape_str(gamma.shape()) + " for input " +
                               shape_str(x.shape()));
    }
    const std::string mean_name = at.buffer_prefix + ".running_mean";
    const std::string var_name = at.buffer_prefix + ".running_var";
    if (!c.store.has_buffer(mean_name) || !c.store.has_buffer(var_name)) {
        shape_fail(c.node, "missing running statistics '" + at.buffer_prefix + "'");
    }
    auto& rmean = c.store.buffer(mean_name);
    auto& rvar = c.store.buffer(var_name);
    const T eps = static_cast<T>(at.eps);
    const std::size_t count = N * plane;
    c.aux.assign(2 * C, T{0});  // [mean, invstd] per channel
    for (std::size_t ch = 0; ch < C; ++ch) {
        T mu, var;
        if (c.mode == Mode::Train) {
            T s{0};
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t p = 0; p < plane; ++p) s += x[(n * C + ch) * plane + p];
            mu = s / static_cast<T>(count);
            T ss{0};
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t p = 0; p < plane; ++p) {
                    const T d = x[(n * C + ch) * plane + p] - mu;
                    ss += d * d;
                }
            var = ss / static_cast<T>(count);
            const T m = static_cast<T>(at.momentum);
            const T unbiased = count > 1 ? ss / static_cast<T>(count - 1) : var;
            rmean[ch] = (T{1} - m) * rmean[ch] + m * mu;
            rvar[ch] = (T{1} - m) * rvar[ch] + m * unbiased;
        } else {
            mu = rmean[ch];
            var = rvar[ch];
        }
        c.aux[ch] = mu;
        c.aux[C + ch] = T{1} / std::sqrt(var + eps);
    }
    Tensor<T> out(x.shape());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t ch = 0; ch < C; ++ch) {
            const T scale = gamma[ch] * c.aux[C + ch];
            const T shift = beta[ch] - c.aux[ch] * scale;
            const std::size_t off = (n * C + ch) * plane;
            for (std::size_t p = 0; p < plane; ++p) out[off + p] = x[off + p] * scale + shift;
        }
    return out;
}

template <typename T>
void bwd_batch_norm(Bwd<T>& c) {
    const auto& x = *c.in[0];
    const auto& gamma = *c.in[1];
    const std::size_t N = x.dim(0), C = x.dim(1);
    const std::size_t plane = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
    const auto count = static_cast<T>(N * plane);
    for (std::size_t ch = 0; ch < C; ++ch) {
        const T mu = c.aux[ch], inv = c.aux[C + ch];
        T sum_g{0}, sum_gx{0};
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t p = 0; p < plane; ++p) {
                const std::size_t i = (n * C + ch) * plane + p;
                sum_g += c.gout[i];
                sum_gx += c.gout[i] * (x[i] - mu) * inv;
            }
        if (c.gin[1]) (*c.gin[1])[ch] += sum_gx;
        if (c.gin[2]) (*c.gin[2])[ch] += sum_g;
        if (!c.gin[0]) continue;
        auto& gx = *c.gin[0];
        const T k = gamma[ch] * inv;
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t p = 0; p < plane; ++p) {
                const std::size_t i = (n * C + ch) * plane + p;
                if (c.mode == Mode::Train) {
                    const T xhat = (x[i] - mu) * inv;
                    gx[i] += k * (c.gout[i] - sum_g / count - xhat * sum_gx / count);
                } else {
                    gx[i] += k * c.gout[i];
                }
            }
    }
}

// ---------------------------------------------------------------- shape ops

template <typename T>
Tensor<T> fwd_concat(Fwd<T>& c) {
    const auto& first = arg(c, 0);
    const std::size_t axis = norm_axis(c.node, std::get<AxisAttrs>(c.node.attrs).axis, first.rank());
    Shape out_shape = first.shape();
    out_shape[axis] = 0;
    for (const auto* t : c.in) {
        Shape s = t->shape();
        if (s.size() != first.rank()) shape_fail(c.node, "rank mismatch " + shape_str(s));
        for (std::size_t d = 0; d < s.size(); ++d) {
            if (d != axis && s[d] != first.dim(d)) {
                shape_fail(c.node, shape_str(s) + " vs " + shape_str(first.shape()));
            }
        }
        out_shape[axis] += s[axis];
    }
    Tensor<T> out(out_shape);
    const AxisSplit os = split_axis(out_shape, axis);
    std::size_t at = 0;
    for (const auto* t : c.in) {
        const AxisSplit ts = split_axis(t->shape(), axis);
        const std::size_t chunk = ts.len * ts.inner;
        for (std::size_t o = 0; o < os.outer; ++o) {
            std::copy_n(t->data().data() + o * chunk, chunk,
                        out.data().data() + o * os.len * os.inner + at * os.inner);
        }
        at += ts.len;
    }
    return out;
}

template <typename T>
void bwd_concat(Bwd<T>& c) {
    const std::size_t axis =
        norm_axis(c.node, std::get<AxisAttrs>(c.node.attrs).axis, c.out.rank());
    const AxisSplit os = split_axis(c.out.shape(), axis);
    std::size_t at = 0;
    for (std::size_t k = 0; k < c.in.size(); ++k) {
        const AxisSplit ts = split_axis(c.in[k]->shape(), axis);
        const std::size_t chunk = ts.len * ts.inner;
        if (c.gin[k]) {
            for (std::size_t o = 0; o < os.outer; ++o) {
                const T* src = c.gout.data() + o * os.len * os.inner + at * os.inner;
                T* dst = c.gin[k]->data() + o * chunk;
                for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
            }
        }
        at += ts.len;
    }
}

namespace {

struct Reduction {
    Shape out_shape;               // with keepdims semantics applied
    std::vector<std::size_t> map;  // input flat index -> output flat index
    std::size_t count;             // elements averaged per output
};

template <typename T>
Reduction plan_reduction(const Node& node, const Tensor<T>& x, const AxesAttrs& at) {
    std::vector<char> reduce(x.rank(), 0);
    for (int a : at.axes) reduce[norm_axis(node, a, x.rank())] = 1;
    Shape kept = x.shape();
    Shape squeezed;
    std::size_t count = 1;
    for (std::size_t d = 0; d < x.rank(); ++d) {
        if (reduce[d]) {
            count *= x.dim(d);
            kept[d] = 1;
        } else {
            squeezed.push_back(x.dim(d));
        }
    }
    if (squeezed.empty()) squeezed.push_back(1);
    Reduction r{at.keepdims ? kept : squeezed, std::vector<std::size_t>(x.numel()), count};
    // Output strides in the keepdims layout; identical flat order either way.
    std::vector<std::size_t> ostride(x.rank(), 0);
    std::size_t acc = 1;
    for (std::size_t d = x.rank(); d-- > 0;) {
        ostride[d] = reduce[d] ? 0 : acc;
        acc *= kept[d];
    }
    std::vector<std::size_t> idx(x.rank(), 0);
    std::size_t o = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        r.map[i] = o;
        for (std::size_t d = x.rank(); d-- > 0;) {
            ++idx[d];
            o += ostride[d];
            if (idx[d] < x.dim(d)) break;
            o -= ostride[d] * x.dim(d);
            idx[d] = 0;
        }
    }
    return r;
}

}  // namespace

template <typename T>
Tensor<T> fwd_mean(Fwd<T>& c) {
    const auto& x = arg(c, 0);
    const Reduction r = plan_reduction(c.node, x, std::get<AxesAttrs>(c.node.attrs));
    Tensor<T> out(r.out_shape);
    for (std::size_t i = 0; i < x.numel(); ++i) out[r.map[i]] += x[i];
    for (auto& v : out.values()) v /= static_cast<T>(r.count);
    return out;
}

template <typename T>
void bwd_mean(Bwd<T>& c) {
    if (!c.gin[0]) return;
    const auto& x = *c.in[0];
    const Reduction r = plan_reduction(c.node, x, std::get<AxesAttrs>(c.node.attrs));
    for (std::size_t i = 0; i < x.numel(); ++i)
        (*c.gin[0])[i] += c.gout[r.map[i]] / static_cast<T>(r.count);
}

template <typename T>
Tensor<T> fwd_sum(Fwd<T>& c) {
    T s{0};
    for (T v : arg(c, 0).values()) s += v;
    return Tensor<T>::scalar(s);
}

template <typename T>
void bwd_sum(Bwd<T>& c) {
    if (!c.gin[0]) return;
    for (auto& g : *c.gin[0]) g += c.gout[0];
}

template <typename T>
Tensor<T> fwd_l2_normalize(Fwd<T>& c) {
    const auto& x = arg(c, 0);
    if (x.rank() != 2) shape_fail(c.node, "expects [N,D], got " + shape_str(x.shape()));
    const std::size_t N = x.dim(0), D = x.dim(1);
    Tensor<T> out(x.shape());
    c.aux.assign(N, T{0});
    for (std::size_t n = 0; n < N; ++n) {
        T ss{0};
        for (std::size_t d = 0; d < D; ++d) ss += x[n * D + d] * x[n * D + d];
        const T norm = std::max(std::sqrt(ss), static_cast<T>(1e-12));
        c.aux[n] = norm;
        for (std::size_t d = 0; d < D; ++d) out[n * D + d] = x[n * D + d] / norm;
    }
    return out;
}

template <typename T>
void bwd_l2_normalize(Bwd<T>& c) {
    if (!c.gin[0]) return;
    const auto& y = c.out;
    const std::size_t N = y.dim(0), D = y.dim(1);
    for (std::size_t n = 0; n < N; ++n) {
        T dot{0};
        for (std::size_t d = 0; d < D; ++d) dot += c.gout[n * D + d] * y[n * D + d];
        for (std::size_t d = 0; d < D; ++d)
            (*c.gin[0])[n * D + d] += (c.gout[n * D + d] - y[n * D + d] * dot) / c.aux[n];
    }
}

template <typename T>
Tensor<T> fwd_linear(Fwd<T>& c) {
    const auto& x = arg(c, 0);
    const auto& w = arg(c, 1);
    if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1)) {
        shape_fail(c.node, "input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
    }
    const std::size_t N = x.dim(0), in = x.dim(1), outd = w.dim(0);
    if (c.in.size() > 2 && arg(c, 2).numel() != outd) {
        shape_fail(c.node, "bias " + shape_str(arg(c, 2).shape()));
    }
    Tensor<T> out({N, outd});
    simd::gemm<T>(false, true, N, outd, in, x.data().data(), in, w.data().data(), in,
                  out.data().data(), outd, false);
    if (c.in.size() > 2) {
        const auto& b = arg(c, 2);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t o = 0; o < outd; ++o) out[n * outd + o] += b[o];
    }
    return out;
}

template <typename T>
void bwd_linear(Bwd<T>& c) {
    const auto& x = *c.in[0];
    const auto& w = *c.in[1];
    const std::size_t N = x.dim(0), in = x.dim(1), outd = w.dim(0);
    if (c.gin[0]) {
        simd::gemm<T>(false, false, N, in, outd, c.gout.data(), outd, w.data().data(), in,
                      c.gin[0]->data(), in, true);
    }
    if (c.gin[1]) {
        simd::gemm<T>(true, false, outd, in, N, c.gout.data(), outd, x.data().data(), in,
                      c.gin[1]->data(), in, true);
    }
    if (c.in.size() > 2 && c.gin[2]) {
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t o = 0; o < outd; ++o) (*c.gin[2])[o] += c.gout[n * outd + o];
    }
}

template <typename T>
Tensor<T> fwd_reshape(Fwd<T>& c) {
    const auto& x = arg(c, 0);
    const auto& spec = std::get<ReshapeAttrs>(c.node.attrs).shape;
    Shape s(spec.size());
    long infer = -1;
    std::size_t known = 1;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        if (spec[i] == 0) {
            if (i >= x.rank()) shape_fail(c.node, "cannot copy missing dim");
            s[i] = x.dim(i);
        } else if (spec[i] == -1) {
            if (infer >= 0) shape_fail(c.node, "more than one inferred dim");
            infer = static_cast<long>(i);
            continue;
        } else {
            s[i] = static_cast<std::size_t>(spec[i]);
        }
        known *= s[i];
    }
    if (infer >= 0) {
        if (known == 0 || x.numel() % known != 0) {
            shape_fail(c.node, "cannot reshape " + shape_str(x.shape()));
        }
        s[static_cast<std::size_t>(infer)] = x.numel() / known;
    }
    if (shape_numel(s) != x.numel()) {
        shape_fail(c.node, "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(s));
    }
    Tensor<T> out(s, x.values());
    return out;
}

template <typename T>
void bwd_reshape(Bwd<T>& c) {
    if (!c.gin[0]) return;
    for (std::size_t i = 0; i < c.gout.size(); ++i) (*c.gin[0])[i] += c.gout[i];
}

PMAN_INSTANTIATE_OP(matmul)
PMAN_INSTANTIATE_OP(softmax)
PMAN_INSTANTIATE_OP(add)
PMAN_INSTANTIATE_OP(sub)
PMAN_INSTANTIATE_OP(mul)
PMAN_INSTANTIATE_OP(add_scalar)
PMAN_INSTANTIATE_OP(scale)
PMAN_INSTANTIATE_OP(relu)
PMAN_INSTANTIATE_OP(sigmoid)
PMAN_INSTANTIATE_OP(batch_norm)
PMAN_INSTANTIATE_OP(concat)
PMAN_INSTANTIATE_OP(mean)
PMAN_INSTANTIATE_OP(sum)
PMAN_INSTANTIATE_OP(l2_normalize)
PMAN_INSTANTIATE_OP(linear)
PMAN_INSTANTIATE_OP(reshape)

}  // namespace pman::ad::ops
