// Scalar objectives. Each returns a [1] tensor.

#include <algorithm>
#include <cmath>
#include <limits>

#include "ad/ops.hpp"

namespace pman::ad::ops {

namespace {

template <typename T>
std::size_t label_at(const Node& node, const Tensor<T>& labels, std::size_t i, std::size_t classes) {
    const T v = labels[i];
    if (!(v >= T{0}) || (classes != 0 && v >= static_cast<T>(classes)) || v != std::floor(v)) {
        shape_fail(node, "label " + std::to_string(static_cast<double>(v)) + " at position " +
                             std::to_string(i) + " is not a valid class index");
    }
    return static_cast<std::size_t>(v);
}

}  // namespace

// ---------------------------------------------------------------- cross entropy

template <typename T>
Tensor<T> fwd_cross_entropy(Fwd<T>& c) {
    const auto& logits = arg(c, 0);
    const auto& labels = arg(c, 1);
    if (logits.rank() != 2 || labels.numel() != logits.dim(0)) {
        shape_fail(c.node, "logits " + shape_str(logits.shape()) + " vs labels " +
                               shape_str(labels.shape()));
    }
    const std::size_t N = logits.dim(0), M = logits.dim(1);
    const T eps = static_cast<T>(std::get<CrossEntropyAttrs>(c.node.attrs).smoothing);
    c.aux.assign(N * M, T{0});  // softmax probabilities
    T total{0};
    for (std::size_t n = 0; n < N; ++n) {
        const std::size_t y = label_at(c.node, labels, n, M);
        const T* z = logits.data().data() + n * M;
        const T mx = *std::max_element(z, z + M);
        T s{0};
        for (std::size_t j = 0; j < M; ++j) s += std::exp(z[j] - mx);
        const T log_z = mx + std::log(s);
        T loss{0};
        for (std::size_t j = 0; j < M; ++j) {
            const T logp = z[j] - log_z;
            c.aux[n * M + j] = std::exp(logp);
            const T q = (j == y ? T{1} - eps : T{0}) + eps / static_cast<T>(M);
            loss -= q * logp;
        }
        total += loss;
    }
    return Tensor<T>::scalar(total / static_cast<T>(N));
}

template <typename T>
void bwd_cross_entropy(Bwd<T>& c) {
    if (!c.gin[0]) return;
    const auto& logits = *c.in[0];
    const auto& labels = *c.in[1];
    const std::size_t N = logits.dim(0), M = logits.dim(1);
    const T eps = static_cast<T>(std::get<CrossEntropyAttrs>(c.node.attrs).smoothing);
    const T g = c.gout[0] / static_cast<T>(N);
    for (std::size_t n = 0; n < N; ++n) {
        const auto y = static_cast<std::size_t>(labels[n]);
        for (std::size_t j = 0; j < M; ++j) {
            const T q = (j == y ? T{1} - eps : T{0}) + eps / static_cast<T>(M);
            (*c.gin[0])[n * M + j] += g * (c.aux[n * M + j] - q);
        }
    }
}

// ---------------------------------------------------------------- batch-hard triplet

namespace {

constexpr double kMinSquaredDistance = 1e-12;

template <typename T>
T pair_distance(const T* a, const T* b, std::size_t D) {
    T ss{0};
    for (std::size_t d = 0; d < D; ++d) {
        const T diff = a[d] - b[d];
        ss += diff * diff;
    }
    return std::sqrt(std::max(ss, static_cast<T>(kMinSquaredDistance)));
}

constexpr std::size_t kSelf = std::numeric_limits<std::size_t>::max();

}  // namespace

template <typename T>
Tensor<T> fwd_triplet_hard(Fwd<T>& c) {
    const auto& emb = arg(c, 0);
    const auto& labels = arg(c, 1);
    if (emb.rank() != 2 || labels.numel() != emb.dim(0)) {
        shape_fail(c.node, "embeddings " + shape_str(emb.shape()) + " vs labels " +
                               shape_str(labels.shape()));
    }
    const std::size_t N = emb.dim(0), D = emb.dim(1);
    const T margin = static_cast<T>(std::get<TripletAttrs>(c.node.attrs).margin);
    std::vector<std::size_t> lab(N);
    for (std::size_t i = 0; i < N; ++i) lab[i] = label_at(c.node, labels, i, 0);
    // iaux: per anchor [hardest positive, hardest negative]; aux: loss per anchor.
    c.iaux.assign(2 * N, kSelf);
    c.aux.assign(N, T{0});
    T total{0};
    for (std::size_t i = 0; i < N; ++i) {
        const T* ei = emb.data().data() + i * D;
        T d_ap{0};
        T d_an = std::numeric_limits<T>::infinity();
        std::size_t p = kSelf, q = kSelf;
        for (std::size_t j = 0; j < N; ++j) {
            if (j == i) continue;
            const T d = pair_distance(ei, emb.data().data() + j * D, D);
            if (lab[j] == lab[i]) {
                if (p == kSelf || d > d_ap) {
                    d_ap = d;
                    p = j;
                }
            } else if (d < d_an) {
                d_an = d;
                q = j;
            }
        }
        if (q == kSelf) shape_fail(c.node, "no negatives: the batch holds a single identity");
        c.iaux[2 * i] = p;
        c.iaux[2 * i + 1] = q;
        const T loss = std::max(T{0}, d_ap - d_an + margin);
        c.aux[i] = loss;
        total += loss;
    }
    return Tensor<T>::scalar(total / static_cast<T>(N));
}

template <typename T>
void bwd_triplet_hard(Bwd<T>& c) {
    if (!c.gin[0]) return;
    const auto& emb = *c.in[0];
    const std::size_t N = emb.dim(0), D = emb.dim(1);
    const T g = c.gout[0] / static_cast<T>(N);
    auto& ge = *c.gin[0];
    auto pull = [&](std::size_t i, std::size_t j, T sign) {
        const T* ei = emb.data().data() + i * D;
        const T* ej = emb.data().data() + j * D;
        T ss{0};
        for (std::size_t d = 0; d < D; ++d) ss += (ei[d] - ej[d]) * (ei[d] - ej[d]);
        if (ss <= static_cast<T>(kMinSquaredDistance)) return;  // clamped: flat
        const T inv = sign * g / std::sqrt(ss);
        for (std::size_t d = 0; d < D; ++d) {
            const T v = (ei[d] - ej[d]) * inv;
            ge[i * D + d] += v;
            ge[j * D + d] -= v;
        }
    };
    for (std::size_t i = 0; i < N; ++i) {
        if (!(c.aux[i] > T{0})) continue;
        if (c.iaux[2 * i] != kSelf) pull(i, c.iaux[2 * i], T{1});
        pull(i, c.iaux[2 * i + 1], T{-1});
    }
}

// ---------------------------------------------------------------- part transfer

namespace {

template <typename T>
std::vector<T> batch_channel_mean(const Tensor<T>& x) {
    const std::size_t NC = x.dim(0) * x.dim(1), plane = x.dim(2) * x.dim(3);
    std::vector<T> m(plane, T{0});
    for (std::size_t i = 0; i < NC; ++i)
        for (std::size_t p = 0; p < plane; ++p) m[p] += x[i * plane + p];
    for (auto& v : m) v /= static_cast<T>(NC);
    return m;
}

}  // namespace

template <typename T>
Tensor<T> fwd_part_transfer(Fwd<T>& c) {
    const auto& s = arg(c, 0);
    const auto& t = arg(c, 1);
    if (s.rank() != 4 || s.shape() != t.shape()) {
        shape_fail(c.node, "student " + shape_str(s.shape()) + " vs teacher " +
                               shape_str(t.shape()));
    }
    const bool squared = std::get<PartTransferAttrs>(c.node.attrs).squared;
    const auto ms = batch_channel_mean(s);
    const auto mt = batch_channel_mean(t);
    c.aux.resize(ms.size());  // per-pixel teacher-minus-student difference
    T total{0};
    for (std::size_t p = 0; p < ms.size(); ++p) {
        const T d = mt[p] - ms[p];
        c.aux[p] = d;
        total += squared ? d * d : std::abs(d);
    }
    return Tensor<T>::scalar(total / static_cast<T>(ms.size()));
}

template <typename T>
void bwd_part_transfer(Bwd<T>& c) {
    const auto& s = *c.in[0];
    const bool squared = std::get<PartTransferAttrs>(c.node.attrs).squared;
    const std::size_t NC = s.dim(0) * s.dim(1), plane = s.dim(2) * s.dim(3);
    const T k = c.gout[0] / static_cast<T>(plane * NC);
    for (std::size_t p = 0; p < plane; ++p) {
        const T d = c.aux[p];
        const T dl = squared ? T{2} * d : (d > T{0} ? T{1} : (d < T{0} ? T{-1} : T{0}));
        const T g = dl * k;
        for (std::size_t i = 0; i < NC; ++i) {
            if (c.gin[1]) (*c.gin[1])[i * plane + p] += g;
            if (c.gin[0]) (*c.gin[0])[i * plane + p] -= g;
        }
    }
}

// ---------------------------------------------------------------- mse

template <typename T>
Tensor<T> fwd_mse(Fwd<T>& c) {
    const auto& a = arg(c, 0);
    const auto& b = arg(c, 1);
    if (a.shape() != b.shape()) {
        shape_fail(c.node, shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    T s{0};
    for (std::size_t i = 0; i < a.numel(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return Tensor<T>::scalar(s / static_cast<T>(a.numel()));
}

template <typename T>
void bwd_mse(Bwd<T>& c) {
    const auto& a = *c.in[0];
    const auto& b = *c.in[1];
    const T k = T{2} * c.gout[0] / static_cast<T>(a.numel());
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const T g = k * (a[i] - b[i]);
        if (c.gin[0]) (*c.gin[0])[i] += g;
        if (c.gin[1]) (*c.gin[1])[i] -= g;
    }
}

// ---------------------------------------------------------------- homoscedastic weighting

template <typename T>
Tensor<T> fwd_hul_combine(Fwd<T>& c) {
    for (std::size_t i = 0; i < 3; ++i) {
        if (arg(c, i).numel() != 1) shape_fail(c.node, "losses must be scalars");
    }
    const auto& s = arg(c, 3);
    if (s.numel() != 3) shape_fail(c.node, "log-variance must hold 3 values, got " + shape_str(s.shape()));
    T j{0};
    for (std::size_t i = 0; i < 3; ++i) j += std::exp(-s[i]) * arg(c, i)[0] + T{0.5} * s[i];
    return Tensor<T>::scalar(j);
}

template <typename T>
void bwd_hul_combine(Bwd<T>& c) {
    const auto& s = *c.in[3];
    const T g = c.gout[0];
    for (std::size_t i = 0; i < 3; ++i) {
        const T w = std::exp(-s[i]);
        if (c.gin[i]) (*c.gin[i])[0] += g * w;
        if (c.gin[3]) (*c.gin[3])[i] += g * (T{0.5} - w * (*c.in[i])[0]);
    }
}

PMAN_INSTANTIATE_OP(cross_entropy)
PMAN_INSTANTIATE_OP(triplet_hard)
PMAN_INSTANTIATE_OP(part_transfer)
PMAN_INSTANTIATE_OP(mse)
PMAN_INSTANTIATE_OP(hul_combine)

}  // namespace pman::ad::ops
