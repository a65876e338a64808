// Convolutions, pooling and resampling over [N,C,H,W] tensors.

#include <algorithm>
#include <cmath>
#include <limits>

#include "ad/ops.hpp"
#include "pman/simd/gemm.hpp"

namespace pman::ad::ops {
namespace {

struct Geometry {
    std::size_t channels, height, width;  // image side
    std::size_t kh, kw;
    int stride, pad, dilation;
    std::size_t out_h, out_w;  // column side
};

// cols[(c*kh + ky)*kw + kx][oy*out_w + ox] = img[c][oy*s - p + ky*d][ox*s - p + kx*d]
template <typename T>
void im2col(const T* img, const Geometry& g, T* cols) {
    const std::size_t plane = g.out_h * g.out_w;
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                T* row = cols + ((c * g.kh + ky) * g.kw + kx) * plane;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const long iy = static_cast<long>(oy) * g.stride - g.pad +
                                    static_cast<long>(ky) * g.dilation;
                    T* dst = row + oy * g.out_w;
                    if (iy < 0 || iy >= static_cast<long>(g.height)) {
                        std::fill(dst, dst + g.out_w, T{0});
                        continue;
                    }
                    const T* src = img + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const long ix = static_cast<long>(ox) * g.stride - g.pad +
                                        static_cast<long>(kx) * g.dilation;
                        dst[ox] = (ix < 0 || ix >= static_cast<long>(g.width))
                                      ? T{0}
                                      : src[static_cast<std::size_t>(ix)];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters column entries back into the image (accumulating).
template <typename T>
void col2im(const T* cols, const Geometry& g, T* img) {
    const std::size_t plane = g.out_h * g.out_w;
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const T* row = cols + ((c * g.kh + ky) * g.kw + kx) * plane;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const long iy = static_cast<long>(oy) * g.stride - g.pad +
                                    static_cast<long>(ky) * g.dilation;
                    if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
                    T* dst = img + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
                    const T* src = row + oy * g.out_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const long ix = static_cast<long>(ox) * g.stride - g.pad +
                                        static_cast<long>(kx) * g.dilation;
                        if (ix >= 0 && ix < static_cast<long>(g.width))
                            dst[static_cast<std::size_t>(ix)] += src[ox];
                    }
                }
            }
        }
    }
}

bool is_pointwise(const Geometry& g) {
    return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;
}

void require_rank(const Node& node, const Shape& s, std::size_t rank, const char* what) {
    if (s.size() != rank) {
        shape_fail(node, std::string(what) + " must have rank " + std::to_string(rank) +
                             ", got " + shape_str(s));
    }
}

}  // namespace

// ---------------------------------------------------------------- conv2d

template <typename T>
Tensor<T> fwd_conv2d(Fwd<T>& c) {
    const auto& x = arg(c, 0);
    const auto& w = arg(c, 1);
    const auto& a = std::get<ConvAttrs>(c.node.attrs);
    require_rank(c.node, x.shape(), 4, "input");
    require_rank(c.node, w.shape(), 4, "weight");
    if (w.dim(1) != x.dim(1)) {
        shape_fail(c.node, "input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
    }
    if (c.in.size() > 2 && arg(c, 2).numel() != w.dim(0)) {
        shape_fail(c.node, "bias " + shape_str(arg(c, 2).shape()) + " vs weight " +
                               shape_str(w.shape()));
    }
    const long eff_h = static_cast<long>(x.dim(2)) + 2 * a.pad - a.dilation * (static_cast<long>(w.dim(2)) - 1) - 1;
    const long eff_w = static_cast<long>(x.dim(3)) + 2 * a.pad - a.dilation * (static_cast<long>(w.dim(3)) - 1) - 1;
    if (eff_h < 0 || eff_w < 0 || a.stride < 1) {
        shape_fail(c.node, "kernel " + shape_str(w.shape()) + " does not fit input " +
                               shape_str(x.shape()));
    }
    const Geometry g{x.dim(1), x.dim(2), x.dim(3), w.dim(2), w.dim(3), a.stride, a.pad,
                     a.dilation, static_cast<std::size_t>(eff_h / a.stride + 1),
                     static_cast<std::size_t>(eff_w / a.stride + 1)};
    const std::size_t N = x.dim(0), Co = w.dim(0);
    const std::size_t ckk = g.channels * g.kh * g.kw;
    const std::size_t plane = g.out_h * g.out_w;
    Tensor<T> out({N, Co, g.out_h, g.out_w});
    std::vector<T> cols(is_pointwise(g) ? 0 : ckk * plane);
    for (std::size_t n = 0; n < N; ++n) {
        const T* img = x.data().data() + n * g.channels * g.height * g.width;
        const T* colp = img;
        if (!is_pointwise(g)) {
            im2col(img, g, cols.data());
            colp = cols.data();
        }
        T* o = out.data().data() + n * Co * plane;
        simd::gemm<T>(false, false, Co, plane, ckk, w.data().data(), ckk, colp, plane, o, plane,
                      false);
        if (c.in.size() > 2) {
            const auto& b = arg(c, 2);
            for (std::size_t co = 0; co < Co; ++co)
                for (std::size_t p = 0; p < plane; ++p) o[co * plane + p] += b[co];
        }
    }
    return out;
}

template <typename T>
void bwd_conv2d(Bwd<T>& c) {
    const auto& x = *c.in[0];
    const auto& w = *c.in[1];
    const auto& a = std::get<ConvAttrs>(c.node.attrs);
    const Geometry g{x.dim(1), x.dim(2), x.dim(3), w.dim(2), w.dim(3), a.stride, a.pad,
                     a.dilation, c.out.dim(2), c.out.dim(3)};
    const std::size_t N = x.dim(0), Co = w.dim(0);
    const std::size_t ckk = g.channels * g.kh * g.kw;
    const std::size_t plane = g.out_h * g.out_w;
    const std::size_t img_size = g.channels * g.height * g.width;
    const bool pointwise = is_pointwise(g);
    std::vector<T> cols(pointwise ? 0 : ckk * plane);
    std::vector<T> gcols(pointwise ? 0 : ckk * plane);
    for (std::size_t n = 0; n < N; ++n) {
        const T* go = c.gout.data() + n * Co * plane;
        if (c.gin[1]) {
            const T* colp = x.data().data() + n * img_size;
            if (!pointwise) {
                im2col(colp, g, cols.data());
                colp = cols.data();
            }
            simd::gemm<T>(false, true, Co, ckk, plane, go, plane, colp, plane,
                          c.gin[1]->data(), ckk, true);
        }
        if (c.gin[0]) {
            T* gx = c.gin[0]->data() + n * img_size;
            if (pointwise) {
                simd::gemm<T>(true, false, ckk, plane, Co, w.data().data(), ckk, go, plane, gx,
                              plane, true);
            } else {
                simd::gemm<T>(true, false, ckk, plane, Co, w.data().data(), ckk, go, plane,
                              gcols.data(), plane, false);
                col2im(gcols.data(), g, gx);
            }
        }
        if (c.in.size() > 2 && c.gin[2]) {
            auto& gb = *c.gin[2];
            for (std::size_t co = 0; co < Co; ++co) {
                T s{0};
                for (std::size_t p = 0; p < plane; ++p) s += go[co * plane + p];
                gb[co] += s;
            }
        }
    }
}

// ---------------------------------------------------------------- conv_transpose2d

template <typename T>
Tensor<T> fwd_conv_transpose2d(Fwd<T>& c) {
    const auto& x = arg(c, 0);
    const auto& w = arg(c, 1);
    const auto& a = std::get<ConvAttrs>(c.node.attrs);
    require_rank(c.node, x.shape(), 4, "input");
    require_rank(c.node, w.shape(), 4, "weight");
    if (w.dim(0) != x.dim(1)) {
        shape_fail(c.node, "input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
    }
    const std::size_t Co = w.dim(1);
    if (c.in.size() > 2 && arg(c, 2).numel() != Co) {
        shape_fail(c.node, "bias " + shape_str(arg(c, 2).shape()) + " vs weight " +
                               shape_str(w.shape()));
    }
    const long oh = (static_cast<long>(x.dim(2)) - 1) * a.stride - 2 * a.pad +
                    a.dilation * (static_cast<long>(w.dim(2)) - 1) + a.output_padding + 1;
    const long ow = (static_cast<long>(x.dim(3)) - 1) * a.stride - 2 * a.pad +
                    a.dilation * (static_cast<long>(w.dim(3)) - 1) + a.output_padding + 1;
    if (oh <= 0 || ow <= 0) shape_fail(c.node, "empty output for input " + shape_str(x.shape()));
    // The transposed convolution is the adjoint of a convolution whose input
    // is this op's output and whose output grid is this op's input grid.
    const Geometry g{Co, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), w.dim(2),
                     w.dim(3), a.stride, a.pad, a.dilation, x.dim(2), x.dim(3)};
    const std::size_t N = x.dim(0), Ci = x.dim(1);
    const std::size_t ckk = Co * g.kh * g.kw;
    const std::size_t plane = g.out_h * g.out_w;
    Tensor<T> out({N, Co, g.height, g.width});
    std::vector<T> cols(ckk * plane);
    const std::size_t out_plane = g.height * g.width;
    for (std::size_t n = 0; n < N; ++n) {
        const T* xn = x.data().data() + n * Ci * plane;
        simd::gemm<T>(true, false, ckk, plane, Ci, w.data().data(), ckk, xn, plane, cols.data(),
                      plane, false);
        T* o = out.data().data() + n * Co * out_plane;
        col2im(cols.data(), g, o);
        if (c.in.size() > 2) {
            const auto& b = arg(c, 2);
            for (std::size_t co = 0; co < Co; ++co)
                for (std::size_t p = 0; p < out_plane; ++p) o[co * out_plane + p] += b[co];
        }
    }
    return out;
}

template <typename T>
void bwd_conv_transpose2d(Bwd<T>& c) {
    const auto& x = *c.in[0];
    const auto& w = *c.in[1];
    const auto& a = std::get<ConvAttrs>(c.node.attrs);
    const std::size_t Co = w.dim(1);
    const Geometry g{Co, c.out.dim(2), c.out.dim(3), w.dim(2), w.dim(3), a.stride, a.pad,
                     a.dilation, x.dim(2), x.dim(3)};
    const std::size_t N = x.dim(0), Ci = x.dim(1);
    const std::size_t ckk = Co * g.kh * g.kw;
    const std::size_t plane = g.out_h * g.out_w;
    const std::size_t out_plane = g.height * g.width;
    std::vector<T> gcols(ckk * plane);
    for (std::size_t n = 0; n < N; ++n) {
        const T* go = c.gout.data() + n * Co * out_plane;
        im2col(go, g, gcols.data());
        if (c.gin[0]) {
            simd::gemm<T>(false, false, Ci, plane, ckk, w.data().data(), ckk, gcols.data(), plane,
                          c.gin[0]->data() + n * Ci * plane, plane, true);
        }
        if (c.gin[1]) {
            simd::gemm<T>(false, true, Ci, ckk, plane, x.data().data() + n * Ci * plane, plane,
                          gcols.data(), plane, c.gin[1]->data(), ckk, true);
        }
        if (c.in.size() > 2 && c.gin[2]) {
            auto& gb = *c.gin[2];
            for (std::size_t co = 0; co < Co; ++co) {
                T s{0};
                for (std::size_t p = 0; p < out_plane; ++p) s += go[co * out_plane + p];
                gb[co] += s;
            }
        }
    }
}

// ---------------------------------------------------------------- pooling

template <typename T>
Tensor<T> fwd_global_avg_pool(Fwd<T>& c) {
    const auto& x = arg(c, 0);
    require_rank(c.node, x.shape(), 4, "input");
    const std::size_t NC = x.dim(0) * x.dim(1), plane = x.dim(2) * x.dim(3);
    Tensor<T> out({x.dim(0), x.dim(1), 1, 1});
    for (std::size_t i = 0; i < NC; ++i) {
        T s{0};
        for (std::size_t p = 0; p < plane; ++p) s += x[i * plane + p];
        out[i] = s / static_cast<T>(plane);
    }
    return out;
}

template <typename T>
void bwd_global_avg_pool(Bwd<T>& c) {
    if (!c.gin[0]) return;
    const auto& x = *c.in[0];
    const std::size_t NC = x.dim(0) * x.dim(1), plane = x.dim(2) * x.dim(3);
    auto& gx = *c.gin[0];
    for (std::size_t i = 0; i < NC; ++i) {
        const T g = c.gout[i] / static_cast<T>(plane);
        for (std::size_t p = 0; p < plane; ++p) gx[i * plane + p] += g;
    }
}

template <typename T>
Tensor<T> fwd_global_max_pool(Fwd<T>& c) {
    const auto& x = arg(c, 0);
    require_rank(c.node, x.shape(), 4, "input");
    const std::size_t NC = x.dim(0) * x.dim(1), plane = x.dim(2) * x.dim(3);
    if (plane == 0) shape_fail(c.node, "empty spatial extent");
    Tensor<T> out({x.dim(0), x.dim(1), 1, 1});
    c.iaux.assign(NC, 0);
    for (std::size_t i = 0; i < NC; ++i) {
        std::size_t best = 0;
        for (std::size_t p = 1; p < plane; ++p)
            if (x[i * plane + p] > x[i * plane + best]) best = p;
        c.iaux[i] = best;
        out[i] = x[i * plane + best];
    }
    return out;
}

template <typename T>
void bwd_global_max_pool(Bwd<T>& c) {
    if (!c.gin[0]) return;
    const auto& x = *c.in[0];
    const std::size_t NC = x.dim(0) * x.dim(1), plane = x.dim(2) * x.dim(3);
    for (std::size_t i = 0; i < NC; ++i) (*c.gin[0])[i * plane + c.iaux[i]] += c.gout[i];
}

template <typename T>
Tensor<T> fwd_masked_max_pool(Fwd<T>& c) {
    const auto& x = arg(c, 0);
    const auto& m = arg(c, 1);
    require_rank(c.node, x.shape(), 4, "input");
    if (m.shape() != Shape{x.dim(0), 1, x.dim(2), x.dim(3)}) {
        shape_fail(c.node, "mask " + shape_str(m.shape()) + " vs input " + shape_str(x.shape()));
    }
    const std::size_t N = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
    Tensor<T> out({N, C, 1, 1});
    c.iaux.assign(N * C, 0);
    for (std::size_t n = 0; n < N; ++n) {
        const T* mask = m.data().data() + n * plane;
        for (std::size_t ch = 0; ch < C; ++ch) {
            const T* xs = x.data().data() + (n * C + ch) * plane;
            bool found = false;
            std::size_t best = 0;
            for (std::size_t p = 0; p < plane; ++p) {
                if (!(mask[p] > T{0})) continue;
                if (!found || xs[p] > xs[best]) best = p;
                found = true;
            }
            if (!found) shape_fail(c.node, "mask of sample " + std::to_string(n) + " is empty");
            c.iaux[n * C + ch] = best;
            out[n * C + ch] = xs[best];
        }
    }
    return out;
}

template <typename T>
void bwd_masked_max_pool(Bwd<T>& c) {
    if (!c.gin[0]) return;
    const auto& x = *c.in[0];
    const std::size_t NC = x.dim(0) * x.dim(1), plane = x.dim(2) * x.dim(3);
    for (std::size_t i = 0; i < NC; ++i) (*c.gin[0])[i * plane + c.iaux[i]] += c.gout[i];
}

// ---------------------------------------------------------------- resampling

namespace {

// Bilinear sampling weights, half-pixel centres (align_corners = false).
struct Tap {
    std::size_t i0, i1;
    double f;  // weight of i1
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
    std::vector<Tap> taps(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        if (src < 0) src = 0;
        auto i0 = static_cast<std::size_t>(std::floor(src));
        if (i0 > in - 1) i0 = in - 1;
        const std::size_t i1 = std::min(i0 + 1, in - 1);
        taps[o] = Tap{i0, i1, src - static_cast<double>(i0)};
    }
    return taps;
}

// out[oy][ox] from a (h x w) window of `src` starting at (y0, x0) with row
// stride `ld`, optionally scaled per-pixel by `weight` (same layout as src).
template <typename T>
void bilinear_forward(const T* src, const T* weight, std::size_t ld, std::size_t y0,
                      std::size_t x0, std::size_t h, std::size_t w, T* out, std::size_t oh,
                      std::size_t ow) {
    auto at = [&](std::size_t y, std::size_t x) {
        const std::size_t idx = (y0 + y) * ld + x0 + x;
        return weight ? src[idx] * weight[idx] : src[idx];
    };
    if (h == oh && w == ow) {
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) out[y * ow + x] = at(y, x);
        return;
    }
    const auto ty = bilinear_taps(h, oh);
    const auto tx = bilinear_taps(w, ow);
    for (std::size_t oy = 0; oy < oh; ++oy) {
        const T fy = static_cast<T>(ty[oy].f);
        for (std::size_t ox = 0; ox < ow; ++ox) {
            const T fx = static_cast<T>(tx[ox].f);
            const T top = (T{1} - fx) * at(ty[oy].i0, tx[ox].i0) + fx * at(ty[oy].i0, tx[ox].i1);
            const T bot = (T{1} - fx) * at(ty[oy].i1, tx[ox].i0) + fx * at(ty[oy].i1, tx[ox].i1);
            out[oy * ow + ox] = (T{1} - fy) * top + fy * bot;
        }
    }
}

template <typename T>
void bilinear_backward(const T* gout, const T* weight, std::size_t ld, std::size_t y0,
                       std::size_t x0, std::size_t h, std::size_t w, std::size_t oh,
                       std::size_t ow, T* gsrc) {
    auto put = [&](std::size_t y, std::size_t x, T g) {
        const std::size_t idx = (y0 + y) * ld + x0 + x;
        gsrc[idx] += weight ? g * weight[idx] : g;
    };
    if (h == oh && w == ow) {
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) put(y, x, gout[y * ow + x]);
        return;
    }
    const auto ty = bilinear_taps(h, oh);
    const auto tx = bilinear_taps(w, ow);
    for (std::size_t oy = 0; oy < oh; ++oy) {
        const T fy = static_cast<T>(ty[oy].f);
        for (std::size_t ox = 0; ox < ow; ++ox) {
            const T fx = static_cast<T>(tx[ox].f);
            const T g = gout[oy * ow + ox];
            put(ty[oy].i0, tx[ox].i0, g * (T{1} - fy) * (T{1} - fx));
            put(ty[oy].i0, tx[ox].i1, g * (T{1} - fy) * fx);
            put(ty[oy].i1, tx[ox].i0, g * fy * (T{1} - fx));
            put(ty[oy].i1, tx[ox].i1, g * fy * fx);
        }
    }
}

}  // namespace

template <typename T>
Tensor<T> fwd_resize(Fwd<T>& c) {
    const auto& x = arg(c, 0);
    const auto& a = std::get<ResizeAttrs>(c.node.attrs);
    require_rank(c.node, x.shape(), 4, "input");
    if (a.out_h <= 0 || a.out_w <= 0 || x.dim(2) == 0 || x.dim(3) == 0) {
        shape_fail(c.node, "invalid resize of " + shape_str(x.shape()));
    }
    const auto oh = static_cast<std::size_t>(a.out_h), ow = static_cast<std::size_t>(a.out_w);
    const std::size_t NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> out({x.dim(0), x.dim(1), oh, ow});
    for (std::size_t i = 0; i < NC; ++i) {
        bilinear_forward<T>(x.data().data() + i * H * W, nullptr, W, 0, 0, H, W,
                            out.data().data() + i * oh * ow, oh, ow);
    }
    return out;
}

template <typename T>
void bwd_resize(Bwd<T>& c) {
    if (!c.gin[0]) return;
    const auto& x = *c.in[0];
    const std::size_t NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t oh = c.out.dim(2), ow = c.out.dim(3);
    for (std::size_t i = 0; i < NC; ++i) {
        bilinear_backward<T>(c.gout.data() + i * oh * ow, nullptr, W, 0, 0, H, W, oh, ow,
                             c.gin[0]->data() + i * H * W);
    }
}

template <typename T>
Tensor<T> fwd_crop(Fwd<T>& c) {
    const auto& x = arg(c, 0);
    const auto& a = std::get<CropAttrs>(c.node.attrs);
    require_rank(c.node, x.shape(), 4, "input");
    if (a.y0 < 0 || a.x0 < 0 || a.h <= 0 || a.w <= 0 ||
        static_cast<std::size_t>(a.y0 + a.h) > x.dim(2) ||
        static_cast<std::size_t>(a.x0 + a.w) > x.dim(3)) {
        shape_fail(c.node, "crop window outside input " + shape_str(x.shape()));
    }
    const std::size_t NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
    const auto h = static_cast<std::size_t>(a.h), w = static_cast<std::size_t>(a.w);
    Tensor<T> out({x.dim(0), x.dim(1), h, w});
    for (std::size_t i = 0; i < NC; ++i)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
                out[(i * h + y) * w + xx] = x[(i * H + y + a.y0) * W + xx + a.x0];
    return out;
}

template <typename T>
void bwd_crop(Bwd<T>& c) {
    if (!c.gin[0]) return;
    const auto& x = *c.in[0];
    const auto& a = std::get<CropAttrs>(c.node.attrs);
    const std::size_t NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
    const auto h = static_cast<std::size_t>(a.h), w = static_cast<std::size_t>(a.w);
    auto& gx = *c.gin[0];
    for (std::size_t i = 0; i < NC; ++i)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
                gx[(i * H + y + a.y0) * W + xx + a.x0] += c.gout[(i * h + y) * w + xx];
}

namespace {

struct Roi {
    std::size_t y0, x0, h, w;
};

template <typename T>
Roi read_roi(const Node& node, const Tensor<T>& box, std::size_t n, std::size_t H, std::size_t W) {
    const double y0 = box[n * 4 + 0], x0 = box[n * 4 + 1], y1 = box[n * 4 + 2],
                 x1 = box[n * 4 + 3];
    if (!(y0 >= 0 && x0 >= 0 && y1 >= y0 && x1 >= x0 && y1 < static_cast<double>(H) &&
          x1 < static_cast<double>(W))) {
        shape_fail(node, "degenerate part box for sample " + std::to_string(n));
    }
    return Roi{static_cast<std::size_t>(y0), static_cast<std::size_t>(x0),
               static_cast<std::size_t>(y1 - y0) + 1, static_cast<std::size_t>(x1 - x0) + 1};
}

}  // namespace

template <typename T>
Tensor<T> fwd_roi_resize(Fwd<T>& c) {
    const auto& x = arg(c, 0);
    const auto& wt = arg(c, 1);
    const auto& box = arg(c, 2);
    require_rank(c.node, x.shape(), 4, "input");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (wt.shape() != Shape{N, 1, H, W}) {
        shape_fail(c.node, "weight " + shape_str(wt.shape()) + " vs input " + shape_str(x.shape()));
    }
    if (box.numel() != N * 4) shape_fail(c.node, "box tensor " + shape_str(box.shape()));
    Tensor<T> out(x.shape());
    for (std::size_t n = 0; n < N; ++n) {
        const Roi r = read_roi(c.node, box, n, H, W);
        const T* wn = wt.data().data() + n * H * W;
        for (std::size_t ch = 0; ch < C; ++ch) {
            const std::size_t off = (n * C + ch) * H * W;
            bilinear_forward<T>(x.data().data() + off, wn, W, r.y0, r.x0, r.h, r.w,
                                out.data().data() + off, H, W);
        }
    }
    return out;
}

template <typename T>
void bwd_roi_resize(Bwd<T>& c) {
    if (!c.gin[0]) return;
    const auto& x = *c.in[0];
    const auto& wt = *c.in[1];
    const auto& box = *c.in[2];
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    for (std::size_t n = 0; n < N; ++n) {
        const Roi r = read_roi(c.node, box, n, H, W);
        const T* wn = wt.data().data() + n * H * W;
        for (std::size_t ch = 0; ch < C; ++ch) {
            const std::size_t off = (n * C + ch) * H * W;
            // The weight scales x inside the window, so it scales the
            // gradient too; it is a constant, not a differentiable input.
            bilinear_backward<T>(c.gout.data() + off, wn, W, r.y0, r.x0, r.h, r.w, H, W,
                                 c.gin[0]->data() + off);
        }
    }
}

PMAN_INSTANTIATE_OP(conv2d)
PMAN_INSTANTIATE_OP(conv_transpose2d)
PMAN_INSTANTIATE_OP(global_avg_pool)
PMAN_INSTANTIATE_OP(global_max_pool)
PMAN_INSTANTIATE_OP(masked_max_pool)
PMAN_INSTANTIATE_OP(resize)
PMAN_INSTANTIATE_OP(crop)
PMAN_INSTANTIATE_OP(roi_resize)

}  // namespace pman::ad::ops
