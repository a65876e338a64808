#include "pman/vision/grabcut.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pman/error.hpp"
#include "pman/vision/maxflow.hpp"

namespace pman::vision {

namespace {

std::vector<Color> to_colors(const RgbImage& img) {
    std::vector<Color> out(static_cast<std::size_t>(img.width) * img.height);
    for (std::size_t i = 0; i < out.size(); ++i)
        for (std::size_t c = 0; c < 3; ++c) out[i][c] = img.pixels[i * 3 + c] / 255.0;
    return out;
}

double sq(const Color& a, const Color& b) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
    return s;
}

// Right and down neighbour weights, indexed by the left/top pixel.
struct Pairwise {
    std::vector<double> right, down;
};

Pairwise pairwise_weights(const std::vector<Color>& col, int W, int H, double lambda, double beta_bar) {
    Pairwise pw;
    pw.right.assign(col.size(), 0.0);
    pw.down.assign(col.size(), 0.0);
    auto w = [&](double d2) { return beta_bar > 0.0 ? lambda * std::exp(-d2 / (2.0 * beta_bar)) : lambda; };
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const auto i = static_cast<std::size_t>(y * W + x);
            if (x + 1 < W) pw.right[i] = w(sq(col[i], col[i + 1]));
            if (y + 1 < H) pw.down[i] = w(sq(col[i], col[i + static_cast<std::size_t>(W)]));
        }
    return pw;
}

double energy_of(const BinaryMask& m, const std::vector<double>& dfg, const std::vector<double>& dbg,
                 const Pairwise& pw) {
    const int W = m.width, H = m.height;
    double e = 0.0;
    for (std::size_t i = 0; i < m.bits.size(); ++i) e += m.bits[i] ? dfg[i] : dbg[i];
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const auto i = static_cast<std::size_t>(y * W + x);
            if (x + 1 < W && m.bits[i] != m.bits[i + 1]) e += pw.right[i];
            if (y + 1 < H && m.bits[i] != m.bits[i + static_cast<std::size_t>(W)]) e += pw.down[i];
        }
    return e;
}

std::vector<double> neg_log(const Gmm& g, const std::vector<Color>& col) {
    auto v = g.log_densities(col);
    for (auto& x : v) x = -x;
    return v;
}

std::vector<Color> select(const std::vector<Color>& col, const BinaryMask& m, bool value) {
    std::vector<Color> out;
    for (std::size_t i = 0; i < col.size(); ++i)
        if ((m.bits[i] != 0) == value) out.push_back(col[i]);
    return out;
}

}  // namespace

double mean_neighbor_distance(const RgbImage& img) {
    img.validate();
    const auto col = to_colors(img);
    const int W = img.width, H = img.height;
    double s = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const auto i = static_cast<std::size_t>(y * W + x);
            if (x + 1 < W) s += sq(col[i], col[i + 1]), ++n;
            if (y + 1 < H) s += sq(col[i], col[i + static_cast<std::size_t>(W)]), ++n;
        }
    return n ? s / static_cast<double>(n) : 0.0;
}

double segmentation_energy(const RgbImage& img, const BinaryMask& mask, const Gmm& fg, const Gmm& bg,
                           double lambda, double beta_bar) {
    const auto col = to_colors(img);
    const auto pw = pairwise_weights(col, img.width, img.height, lambda, beta_bar);
    return energy_of(mask, neg_log(fg, col), neg_log(bg, col), pw);
}

GrabCutResult grabcut_trace(const RgbImage& img, const BBox& rect, std::uint64_t seed,
                            const GrabCutOptions& opt) {
    img.validate();
    const int W = img.width, H = img.height;
    if (rect.area() <= 0) throw ValidationError("grabcut: degenerate rectangle");
    if (rect.x0 < 0 || rect.y0 < 0 || rect.x1 >= W || rect.y1 >= H) {
        throw ValidationError("grabcut: rectangle outside the image");
    }
    if (opt.iters < 1) throw ValidationError("grabcut: iters must be at least 1");

    const auto col = to_colors(img);
    GrabCutResult res;
    res.beta_bar = mean_neighbor_distance(img);
    const auto pw = pairwise_weights(col, W, H, opt.lambda, res.beta_bar);

    BinaryMask mask = box_mask(W, H, rect);
    if (mask.count() == mask.bits.size()) {
        // no background evidence at all
        res.mask = mask;
        res.kept_initialisation = true;
        return res;
    }
    auto fit = [&](const BinaryMask& m, bool value, std::uint64_t s) {
        return gmm_fit(select(col, m, value), opt.components, opt.gmm_iters, s);
    };
    Gmm fg = fit(mask, true, seed);
    Gmm bg = fit(mask, false, seed + 1);
    auto dfg = neg_log(fg, col), dbg = neg_log(bg, col);
    double energy = energy_of(mask, dfg, dbg, pw);
    res.steps.push_back({mask, fg, bg, energy});

    bool tie = true;
    for (std::size_t i = 0; i < mask.bits.size() && tie; ++i) {
        if (!mask.bits[i]) continue;
        tie = std::abs(dfg[i] - dbg[i]) <= 1e-9 * std::max({1.0, std::abs(dfg[i]), std::abs(dbg[i])});
    }
    if (tie) {
        res.mask = mask;
        res.kept_initialisation = true;
        return res;
    }

    // unknown pixels are the rectangle interior; everything else is fixed background
    std::vector<int> node(mask.bits.size(), -1);
    int n_unknown = 0;
    for (int y = rect.y0; y <= rect.y1; ++y)
        for (int x = rect.x0; x <= rect.x1; ++x) node[static_cast<std::size_t>(y * W + x)] = 2 + n_unknown++;

    for (int it = 0; it < opt.iters; ++it) {
        FlowNetwork net(2 + n_unknown, 0, 1);
        for (int y = rect.y0; y <= rect.y1; ++y)
            for (int x = rect.x0; x <= rect.x1; ++x) {
                const auto i = static_cast<std::size_t>(y * W + x);
                double cost_fg = dfg[i], cost_bg = dbg[i];
                const auto Wz = static_cast<std::size_t>(W);
                auto link = [&](std::size_t j, double w) {
                    if (node[j] < 0) {
                        cost_fg += w;  // fixed background neighbour
                    } else if (j > i) {
                        net.add_edge(node[i], node[j], w);
                        net.add_edge(node[j], node[i], w);
                    }
                };
                if (x > 0) link(i - 1, pw.right[i - 1]);
                if (x + 1 < W) link(i + 1, pw.right[i]);
                if (y > 0) link(i - Wz, pw.down[i - Wz]);
                if (y + 1 < H) link(i + Wz, pw.down[i]);
                const double m = std::min(cost_fg, cost_bg);
                net.add_edge(0, node[i], cost_bg - m);
                net.add_edge(node[i], 1, cost_fg - m);
            }
        const auto cut = max_flow_min_cut(net);
        BinaryMask next(W, H);
        for (std::size_t i = 0; i < next.bits.size(); ++i)
            next.bits[i] = node[i] >= 0 && cut.source_side[static_cast<std::size_t>(node[i])];
        const double e_cut = energy_of(next, dfg, dbg, pw);
        if (e_cut <= energy) {
            mask = std::move(next);
            energy = e_cut;
        }

        // refit the colour models; keep the old ones unless the energy does not rise
        if (mask.count() > 0) {
            const std::uint64_t s = seed + 2 * static_cast<std::uint64_t>(it + 1);
            Gmm fg2 = fit(mask, true, s);
            Gmm bg2 = fit(mask, false, s + 1);
            auto dfg2 = neg_log(fg2, col), dbg2 = neg_log(bg2, col);
            const double e2 = energy_of(mask, dfg2, dbg2, pw);
            if (e2 <= energy) {
                fg = std::move(fg2);
                bg = std::move(bg2);
                dfg = std::move(dfg2);
                dbg = std::move(dbg2);
                energy = e2;
            }
        }
        res.steps.push_back({mask, fg, bg, energy});
    }
    res.mask = mask;
    return res;
}

BinaryMask grabcut_lite(const RgbImage& img, const BBox& init_rect, int iters, std::uint64_t seed) {
    GrabCutOptions o;
    o.iters = iters;
    return grabcut_trace(img, init_rect, seed, o).mask;
}

}  // namespace pman::vision
