#include "pman/panet/part_masks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "pman/error.hpp"
#include "pman/vision/components.hpp"
#include "pman/vision/kmeans.hpp"
#include "pman/vision/png_io.hpp"

namespace pman::panet {

using vision::BBox;
using vision::BinaryMask;

vision::BBox upscale_box(const BBox& b, int s) { return {b.x0 * s, b.y0 * s, b.x1 * s + s - 1, b.y1 * s + s - 1}; }

PartEvidence part_evidence(std::span<const float> xhat, int C, int h, int w, const BinaryMask& foreground,
                           const PartMaskOptions& opt) {
    if (xhat.size() != static_cast<std::size_t>(C) * h * w) {
        throw ShapeError("part_evidence: " + std::to_string(xhat.size()) + " values for [" + std::to_string(C) +
                         "," + std::to_string(h) + "," + std::to_string(w) + "]");
    }
    if (opt.K < 1) throw ValidationError("part_evidence: K must be positive");
    if (foreground.width % w != 0 || foreground.height % h != 0 || foreground.width / w != foreground.height / h) {
        throw ShapeError("part_evidence: foreground " + std::to_string(foreground.width) + "x" +
                         std::to_string(foreground.height) + " is not an integer multiple of the feature map");
    }
    PartEvidence ev;
    ev.K = opt.K;
    ev.feat_h = h;
    ev.feat_w = w;
    ev.foreground = foreground;
    if (foreground.empty()) {
        ev.foreground = BinaryMask(foreground.width, foreground.height, true);
        ev.foreground_fallback = true;
    }

    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int c = 0; c < C; ++c) {
        const auto m = vision::binarize_channel(xhat.subspan(static_cast<std::size_t>(c) * plane, plane), w, h,
                                                opt.rel_threshold);
        const auto comp = vision::largest_connected_component(m);
        if (!comp) continue;
        ev.channels.push_back({c, comp->bbox, comp->center_y, comp->center_x});
    }
    if (ev.channels.size() < static_cast<std::size_t>(opt.K)) {
        throw InsufficientEvidence("insufficient part evidence: " + std::to_string(ev.channels.size()) +
                                   " non-empty channels for K=" + std::to_string(opt.K));
    }

    std::vector<std::array<double, 2>> centers;
    for (const auto& cb : ev.channels) centers.push_back({cb.cy, cb.cx});
    const auto km = vision::kmeans(centers, opt.K, opt.cluster_seed);
    for (std::size_t k = 0; k < km.members.size(); ++k) {
        ev.clusters.push_back({km.members[k], km.centroids[k * 2], km.centroids[k * 2 + 1]});
    }
    std::stable_sort(ev.clusters.begin(), ev.clusters.end(), [](const PartCluster& a, const PartCluster& b) {
        return a.cy != b.cy ? a.cy < b.cy : a.cx < b.cx;
    });
    return ev;
}

namespace {

PartMaskSet assemble(const PartEvidence& ev, const std::vector<std::size_t>& picks) {
    const int scale = ev.foreground.width / ev.feat_w;
    PartMaskSet set;
    for (std::size_t k = 0; k < picks.size(); ++k) {
        const auto& cb = ev.channels[picks[k]];
        const BBox ib = upscale_box(cb.box, scale);
        set.feature_boxes.push_back(cb.box);
        set.image_boxes.push_back(ib);
        set.masks.push_back(vision::mask_and(ev.foreground, vision::box_mask(ev.foreground.width, ev.foreground.height, ib)));
        set.centroids.push_back({ev.clusters[k].cy, ev.clusters[k].cx});
    }
    return set;
}

}  // namespace

PartEvidence band_evidence(const BinaryMask& foreground, int K, int h, int w) {
    if (K < 1 || K > h) throw ValidationError("band_evidence: K must be in [1, feature height]");
    if (foreground.width % w != 0 || foreground.height % h != 0) {
        throw ShapeError("band_evidence: foreground is not an integer multiple of the feature map");
    }
    PartEvidence ev;
    ev.K = K;
    ev.feat_h = h;
    ev.feat_w = w;
    ev.foreground = foreground;
    if (foreground.empty()) {
        ev.foreground = BinaryMask(foreground.width, foreground.height, true);
        ev.foreground_fallback = true;
    }
    const int s = foreground.width / w;
    const BBox ib = vision::mask_bounds(ev.foreground);
    BBox fb{ib.x0 / s, ib.y0 / s, ib.x1 / s, ib.y1 / s};
    if (fb.height() < K) {
        fb.y0 = 0;
        fb.y1 = h - 1;
    }
    for (int k = 0; k < K; ++k) {
        const int y0 = fb.y0 + k * fb.height() / K;
        const int y1 = fb.y0 + (k + 1) * fb.height() / K - 1;
        const BBox band{fb.x0, y0, fb.x1, y1};
        ChannelBox cb{k, band, (y0 + y1) / 2.0, (fb.x0 + fb.x1) / 2.0};
        ev.channels.push_back(cb);
        ev.clusters.push_back({{static_cast<std::size_t>(k)}, cb.cy, cb.cx});
    }
    return ev;
}

PartMaskSet flip_part_masks(const PartMaskSet& set, int feat_w) {
    PartMaskSet out = set;
    for (std::size_t k = 0; k < set.size(); ++k) {
        out.masks[k] = vision::flip_horizontal(set.masks[k]);
        const auto& fb = set.feature_boxes[k];
        out.feature_boxes[k] = {feat_w - 1 - fb.x1, fb.y0, feat_w - 1 - fb.x0, fb.y1};
        const auto& ib = set.image_boxes[k];
        const int W = set.masks[k].width;
        out.image_boxes[k] = {W - 1 - ib.x1, ib.y0, W - 1 - ib.x0, ib.y1};
        out.centroids[k][1] = feat_w - 1 - set.centroids[k][1];
    }
    return out;
}

PartMaskSet sample_part_masks(const PartEvidence& ev, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> picks;
    for (const auto& cl : ev.clusters) {
        std::uniform_int_distribution<std::size_t> u(0, cl.members.size() - 1);
        picks.push_back(cl.members[u(rng)]);
    }
    return assemble(ev, picks);
}

PartMaskSet select_part_masks(const PartEvidence& ev) {
    std::vector<std::size_t> picks;
    for (const auto& cl : ev.clusters) {
        std::size_t best = cl.members.front();
        double bd = INFINITY;
        for (auto m : cl.members) {
            const auto& cb = ev.channels[m];
            const double d = (cb.cy - cl.cy) * (cb.cy - cl.cy) + (cb.cx - cl.cx) * (cb.cx - cl.cx);
            if (d < bd) {
                bd = d;
                best = m;
            }
        }
        picks.push_back(best);
    }
    return assemble(ev, picks);
}

PartMaskSet generate_part_masks(std::span<const float> xhat, int C, int h, int w, const BinaryMask& foreground,
                                int K, std::uint64_t seed, double rel_threshold) {
    PartMaskOptions o;
    o.K = K;
    o.rel_threshold = rel_threshold;
    return sample_part_masks(part_evidence(xhat, C, h, w, foreground, o), seed);
}

std::vector<float> mask_weight_map(const BinaryMask& mask, int feat_h, int feat_w) {
    if (mask.width % feat_w != 0 || mask.height % feat_h != 0) {
        throw ShapeError("mask_weight_map: mask is not an integer multiple of the feature map");
    }
    const int sx = mask.width / feat_w, sy = mask.height / feat_h;
    std::vector<float> out(static_cast<std::size_t>(feat_h) * feat_w, 0.0f);
    for (int fy = 0; fy < feat_h; ++fy)
        for (int fx = 0; fx < feat_w; ++fx) {
            int n = 0;
            for (int y = fy * sy; y < (fy + 1) * sy; ++y)
                for (int x = fx * sx; x < (fx + 1) * sx; ++x) n += mask.at(x, y);
            out[static_cast<std::size_t>(fy * feat_w + fx)] = static_cast<float>(n) / static_cast<float>(sx * sy);
        }
    return out;
}

void write_part_masks(const std::filesystem::path& dir, const PartMaskSet& set) {
    std::filesystem::create_directories(dir);
    std::ofstream rec(dir / (set.image_id + ".parts.txt"));
    if (!rec) throw ValidationError("cannot write part record in '" + dir.string() + "'");
    rec << "image " << set.image_id << "\nK " << set.size() << "\n";
    for (std::size_t k = 0; k < set.size(); ++k) {
        vision::write_mask_png(dir / (set.image_id + "_part" + std::to_string(k) + ".png"), set.masks[k]);
        const auto& b = set.image_boxes[k];
        rec << "part " << k << " bbox " << b.x0 << ' ' << b.y0 << ' ' << b.x1 << ' ' << b.y1 << " centroid "
            << set.centroids[k][0] << ' ' << set.centroids[k][1] << "\n";
    }
}

PartMaskSet read_part_masks(const std::filesystem::path& dir, const std::string& image_id, int scale) {
    const auto path = dir / (image_id + ".parts.txt");
    std::ifstream in(path);
    if (!in) throw ValidationError("missing part record '" + path.string() + "'");
    PartMaskSet set;
    std::string word;
    std::size_t K = 0;
    if (!(in >> word >> set.image_id) || word != "image" || !(in >> word >> K) || word != "K") {
        throw FormatError("'" + path.string() + "': malformed header");
    }
    for (std::size_t k = 0; k < K; ++k) {
        std::size_t idx = 0;
        BBox b;
        std::array<double, 2> c{};
        std::string w_bbox, w_cen;
        if (!(in >> word >> idx >> w_bbox >> b.x0 >> b.y0 >> b.x1 >> b.y1 >> w_cen >> c[0] >> c[1]) || word != "part" ||
            idx != k || w_bbox != "bbox" || w_cen != "centroid") {
            throw FormatError("'" + path.string() + "': malformed part line " + std::to_string(k));
        }
        set.image_boxes.push_back(b);
        set.feature_boxes.push_back({b.x0 / scale, b.y0 / scale, b.x1 / scale, b.y1 / scale});
        set.centroids.push_back(c);
        set.masks.push_back(vision::read_mask_png(dir / (image_id + "_part" + std::to_string(k) + ".png")));
    }
    return set;
}

}  // namespace pman::panet
