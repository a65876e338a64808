#include "pman/vision/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pman/error.hpp"

namespace pman::vision {

RgbImage::RgbImage(int w, int h) : width(w), height(h) {
    if (w < 0 || h < 0) throw ValidationError("image: negative size");
    pixels.assign(static_cast<std::size_t>(w) * h * 3, 0);
}

void RgbImage::validate() const {
    if (width < 0 || height < 0 || pixels.size() != static_cast<std::size_t>(width) * height * 3) {
        throw InvariantError("image: " + std::to_string(pixels.size()) + " bytes for " +
                             std::to_string(width) + "x" + std::to_string(height));
    }
}

BinaryMask::BinaryMask(int w, int h, bool value) : width(w), height(h) {
    if (w < 0 || h < 0) throw ValidationError("mask: negative size");
    bits.assign(static_cast<std::size_t>(w) * h, value ? 1 : 0);
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
}

BBox shrunk_bounds(int width, int height, double fraction) {
    const int dx = static_cast<int>(std::floor(width * fraction));
    const int dy = static_cast<int>(std::floor(height * fraction));
    return {dx, dy, width - 1 - dx, height - 1 - dy};
}

BBox mask_bounds(const BinaryMask& m) {
    BBox b{m.width, m.height, -1, -1};
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(x, y)) {
                b.x0 = std::min(b.x0, x);
                b.y0 = std::min(b.y0, y);
                b.x1 = std::max(b.x1, x);
                b.y1 = std::max(b.y1, y);
            }
    if (b.x1 < 0) return {};
    return b;
}

namespace {
void same_size(const BinaryMask& a, const BinaryMask& b, const char* what) {
    if (a.width != b.width || a.height != b.height) {
        throw ShapeError(std::string(what) + ": mask sizes differ (" + std::to_string(a.width) + "x" +
                         std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                         std::to_string(b.height) + ")");
    }
}
}  // namespace

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
    same_size(a, b, "mask_iou");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        inter += a.bits[i] && b.bits[i];
        uni += a.bits[i] || b.bits[i];
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
    same_size(a, b, "mask_and");
    BinaryMask out(a.width, a.height);
    for (std::size_t i = 0; i < a.bits.size(); ++i) out.bits[i] = a.bits[i] && b.bits[i];
    return out;
}

BinaryMask box_mask(int width, int height, const BBox& box) {
    BinaryMask m(width, height);
    for (int y = std::max(0, box.y0); y <= std::min(height - 1, box.y1); ++y)
        for (int x = std::max(0, box.x0); x <= std::min(width - 1, box.x1); ++x) m.set(x, y, true);
    return m;
}

BinaryMask binarize_channel(std::span<const float> map, int width, int height, double rel_threshold) {
    if (map.size() != static_cast<std::size_t>(width) * height) {
        throw ShapeError("binarize_channel: " + std::to_string(map.size()) + " values for " +
                         std::to_string(width) + "x" + std::to_string(height));
    }
    if (!(rel_threshold > 0.0 && rel_threshold < 1.0)) {
        throw ValidationError("binarize_channel: rel_threshold must be in (0,1)");
    }
    BinaryMask m(width, height);
    if (map.empty()) return m;
    const float mx = *std::max_element(map.begin(), map.end());
    if (!(mx > 0.0f)) return m;
    const double thr = rel_threshold * mx;
    for (std::size_t i = 0; i < map.size(); ++i) m.bits[i] = map[i] >= thr;
    return m;
}

BinaryMask resize_nearest(const BinaryMask& m, int width, int height) {
    BinaryMask out(width, height);
    for (int y = 0; y < height; ++y) {
        const int sy = std::min(m.height - 1, static_cast<int>((y + 0.5) * m.height / height));
        for (int x = 0; x < width; ++x) {
            const int sx = std::min(m.width - 1, static_cast<int>((x + 0.5) * m.width / width));
            out.set(x, y, m.at(sx, sy));
        }
    }
    return out;
}

RgbImage flip_horizontal(const RgbImage& img) {
    RgbImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(img.width - 1 - x, y, c) = img.at(x, y, c);
    return out;
}

BinaryMask flip_horizontal(const BinaryMask& m) {
    BinaryMask out(m.width, m.height);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) out.set(m.width - 1 - x, y, m.at(x, y));
    return out;
}

}  // namespace pman::vision
