#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace pman::vision {

/// 8-bit RGB, row-major, interleaved.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    RgbImage() = default;
    RgbImage(int w, int h);

    std::uint8_t& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    std::uint8_t at(int x, int y, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    void validate() const;
};

struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;  // 0 or 1

    BinaryMask() = default;
    BinaryMask(int w, int h, bool value = false);

    bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
    std::size_t count() const;
    bool empty() const { return count() == 0; }
    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Inclusive pixel box.
struct BBox {
    int x0 = 0, y0 = 0, x1 = -1, y1 = -1;

    int width() const { return x1 - x0 + 1; }
    int height() const { return y1 - y0 + 1; }
    long area() const { return x1 < x0 || y1 < y0 ? 0 : static_cast<long>(width()) * height(); }
    bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Image bounds shrunk by `fraction` of each dimension per side.
BBox shrunk_bounds(int width, int height, double fraction);

/// Bounding box of the set pixels; empty box (area 0) for an empty mask.
BBox mask_bounds(const BinaryMask& m);

double mask_iou(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b);
BinaryMask box_mask(int width, int height, const BBox& box);

/// Pixel is set iff value >= rel_threshold * max(map). A map whose maximum
/// is not positive yields an empty mask.
BinaryMask binarize_channel(std::span<const float> map, int width, int height, double rel_threshold);

/// Nearest-neighbour resampling of a mask.
BinaryMask resize_nearest(const BinaryMask& m, int width, int height);

/// Horizontal mirror.
RgbImage flip_horizontal(const RgbImage& img);
BinaryMask flip_horizontal(const BinaryMask& m);

}  // namespace pman::vision
