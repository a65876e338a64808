#include "pman/vision/components.hpp"

#include <algorithm>
#include <vector>

namespace pman::vision {

std::optional<Component> largest_connected_component(const BinaryMask& mask) {
    const int W = mask.width, H = mask.height;
    std::vector<int> label(mask.bits.size(), -1);
    std::vector<int> best_pixels, pixels, stack;
    int next = 0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const int start = y * W + x;
            if (!mask.bits[static_cast<std::size_t>(start)] || label[static_cast<std::size_t>(start)] >= 0) continue;
            pixels.clear();
            stack.assign(1, start);
            label[static_cast<std::size_t>(start)] = next;
            while (!stack.empty()) {
                const int p = stack.back();
                stack.pop_back();
                pixels.push_back(p);
                const int px = p % W, py = p / W;
                const int nb[4][2] = {{px - 1, py}, {px + 1, py}, {px, py - 1}, {px, py + 1}};
                for (const auto& q : nb) {
                    if (q[0] < 0 || q[1] < 0 || q[0] >= W || q[1] >= H) continue;
                    const auto qi = static_cast<std::size_t>(q[1] * W + q[0]);
                    if (mask.bits[qi] && label[qi] < 0) {
                        label[qi] = next;
                        stack.push_back(static_cast<int>(qi));
                    }
                }
            }
            ++next;
            if (pixels.size() > best_pixels.size()) best_pixels = pixels;
        }
    if (best_pixels.empty()) return std::nullopt;

    Component c;
    c.mask = BinaryMask(W, H);
    c.size = best_pixels.size();
    c.bbox = {W, H, -1, -1};
    for (int p : best_pixels) {
        const int x = p % W, y = p / W;
        c.mask.set(x, y, true);
        c.bbox.x0 = std::min(c.bbox.x0, x);
        c.bbox.y0 = std::min(c.bbox.y0, y);
        c.bbox.x1 = std::max(c.bbox.x1, x);
        c.bbox.y1 = std::max(c.bbox.y1, y);
    }
    c.center_x = (c.bbox.x0 + c.bbox.x1) / 2.0;
    c.center_y = (c.bbox.y0 + c.bbox.y1) / 2.0;
    return c;
}

}  // namespace pman::vision
