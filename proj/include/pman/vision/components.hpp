#pragma once

#include <optional>

#include "pman/vision/image.hpp"

namespace pman::vision {

struct Component {
    BinaryMask mask;
    BBox bbox;
    std::size_t size = 0;
    double center_x = 0.0;  // bbox center
    double center_y = 0.0;
};

/// 4-connected. Equal sizes go to the component met first in raster order.
/// Returns nullopt for an all-false mask.
std::optional<Component> largest_connected_component(const BinaryMask& mask);

}  // namespace pman::vision
