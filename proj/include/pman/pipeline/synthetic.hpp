#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "pman/pipeline/config.hpp"
#include "pman/vision/image.hpp"

namespace pman::pipeline {

enum class Split { Train, Query, Gallery };

struct SyntheticImage {
    std::string name;  // {identity:04}_{camera:02}_{index:03}
    int identity = 0;
    int camera = 0;
    int index = 0;
    Split split = Split::Train;
    vision::RgbImage image;
    vision::BinaryMask foreground;  // chassis
    vision::BBox chassis;
    std::array<vision::BBox, 3> parts;  // roof, window, lights (both lamps)
    vision::BBox mark;
};

/// Plain background colour used when clutter is 0.
std::array<std::uint8_t, 3> background_color();

std::string image_name(int identity, int camera, int index);

/// Renders the whole dataset in memory, in file order.
std::vector<SyntheticImage> render_synthetic(const SyntheticSpec& spec);

/// Writes the PNGs and train.txt / query.txt / gallery.txt. A non-empty
/// output directory is an error unless `force` is set.
void write_synthetic_dataset(const SyntheticSpec& spec, const std::filesystem::path& out, bool force);

}  // namespace pman::pipeline
