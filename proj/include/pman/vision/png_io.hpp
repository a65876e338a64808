#pragma once

#include <filesystem>
#include <span>

#include "pman/vision/image.hpp"

namespace pman::vision {

/// Any PNG color type is converted to 8-bit RGB. Throws FormatError.
RgbImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& img);

/// Masks are stored as 0/255 grayscale; any nonzero sample reads as set.
BinaryMask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);

/// Min-max normalised grayscale heat map.
void write_heatmap_png(const std::filesystem::path& path, std::span<const float> map, int width,
                       int height);

}  // namespace pman::vision
