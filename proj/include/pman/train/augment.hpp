#pragma once

#include <cstdint>
#include <random>

#include "pman/vision/image.hpp"

namespace pman::train {

struct AugmentConfig {
    double flip = 0.5;
    double erase = 0.5;
    /// Occlusion patches are applied only when enabled.
    bool occlusion = false;
    double occlusion_prob = 0.3;

    void validate() const;
};

/// Fills one rectangle covering 10-35% of the image with a random colour,
/// with probability `prob`.
vision::RgbImage occlusion_augment(const vision::RgbImage& image, double prob, std::uint64_t seed);

/// Random erasing: a rectangle of 2-33% of the area with aspect ratio in
/// [0.3, 3.3] is filled with per-pixel random values. Returns false when no
/// placement was found.
bool random_erase(vision::RgbImage& image, std::mt19937_64& rng);

struct Augmented {
    vision::RgbImage image;
    bool flipped = false;
};

/// Flip, erase and (if enabled) occlusion, each drawn independently.
Augmented augment(const vision::RgbImage& image, const AugmentConfig& config, std::uint64_t seed);

}  // namespace pman::train
