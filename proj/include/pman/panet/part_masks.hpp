#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pman/ad/tensor.hpp"
#include "pman/vision/image.hpp"

namespace pman::panet {

struct ChannelBox {
    int channel = 0;
    vision::BBox box;  // feature-map coordinates
    double cy = 0.0, cx = 0.0;
};

struct PartCluster {
    std::vector<std::size_t> members;  // indices into PartEvidence::channels
    double cy = 0.0, cx = 0.0;
};

/// Phase 1 of mask generation: per-channel component boxes clustered into K
/// groups, sorted by centroid (row, then column).
struct PartEvidence {
    int K = 0;
    int feat_h = 0, feat_w = 0;
    vision::BinaryMask foreground;  // image resolution
    bool foreground_fallback = false;  // refined mask was empty; whole frame used
    std::vector<ChannelBox> channels;
    std::vector<PartCluster> clusters;
};

struct PartMaskSet {
    std::string image_id;
    std::vector<vision::BinaryMask> masks;     // image resolution, subset of the foreground
    std::vector<vision::BBox> feature_boxes;
    std::vector<vision::BBox> image_boxes;
    std::vector<std::array<double, 2>> centroids;  // cluster centroid (row, col), feature coordinates

    std::size_t size() const { return masks.size(); }
};

struct PartMaskOptions {
    int K = 3;
    double rel_threshold = 0.5;
    std::uint64_t cluster_seed = 0;
};

/// xhat holds one image's [C,h,w] attention maps. Throws InsufficientEvidence
/// when fewer than K channels produce a component.
PartEvidence part_evidence(std::span<const float> xhat, int C, int h, int w, const vision::BinaryMask& foreground,
                           const PartMaskOptions& options = {});

/// Stand-in evidence of K horizontal bands over the foreground's bounding box,
/// one channel per cluster. Used when attention maps give too few components.
PartEvidence band_evidence(const vision::BinaryMask& foreground, int K, int h, int w);

/// Phase 2 with a uniformly sampled member per cluster.
PartMaskSet sample_part_masks(const PartEvidence& ev, std::uint64_t seed);
/// Phase 2 with the member nearest each cluster centroid.
PartMaskSet select_part_masks(const PartEvidence& ev);

PartMaskSet generate_part_masks(std::span<const float> xhat, int C, int h, int w,
                                const vision::BinaryMask& foreground, int K, std::uint64_t seed,
                                double rel_threshold = 0.5);

/// Mirror image of a mask set (masks, boxes and centroids).
PartMaskSet flip_part_masks(const PartMaskSet& set, int feat_w);

/// Feature box scaled to image pixels: (x0 s, y0 s, x1 s + s - 1, y1 s + s - 1).
vision::BBox upscale_box(const vision::BBox& b, int scale);

/// Fraction of each feature cell covered by the mask, as [1,h,w].
std::vector<float> mask_weight_map(const vision::BinaryMask& mask, int feat_h, int feat_w);

/// Writes {id}_part{k}.png and {id}.parts.txt.
void write_part_masks(const std::filesystem::path& dir, const PartMaskSet& set);
PartMaskSet read_part_masks(const std::filesystem::path& dir, const std::string& image_id, int feature_scale);

}  // namespace pman::panet
