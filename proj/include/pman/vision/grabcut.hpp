#pragma once

#include <cstdint>
#include <vector>

#include "pman/vision/gmm.hpp"
#include "pman/vision/image.hpp"

namespace pman::vision {

struct GrabCutOptions {
    int iters = 5;
    int components = 5;
    double lambda = 50.0;
    int gmm_iters = 10;
};

struct GrabCutStep {
    BinaryMask mask;
    Gmm foreground;
    Gmm background;
    double energy = 0.0;
};

struct GrabCutResult {
    BinaryMask mask;
    double beta_bar = 0.0;
    /// steps[0] is the initialisation; one entry per iteration after it.
    std::vector<GrabCutStep> steps;
    /// True when colour evidence could not separate the rectangle from the
    /// border and the initial mask was kept.
    bool kept_initialisation = false;
};

/// Mean squared colour distance over all 4-neighbour pairs (colours in [0,1]).
double mean_neighbor_distance(const RgbImage& img);

/// Data terms (-log density) plus lambda * exp(-d^2 / (2 beta_bar)) for every
/// 4-neighbour pair with different labels.
double segmentation_energy(const RgbImage& img, const BinaryMask& mask, const Gmm& fg,
                           const Gmm& bg, double lambda, double beta_bar);

GrabCutResult grabcut_trace(const RgbImage& img, const BBox& init_rect, std::uint64_t seed,
                            const GrabCutOptions& options = {});

BinaryMask grabcut_lite(const RgbImage& img, const BBox& init_rect, int iters, std::uint64_t seed);

}  // namespace pman::vision
