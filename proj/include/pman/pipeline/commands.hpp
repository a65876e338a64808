#pragma once

#include <filesystem>
#include <exception>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "pman/eval/metrics.hpp"
#include "pman/panet/panet.hpp"
#include "pman/panet/part_masks.hpp"
#include "pman/pipeline/config.hpp"
#include "pman/pipeline/dataset.hpp"
#include "pman/pmnet/pmnet.hpp"

namespace pman::pipeline {

/// GrabCut foreground for each training image, cached as PNGs under
/// <data>/pseudo/ together with the settings that produced them.
std::vector<vision::BinaryMask> pseudo_labels(const Dataset& data, const GrabCutSettings& settings,
                                              std::ostream* progress = nullptr);

struct EvidenceStats {
    std::size_t images = 0;
    std::size_t band_fallbacks = 0;       // too few attention components
    std::size_t foreground_fallbacks = 0;  // empty refined mask
};

/// Phase-1 part evidence from a frozen PANet. Images whose attention maps give
/// fewer than K components fall back to horizontal bands.
std::vector<panet::PartEvidence> part_evidence_for(const panet::Panet& model, std::span<const vision::RgbImage> images,
                                                   int K, double threshold, EvidenceStats* stats = nullptr);

/// Deterministic (nearest-to-centroid) masks for inference.
std::vector<panet::PartMaskSet> inference_masks(const panet::Panet& model, std::span<const vision::RgbImage> images,
                                                int K, double threshold);

void cmd_gen_data(const RunConfig& config, const std::filesystem::path& out, bool force);

panet::Panet cmd_train_panet(const RunConfig& config, const std::filesystem::path& data,
                             const std::filesystem::path& out, std::ostream* progress = nullptr);

/// Writes part masks for every image, plus an overlay PNG per image.
EvidenceStats cmd_gen_masks(const std::filesystem::path& panet_ckpt, const std::filesystem::path& data,
                            const std::filesystem::path& out, int K, double threshold);

/// Also writes the per-step log next to the checkpoint (<out>.log.csv).
pmnet::Pmnet cmd_train_pmnet(const RunConfig& config, const std::filesystem::path& data,
                             const std::optional<std::filesystem::path>& panet_ckpt, const std::filesystem::path& out,
                             std::ostream* progress = nullptr);

struct EvalRequest {
    std::filesystem::path pmnet;
    std::optional<std::filesystem::path> panet;
    std::filesystem::path data;
    bool teachers = true;  // false: "pmnet-only"
    bool occluded_queries = false;
    std::optional<std::filesystem::path> report;
    RunConfig config;  // eval section, K and part threshold are read
};

eval::EvalReport cmd_eval(const EvalRequest& request);

/// Per-stream maps for one image: F (channel mean), MAM output (channel
/// mean) and spatial attention, as heat-map PNGs.
/// 1 for bad input (validation, format, insufficient evidence), 2 otherwise.
int exit_code_for(const std::exception& e);

void cmd_visualize(const std::filesystem::path& pmnet_ckpt, const std::filesystem::path& image,
                   const std::filesystem::path& out);

}  // namespace pman::pipeline
