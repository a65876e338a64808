#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "pman/panet/part_masks.hpp"
#include "pman/pmnet/pmnet.hpp"
#include "pman/train/augment.hpp"
#include "pman/train/schedule.hpp"

namespace pman::train {

struct PmnetTrainConfig {
    int P = 4;
    int Q = 8;
    /// One epoch is ceil(images / (P*Q)) steps.
    int epochs = 60;
    double lr = 1.5e-4;
    double warmup_fraction = 0.1;
    double weight_decay = 0.0;
    AugmentConfig augment;
    std::uint64_t seed = 0;

    void validate() const;
};

struct PmnetLogRow {
    std::size_t step = 0;
    double J = 0.0, J_ID = 0.0, J_Tri = 0.0, L_PT = 0.0;
    std::array<double, 3> sigma2{1.0, 1.0, 1.0};
    double lr = 0.0;
};

std::size_t pmnet_total_steps(const PmnetTrainConfig& config, std::size_t num_images);

/// Trains every PMNet parameter (HUL included). `evidence` holds the Phase-1
/// part evidence of each training image; Phase 2 is redrawn at every step
/// with a seed derived from (config seed, step, slot). May be empty for a
/// global-only model.
std::vector<PmnetLogRow> train_pmnet(pmnet::Pmnet& model, const TrainingSet& data,
                                     std::span<const panet::PartEvidence> evidence, const PmnetTrainConfig& config,
                                     const std::function<void(const PmnetLogRow&)>& on_step = {});

/// step,J,J_ID,J_Tri,L_PT,sigma2_G,sigma2_S,sigma2_T,lr
void write_pmnet_log(const std::filesystem::path& path, std::span<const PmnetLogRow> rows);

}  // namespace pman::train
