#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pman/panet/panet.hpp"
#include "pman/train/schedule.hpp"

namespace pman::train {

struct PanetTrainConfig {
    int epochs = 100;
    int batch_size = 32;
    double lr = 1.5e-4;
    double warmup_fraction = 0.1;
    double weight_decay = 0.0;
    double flip = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

struct PanetLogRow {
    std::size_t step = 0;
    double loss = 0.0, loss_id = 0.0, loss_seg = 0.0, lr = 0.0;
};

/// Minimises cross-entropy on identities plus MSE between the decoder output
/// and the pseudo masks, with unit weights.
std::vector<PanetLogRow> train_panet(panet::Panet& model, const TrainingSet& data,
                                     std::span<const vision::BinaryMask> pseudo, const PanetTrainConfig& config,
                                     const std::function<void(const PanetLogRow&)>& on_step = {});

/// Foreground masks as a [B,1,H,W] tensor of 0/1.
ad::Tensor<float> masks_to_tensor(std::span<const vision::BinaryMask> masks);

}  // namespace pman::train
