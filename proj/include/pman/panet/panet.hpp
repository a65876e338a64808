#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "pman/ad/checkpoint.hpp"
#include "pman/ad/graph.hpp"
#include "pman/ad/parameters.hpp"
#include "pman/model/layers.hpp"
#include "pman/vision/image.hpp"

namespace pman::panet {

struct PanetConfig {
    int input_size = 64;
    model::BackboneConfig backbone;
    int num_ids = 2;
    /// Route the classification branch through PCR (attention-weighted
    /// pooling) so that gradients reach the PCR path during training.
    bool pcr_in_training = false;
    double label_smoothing = 0.1;

    int feature_size() const { return input_size / backbone.total_stride(); }
    void validate() const;
};

/// Channel-similarity recalibration on [B,C,h,w]:
/// G = softmax_rows(X X^T), Xhat = softmax_rows(G X), reshaped back.
ad::NodeId pcr(ad::Graph& g, ad::NodeId x, int h, int w);

/// Graph inputs: "image" [B,3,H,W], "labels" [B], "pseudo" [B,1,H,W].
/// Outputs: "X", "Xhat", "seg", "logits", "loss_id", "loss_seg", "loss".
class Panet {
public:
    Panet(const PanetConfig& config, std::uint64_t seed);

    const PanetConfig& config() const { return config_; }
    const ad::Graph& graph() const { return graph_; }
    ad::ParameterStore<float>& params() { return params_; }
    const ad::ParameterStore<float>& params() const { return params_; }

    struct Outputs {
        ad::Tensor<float> x, xhat, seg;
    };
    /// Eval-mode forward of encoder, PCR and decoder.
    Outputs infer(std::span<const vision::RgbImage> images) const;

    ad::TensorMap to_tensor_map() const;
    static Panet from_tensor_map(const ad::TensorMap& tensors);

private:
    void build(std::uint64_t seed);

    PanetConfig config_;
    ad::Graph graph_;
    ad::ParameterStore<float> params_;
};

/// Decoder output >= 0.5.
vision::BinaryMask refined_foreground(const ad::Tensor<float>& seg, std::size_t index);

}  // namespace pman::panet
