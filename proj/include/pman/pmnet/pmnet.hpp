#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pman/ad/checkpoint.hpp"
#include "pman/ad/graph.hpp"
#include "pman/ad/parameters.hpp"
#include "pman/model/layers.hpp"
#include "pman/panet/part_masks.hpp"
#include "pman/vision/image.hpp"

namespace pman::pmnet {

enum class Weighting { Hul, Fixed };

struct PmnetConfig {
    int input_size = 64;
    model::BackboneConfig backbone;
    int num_ids = 2;
    int K = 3;
    int global_conv_width = 128;
    int global_dim = 256;
    int part_channels = 32;
    int stream_dim = 128;
    double margin = 0.7;
    double label_smoothing = 0.1;
    bool squared_transfer = false;
    Weighting weighting = Weighting::Hul;
    std::array<double, 3> fixed_weights{1.0, 1.0, 1.0};
    /// Ablation: global head only (no part streams, teachers or transfer loss).
    bool global_only = false;

    int feature_size() const { return input_size / backbone.total_stride(); }
    void validate() const;
};

/// Per-batch retrieval features (rows are images). Retrieval uses the
/// normalised neck outputs.
struct FeatureBundle {
    ad::Tensor<float> f_g;
    ad::Tensor<float> f_s;
    std::optional<ad::Tensor<float>> f_t;
};

/// Teacher inputs for one stream: boxes [B,4] (y0,x0,y1,x1) and mask weights [B,1,h,w].
struct TeacherTensors {
    std::vector<ad::Tensor<float>> boxes;
    std::vector<ad::Tensor<float>> weights;
};
TeacherTensors teacher_tensors(std::span<const panet::PartMaskSet> masks, int K, int feat_h, int feat_w);

/// Graph inputs: "image", "labels", and per stream k "box<k>", "wt<k>".
/// Outputs: features "f_G","f_S","f_T" (pre-neck), "e_G","e_S","e_T"
/// (neck), losses "L_G","L_S","L_T","tri","L_PT","J_ID","J", and per stream
/// "stream<k>.F", "stream<k>.attended", "stream<k>.spatial",
/// "stream<k>.student_map", "stream<k>.teacher_map".
class Pmnet {
public:
    Pmnet(const PmnetConfig& config, std::uint64_t seed);

    const PmnetConfig& config() const { return config_; }
    const ad::Graph& graph() const { return graph_; }
    ad::ParameterStore<float>& params() { return params_; }
    const ad::ParameterStore<float>& params() const { return params_; }

    /// Eval-mode features. Teachers are computed iff masks are given.
    FeatureBundle infer(std::span<const vision::RgbImage> images,
                        std::optional<std::span<const panet::PartMaskSet>> masks = std::nullopt) const;

    /// HUL task weights 1/sigma^2 (the fixed weights when HUL is off).
    std::array<double, 3> task_weights() const;

    ad::TensorMap to_tensor_map() const;
    static Pmnet from_tensor_map(const ad::TensorMap& tensors);

    static constexpr const char* kHulParam = "hul.log_var";

private:
    void build(std::uint64_t seed);

    PmnetConfig config_;
    ad::Graph graph_;
    ad::ParameterStore<float> params_;
};

}  // namespace pman::pmnet
