#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "pman/panet/panet.hpp"
#include "pman/pmnet/pmnet.hpp"
#include "pman/train/train_panet.hpp"
#include "pman/train/train_pmnet.hpp"
#include "pman/vision/grabcut.hpp"

namespace pman::pipeline {

struct SyntheticSpec {
    int identities = 16;
    int images_per_identity = 16;
    int image_size = 64;
    int cameras = 4;
    /// 0 gives a plain background.
    double clutter = 0.0;
    double scale_jitter = 0.08;
    /// Fraction of the image size.
    double shift_jitter = 0.05;
    bool flip = true;
    double illumination_jitter = 0.15;
    double noise = 3.0;
    std::uint64_t seed = 1;

    /// Query and gallery images per identity (each).
    int held_out_per_identity() const { return std::max(1, images_per_identity / 8); }
    void validate() const;
};

struct GrabCutSettings {
    vision::GrabCutOptions options;
    /// Initial rectangle: the frame shrunk by this fraction per side.
    double margin = 0.0625;
};

struct EvalSettings {
    enum class Protocol { Veri, VehicleId };
    Protocol protocol = Protocol::Veri;
    /// Fusion weights; HUL weights from the checkpoint when unset.
    std::optional<std::array<double, 3>> lambda;
    int repeats = 10;
    std::uint64_t seed = 0;
};

struct RunConfig {
    SyntheticSpec synthetic;
    model::BackboneConfig backbone;
    panet::PanetConfig panet;
    train::PanetTrainConfig panet_training;
    GrabCutSettings grabcut;
    pmnet::PmnetConfig pmnet;
    train::PmnetTrainConfig training;
    double mask_threshold = 0.5;
    EvalSettings eval;

    void validate() const;
};

/// INI with sections synthetic, backbone, grabcut, panet, pmnet, training,
/// eval. Unknown sections or keys and malformed values are errors; missing
/// keys keep their defaults.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text);

/// Canonical text form; parse_config(to_ini(c)) reproduces c.
std::string to_ini(const RunConfig& config);

}  // namespace pman::pipeline
