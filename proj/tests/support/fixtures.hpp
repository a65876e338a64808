#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "pman/pipeline/config.hpp"

namespace pman::fixtures {

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::filesystem::path scratch(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("pman_" + name);
    std::filesystem::remove_all(p);
    return p;
}

/// 4 identities x 8 images at 32 px with a two-block backbone; trains in seconds.
inline pipeline::RunConfig tiny_run() {
    pipeline::RunConfig c;
    c.synthetic.identities = 4;
    c.synthetic.images_per_identity = 8;
    c.synthetic.image_size = 32;
    c.synthetic.seed = 3;
    c.backbone.stem_width = 4;
    c.backbone.widths = {8, 8};
    c.backbone.strides = {2, 1};
    c.grabcut.options.iters = 2;
    c.panet_training.epochs = 3;
    c.panet_training.batch_size = 8;
    c.pmnet.global_conv_width = 8;
    c.pmnet.global_dim = 8;
    c.pmnet.part_channels = 8;
    c.pmnet.stream_dim = 4;
    c.training.P = 2;
    c.training.Q = 4;
    c.training.epochs = 2;
    return c;
}

}  // namespace pman::fixtures
