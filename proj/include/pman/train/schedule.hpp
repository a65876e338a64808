#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pman/ad/tensor.hpp"
#include "pman/vision/image.hpp"

namespace pman::train {

/// Images with contiguous class labels in [0, num_classes).
struct TrainingSet {
    std::vector<std::string> ids;
    std::vector<vision::RgbImage> images;
    std::vector<int> labels;
    int num_classes = 0;

    std::size_t size() const { return images.size(); }
    void validate() const;
};

/// Stable per-(seed, a, b) stream seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

/// Linear ramp over the first `warmup_fraction` of `total_steps`, then flat.
double warmup_lr(double base, std::size_t step, std::size_t total_steps, double warmup_fraction);

ad::Tensor<float> label_tensor(std::span<const int> labels);

}  // namespace pman::train
