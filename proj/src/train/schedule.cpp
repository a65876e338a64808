#include "pman/train/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "pman/error.hpp"

namespace pman::train {

void TrainingSet::validate() const {
    if (images.empty()) throw ValidationError("training set is empty");
    if (labels.size() != images.size() || ids.size() != images.size()) {
        throw ValidationError("training set: " + std::to_string(images.size()) + " images, " +
                              std::to_string(labels.size()) + " labels, " + std::to_string(ids.size()) + " ids");
    }
    for (int l : labels)
        if (l < 0 || l >= num_classes) throw ValidationError("training set: label out of range");
    for (const auto& img : images) {
        img.validate();
        if (img.width != images.front().width || img.height != images.front().height) {
            throw ValidationError("training set: images differ in size");
        }
    }
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(seed) ^ a) ^ (b * 0x2545f4914f6cdd1dULL));
}

double warmup_lr(double base, std::size_t step, std::size_t total, double fraction) {
    const double warm = std::ceil(fraction * static_cast<double>(total));
    if (warm <= 0.0) return base;
    return base * std::min(1.0, static_cast<double>(step + 1) / warm);
}

ad::Tensor<float> label_tensor(std::span<const int> labels) {
    ad::Tensor<float> t({labels.size()});
    for (std::size_t i = 0; i < labels.size(); ++i) t[i] = static_cast<float>(labels[i]);
    return t;
}

}  // namespace pman::train
