#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pman/train/schedule.hpp"
#include "pman/vision/image.hpp"

namespace pman::pipeline {

struct Sample {
    std::string name;  // file stem
    int identity = 0;
    int camera = 0;
    int index = 0;
};

/// Parses {identity}_{camera}_{index}; throws ValidationError otherwise.
Sample parse_sample_name(const std::string& stem);

/// A directory of PNGs with train.txt, query.txt and gallery.txt splits.
struct Dataset {
    std::filesystem::path root;
    std::vector<Sample> train, query, gallery;

    std::filesystem::path path_of(const Sample& s) const { return root / (s.name + ".png"); }
    std::vector<vision::RgbImage> load_images(const std::vector<Sample>& samples) const;
};

Dataset load_dataset(const std::filesystem::path& root);

/// Training images with labels renumbered to [0, identities).
train::TrainingSet training_set(const Dataset& data);

}  // namespace pman::pipeline
