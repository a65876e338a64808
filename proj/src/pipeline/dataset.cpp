#include "pman/pipeline/dataset.hpp"

#include <charconv>
#include <fstream>
#include <map>

#include "pman/error.hpp"
#include "pman/vision/png_io.hpp"

namespace pman::pipeline {

Sample parse_sample_name(const std::string& stem) {
    Sample s;
    s.name = stem;
    int* fields[3] = {&s.identity, &s.camera, &s.index};
    const char* p = stem.data();
    const char* end = stem.data() + stem.size();
    for (int i = 0; i < 3; ++i) {
        const auto r = std::from_chars(p, end, *fields[i]);
        if (r.ec != std::errc() || *fields[i] < 0) throw ValidationError("bad image name '" + stem + "'");
        p = r.ptr;
        if (i < 2) {
            if (p == end || *p != '_') throw ValidationError("bad image name '" + stem + "'");
            ++p;
        }
    }
    if (p != end) throw ValidationError("bad image name '" + stem + "'");
    return s;
}

namespace {

std::vector<Sample> read_split(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ValidationError("missing split file " + file.string());
    std::vector<Sample> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::filesystem::path p(line);
        if (p.extension() != ".png") throw ValidationError("split entry '" + line + "' is not a .png file");
        out.push_back(parse_sample_name(p.stem().string()));
    }
    return out;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root)) throw ValidationError("dataset directory " + root.string() + " not found");
    Dataset d;
    d.root = root;
    d.train = read_split(root / "train.txt");
    d.query = read_split(root / "query.txt");
    d.gallery = read_split(root / "gallery.txt");
    if (d.train.empty()) throw ValidationError("dataset has no training images");
    for (const auto* split : {&d.train, &d.query, &d.gallery})
        for (const auto& s : *split)
            if (!std::filesystem::exists(d.path_of(s))) throw ValidationError("missing image " + d.path_of(s).string());
    return d;
}

std::vector<vision::RgbImage> Dataset::load_images(const std::vector<Sample>& samples) const {
    std::vector<vision::RgbImage> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(vision::read_png(path_of(s)));
    return out;
}

train::TrainingSet training_set(const Dataset& data) {
    std::map<int, int> label_of;
    for (const auto& s : data.train) label_of.emplace(s.identity, 0);
    int next = 0;
    for (auto& [id, label] : label_of) label = next++;
    train::TrainingSet t;
    t.num_classes = next;
    t.images = data.load_images(data.train);
    for (const auto& s : data.train) {
        t.ids.push_back(s.name);
        t.labels.push_back(label_of.at(s.identity));
    }
    t.validate();
    return t;
}

}  // namespace pman::pipeline
