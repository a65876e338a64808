#include "pman/train/augment.hpp"

#include <cmath>

#include "pman/error.hpp"

namespace pman::train {

namespace {

void check_prob(double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string("augment: ") + what + " must be in [0,1]");
}

struct Rect {
    int x, y, w, h;
};

// Area fraction in [lo, hi], log-uniform aspect in [a_lo, a_hi].
bool place(int W, int H, double lo, double hi, double a_lo, double a_hi, std::mt19937_64& rng, Rect& r) {
    std::uniform_real_distribution<double> area(lo, hi), aspect(std::log(a_lo), std::log(a_hi));
    for (int attempt = 0; attempt < 100; ++attempt) {
        const double target = area(rng) * W * H;
        const double ar = std::exp(aspect(rng));
        const int h = static_cast<int>(std::lround(std::sqrt(target * ar)));
        const int w = static_cast<int>(std::lround(std::sqrt(target / ar)));
        if (w < 1 || h < 1 || w > W || h > H) continue;
        const double frac = static_cast<double>(w) * h / (static_cast<double>(W) * H);
        if (frac < lo || frac > hi) continue;
        r.w = w;
        r.h = h;
        r.x = std::uniform_int_distribution<int>(0, W - w)(rng);
        r.y = std::uniform_int_distribution<int>(0, H - h)(rng);
        return true;
    }
    return false;
}

}  // namespace

void AugmentConfig::validate() const {
    check_prob(flip, "flip probability");
    check_prob(erase, "erase probability");
    check_prob(occlusion_prob, "occlusion probability");
}

vision::RgbImage occlusion_augment(const vision::RgbImage& image, double prob, std::uint64_t seed) {
    check_prob(prob, "occlusion probability");
    std::mt19937_64 rng(seed);
    vision::RgbImage out = image;
    if (!(std::uniform_real_distribution<double>(0.0, 1.0)(rng) < prob)) return out;
    Rect r{};
    if (!place(image.width, image.height, 0.10, 0.35, 0.3, 3.3, rng, r)) return out;
    std::uniform_int_distribution<int> byte(0, 255);
    const int rgb[3] = {byte(rng), byte(rng), byte(rng)};
    for (int y = r.y; y < r.y + r.h; ++y)
        for (int x = r.x; x < r.x + r.w; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = static_cast<std::uint8_t>(rgb[c]);
    return out;
}

bool random_erase(vision::RgbImage& image, std::mt19937_64& rng) {
    Rect r{};
    if (!place(image.width, image.height, 0.02, 0.33, 0.3, 3.3, rng, r)) return false;
    std::uniform_int_distribution<int> byte(0, 255);
    for (int y = r.y; y < r.y + r.h; ++y)
        for (int x = r.x; x < r.x + r.w; ++x)
            for (int c = 0; c < 3; ++c) image.at(x, y, c) = static_cast<std::uint8_t>(byte(rng));
    return true;
}

Augmented augment(const vision::RgbImage& image, const AugmentConfig& config, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Augmented a;
    a.flipped = u(rng) < config.flip;
    a.image = a.flipped ? vision::flip_horizontal(image) : image;
    if (u(rng) < config.erase) random_erase(a.image, rng);
    const std::uint64_t occ_seed = rng();
    if (config.occlusion) a.image = occlusion_augment(a.image, config.occlusion_prob, occ_seed);
    return a;
}

}  // namespace pman::train
