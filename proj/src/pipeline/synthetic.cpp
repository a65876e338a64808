#include "pman/pipeline/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "pman/error.hpp"
#include "pman/vision/png_io.hpp"

namespace pman::pipeline {

using vision::BBox;
using Rgb = std::array<double, 3>;

namespace {

constexpr Rgb kBackground{96.0, 128.0, 96.0};

double dist(const Rgb& a, const Rgb& b) {
    return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

Rgb pick_color(std::mt19937_64& rng, const std::vector<std::pair<Rgb, double>>& avoid) {
    std::uniform_real_distribution<double> u(0.0, 255.0);
    Rgb best{};
    double best_slack = -1e9;
    for (int attempt = 0; attempt < 400; ++attempt) {
        const Rgb c{u(rng), u(rng), u(rng)};
        double slack = 1e9;
        for (const auto& [a, d] : avoid) slack = std::min(slack, dist(c, a) - d);
        if (slack >= 0.0) return c;
        if (slack > best_slack) {
            best_slack = slack;
            best = c;
        }
    }
    return best;
}

struct Look {
    Rgb chassis, roof, window, lights, mark;
    double mark_u, mark_v;  // chassis-relative centre
};

// Chassis colours are shared by groups of identities; parts and marks
// tell them apart.
std::vector<Look> make_looks(const SyntheticSpec& spec, std::mt19937_64& rng) {
    const int groups = std::max(2, spec.identities / 4);
    std::vector<Rgb> palette;
    for (int g = 0; g < groups; ++g) {
        std::vector<std::pair<Rgb, double>> avoid{{kBackground, 130.0}};
        for (const auto& p : palette) avoid.push_back({p, 70.0});
        palette.push_back(pick_color(rng, avoid));
    }
    std::vector<Look> looks;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < spec.identities; ++i) {
        Look l;
        l.chassis = palette[static_cast<std::size_t>(i % groups)];
        const std::vector<std::pair<Rgb, double>> avoid{{l.chassis, 90.0}, {kBackground, 60.0}};
        l.roof = pick_color(rng, avoid);
        l.window = pick_color(rng, avoid);
        l.lights = pick_color(rng, avoid);
        l.mark = pick_color(rng, avoid);
        l.mark_u = 0.2 + 0.6 * u(rng);
        l.mark_v = 0.3 + 0.6 * u(rng);
        looks.push_back(l);
    }
    return looks;
}

BBox sub_box(const BBox& c, double u0, double v0, double u1, double v1) {
    const double w = c.width(), h = c.height();
    BBox b{c.x0 + static_cast<int>(std::lround(u0 * w)), c.y0 + static_cast<int>(std::lround(v0 * h)),
           c.x0 + static_cast<int>(std::lround(u1 * w)) - 1, c.y0 + static_cast<int>(std::lround(v1 * h)) - 1};
    b.x1 = std::max(b.x1, b.x0);
    b.y1 = std::max(b.y1, b.y0);
    return b;
}

void fill(std::vector<double>& canvas, int S, const BBox& b, const Rgb& c) {
    for (int y = std::max(0, b.y0); y <= std::min(S - 1, b.y1); ++y)
        for (int x = std::max(0, b.x0); x <= std::min(S - 1, b.x1); ++x)
            for (int k = 0; k < 3; ++k) canvas[(static_cast<std::size_t>(y) * S + x) * 3 + k] = c[k];
}

Rgb lit(const Rgb& c, double gain) { return {c[0] * gain, c[1] * gain, c[2] * gain}; }

BBox mirror(const BBox& b, int S) { return {S - 1 - b.x1, b.y0, S - 1 - b.x0, b.y1}; }

}  // namespace

std::array<std::uint8_t, 3> background_color() {
    return {static_cast<std::uint8_t>(kBackground[0]), static_cast<std::uint8_t>(kBackground[1]),
            static_cast<std::uint8_t>(kBackground[2])};
}

std::string image_name(int identity, int camera, int index) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%04d_%02d_%03d", identity, camera, index);
    return buf;
}

std::vector<SyntheticImage> render_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    std::mt19937_64 look_rng(spec.seed);
    const auto looks = make_looks(spec, look_rng);
    const int S = spec.image_size;
    const int held = spec.held_out_per_identity();
    const int n = spec.images_per_identity;

    std::vector<SyntheticImage> out;
    for (int id = 0; id < spec.identities; ++id) {
        for (int i = 0; i < n; ++i) {
            std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(id) * 1000003ULL +
                                static_cast<std::uint64_t>(i) + 1);
            std::uniform_real_distribution<double> u(-1.0, 1.0);
            std::normal_distribution<double> noise(0.0, 1.0);
            SyntheticImage img;
            img.identity = id;
            img.camera = i % spec.cameras;
            img.index = i;
            img.split = i < n - 2 * held ? Split::Train : (i < n - held ? Split::Query : Split::Gallery);
            img.name = image_name(id, img.camera, i);

            std::vector<double> canvas(static_cast<std::size_t>(S) * S * 3);
            for (std::size_t p = 0; p < canvas.size(); p += 3)
                for (int k = 0; k < 3; ++k) canvas[p + static_cast<std::size_t>(k)] = kBackground[k];
            const int blobs = static_cast<int>(std::lround(spec.clutter * 12));
            std::uniform_int_distribution<int> pos(0, S - 1), ext(3, std::max(4, S / 4));
            std::uniform_real_distribution<double> byte(0.0, 255.0);
            for (int c = 0; c < blobs; ++c) {
                const int x = pos(rng), y = pos(rng);
                fill(canvas, S, {x, y, x + ext(rng), y + ext(rng)}, {byte(rng), byte(rng), byte(rng)});
            }

            const double scale = 1.0 + spec.scale_jitter * u(rng);
            const double cw = 0.58 * S * scale, ch = 0.66 * S * scale;
            const double cx = S / 2.0 + spec.shift_jitter * S * u(rng);
            const double cy = S / 2.0 + spec.shift_jitter * S * u(rng);
            const BBox chassis{static_cast<int>(std::lround(cx - cw / 2)), static_cast<int>(std::lround(cy - ch / 2)),
                               static_cast<int>(std::lround(cx + cw / 2)) - 1,
                               static_cast<int>(std::lround(cy + ch / 2)) - 1};
            const auto& look = looks[static_cast<std::size_t>(id)];
            const double camera_gain = 1.0 + 0.5 * spec.illumination_jitter * std::sin(1.7 * img.camera + 0.3);
            const double gain = camera_gain * (1.0 + 0.5 * spec.illumination_jitter * u(rng));

            const BBox roof = sub_box(chassis, 0.18, 0.06, 0.82, 0.26);
            const BBox window = sub_box(chassis, 0.10, 0.34, 0.90, 0.56);
            const BBox lamp_l = sub_box(chassis, 0.06, 0.68, 0.30, 0.84);
            const BBox lamp_r = sub_box(chassis, 0.70, 0.68, 0.94, 0.84);
            const int side = std::max(2, static_cast<int>(std::lround(0.16 * std::min(chassis.width(), chassis.height()))));
            const int mx = chassis.x0 + static_cast<int>(std::lround(look.mark_u * chassis.width())) - side / 2;
            const int my = chassis.y0 + static_cast<int>(std::lround(look.mark_v * chassis.height())) - side / 2;
            BBox mark{std::clamp(mx, chassis.x0, chassis.x1 - side + 1), std::clamp(my, chassis.y0, chassis.y1 - side + 1), 0, 0};
            mark.x1 = mark.x0 + side - 1;
            mark.y1 = mark.y0 + side - 1;

            std::vector<double> car(canvas.size(), -1.0);
            fill(car, S, chassis, lit(look.chassis, gain));
            fill(car, S, roof, lit(look.roof, gain));
            fill(car, S, window, lit(look.window, gain));
            fill(car, S, lamp_l, lit(look.lights, gain));
            fill(car, S, lamp_r, lit(look.lights, gain));
            fill(car, S, mark, lit(look.mark, gain));

            const bool mirrored = spec.flip && (img.camera % 2 == 1);
            img.image = vision::RgbImage(S, S);
            img.foreground = vision::BinaryMask(S, S, false);
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x) {
                    const int sx = mirrored ? S - 1 - x : x;
                    const std::size_t src = (static_cast<std::size_t>(y) * S + sx) * 3;
                    const std::size_t dst = (static_cast<std::size_t>(y) * S + x) * 3;
                    const bool on_car = car[src] >= 0.0;
                    if (on_car) img.foreground.set(x, y, true);
                    for (int k = 0; k < 3; ++k) {
                        const double v = (on_car ? car[src + k] : canvas[dst + k]) + spec.noise * noise(rng);
                        img.image.pixels[dst + static_cast<std::size_t>(k)] =
                            static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
                    }
                }
            img.chassis = mirrored ? mirror(chassis, S) : chassis;
            const BBox lamps{lamp_l.x0, lamp_l.y0, lamp_r.x1, lamp_r.y1};
            img.parts = {mirrored ? mirror(roof, S) : roof, mirrored ? mirror(window, S) : window,
                         mirrored ? mirror(lamps, S) : lamps};
            img.mark = mirrored ? mirror(mark, S) : mark;
            out.push_back(std::move(img));
        }
    }
    return out;
}

void write_synthetic_dataset(const SyntheticSpec& spec, const std::filesystem::path& out, bool force) {
    namespace fs = std::filesystem;
    if (fs::exists(out) && !fs::is_directory(out)) throw ValidationError(out.string() + " is not a directory");
    if (fs::exists(out) && !fs::is_empty(out) && !force) {
        throw ValidationError("output directory " + out.string() + " is not empty (use --force)");
    }
    const auto images = render_synthetic(spec);
    fs::create_directories(out);
    std::ofstream train(out / "train.txt"), query(out / "query.txt"), gallery(out / "gallery.txt");
    if (!train || !query || !gallery) throw ValidationError("cannot write split files in " + out.string());
    for (const auto& img : images) {
        vision::write_png(out / (img.name + ".png"), img.image);
        auto& f = img.split == Split::Train ? train : (img.split == Split::Query ? query : gallery);
        f << img.name << ".png\n";
    }
}

}  // namespace pman::pipeline
