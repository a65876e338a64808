#include "pman/vision/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>

#include "pman/error.hpp"

namespace pman::vision {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct Decoded {
    int width = 0, height = 0;
    std::vector<std::uint8_t> rgb;
};

Decoded decode(const std::filesystem::path& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw ValidationError("cannot open '" + path.string() + "'");
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_stdio(&image, f.get())) {
        throw FormatError("'" + path.string() + "': " + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    Decoded d;
    d.width = static_cast<int>(image.width);
    d.height = static_cast<int>(image.height);
    d.rgb.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, d.rgb.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw FormatError("'" + path.string() + "': " + msg);
    }
    return d;
}

void encode(const std::filesystem::path& path, int width, int height, std::uint32_t format,
            const std::uint8_t* data) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = format;
    if (!png_image_write_to_file(&image, path.c_str(), 0, data, 0, nullptr)) {
        throw ValidationError("cannot write '" + path.string() + "': " + image.message);
    }
}

}  // namespace

RgbImage read_png(const std::filesystem::path& path) {
    auto d = decode(path);
    RgbImage img;
    img.width = d.width;
    img.height = d.height;
    img.pixels = std::move(d.rgb);
    return img;
}

void write_png(const std::filesystem::path& path, const RgbImage& img) {
    img.validate();
    encode(path, img.width, img.height, PNG_FORMAT_RGB, img.pixels.data());
}

BinaryMask read_mask_png(const std::filesystem::path& path) {
    auto d = decode(path);
    BinaryMask m(d.width, d.height);
    for (std::size_t i = 0; i < m.bits.size(); ++i) {
        m.bits[i] = (d.rgb[i * 3] | d.rgb[i * 3 + 1] | d.rgb[i * 3 + 2]) != 0;
    }
    return m;
}

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask) {
    std::vector<std::uint8_t> gray(mask.bits.size());
    for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = mask.bits[i] ? 255 : 0;
    encode(path, mask.width, mask.height, PNG_FORMAT_GRAY, gray.data());
}

void write_heatmap_png(const std::filesystem::path& path, std::span<const float> map, int width,
                       int height) {
    if (map.size() != static_cast<std::size_t>(width) * height) {
        throw ShapeError("heatmap: size mismatch");
    }
    std::vector<std::uint8_t> gray(map.size(), 0);
    if (!map.empty()) {
        const auto [lo, hi] = std::minmax_element(map.begin(), map.end());
        const float span = *hi - *lo;
        for (std::size_t i = 0; i < map.size(); ++i) {
            const float t = span > 0 ? (map[i] - *lo) / span : 0.0f;
            gray[i] = static_cast<std::uint8_t>(std::lround(t * 255.0f));
        }
    }
    encode(path, width, height, PNG_FORMAT_GRAY, gray.data());
}

}  // namespace pman::vision
