#include "direid/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>

#include "direid/error.hpp"

namespace direid {

Image::Image(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
    if (height <= 0 || width <= 0 || channels <= 0) {
        throw ShapeError("image dimensions must be positive");
    }
    values_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

double Image::mean() const {
    if (values_.empty()) return 0.0;
    const double sum = std::accumulate(values_.begin(), values_.end(), 0.0);
    return sum / static_cast<double>(values_.size());
}

void Image::clamp01() {
    for (float& v : values_) v = std::clamp(v, 0.0f, 1.0f);
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t to_byte(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw IngestError("cannot open image: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IngestError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IngestError("malformed PNG: " + path.string());
    }
    png_init_io(png, file.get());
    png_read_info(png, info);

    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int height = static_cast<int>(png_get_image_height(png, info));
    const int width = static_cast<int>(png_get_image_width(png, info));
    const auto rowbytes = png_get_rowbytes(png, info);
    std::vector<std::uint8_t> buffer(rowbytes * height);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) rows[y] = buffer.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);

    if (rowbytes != static_cast<std::size_t>(width) * 3) {
        throw IngestError("unsupported PNG layout: " + path.string());
    }
    Image image(height, width, 3);
    auto out = image.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(buffer[i]) / 255.0f;
    return image;
}

void write_png(const std::filesystem::path& path, const Image& image) {
    if (image.channels() != 3) throw ShapeError("write_png expects 3 channels");
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw IoError("cannot write image: " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG encoding failed: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, image.width(), image.height(), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<std::uint8_t> row(static_cast<std::size_t>(image.width()) * 3);
    const auto values = image.values();
    for (int y = 0; y < image.height(); ++y) {
        for (std::size_t i = 0; i < row.size(); ++i) row[i] = to_byte(values[y * row.size() + i]);
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image quantize8(const Image& image) {
    Image out = image;
    for (float& v : out.values()) v = static_cast<float>(to_byte(v)) / 255.0f;
    return out;
}

}  // namespace direid
