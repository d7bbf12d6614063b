#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace direid {

/// Fixed image geometry for an experiment. The default keeps the 2:1
/// pedestrian aspect ratio at a CPU-friendly size; 256x128 is a config option.
struct Geometry {
    int height = 64;
    int width = 32;
    int channels = 3;

    std::size_t size() const { return static_cast<std::size_t>(height) * width * channels; }
    friend bool operator==(const Geometry&, const Geometry&) = default;
};

/// H x W x C image with interleaved channels and values in [0, 1].
/// Producers clamp; consumers may assume the range.
class Image {
public:
    Image() = default;
    Image(int height, int width, int channels = 3, float fill = 0.0f);
    explicit Image(Geometry g, float fill = 0.0f) : Image(g.height, g.width, g.channels, fill) {}

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    Geometry geometry() const { return {height_, width_, channels_}; }
    bool empty() const { return values_.empty(); }

    float& at(int y, int x, int c) { return values_[index(y, x, c)]; }
    float at(int y, int x, int c) const { return values_[index(y, x, c)]; }

    std::span<float> values() { return values_; }
    std::span<const float> values() const { return values_; }

    double mean() const;
    void clamp01();

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<float> values_;
};

/// 8-bit PNG input; gray/alpha/palette are expanded to RGB, values scaled by 1/255.
Image read_png(const std::filesystem::path& path);

/// 8-bit RGB PNG output; values are rounded from [0, 1] to [0, 255].
void write_png(const std::filesystem::path& path, const Image& image);

/// Rounds through the 8-bit representation used on disk.
Image quantize8(const Image& image);

}  // namespace direid
