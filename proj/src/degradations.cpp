#include "direid/degradations.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "direid/error.hpp"

namespace direid {

std::string_view to_string(DegradationType type) {
    return type == DegradationType::resolution ? "resolution" : "illumination";
}

DegradationType parse_degradation_type(std::string_view name) {
    if (name == "resolution") return DegradationType::resolution;
    if (name == "illumination") return DegradationType::illumination;
    throw ParameterError("unknown degradation kind '" + std::string(name) + "'");
}

DegradationKind DegradationKind::defaults(DegradationType type) {
    if (type == DegradationType::resolution) return {type, 2.0, 4.0};
    return {type, 2.0, 3.5};
}

Image gamma_degrade(const Image& x, double gamma) {
    if (!(gamma > 0.0)) throw ParameterError("gamma must be positive");
    Image out = x;
    for (float& v : out.values()) {
        v = static_cast<float>(std::pow(static_cast<double>(v), gamma));
    }
    out.clamp01();
    return out;
}

namespace {

// Row-stochastic weights mapping `in` samples onto `out` samples: each output
// cell covers [o * s, (o + 1) * s) of the input axis with s = in / out.
std::vector<std::vector<std::pair<int, double>>> area_weights(int in, int out) {
    const double scale = static_cast<double>(in) / out;
    std::vector<std::vector<std::pair<int, double>>> weights(out);
    for (int o = 0; o < out; ++o) {
        const double begin = o * scale;
        const double end = (o + 1) * scale;
        for (int i = static_cast<int>(std::floor(begin)); i < in && i < end; ++i) {
            const double overlap = std::min<double>(end, i + 1) - std::max<double>(begin, i);
            if (overlap > 0.0) weights[o].emplace_back(i, overlap / scale);
        }
    }
    return weights;
}

struct LinearTap {
    int i0, i1;
    double frac;
};

std::vector<LinearTap> bilinear_taps(int in, int out) {
    const double scale = static_cast<double>(in) / out;
    std::vector<LinearTap> taps(out);
    for (int o = 0; o < out; ++o) {
        const double src = std::max(0.0, (o + 0.5) * scale - 0.5);
        const int i0 = std::min(static_cast<int>(std::floor(src)), in - 1);
        const int i1 = std::min(i0 + 1, in - 1);
        taps[o] = {i0, i1, src - i0};
    }
    return taps;
}

}  // namespace

Image resize_area(const Image& x, int height, int width) {
    if (height <= 0 || width <= 0) throw ParameterError("resize target must be positive");
    const auto wy = area_weights(x.height(), height);
    const auto wx = area_weights(x.width(), width);
    const int C = x.channels();

    // Rows first, accumulating in double.
    std::vector<double> tmp(static_cast<std::size_t>(height) * x.width() * C, 0.0);
    for (int oy = 0; oy < height; ++oy) {
        for (auto [iy, w] : wy[oy]) {
            for (int ix = 0; ix < x.width(); ++ix) {
                for (int c = 0; c < C; ++c) {
                    tmp[(static_cast<std::size_t>(oy) * x.width() + ix) * C + c] += w * x.at(iy, ix, c);
                }
            }
        }
    }
    Image out(height, width, C);
    for (int oy = 0; oy < height; ++oy) {
        for (int ox = 0; ox < width; ++ox) {
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (auto [ix, w] : wx[ox]) acc += w * tmp[(static_cast<std::size_t>(oy) * x.width() + ix) * C + c];
                out.at(oy, ox, c) = static_cast<float>(acc);
            }
        }
    }
    out.clamp01();
    return out;
}

Image resize_bilinear(const Image& x, int height, int width) {
    if (height <= 0 || width <= 0) throw ParameterError("resize target must be positive");
    const auto ty = bilinear_taps(x.height(), height);
    const auto tx = bilinear_taps(x.width(), width);
    Image out(height, width, x.channels());
    for (int oy = 0; oy < height; ++oy) {
        const auto& a = ty[oy];
        for (int ox = 0; ox < width; ++ox) {
            const auto& b = tx[ox];
            for (int c = 0; c < x.channels(); ++c) {
                const double top = (1.0 - b.frac) * x.at(a.i0, b.i0, c) + b.frac * x.at(a.i0, b.i1, c);
                const double bottom = (1.0 - b.frac) * x.at(a.i1, b.i0, c) + b.frac * x.at(a.i1, b.i1, c);
                out.at(oy, ox, c) = static_cast<float>((1.0 - a.frac) * top + a.frac * bottom);
            }
        }
    }
    out.clamp01();
    return out;
}

Image resolution_degrade(const Image& x, double ratio) {
    if (!(ratio >= 1.0)) throw ParameterError("resolution ratio must be >= 1");
    const int h = static_cast<int>(std::ceil(x.height() / ratio));
    const int w = static_cast<int>(std::ceil(x.width() / ratio));
    if (h == x.height() && w == x.width()) return x;
    return resize_bilinear(resize_area(x, h, w), x.height(), x.width());
}

Image apply_degradation(const Image& x, DegradationType type, double param) {
    return type == DegradationType::resolution ? resolution_degrade(x, param) : gamma_degrade(x, param);
}

double sample_degradation_param(const DegradationKind& kind, Rng& rng) {
    return rng.uniform(kind.lo, kind.hi);
}

SelfDegradedPair make_self_degraded_pair(const Image& x, int identity, const DegradationKind& kind, Rng& rng) {
    const double param = sample_degradation_param(kind, rng);
    return {x, apply_degradation(x, kind.type, param), identity, kind.type, param};
}

namespace {

template <class DrawDegradation>
DatasetSplit partition_by_camera(const DatasetManifest& manifest, std::optional<int> query_camera,
                                 DrawDegradation&& draw) {
    const auto cams = manifest.cameras();
    if (cams.size() < 2) throw ProtocolError("split construction needs at least two cameras");
    const int qcam = query_camera.value_or(cams.front());
    if (std::find(cams.begin(), cams.end(), qcam) == cams.end()) {
        throw ProtocolError("query camera " + std::to_string(qcam) + " not present in manifest");
    }
    DatasetSplit split;
    split.query.root = split.gallery.root = manifest.root;
    split.query.original_ids = split.gallery.original_ids = manifest.original_ids;
    for (const auto& e : manifest.entries) {
        if (e.camera == qcam) {
            split.query.entries.push_back(e);
            split.query_degradation.push_back(draw());
        } else {
            split.gallery.entries.push_back(e);
        }
    }
    validate_split(split);
    return split;
}

}  // namespace

DatasetSplit build_mlr_split(const DatasetManifest& manifest, Rng& rng, std::optional<int> query_camera) {
    return partition_by_camera(manifest, query_camera, [&rng] {
        return QueryDegradation{DegradationType::resolution, static_cast<double>(2 + rng.below(3))};
    });
}

DatasetSplit build_degraded_split(const DatasetManifest& manifest, const DegradationKind& kind, Rng& rng,
                                  std::optional<int> query_camera) {
    return partition_by_camera(manifest, query_camera, [&] {
        return QueryDegradation{kind.type, sample_degradation_param(kind, rng)};
    });
}

void validate_split(const DatasetSplit& split) {
    if (split.query.entries.size() != split.query_degradation.size()) {
        throw ProtocolError("split has mismatched query degradation records");
    }
    std::set<int> gallery_ids;
    for (const auto& e : split.gallery.entries) gallery_ids.insert(e.identity);
    for (const auto& e : split.query.entries) {
        if (!gallery_ids.contains(e.identity)) {
            throw ProtocolError("query identity " + std::to_string(e.identity) + " has no gallery image");
        }
    }
}

std::vector<Image> load_query_images(const DatasetSplit& split, const Geometry& geometry) {
    auto images = load_images(split.query, geometry);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto& d = split.query_degradation[i];
        images[i] = apply_degradation(images[i], d.type, d.param);
    }
    return images;
}

}  // namespace direid
