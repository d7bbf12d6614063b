#include "direid/features.hpp"

#include <cmath>

#include "direid/checkpoint.hpp"
#include "direid/error.hpp"

namespace direid {

std::string_view to_string(FeatureVariant v) {
    switch (v) {
        case FeatureVariant::fused: return "fused";
        case FeatureVariant::f_inv: return "f_inv";
        default: return "f_sen_weighted";
    }
}

FeatureVariant parse_feature_variant(std::string_view name) {
    if (name == "fused") return FeatureVariant::fused;
    if (name == "f_inv") return FeatureVariant::f_inv;
    if (name == "f_sen_weighted") return FeatureVariant::f_sen_weighted;
    throw ParameterError("unknown feature variant '" + std::string(name) + "'");
}

Matrix raw_features(Networks& nets, std::span<const Image> images, FeatureVariant variant, bool attention) {
    torch::NoGradGuard no_grad;
    nets->eval();
    const auto dtype = nets->parameters().front().scalar_type();
    Matrix out;
    constexpr std::size_t chunk = 64;
    for (std::size_t start = 0; start < images.size(); start += chunk) {
        const auto n = std::min(chunk, images.size() - start);
        auto x = to_tensor(images.subspan(start, n)).to(dtype);
        auto rep = nets->identity_representation(x, attention);
        torch::Tensor f = variant == FeatureVariant::fused   ? rep.fused
                          : variant == FeatureVariant::f_inv ? rep.f_inv
                                                             : rep.f_sen * rep.weights;
        f = f.to(torch::kFloat64).contiguous();
        if (out.cols == 0) out = Matrix(images.size(), static_cast<std::size_t>(f.size(1)));
        auto acc = f.accessor<double, 2>();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < out.cols; ++c) out(start + r, c) = acc[r][c];
    }
    return out;
}

FeatureMatrix extract_features(Networks& nets, std::span<const Image> images, std::span<const int> ids,
                               std::span<const int> cams, FeatureVariant variant, bool attention) {
    if (ids.size() != images.size() || cams.size() != images.size()) {
        throw ShapeError("extract_features: label count does not match image count");
    }
    FeatureMatrix fm;
    fm.features = raw_features(nets, images, variant, attention);
    fm.ids.assign(ids.begin(), ids.end());
    fm.cams.assign(cams.begin(), cams.end());
    for (std::size_t r = 0; r < fm.features.rows; ++r) {
        double norm = 0.0;
        for (std::size_t c = 0; c < fm.features.cols; ++c) norm += fm.features(r, c) * fm.features(r, c);
        norm = std::sqrt(norm);
        if (!std::isfinite(norm)) throw Error("non-finite feature row " + std::to_string(r));
        if (norm > 0.0)
            for (std::size_t c = 0; c < fm.features.cols; ++c) fm.features(r, c) /= norm;
    }
    return fm;
}

FeatureMatrix extract_features(const std::filesystem::path& checkpoint, const DatasetManifest& manifest,
                               FeatureVariant variant, bool attention) {
    const auto info = read_checkpoint_info(checkpoint);
    Networks nets(info.network);
    load_checkpoint(checkpoint, nets);
    const auto images = load_images(manifest, info.network.geometry);
    std::vector<int> ids, cams;
    for (const auto& e : manifest.entries) {
        ids.push_back(e.identity);
        cams.push_back(e.camera);
    }
    return extract_features(nets, images, ids, cams, variant, attention);
}

}  // namespace direid
