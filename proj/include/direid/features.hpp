#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "direid/data.hpp"
#include "direid/networks.hpp"
#include "direid/retrieval.hpp"

namespace direid {

enum class FeatureVariant { fused, f_inv, f_sen_weighted };

std::string_view to_string(FeatureVariant v);
/// Accepts "fused", "f_inv", "f_sen_weighted"; ParameterError otherwise.
FeatureVariant parse_feature_variant(std::string_view name);

/// Evaluation-mode embeddings of `images`, one L2-normalised row each.
/// `attention` = false replaces the attention weights by ones.
FeatureMatrix extract_features(Networks& nets, std::span<const Image> images, std::span<const int> ids,
                               std::span<const int> cams, FeatureVariant variant, bool attention = true);

/// Same, before normalisation; rows are the raw selected features.
Matrix raw_features(Networks& nets, std::span<const Image> images, FeatureVariant variant, bool attention = true);

/// Loads a checkpoint into a fresh network and embeds the manifest's images.
FeatureMatrix extract_features(const std::filesystem::path& checkpoint, const DatasetManifest& manifest,
                               FeatureVariant variant, bool attention = true);

}  // namespace direid
