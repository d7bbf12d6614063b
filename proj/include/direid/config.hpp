#pragma once

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "direid/degradations.hpp"
#include "direid/features.hpp"
#include "direid/losses.hpp"
#include "direid/networks.hpp"
#include "direid/training.hpp"

namespace direid {

struct EvalConfig {
    std::string split = "degraded";  // "degraded" (configured kind) or "mlr"
    int max_rank = 20;
    int trials = 10;
    FeatureVariant variant = FeatureVariant::fused;
    bool attention = true;
    int query_camera = -1;  // -1: lowest camera id
};

struct SyntheticConfig {
    int identities = 100;
    int per_identity = 8;
    int cameras = 2;
};

/// Everything one experiment needs; serialised next to its outputs.
struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::filesystem::path output_dir = "runs/default";
    std::filesystem::path manifest;
    double train_fraction = 0.5;
    double capture_degradation_prob = 0.5;
    NetworkConfig network;
    DegradationKind degradation = DegradationKind::defaults(DegradationType::illumination);
    LossWeights weights;
    TrainConfig pretrain;
    TrainConfig ddgan;
    TrainConfig dfen;
    EvalConfig eval;
    SyntheticConfig synthetic;

    /// Stage config with the experiment-wide seed, degradation, weights and
    /// output directory filled in.
    TrainConfig stage_config(Stage stage) const;
};

ExperimentConfig default_experiment_config();

nlohmann::json to_json(const ExperimentConfig& cfg);

/// Strict: every key must exist in the default document (ConfigError naming
/// the offending dotted key otherwise). Missing keys keep their defaults.
ExperimentConfig from_json(const nlohmann::json& doc);

/// Applies `a.b.c=value` to a config document. The value is parsed as JSON
/// when possible and kept as a string otherwise. ConfigError for unknown keys
/// or a malformed assignment.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Defaults <- file (if non-empty) <- overrides, validated.
ExperimentConfig resolve_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);

}  // namespace direid
