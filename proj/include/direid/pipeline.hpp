#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "direid/config.hpp"
#include "direid/data.hpp"
#include "direid/training.hpp"

namespace direid {

/// Training corpus (with simulated capture degradations) and held-out test
/// identities of one experiment.
struct ExperimentData {
    DatasetManifest full;
    IdentitySplit split;
    Corpus train;
};

/// Loads cfg.manifest, or renders the synthetic corpus described by
/// cfg.synthetic under <output_dir>/data when no manifest is configured.
ExperimentData prepare_data(const ExperimentConfig& cfg);

/// Network config with the classifier sized to the training identities.
NetworkConfig network_for(const ExperimentConfig& cfg, const ExperimentData& data);

/// Each stage runs in <output_dir>/stage{S}-<hash of its inputs>; a finished
/// stage directory is reused instead of retrained.
std::filesystem::path run_pretrain(const ExperimentConfig& cfg, const ExperimentData& data);
std::filesystem::path run_ddgan(const ExperimentConfig& cfg, const ExperimentData& data,
                                const std::filesystem::path& stage0);
std::filesystem::path run_dfen(const ExperimentConfig& cfg, const ExperimentData& data,
                               const std::filesystem::path& stage0,
                               const std::optional<std::filesystem::path>& stage1);

struct MetricsReport {
    std::string variant;
    std::vector<double> cmc;  // rank-1 .. rank-K
    double map = 0.0;
    int trials = 0;
    std::uint64_t seed = 0;
    std::string checkpoint;

    nlohmann::json to_json() const;
    /// IoError naming `source` when a field is missing or mistyped.
    static MetricsReport from_json(const nlohmann::json& doc, const std::string& source);
};

/// Degraded-query / clean-gallery single-shot evaluation on the test
/// identities (cfg.eval selects split, variant, attention, K and trials).
MetricsReport evaluate_checkpoint(const ExperimentConfig& cfg, const DatasetManifest& test,
                                  const std::filesystem::path& checkpoint);

void write_metrics(const std::filesystem::path& path, const MetricsReport& report);
MetricsReport read_metrics(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Ablations

inline constexpr std::string_view kAblationPresets[] = {"full",      "no-dil",    "no-multiscale",
                                                        "no-attention", "finv-only", "fsen-only"};

/// The experiment config of a preset (ParameterError for unknown names).
ExperimentConfig preset_config(const ExperimentConfig& base, std::string_view preset);

/// Whether the preset trains Stage 1.
bool preset_uses_ddgan(std::string_view preset);

/// Runs every stage the preset needs and evaluates it; the report is also
/// written to <output_dir>/metrics-<preset>.json.
MetricsReport run_ablation(const ExperimentConfig& base, std::string_view preset);

/// Aligned table of rank-1/5/10 and mAP per report, with deltas against the
/// first one. ParameterError on an empty list.
std::string render_report(const std::vector<std::pair<std::string, MetricsReport>>& runs);

// ---------------------------------------------------------------------------
// Held-out probes of a Stage-1 model

/// Clean/degraded pairs built from `images` with parameters drawn from `kind`.
struct ProbePairs {
    std::vector<Image> clean;
    std::vector<Image> degraded;
};
ProbePairs make_probe_pairs(const std::vector<Image>& images, const DegradationKind& kind, std::uint64_t seed);

/// Fraction of pairs where D_d scores the degraded member strictly higher.
double degradation_ranking_accuracy(Networks& nets, const ProbePairs& pairs);

/// Mean cosine similarity of E_c pooled features over the pairs.
double content_invariance(Networks& nets, const ProbePairs& pairs);

}  // namespace direid
