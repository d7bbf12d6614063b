#pragma once

#include <torch/torch.h>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "direid/error.hpp"

namespace direid {

/// Weights of the self/cross generation objectives and of the identity
/// objective, plus the ranking and triplet margins.
struct LossWeights {
    double invc = 1.0;
    double recon = 10.0;
    double pre = 1.0;
    double real = 1.0;
    double deg = 1.0;
    double id = 1.0;
    double inv = 1.0;
    double sen = 1.0;
    double both = 1.0;
    double rank_margin = 0.5;
    double triplet_margin = 0.3;

    void validate() const;
};

enum class RankLabel : int { minus = -1, plus = 1 };

enum class AdversarialSide { discriminator, generator };

enum class Phase { self, cross, dfen };

/// Names of the terms each phase's objective is composed of, in order.
const std::vector<std::string>& phase_terms(Phase phase);

/// Mean |a - b| over content feature maps. Throws ShapeError on mismatch.
torch::Tensor invariable_content_loss(const torch::Tensor& a, const torch::Tensor& b);

/// Mean absolute pixel difference.
torch::Tensor reconstruction_loss(const torch::Tensor& generated, const torch::Tensor& target);

/// Mean |emb_gen - emb_ref| of identity embeddings.
torch::Tensor identity_preserving_loss(const torch::Tensor& emb_gen, const torch::Tensor& emb_ref);

/// Binary cross-entropy on patch logits, averaged over patches then scales.
/// Discriminator side: real -> 1, fake -> 0. Generator side: non-saturating
/// -log sigmoid(fake); `real_maps` is ignored and may be empty.
torch::Tensor reality_adversarial_loss(std::span<const torch::Tensor> real_maps,
                                       std::span<const torch::Tensor> fake_maps, AdversarialSide side);

/// max(0, (anchor - other) * gamma + margin), averaged over the batch.
/// `gamma` holds +1/-1 per pair; pairs with gamma == 0 are skipped and
/// contribute zero.
torch::Tensor degradation_ranking_loss(const torch::Tensor& anchor, const torch::Tensor& other,
                                       const torch::Tensor& gamma, double margin);

/// Scalar form of the hinge above.
double degradation_ranking_loss(double anchor, double other, RankLabel gamma, double margin);

/// -1 when score_i > score_k, +1 when score_i < score_k, empty on a tie.
std::optional<RankLabel> rank_label_from_scores(double score_i, double score_k);

/// Per-pair labels as a tensor of +1/-1/0 (0 marks a tie).
torch::Tensor rank_labels_from_scores(const torch::Tensor& score_i, const torch::Tensor& score_k);

/// Softmax cross-entropy averaged over rows. Throws ParameterError for labels
/// outside [0, num_classes).
torch::Tensor identification_loss(const torch::Tensor& logits, const torch::Tensor& labels);

/// Batch-hard triplet loss with Euclidean distances. Anchors without a
/// positive are excluded from the mean; throws SamplerError if no anchor has
/// one.
torch::Tensor triplet_hard_loss(const torch::Tensor& embeddings, const torch::Tensor& labels, double margin);

double weight_of(Phase phase, const std::string& term, const LossWeights& w);

/// Weighted sum of the phase's terms. Missing or unexpected terms throw
/// CompositionError.
template <class Value>
Value total_objective(Phase phase, const std::map<std::string, Value>& terms, const LossWeights& w) {
    const auto& names = phase_terms(phase);
    for (const auto& [name, value] : terms) {
        if (std::find(names.begin(), names.end(), name) == names.end()) {
            throw CompositionError("term '" + name + "' does not belong to this phase");
        }
    }
    std::optional<Value> total;
    for (const auto& name : names) {
        auto it = terms.find(name);
        if (it == terms.end()) throw CompositionError("missing loss term '" + name + "'");
        Value weighted = it->second * weight_of(phase, name, w);
        total = total ? Value(*total + weighted) : weighted;
    }
    return *total;
}

}  // namespace direid
