#include "direid/losses.hpp"

#include <algorithm>

namespace direid {

void LossWeights::validate() const {
    for (double v : {invc, recon, pre, real, deg, id, inv, sen, both}) {
        if (!(v >= 0.0)) throw ParameterError("loss weights must be non-negative");
    }
    if (!(rank_margin > 0.0)) throw ParameterError("ranking margin must be positive");
    if (!(triplet_margin > 0.0)) throw ParameterError("triplet margin must be positive");
}

const std::vector<std::string>& phase_terms(Phase phase) {
    static const std::vector<std::string> self{"invc", "recon", "pre", "real", "deg"};
    static const std::vector<std::string> cross{"id", "recon", "pre", "real", "deg"};
    static const std::vector<std::string> dfen{"inv", "sen", "both"};
    switch (phase) {
        case Phase::self: return self;
        case Phase::cross: return cross;
        default: return dfen;
    }
}

double weight_of(Phase phase, const std::string& term, const LossWeights& w) {
    if (phase == Phase::dfen) {
        if (term == "inv") return w.inv;
        if (term == "sen") return w.sen;
        if (term == "both") return w.both;
    } else {
        if (term == "invc" && phase == Phase::self) return w.invc;
        if (term == "id" && phase == Phase::cross) return w.id;
        if (term == "recon") return w.recon;
        if (term == "pre") return w.pre;
        if (term == "real") return w.real;
        if (term == "deg") return w.deg;
    }
    throw CompositionError("term '" + term + "' does not belong to this phase");
}

namespace {

torch::Tensor mean_abs_diff(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (a.sizes() != b.sizes()) throw ShapeError(std::string(what) + ": shape mismatch");
    return (a - b).abs().mean();
}

}  // namespace

torch::Tensor invariable_content_loss(const torch::Tensor& a, const torch::Tensor& b) {
    return mean_abs_diff(a, b, "invariable content loss");
}

torch::Tensor reconstruction_loss(const torch::Tensor& generated, const torch::Tensor& target) {
    return mean_abs_diff(generated, target, "reconstruction loss");
}

torch::Tensor identity_preserving_loss(const torch::Tensor& emb_gen, const torch::Tensor& emb_ref) {
    return mean_abs_diff(emb_gen, emb_ref, "identity preserving loss");
}

torch::Tensor reality_adversarial_loss(std::span<const torch::Tensor> real_maps,
                                       std::span<const torch::Tensor> fake_maps, AdversarialSide side) {
    if (fake_maps.empty()) throw ShapeError("adversarial loss needs at least one scale");
    namespace F = torch::nn::functional;
    torch::Tensor total;
    if (side == AdversarialSide::discriminator) {
        if (real_maps.size() != fake_maps.size()) throw ShapeError("adversarial loss: scale count mismatch");
        for (std::size_t s = 0; s < fake_maps.size(); ++s) {
            // -log sigmoid(r) = softplus(-r);  -log(1 - sigmoid(f)) = softplus(f)
            auto term = F::softplus(-real_maps[s]).mean() + F::softplus(fake_maps[s]).mean();
            total = total.defined() ? total + term : term;
        }
    } else {
        for (const auto& fake : fake_maps) {
            auto term = F::softplus(-fake).mean();
            total = total.defined() ? total + term : term;
        }
    }
    return total / static_cast<double>(fake_maps.size());
}

torch::Tensor degradation_ranking_loss(const torch::Tensor& anchor, const torch::Tensor& other,
                                       const torch::Tensor& gamma, double margin) {
    if (anchor.sizes() != other.sizes() || anchor.sizes() != gamma.sizes()) {
        throw ShapeError("ranking loss: shape mismatch");
    }
    auto hinge = torch::relu((anchor - other) * gamma + margin);
    return (hinge * (gamma != 0).to(hinge.dtype())).mean();
}

double degradation_ranking_loss(double anchor, double other, RankLabel gamma, double margin) {
    return std::max(0.0, (anchor - other) * static_cast<int>(gamma) + margin);
}

std::optional<RankLabel> rank_label_from_scores(double score_i, double score_k) {
    if (score_i > score_k) return RankLabel::minus;
    if (score_i < score_k) return RankLabel::plus;
    return std::nullopt;
}

torch::Tensor rank_labels_from_scores(const torch::Tensor& score_i, const torch::Tensor& score_k) {
    torch::NoGradGuard no_grad;
    return (score_k - score_i).sign();
}

torch::Tensor identification_loss(const torch::Tensor& logits, const torch::Tensor& labels) {
    if (logits.dim() != 2 || labels.dim() != 1 || logits.size(0) != labels.size(0)) {
        throw ShapeError("identification loss expects (N, C) logits and (N) labels");
    }
    if (labels.numel() > 0) {
        const auto lo = labels.min().item<long>();
        const auto hi = labels.max().item<long>();
        if (lo < 0 || hi >= logits.size(1)) throw ParameterError("identity label out of range");
    }
    return torch::nn::functional::cross_entropy(logits, labels.to(torch::kLong));
}

torch::Tensor triplet_hard_loss(const torch::Tensor& embeddings, const torch::Tensor& labels, double margin) {
    if (embeddings.dim() != 2 || labels.dim() != 1 || embeddings.size(0) != labels.size(0)) {
        throw ShapeError("triplet loss expects (N, D) embeddings and (N) labels");
    }
    const auto n = embeddings.size(0);
    auto diff = embeddings.unsqueeze(1) - embeddings.unsqueeze(0);
    auto sq = diff.pow(2).sum(-1);
    // sqrt has an infinite slope at 0; route zero distances around it.
    auto positive = sq > 0;
    auto dist = torch::where(positive, torch::where(positive, sq, torch::ones_like(sq)).sqrt(), torch::zeros_like(sq));

    auto same = labels.unsqueeze(1) == labels.unsqueeze(0);
    auto eye = torch::eye(n, torch::TensorOptions().dtype(torch::kBool));
    auto pos_mask = same & ~eye;
    auto neg_mask = ~same;
    auto valid = pos_mask.any(1) & neg_mask.any(1);
    if (!valid.any().item<bool>()) throw SamplerError("triplet batch has no anchor with both a positive and a negative");

    const double big = 1e9;
    auto hardest_pos = torch::where(pos_mask, dist, torch::full_like(dist, -big)).amax(1);
    auto hardest_neg = torch::where(neg_mask, dist, torch::full_like(dist, big)).amin(1);
    auto per_anchor = torch::relu(hardest_pos - hardest_neg + margin);
    return per_anchor.masked_select(valid).mean();
}

}  // namespace direid
