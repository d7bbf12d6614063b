#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "direid/data.hpp"
#include "direid/degradations.hpp"
#include "direid/losses.hpp"
#include "direid/networks.hpp"
#include "direid/rng.hpp"

namespace direid {

enum class Stage { pretrain_id = 0, ddgan = 1, dfen = 2 };

struct TrainConfig {
    Stage stage = Stage::pretrain_id;
    long iterations = 1000;
    int batch_size = 8;                 // pairs per DDGAN phase batch
    int identities_per_batch = 4;       // P of P-K sampling
    int instances_per_identity = 4;     // K of P-K sampling
    double lr_gan = 2e-4;
    double lr_classifier = 3e-4;
    double finetune_scale = 0.1;        // stage-2 encoder learning rate factor
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    std::uint64_t seed = 0;
    DegradationKind degradation = DegradationKind::defaults(DegradationType::resolution);
    LossWeights weights;
    long checkpoint_every = 0;          // 0: final checkpoint only
    bool attention = true;              // stage 2: false forces weights to 1
    bool freeze_content = false;        // stage 2: keep E_c fixed
    std::filesystem::path output_dir = ".";

    void validate() const;
};

/// Images of a manifest held in memory, with an identity index for sampling.
struct Corpus {
    DatasetManifest manifest;
    std::vector<Image> images;
    std::vector<std::vector<std::size_t>> by_identity;

    static Corpus load(const DatasetManifest& manifest, const Geometry& geometry);
    static Corpus from_images(DatasetManifest manifest, std::vector<Image> images);

    std::size_t size() const { return images.size(); }
    int num_identities() const { return static_cast<int>(by_identity.size()); }
    torch::Tensor labels(const std::vector<std::size_t>& indices) const;
    torch::Tensor batch(const std::vector<std::size_t>& indices) const;
};

/// Returns a copy where each image is, independently with probability
/// `probability`, replaced by a degraded version with a parameter drawn from
/// `kind`. Used to give a clean synthetic corpus the mixed capture quality of
/// real surveillance data. Deterministic in `seed`.
Corpus with_capture_degradations(const Corpus& corpus, const DegradationKind& kind, double probability,
                                 std::uint64_t seed);

struct RealPair {
    std::size_t i = 0;
    std::size_t k = 0;
};

struct PairBatch {
    std::vector<SelfDegradedPair> self_pairs;
    std::vector<std::size_t> self_sources;  // corpus index of each self pair's x_i
    std::vector<RealPair> real_pairs;
};

/// P identities x K instances (instances with replacement when an identity has
/// fewer than K images). Throws SamplerError when P exceeds the identity count.
std::vector<std::size_t> sample_pk_indices(const Corpus& corpus, int identities, int instances, Rng& rng);

/// batch_size self-degraded pairs from uniform image draws and batch_size
/// real pairs of two distinct uniformly drawn images.
PairBatch sample_pair_batch(const Corpus& corpus, const TrainConfig& cfg, Rng& rng);

/// Tensors for one self-degradation step: x_j = F_deg(x_i); x_k are real
/// images used as the second "real" input of the reality loss.
struct SelfBatch {
    torch::Tensor x_i, x_j, x_k;
    std::vector<double> params;
};

/// Tensors for one cross-degradation step over real pairs (x_i, x_k).
struct CrossBatch {
    torch::Tensor x_i, x_k, y_i, y_k;
};

SelfBatch make_self_batch(const Corpus& corpus, const PairBatch& batch);
CrossBatch make_cross_batch(const Corpus& corpus, const PairBatch& batch);

/// The batch of DDGAN iteration `iteration` for `phase` is a pure function of
/// (seed, iteration, phase).
PairBatch ddgan_batch(const Corpus& corpus, const TrainConfig& cfg, long iteration, Phase phase);

struct LossReport {
    std::string phase;  // "S", "C", "pretrain" or "dfen"
    long iteration = 0;
    std::map<std::string, double> terms;  // exactly the phase's objective terms
    double total = 0.0;
    std::map<std::string, double> discriminator;  // discriminator-side losses
    // Cross phase: per pair scores and rank label (0 = tie, skipped).
    std::vector<double> score_i, score_k;
    std::vector<int> gamma;
};

/// Generated images of one pair batch; naming follows G(content, degradation).
struct Generation {
    ContentFeature content_a, content_b;
    DegradationCode code_a, code_b;
    torch::Tensor aa, ab, bb, ba;
};

/// Decoder override used by tests: (content_source, degradation_source, f_c, f_d)
/// with sources 0 = first image of the pair, 1 = second.
using DecodeOverride = std::function<torch::Tensor(int, int, const torch::Tensor&, const torch::Tensor&)>;

Generation generate_self(Networks& nets, const SelfBatch& batch, const DecodeOverride& decode = {});
Generation generate_cross(Networks& nets, const CrossBatch& batch, const DecodeOverride& decode = {});

struct Objective {
    std::map<std::string, torch::Tensor> terms;
    torch::Tensor total;
};

/// Discriminator side of the self phase: reality BCE on (x_i vs x_ij,
/// x_k vs x_jj) and the ranking loss pushing D_d(x_j) above D_d(x_i).
Objective self_discriminator_objective(Networks& nets, const SelfBatch& batch, const Generation& gen,
                                       const LossWeights& w);
/// Generator side of the self phase: the five weighted terms.
Objective self_generator_objective(Networks& nets, const SelfBatch& batch, const Generation& gen,
                                   const LossWeights& w);

Objective cross_discriminator_objective(Networks& nets, const CrossBatch& batch, const Generation& gen,
                                        const LossWeights& w);
/// `gamma` holds the per-pair rank labels (+1/-1, 0 for ties).
Objective cross_generator_objective(Networks& nets, const CrossBatch& batch, const Generation& gen,
                                    const torch::Tensor& gamma, const LossWeights& w);

/// Appends one JSON object per line.
class TrainingLog {
public:
    TrainingLog() = default;
    explicit TrainingLog(const std::filesystem::path& path, bool append = false);
    void write(const LossReport& report);
    void write_line(const std::string& json_line);

private:
    std::unique_ptr<std::ofstream> out_;
};

std::string to_json_line(const LossReport& report);

/// Sets requires_grad on every parameter of the named sub-networks.
void set_trainable(Networks& nets, std::initializer_list<std::string_view> names, bool trainable);

// ---------------------------------------------------------------------------
// Stage 0

struct StageResult {
    std::filesystem::path checkpoint;
    LossReport last;
    double train_accuracy = 0.0;  // stage 0 only
};

/// Cross-entropy + batch-hard triplet on E_id's embedding with P-K batches.
StageResult pretrain_identity_encoder(Networks& nets, const TrainConfig& cfg, const Corpus& corpus,
                                      TrainingLog* log = nullptr);

/// Top-1 accuracy of E_id's own classifier over the whole corpus.
double identity_accuracy(Networks& nets, const Corpus& corpus);

// ---------------------------------------------------------------------------
// Stage 1

/// Alternating self/cross DDGAN optimisation with one discriminator update
/// followed by one generator-side update per step.
class DdganTrainer {
public:
    DdganTrainer(Networks nets, TrainConfig cfg);

    LossReport self_step(const SelfBatch& batch, long iteration = 0);
    LossReport cross_step(const CrossBatch& batch, long iteration = 0);

    /// Runs iterations [start, cfg.iterations) of S,C alternation.
    StageResult run(const Corpus& corpus, TrainingLog* log = nullptr, long start = 0);

    void save(const std::filesystem::path& path, long iteration);
    /// Restores parameters and optimizer state; returns the stored iteration.
    long resume(const std::filesystem::path& path);

    /// Called with "discriminator" after the discriminator update and
    /// "generator" after the generator update of every step.
    std::function<void(std::string_view)> on_half_step;

    Networks& networks() { return nets_; }
    torch::optim::Adam& generator_optimizer() { return *gen_opt_; }
    torch::optim::Adam& discriminator_optimizer() { return *disc_opt_; }

private:
    Networks nets_;
    TrainConfig cfg_;
    std::unique_ptr<torch::optim::Adam> gen_opt_;
    std::unique_ptr<torch::optim::Adam> disc_opt_;
};

/// Requires a stage-0 checkpoint (StateError otherwise).
StageResult train_ddgan(Networks& nets, const TrainConfig& cfg, const Corpus& corpus,
                        const std::filesystem::path& stage0_checkpoint, TrainingLog* log = nullptr);

// ---------------------------------------------------------------------------
// Stage 2

/// Per-branch losses of the identity objective (CE + batch-hard triplet each).
Objective dfen_objective(Networks& nets, const torch::Tensor& x, const torch::Tensor& labels, const TrainConfig& cfg);

/// Trains the three classifier heads and the attention head; E_c and E_id
/// fine-tune at finetune_scale * lr_classifier; D_d is frozen.
StageResult train_dfen(Networks& nets, const TrainConfig& cfg, const Corpus& corpus, TrainingLog* log = nullptr);

/// Loads the prerequisites of stage 2: E_id from stage 0 and, unless
/// `stage1_checkpoint` is empty (no-DIL ablation), E_c and D_d from stage 1.
void load_dfen_prerequisites(Networks& nets, const std::filesystem::path& stage0_checkpoint,
                             const std::optional<std::filesystem::path>& stage1_checkpoint);

/// Order-sensitive hash of parameter values; used to assert freeze and
/// update-separation discipline.
std::uint64_t parameter_hash(const std::vector<torch::Tensor>& params);

}  // namespace direid
