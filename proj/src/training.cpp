#include "direid/training.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>

#include "direid/checkpoint.hpp"
#include "direid/error.hpp"

namespace direid {

using nlohmann::json;

void TrainConfig::validate() const {
    if (iterations < 0) throw ParameterError("iterations must be >= 0");
    if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
    if (stage != Stage::ddgan) {
        if (identities_per_batch < 2) throw SamplerError("P-K batches need at least two identities");
        if (instances_per_identity < 2) throw SamplerError("P-K batches need at least two instances per identity");
    }
    if (!(lr_gan > 0.0) || !(lr_classifier > 0.0) || !(finetune_scale >= 0.0)) {
        throw ParameterError("learning rates must be positive");
    }
    if (!(degradation.lo <= degradation.hi)) throw ParameterError("degradation range is empty");
    weights.validate();
}

// ---------------------------------------------------------------------------
// Corpus and sampling

Corpus Corpus::from_images(DatasetManifest manifest, std::vector<Image> images) {
    if (manifest.size() != images.size()) throw IngestError("corpus: manifest/image count mismatch");
    Corpus c;
    c.manifest = std::move(manifest);
    c.images = std::move(images);
    c.by_identity.assign(c.manifest.num_identities(), {});
    for (std::size_t n = 0; n < c.manifest.size(); ++n) c.by_identity[c.manifest.entries[n].identity].push_back(n);
    for (std::size_t id = 0; id < c.by_identity.size(); ++id) {
        if (c.by_identity[id].empty()) throw IngestError("identity " + std::to_string(id) + " has no images");
    }
    return c;
}

Corpus Corpus::load(const DatasetManifest& manifest, const Geometry& geometry) {
    return from_images(manifest, load_images(manifest, geometry));
}

torch::Tensor Corpus::labels(const std::vector<std::size_t>& indices) const {
    std::vector<int64_t> ids;
    ids.reserve(indices.size());
    for (auto n : indices) ids.push_back(manifest.entries[n].identity);
    return torch::tensor(ids, torch::kLong);
}

torch::Tensor Corpus::batch(const std::vector<std::size_t>& indices) const {
    std::vector<Image> picked;
    picked.reserve(indices.size());
    for (auto n : indices) picked.push_back(images[n]);
    return to_tensor(picked);
}

Corpus with_capture_degradations(const Corpus& corpus, const DegradationKind& kind, double probability,
                                 std::uint64_t seed) {
    Corpus out = corpus;
    for (std::size_t n = 0; n < out.images.size(); ++n) {
        Rng rng(mix_seed(seed ^ 0xCA97, n));
        if (rng.uniform01() < probability) {
            out.images[n] = apply_degradation(out.images[n], kind.type, sample_degradation_param(kind, rng));
        }
    }
    return out;
}

std::vector<std::size_t> sample_pk_indices(const Corpus& corpus, int identities, int instances, Rng& rng) {
    if (identities > corpus.num_identities()) {
        throw SamplerError("batch needs " + std::to_string(identities) + " identities but the corpus has " +
                           std::to_string(corpus.num_identities()));
    }
    std::vector<int> ids(corpus.num_identities());
    for (int i = 0; i < corpus.num_identities(); ++i) ids[i] = i;
    rng.shuffle(ids);
    std::vector<std::size_t> out;
    out.reserve(static_cast<std::size_t>(identities) * instances);
    for (int p = 0; p < identities; ++p) {
        auto pool = corpus.by_identity[ids[p]];
        if (static_cast<int>(pool.size()) >= instances) {
            rng.shuffle(pool);
            out.insert(out.end(), pool.begin(), pool.begin() + instances);
        } else {
            for (int k = 0; k < instances; ++k) out.push_back(pool[rng.below(pool.size())]);
        }
    }
    return out;
}

PairBatch sample_pair_batch(const Corpus& corpus, const TrainConfig& cfg, Rng& rng) {
    if (corpus.size() == 0) throw SamplerError("cannot sample from an empty corpus");
    if (corpus.size() < 2) throw SamplerError("real pairs need at least two images");
    PairBatch batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
        const auto n = static_cast<std::size_t>(rng.below(corpus.size()));
        batch.self_sources.push_back(n);
        batch.self_pairs.push_back(
            make_self_degraded_pair(corpus.images[n], corpus.manifest.entries[n].identity, cfg.degradation, rng));
    }
    for (int b = 0; b < cfg.batch_size; ++b) {
        const auto i = static_cast<std::size_t>(rng.below(corpus.size()));
        auto k = static_cast<std::size_t>(rng.below(corpus.size() - 1));
        if (k >= i) ++k;
        batch.real_pairs.push_back({i, k});
    }
    return batch;
}

SelfBatch make_self_batch(const Corpus& corpus, const PairBatch& batch) {
    std::vector<Image> xi, xj;
    SelfBatch out;
    std::vector<std::size_t> refs;
    for (const auto& p : batch.self_pairs) {
        xi.push_back(p.original);
        xj.push_back(p.degraded);
        out.params.push_back(p.param);
    }
    for (const auto& r : batch.real_pairs) refs.push_back(r.k);
    refs.resize(xi.size(), refs.empty() ? 0 : refs.front());
    out.x_i = to_tensor(xi);
    out.x_j = to_tensor(xj);
    out.x_k = corpus.batch(refs);
    return out;
}

CrossBatch make_cross_batch(const Corpus& corpus, const PairBatch& batch) {
    std::vector<std::size_t> is, ks;
    for (const auto& r : batch.real_pairs) {
        is.push_back(r.i);
        ks.push_back(r.k);
    }
    return {corpus.batch(is), corpus.batch(ks), corpus.labels(is), corpus.labels(ks)};
}

PairBatch ddgan_batch(const Corpus& corpus, const TrainConfig& cfg, long iteration, Phase phase) {
    Rng rng(mix_seed(mix_seed(cfg.seed, static_cast<std::uint64_t>(iteration)), phase == Phase::self ? 1 : 2));
    return sample_pair_batch(corpus, cfg, rng);
}

// ---------------------------------------------------------------------------
// DDGAN objectives

namespace {

Generation generate(Networks& nets, const torch::Tensor& a, const torch::Tensor& b, DegradationSource b_source,
                    const DecodeOverride& override_decode) {
    Generation g;
    const auto n = a.size(0);
    // One encoder pass over both inputs.
    auto content = nets->encode_content(torch::cat({a, b}));
    g.content_a = {content.map.narrow(0, 0, n), content.pooled.narrow(0, 0, n)};
    g.content_b = {content.map.narrow(0, n, n), content.pooled.narrow(0, n, n)};
    if (b_source == DegradationSource::real_encoder) {
        auto code = nets->encode_degradation(torch::cat({a, b}), DegradationSource::real_encoder).vector;
        g.code_a = {code.narrow(0, 0, n), DegradationSource::real_encoder};
        g.code_b = {code.narrow(0, n, n), DegradationSource::real_encoder};
    } else {
        g.code_a = nets->encode_degradation(a, DegradationSource::real_encoder);
        g.code_b = nets->encode_degradation(b, b_source);
    }
    if (override_decode) {
        g.aa = override_decode(0, 0, g.content_a.map, g.code_a.vector);
        g.ab = override_decode(0, 1, g.content_a.map, g.code_b.vector);
        g.bb = override_decode(1, 1, g.content_b.map, g.code_b.vector);
        g.ba = override_decode(1, 0, g.content_b.map, g.code_a.vector);
        return g;
    }
    auto maps = torch::cat({g.content_a.map, g.content_a.map, g.content_b.map, g.content_b.map});
    auto codes = torch::cat({g.code_a.vector, g.code_b.vector, g.code_b.vector, g.code_a.vector});
    auto images = nets->decoder(maps, codes);
    g.aa = images.narrow(0, 0, n);
    g.ab = images.narrow(0, n, n);
    g.bb = images.narrow(0, 2 * n, n);
    g.ba = images.narrow(0, 3 * n, n);
    return g;
}

std::vector<torch::Tensor> slice_maps(const std::vector<torch::Tensor>& maps, long start, long n) {
    std::vector<torch::Tensor> out;
    for (const auto& m : maps) out.push_back(m.narrow(0, start, n));
    return out;
}

torch::Tensor adv_d(Networks& nets, const torch::Tensor& real, const torch::Tensor& fake) {
    const auto n = real.size(0);
    auto maps = nets->discriminate_reality(torch::cat({real, fake}));
    auto r = slice_maps(maps, 0, n);
    auto f = slice_maps(maps, n, n);
    return reality_adversarial_loss(r, f, AdversarialSide::discriminator);
}

torch::Tensor adv_g(const std::vector<torch::Tensor>& fake_maps) {
    return reality_adversarial_loss({}, fake_maps, AdversarialSide::generator);
}


}  // namespace

Generation generate_self(Networks& nets, const SelfBatch& batch, const DecodeOverride& decode) {
    return generate(nets, batch.x_i, batch.x_j, DegradationSource::self_encoder, decode);
}

Generation generate_cross(Networks& nets, const CrossBatch& batch, const DecodeOverride& decode) {
    return generate(nets, batch.x_i, batch.x_k, DegradationSource::real_encoder, decode);
}

Objective self_discriminator_objective(Networks& nets, const SelfBatch& batch, const Generation& gen,
                                       const LossWeights& w) {
    Objective o;
    o.terms["real"] = adv_d(nets, batch.x_i, gen.ab.detach()) + adv_d(nets, batch.x_k, gen.bb.detach());
    const auto n = batch.x_i.size(0);
    auto scores = nets->degradation_score(torch::cat({batch.x_i, batch.x_j})).score;
    auto plus = torch::ones({n}, scores.options());
    o.terms["deg"] = degradation_ranking_loss(scores.narrow(0, 0, n), scores.narrow(0, n, n), plus, w.rank_margin);
    o.total = w.real * o.terms["real"] + w.deg * o.terms["deg"];
    return o;
}

Objective self_generator_objective(Networks& nets, const SelfBatch& batch, const Generation& gen,
                                   const LossWeights& w) {
    const auto n = batch.x_i.size(0);
    Objective o;
    o.terms["invc"] = invariable_content_loss(gen.content_a.map, gen.content_b.map);
    o.terms["recon"] = reconstruction_loss(gen.aa, batch.x_i) + reconstruction_loss(gen.ba, batch.x_i);

    torch::Tensor ref_i, ref_j, s_i, s_j;
    {
        torch::NoGradGuard no_grad;
        auto refs = nets->encode_identity(torch::cat({batch.x_i, batch.x_j})).embedding;
        ref_i = refs.narrow(0, 0, n);
        ref_j = refs.narrow(0, n, n);
        auto s = nets->degradation_score(torch::cat({batch.x_i, batch.x_j})).score;
        s_i = s.narrow(0, 0, n);
        s_j = s.narrow(0, n, n);
    }
    auto fakes = torch::cat({gen.ab, gen.ba});
    auto emb = nets->encode_identity(fakes).embedding;
    o.terms["pre"] = identity_preserving_loss(emb.narrow(0, 0, n), ref_i) +
                     identity_preserving_loss(emb.narrow(0, n, n), ref_j);

    auto real_maps = nets->discriminate_reality(torch::cat({gen.ab, gen.bb}));
    o.terms["real"] = adv_g(slice_maps(real_maps, 0, n)) + adv_g(slice_maps(real_maps, n, n));

    auto scores = nets->degradation_score(fakes).score;
    auto plus = torch::ones({n}, scores.options());
    o.terms["deg"] = degradation_ranking_loss(s_i, scores.narrow(0, 0, n), plus, w.rank_margin) +
                     degradation_ranking_loss(scores.narrow(0, n, n), s_j, plus, w.rank_margin);
    o.total = total_objective(Phase::self, o.terms, w);
    return o;
}

Objective cross_discriminator_objective(Networks& nets, const CrossBatch& batch, const Generation& gen,
                                        const LossWeights& w) {
    Objective o;
    o.terms["real"] = adv_d(nets, batch.x_i, gen.ab.detach()) + adv_d(nets, batch.x_k, gen.ba.detach());
    o.total = w.real * o.terms["real"];
    return o;
}

Objective cross_generator_objective(Networks& nets, const CrossBatch& batch, const Generation& gen,
                                    const torch::Tensor& gamma, const LossWeights& w) {
    const auto n = batch.x_i.size(0);
    Objective o;
    o.terms["id"] = identification_loss(nets->content_classifier(gen.content_a.pooled), batch.y_i) +
                    identification_loss(nets->content_classifier(gen.content_b.pooled), batch.y_k);
    o.terms["recon"] = reconstruction_loss(gen.aa, batch.x_i) + reconstruction_loss(gen.bb, batch.x_k);

    torch::Tensor ref_i, ref_k, s_i, s_k;
    {
        torch::NoGradGuard no_grad;
        auto refs = nets->encode_identity(torch::cat({batch.x_i, batch.x_k})).embedding;
        ref_i = refs.narrow(0, 0, n);
        ref_k = refs.narrow(0, n, n);
        auto s = nets->degradation_score(torch::cat({batch.x_i, batch.x_k})).score;
        s_i = s.narrow(0, 0, n);
        s_k = s.narrow(0, n, n);
    }
    auto fakes = torch::cat({gen.ab, gen.ba});  // x_ik, x_ki
    auto emb = nets->encode_identity(fakes).embedding;
    o.terms["pre"] = identity_preserving_loss(emb.narrow(0, 0, n), ref_i) +
                     identity_preserving_loss(emb.narrow(0, n, n), ref_k);

    auto real_maps = nets->discriminate_reality(fakes);
    o.terms["real"] = adv_g(slice_maps(real_maps, 0, n)) + adv_g(slice_maps(real_maps, n, n));

    auto scores = nets->degradation_score(fakes).score;
    auto g = gamma.to(scores.dtype());
    o.terms["deg"] = degradation_ranking_loss(s_i, scores.narrow(0, 0, n), g, w.rank_margin) +
                     degradation_ranking_loss(scores.narrow(0, n, n), s_k, g, w.rank_margin);
    o.total = total_objective(Phase::cross, o.terms, w);
    return o;
}

// ---------------------------------------------------------------------------
// Logging

namespace {

std::map<std::string, double> to_doubles(const std::map<std::string, torch::Tensor>& terms) {
    std::map<std::string, double> out;
    for (const auto& [k, v] : terms) out[k] = v.item<double>();
    return out;
}

}  // namespace

std::string to_json_line(const LossReport& r) {
    json j = {{"phase", r.phase}, {"iteration", r.iteration}, {"terms", r.terms}, {"total", r.total}};
    if (!r.discriminator.empty()) j["discriminator"] = r.discriminator;
    if (!r.gamma.empty()) {
        j["score_i"] = r.score_i;
        j["score_k"] = r.score_k;
        j["gamma"] = r.gamma;
    }
    return j.dump();
}

TrainingLog::TrainingLog(const std::filesystem::path& path, bool append) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_ = std::make_unique<std::ofstream>(path, append ? std::ios::app : std::ios::trunc);
    if (!*out_) throw IoError("cannot open training log " + path.string());
}

void TrainingLog::write(const LossReport& report) { write_line(to_json_line(report)); }

void TrainingLog::write_line(const std::string& line) {
    if (out_) {
        *out_ << line << '\n';
        out_->flush();
    }
}

void set_trainable(Networks& nets, std::initializer_list<std::string_view> names, bool trainable) {
    for (auto& p : nets->parameters_of(names)) p.set_requires_grad(trainable);
}

std::uint64_t parameter_hash(const std::vector<torch::Tensor>& params) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& p : params) {
        auto t = p.detach().contiguous();
        const auto* bytes = static_cast<const unsigned char*>(t.data_ptr());
        const auto n = t.numel() * t.element_size();
        for (long i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    }
    return h;
}

// ---------------------------------------------------------------------------
// Stage 0

double identity_accuracy(Networks& nets, const Corpus& corpus) {
    torch::NoGradGuard no_grad;
    long correct = 0;
    for (std::size_t start = 0; start < corpus.size(); start += 64) {
        std::vector<std::size_t> idx;
        for (std::size_t n = start; n < std::min(corpus.size(), start + 64); ++n) idx.push_back(n);
        auto logits = nets->encode_identity(corpus.batch(idx)).logits;
        correct += (logits.argmax(1) == corpus.labels(idx)).sum().item<long>();
    }
    return corpus.size() ? static_cast<double>(correct) / static_cast<double>(corpus.size()) : 0.0;
}

StageResult pretrain_identity_encoder(Networks& nets, const TrainConfig& cfg, const Corpus& corpus,
                                      TrainingLog* log) {
    cfg.validate();
    if (corpus.num_identities() > nets->cfg.num_identities) {
        throw StateError("corpus has more identities than the identity classifier");
    }
    nets->train();
    torch::optim::Adam opt(nets->parameters_of({"E_id"}), torch::optim::AdamOptions(cfg.lr_classifier));
    StageResult result;
    for (long it = 0; it < cfg.iterations; ++it) {
        Rng rng(mix_seed(mix_seed(cfg.seed, static_cast<std::uint64_t>(it)), 0x1D));
        const auto idx = sample_pk_indices(corpus, cfg.identities_per_batch, cfg.instances_per_identity, rng);
        auto labels = corpus.labels(idx);
        auto out = nets->encode_identity(corpus.batch(idx));
        std::map<std::string, torch::Tensor> terms{
            {"ce", identification_loss(out.logits, labels)},
            {"triplet", triplet_hard_loss(out.embedding, labels, cfg.weights.triplet_margin)}};
        auto total = terms["ce"] + terms["triplet"];
        opt.zero_grad();
        total.backward();
        opt.step();
        result.last = {"pretrain", it, to_doubles(terms), total.item<double>(), {}, {}, {}, {}};
        if (log) log->write(result.last);
        if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0 && it + 1 < cfg.iterations) {
            save_checkpoint(cfg.output_dir / checkpoint_name(0, it + 1), nets, {0, it + 1, nets->cfg});
        }
    }
    nets->eval();
    result.train_accuracy = identity_accuracy(nets, corpus);
    result.checkpoint = cfg.output_dir / checkpoint_name(0, cfg.iterations);
    save_checkpoint(result.checkpoint, nets, {0, cfg.iterations, nets->cfg});
    return result;
}

// ---------------------------------------------------------------------------
// Stage 1

DdganTrainer::DdganTrainer(Networks nets, TrainConfig cfg) : nets_(std::move(nets)), cfg_(std::move(cfg)) {
    cfg_.validate();
    auto options = torch::optim::AdamOptions(cfg_.lr_gan).betas({cfg_.adam_beta1, cfg_.adam_beta2});
    gen_opt_ = std::make_unique<torch::optim::Adam>(
        nets_->parameters_of({"E_c", "E_d", "E_d_self", "G", "cls_content"}), options);
    disc_opt_ = std::make_unique<torch::optim::Adam>(nets_->parameters_of({"D_r", "D_d"}), options);
    // E_id only provides targets during this stage.
    set_trainable(nets_, {"E_id"}, false);
}

LossReport DdganTrainer::self_step(const SelfBatch& batch, long iteration) {
    nets_->train();
    const auto& w = cfg_.weights;
    set_trainable(nets_, {"D_r", "D_d"}, true);
    auto gen = generate_self(nets_, batch);

    disc_opt_->zero_grad();
    auto d = self_discriminator_objective(nets_, batch, gen, w);
    d.total.backward();
    disc_opt_->step();
    if (on_half_step) on_half_step("discriminator");

    set_trainable(nets_, {"D_r", "D_d"}, false);
    gen_opt_->zero_grad();
    auto g = self_generator_objective(nets_, batch, gen, w);
    g.total.backward();
    gen_opt_->step();
    set_trainable(nets_, {"D_r", "D_d"}, true);
    if (on_half_step) on_half_step("generator");

    LossReport report{"S", iteration, to_doubles(g.terms), g.total.item<double>(), {}, {}, {}, {}};
    report.discriminator = {{"real", d.terms["real"].item<double>()}, {"deg", d.terms["deg"].item<double>()}};
    return report;
}

LossReport DdganTrainer::cross_step(const CrossBatch& batch, long iteration) {
    nets_->train();
    const auto& w = cfg_.weights;
    LossReport report{"C", iteration, {}, 0.0, {}, {}, {}, {}};

    torch::Tensor gamma;
    {
        torch::NoGradGuard no_grad;
        const auto n = batch.x_i.size(0);
        auto s = nets_->degradation_score(torch::cat({batch.x_i, batch.x_k})).score;
        auto s_i = s.narrow(0, 0, n);
        auto s_k = s.narrow(0, n, n);
        gamma = rank_labels_from_scores(s_i, s_k);
        for (long b = 0; b < n; ++b) {
            report.score_i.push_back(s_i[b].item<double>());
            report.score_k.push_back(s_k[b].item<double>());
            report.gamma.push_back(static_cast<int>(gamma[b].item<double>()));
        }
    }

    set_trainable(nets_, {"D_r", "D_d"}, true);
    auto gen = generate_cross(nets_, batch);
    disc_opt_->zero_grad();
    auto d = cross_discriminator_objective(nets_, batch, gen, w);
    d.total.backward();
    disc_opt_->step();
    if (on_half_step) on_half_step("discriminator");

    set_trainable(nets_, {"D_r", "D_d"}, false);
    gen_opt_->zero_grad();
    auto g = cross_generator_objective(nets_, batch, gen, gamma, w);
    g.total.backward();
    gen_opt_->step();
    set_trainable(nets_, {"D_r", "D_d"}, true);
    if (on_half_step) on_half_step("generator");

    report.terms = to_doubles(g.terms);
    report.total = g.total.item<double>();
    report.discriminator = {{"real", d.terms["real"].item<double>()}};
    return report;
}

void DdganTrainer::save(const std::filesystem::path& path, long iteration) {
    save_checkpoint(path, nets_, {1, iteration, nets_->cfg},
                    {{"generator", gen_opt_.get()}, {"discriminator", disc_opt_.get()}});
}

long DdganTrainer::resume(const std::filesystem::path& path) {
    const auto info = load_checkpoint(path, nets_, {{"generator", gen_opt_.get()}, {"discriminator", disc_opt_.get()}});
    if (info.stage != 1) throw StateError("resume expects a stage-1 checkpoint");
    set_trainable(nets_, {"E_id"}, false);
    return info.iteration;
}

StageResult DdganTrainer::run(const Corpus& corpus, TrainingLog* log, long start) {
    StageResult result;
    for (long it = start; it < cfg_.iterations; ++it) {
        auto s = self_step(make_self_batch(corpus, ddgan_batch(corpus, cfg_, it, Phase::self)), it);
        if (log) log->write(s);
        auto c = cross_step(make_cross_batch(corpus, ddgan_batch(corpus, cfg_, it, Phase::cross)), it);
        if (log) log->write(c);
        result.last = std::move(c);
        if (cfg_.checkpoint_every > 0 && (it + 1) % cfg_.checkpoint_every == 0 && it + 1 < cfg_.iterations) {
            save(cfg_.output_dir / checkpoint_name(1, it + 1), it + 1);
        }
    }
    nets_->eval();
    result.checkpoint = cfg_.output_dir / checkpoint_name(1, cfg_.iterations);
    save(result.checkpoint, cfg_.iterations);
    return result;
}

StageResult train_ddgan(Networks& nets, const TrainConfig& cfg, const Corpus& corpus,
                        const std::filesystem::path& stage0_checkpoint, TrainingLog* log) {
    if (stage0_checkpoint.empty() || !std::filesystem::exists(stage0_checkpoint)) {
        throw StateError("DDGAN training needs the stage-0 identity encoder checkpoint");
    }
    if (read_checkpoint_info(stage0_checkpoint).stage != 0) throw StateError("expected a stage-0 checkpoint");
    load_checkpoint(stage0_checkpoint, nets);
    DdganTrainer trainer(nets, cfg);
    return trainer.run(corpus, log);
}

// ---------------------------------------------------------------------------
// Stage 2

namespace {

void copy_subnetworks(Networks& dst, Networks& src, std::initializer_list<std::string_view> names) {
    torch::NoGradGuard no_grad;
    auto d = dst->parameters_of(names);
    auto s = src->parameters_of(names);
    for (std::size_t i = 0; i < d.size(); ++i) d[i].copy_(s[i]);
}

}  // namespace

void load_dfen_prerequisites(Networks& nets, const std::filesystem::path& stage0_checkpoint,
                             const std::optional<std::filesystem::path>& stage1_checkpoint) {
    if (stage0_checkpoint.empty() || !std::filesystem::exists(stage0_checkpoint)) {
        throw StateError("identity training needs the stage-0 checkpoint");
    }
    if (read_checkpoint_info(stage0_checkpoint).stage != 0) throw StateError("expected a stage-0 checkpoint");
    load_checkpoint(stage0_checkpoint, nets);
    if (stage1_checkpoint) {
        if (!std::filesystem::exists(*stage1_checkpoint)) {
            throw StateError("identity training needs the stage-1 checkpoint " + stage1_checkpoint->string());
        }
        if (read_checkpoint_info(*stage1_checkpoint).stage != 1) throw StateError("expected a stage-1 checkpoint");
        Networks stage1(nets->cfg);
        load_checkpoint(*stage1_checkpoint, stage1);
        copy_subnetworks(nets, stage1, {"E_c", "E_d", "E_d_self", "G", "D_r", "D_d"});
    }
}

Objective dfen_objective(Networks& nets, const torch::Tensor& x, const torch::Tensor& labels, const TrainConfig& cfg) {
    auto rep = nets->identity_representation(x, cfg.attention);
    auto sen = rep.f_sen * rep.weights;
    const double m = cfg.weights.triplet_margin;
    Objective o;
    o.terms["inv"] = identification_loss(nets->inv_classifier(rep.f_inv), labels) + triplet_hard_loss(rep.f_inv, labels, m);
    o.terms["sen"] = identification_loss(nets->sen_classifier(sen), labels) + triplet_hard_loss(sen, labels, m);
    o.terms["both"] = identification_loss(nets->both_classifier(rep.fused), labels) + triplet_hard_loss(rep.fused, labels, m);
    o.total = total_objective(Phase::dfen, o.terms, cfg.weights);
    return o;
}

StageResult train_dfen(Networks& nets, const TrainConfig& cfg, const Corpus& corpus, TrainingLog* log) {
    cfg.validate();
    nets->train();
    set_trainable(nets, {"D_d", "D_r", "E_d", "E_d_self", "G", "cls_content"}, false);
    set_trainable(nets, {"E_c"}, !cfg.freeze_content);
    set_trainable(nets, {"E_id", "Att", "cls_inv", "cls_sen", "cls_both"}, true);

    std::vector<torch::optim::OptimizerParamGroup> groups;
    auto heads = nets->parameters_of({"cls_inv", "cls_sen", "cls_both"});
    if (cfg.attention) {
        auto att = nets->parameters_of({"Att"});
        heads.insert(heads.end(), att.begin(), att.end());
    } else {
        set_trainable(nets, {"Att"}, false);
    }
    groups.emplace_back(heads, std::make_unique<torch::optim::AdamOptions>(cfg.lr_classifier));
    auto encoders = nets->parameters_of({"E_id"});
    if (!cfg.freeze_content) {
        auto ec = nets->parameters_of({"E_c"});
        encoders.insert(encoders.end(), ec.begin(), ec.end());
    }
    groups.emplace_back(encoders, std::make_unique<torch::optim::AdamOptions>(cfg.lr_classifier * cfg.finetune_scale));
    torch::optim::Adam opt(std::move(groups), torch::optim::AdamOptions(cfg.lr_classifier));

    StageResult result;
    for (long it = 0; it < cfg.iterations; ++it) {
        Rng rng(mix_seed(mix_seed(cfg.seed, static_cast<std::uint64_t>(it)), 0xDF));
        const auto idx = sample_pk_indices(corpus, cfg.identities_per_batch, cfg.instances_per_identity, rng);
        auto o = dfen_objective(nets, corpus.batch(idx), corpus.labels(idx), cfg);
        opt.zero_grad();
        o.total.backward();
        opt.step();
        result.last = {"dfen", it, to_doubles(o.terms), o.total.item<double>(), {}, {}, {}, {}};
        if (log) log->write(result.last);
        if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0 && it + 1 < cfg.iterations) {
            save_checkpoint(cfg.output_dir / checkpoint_name(2, it + 1), nets, {2, it + 1, nets->cfg});
        }
    }
    for (auto& p : nets->parameters()) p.set_requires_grad(true);
    nets->eval();
    result.checkpoint = cfg.output_dir / checkpoint_name(2, cfg.iterations);
    save_checkpoint(result.checkpoint, nets, {2, cfg.iterations, nets->cfg});
    return result;
}

}  // namespace direid
