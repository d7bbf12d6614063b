// Acceptance suite: one PASS/FAIL line per criterion.
//
//   direid_acceptance [--out DIR] [--seeds N] [--only 1,2,...]
//
// Criteria 5-7 train the full pipeline on the synthetic corpus (about an
// hour per seed on one CPU core); finished stages are cached under --out.
#include <torch/torch.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "direid/checkpoint.hpp"
#include "direid/config.hpp"
#include "direid/degradations.hpp"
#include "direid/losses.hpp"
#include "direid/pipeline.hpp"
#include "direid/retrieval.hpp"
#include "helpers.hpp"
#include "json.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace direid;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Collects named checks; the outcome lists the first few failures.
class Checks {
public:
    void expect(bool ok, const std::string& what) {
        ++total_;
        if (!ok) failures_.push_back(what);
    }
    void near(double got, double want, double tol, const std::string& what) {
        std::ostringstream s;
        s << what << " got " << got << " want " << want;
        expect(std::abs(got - want) <= tol, s.str());
    }
    template <class Exception, class F>
    void throws(F&& f, const std::string& what) {
        bool ok = false;
        try {
            f();
        } catch (const Exception&) {
            ok = true;
        } catch (...) {
        }
        expect(ok, what + " did not throw");
    }
    Outcome outcome(const std::string& summary) const {
        std::ostringstream s;
        s << (total_ - failures_.size()) << "/" << total_ << " " << summary;
        for (std::size_t i = 0; i < failures_.size() && i < 3; ++i) s << "; " << failures_[i];
        return {failures_.empty(), s.str()};
    }

private:
    std::size_t total_ = 0;
    std::vector<std::string> failures_;
};

torch::Tensor t64(std::vector<double> v) { return torch::tensor(v, torch::kFloat64); }
double val(const torch::Tensor& x) { return x.item<double>(); }

torch::Tensor randn64(std::vector<long> shape, std::uint64_t seed) {
    auto gen = torch::make_generator<torch::CPUGeneratorImpl>(seed);
    return torch::randn(shape, gen, torch::kFloat64);
}

// ---------------------------------------------------------------------------

Outcome loss_exactness() {
    Checks c;
    const double tol = 1e-6;
    auto a = randn64({2, 8, 4, 2}, 1), b = randn64({2, 8, 4, 2}, 2);
    c.near(val(invariable_content_loss(a, a)), 0.0, tol, "content identical");
    c.near(val(invariable_content_loss(torch::zeros({8, 4, 2}), torch::ones({8, 4, 2}))), 1.0, tol, "content 0 vs 1");
    {
        double sum = 0;
        auto fa = a.flatten(), fb = b.flatten();
        for (long i = 0; i < fa.numel(); ++i) sum += std::abs(val(fa[i]) - val(fb[i]));
        c.near(val(invariable_content_loss(a, b)), sum / fa.numel(), tol, "content oracle");
    }
    c.near(val(reconstruction_loss(a, a)), 0.0, tol, "recon identical");
    c.near(val(reconstruction_loss(torch::full({3, 4, 2}, 0.5), torch::full({3, 4, 2}, 0.75))), 0.25, tol, "recon 0.5/0.75");
    c.near(val(identity_preserving_loss(t64({1, 2}), t64({1, 2}))), 0.0, tol, "pre identical");
    c.near(val(identity_preserving_loss(t64({0, 0}), t64({1, 3}))), 2.0, tol, "pre (0,0)/(1,3)");

    std::vector<torch::Tensor> zeros{torch::zeros({2, 1, 4, 2}, torch::kFloat64)};
    c.near(val(reality_adversarial_loss(zeros, zeros, AdversarialSide::discriminator)), 2 * std::log(2.0), tol, "adv 2ln2");
    c.near(val(reality_adversarial_loss({}, zeros, AdversarialSide::generator)), std::log(2.0), tol, "adv ln2");
    std::vector<torch::Tensor> hi{torch::full({2, 1, 4, 2}, 20.0, torch::kFloat64)};
    std::vector<torch::Tensor> lo{torch::full({2, 1, 4, 2}, -20.0, torch::kFloat64)};
    c.near(val(reality_adversarial_loss(hi, lo, AdversarialSide::discriminator)), 0.0, tol, "adv saturation");

    c.near(degradation_ranking_loss(0.3, 0.8, RankLabel::plus, 0.3), 0.0, tol, "rank satisfied");
    c.near(degradation_ranking_loss(0.4, 0.4, RankLabel::plus, 0.3), 0.3, tol, "rank at margin");
    c.near(degradation_ranking_loss(0.9, 0.2, RankLabel::plus, 0.5), 1.2, tol, "rank 1.2");
    c.expect(rank_label_from_scores(0.7, 0.2) == RankLabel::minus, "label (0.7,0.2)");
    c.expect(rank_label_from_scores(0.1, 0.9) == RankLabel::plus, "label (0.1,0.9)");
    c.expect(!rank_label_from_scores(0.5, 0.5).has_value(), "label tie");
    c.near(val(degradation_ranking_loss(t64({0.5}), t64({0.5}), t64({0}), 0.5)), 0.0, tol, "tie contributes zero");

    c.near(val(identification_loss(torch::zeros({1, 10}, torch::kFloat64), torch::tensor({3L}))), std::log(10.0), tol, "ce ln10");
    auto onehot = torch::zeros({1, 5}, torch::kFloat64);
    onehot[0][2] = 20.0;
    c.near(val(identification_loss(onehot, torch::tensor({2L}))), 0.0, tol, "ce saturation");
    c.near(val(identification_loss(t64({2, 0}).view({1, 2}), torch::tensor({0L}))), 0.126928, tol, "ce (2,0)");
    c.throws<ParameterError>([] { identification_loss(torch::zeros({1, 3}), torch::tensor({3L})); }, "ce label range");

    const auto labels = torch::tensor({0L, 0L, 1L, 1L});
    c.near(val(triplet_hard_loss(t64({0, 0, 10, 10}).view({4, 1}), labels, 0.3)), 0.0, tol, "triplet separated");
    c.near(val(triplet_hard_loss(torch::ones({4, 3}, torch::kFloat64), labels, 0.3)), 0.3, tol, "triplet identical");
    const auto exhaustive = oracle::triplet_exhaustive({{0}, {1}, {2}}, {0, 0, 1}, 1.0);
    c.near(val(triplet_hard_loss(t64({0, 1, 2}).view({3, 1}), torch::tensor({0L, 0L, 1L}), 1.0)), *exhaustive, tol,
           "triplet exhaustive");
    c.near(*exhaustive, 0.5, tol, "triplet 0.5");

    LossWeights ones{1, 1, 1, 1, 1, 1, 1, 1, 1, 0.5, 0.3};
    c.near(total_objective(Phase::self, std::map<std::string, double>{{"invc", 1}, {"recon", 1}, {"pre", 1}, {"real", 1}, {"deg", 1}}, ones),
           5.0, tol, "self sum");
    c.near(total_objective(Phase::cross, std::map<std::string, double>{{"id", 1}, {"recon", 1}, {"pre", 1}, {"real", 1}, {"deg", 1}}, ones),
           5.0, tol, "cross sum");
    LossWeights w = ones;
    w.sen = 2;
    w.both = 0.5;
    c.near(total_objective(Phase::dfen, std::map<std::string, double>{{"inv", 0.2}, {"sen", 0.4}, {"both", 0.6}}, w), 1.3, tol,
           "dfen sum");
    c.throws<CompositionError>(
        [&] { total_objective(Phase::self, std::map<std::string, double>{{"invc", 1}}, ones); }, "missing term");
    return c.outcome("loss examples within 1e-6");
}

Outcome gradient_correctness() {
    Checks c;
    double worst_kernel = 0, worst_e2e = 0;
    auto kernel = [&](const std::string& name, const std::function<torch::Tensor(const torch::Tensor&)>& f,
                      const torch::Tensor& x) {
        const double e = oracle::max_elementwise_grad_error(f, x, 1e-5);
        worst_kernel = std::max(worst_kernel, e);
        c.expect(e <= 1e-4, name + " rel err " + std::to_string(e));
    };
    for (std::uint64_t s = 0; s < 3; ++s) {
        auto other = randn64({2, 3, 4}, 100 + s);
        kernel("content", [&](const torch::Tensor& x) { return invariable_content_loss(x, other); }, randn64({2, 3, 4}, 200 + s));
        kernel("recon", [&](const torch::Tensor& x) { return reconstruction_loss(x, other); }, randn64({2, 3, 4}, 300 + s));
        auto ref = randn64({6}, 400 + s);
        kernel("pre", [&](const torch::Tensor& x) { return identity_preserving_loss(x, ref); }, randn64({6}, 500 + s));
        auto real = randn64({2, 1, 3, 2}, 600 + s);
        kernel("adv-d",
               [&](const torch::Tensor& x) {
                   std::vector<torch::Tensor> r{real, real.mean({2, 3}, true)}, f{x, x.mean({2, 3}, true)};
                   return reality_adversarial_loss(r, f, AdversarialSide::discriminator);
               },
               randn64({2, 1, 3, 2}, 700 + s));
        kernel("adv-g",
               [&](const torch::Tensor& x) {
                   std::vector<torch::Tensor> f{x};
                   return reality_adversarial_loss({}, f, AdversarialSide::generator);
               },
               randn64({2, 1, 3, 2}, 800 + s));
        auto others = randn64({6}, 900 + s);
        auto gamma = t64({1, -1, 1, -1, 1, 1});
        kernel("rank", [&](const torch::Tensor& x) { return degradation_ranking_loss(x, others, gamma, 0.5); },
               randn64({6}, 1000 + s));
        auto ids = torch::tensor({0L, 2L, 1L, 2L});
        kernel("ce", [&](const torch::Tensor& x) { return identification_loss(x, ids); }, randn64({4, 3}, 1100 + s));
        auto tl = torch::tensor({0L, 0L, 1L, 1L, 2L, 2L});
        kernel("triplet", [&](const torch::Tensor& x) { return triplet_hard_loss(x, tl, 0.3); }, randn64({6, 4}, 1200 + s));
        kernel("total",
               [&](const torch::Tensor& x) {
                   std::map<std::string, torch::Tensor> terms{{"inv", x[0]}, {"sen", x[1]}, {"both", x[2]}};
                   return total_objective(Phase::dfen, terms, LossWeights{});
               },
               randn64({3}, 1300 + s));
    }

    // End-to-end self and cross steps on the tiny float64 networks. LeakyReLU
    // kinks can fall inside a difference stencil, so each parameter group
    // keeps its best of three random directions.
    torch::manual_seed(3);
    Networks nets(testing_helpers::tiny_config(3));
    nets->to(torch::kFloat64);
    const auto corpus = testing_helpers::tiny_corpus(3, 2, 2, 4);
    TrainConfig tc;
    tc.stage = Stage::ddgan;
    tc.batch_size = 2;
    tc.seed = 9;
    auto self = make_self_batch(corpus, ddgan_batch(corpus, tc, 0, Phase::self));
    for (auto* x : {&self.x_i, &self.x_j, &self.x_k}) *x = x->to(torch::kFloat64);
    auto cross = make_cross_batch(corpus, ddgan_batch(corpus, tc, 0, Phase::cross));
    cross.x_i = cross.x_i.to(torch::kFloat64);
    cross.x_k = cross.x_k.to(torch::kFloat64);
    const auto gamma = t64({1, -1});
    const LossWeights w;
    std::vector<std::pair<std::string, std::function<torch::Tensor()>>> objectives{
        {"self-G", [&] { return self_generator_objective(nets, self, generate_self(nets, self), w).total; }},
        {"self-D", [&] { return self_discriminator_objective(nets, self, generate_self(nets, self), w).total; }},
        {"cross-G", [&] { return cross_generator_objective(nets, cross, generate_cross(nets, cross), gamma, w).total; }},
        {"cross-D", [&] { return cross_discriminator_objective(nets, cross, generate_cross(nets, cross), w).total; }},
    };
    const std::map<std::string, std::vector<const char*>> groups{
        {"self-G", {"E_c", "E_d", "E_d_self", "G"}},
        {"self-D", {"D_r", "D_d"}},
        {"cross-G", {"E_c", "E_d", "G", "cls_content"}},
        {"cross-D", {"D_r"}},
    };
    std::uint64_t seed = 1;
    for (const auto& [name, f] : objectives) {
        for (const char* group : groups.at(name)) {
            double best = 1e300;
            for (int k = 0; k < 3; ++k) {
                best = std::min(best, oracle::directional_grad_error(f, nets->parameters_of({group}), seed++, 1e-6));
            }
            worst_e2e = std::max(worst_e2e, best);
            c.expect(best <= 1e-3, name + "/" + group + " rel err " + std::to_string(best));
        }
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "gradient checks (kernels worst %.2e <= 1e-4, DDGAN groups worst %.2e <= 1e-3)",
                  worst_kernel, worst_e2e);
    return c.outcome(buf);
}

Outcome metric_oracle() {
    Checks c;
    std::mt19937_64 gen(12345);
    int compared = 0, excluded = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto in = oracle::random_instance(gen, 20, 50);
        Matrix dist(in.qid.size(), in.gid.size());
        for (std::size_t q = 0; q < in.qid.size(); ++q)
            for (std::size_t g = 0; g < in.gid.size(); ++g) {
                dist(q, g) = in.dist[q][g];
                excluded += oracle::excluded(in, q, g);
            }
        const RetrievalLabels labels{in.qid, in.gid, in.qcam, in.gcam};
        const auto want_cmc = oracle::cmc(in, 10);
        if (!want_cmc) {
            c.throws<ProtocolError>([&] { cmc(dist, labels, 10); }, "instance " + std::to_string(trial));
            continue;
        }
        ++compared;
        const auto got = cmc(dist, labels, 10);
        bool same = true;
        for (std::size_t k = 0; k < 10; ++k) same = same && std::abs(got.values[k] - (*want_cmc)[k]) <= 1e-12;
        c.expect(same, "cmc instance " + std::to_string(trial));
        // Summation order differs from the oracle, hence the 1e-12 slack.
        c.near(mean_average_precision(dist, labels), *oracle::mean_ap(in), 1e-12, "mAP instance " + std::to_string(trial));
    }
    c.expect(compared >= 50 && excluded > 0, "coverage");
    return c.outcome("checks; " + std::to_string(compared) + " instances match brute force within 1e-12 (" +
                     std::to_string(excluded) + " excluded pairs)");
}

Outcome adain_properties() {
    Checks c;
    auto gen = torch::make_generator<torch::CPUGeneratorImpl>(77);
    double worst_mean = 0, worst_std = 0, worst_rec = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const long ch = 1 + trial % 8;
        auto x = torch::randn({2, ch, 4 + trial % 5, 3 + trial % 4}, gen) * (0.5 + trial % 7) + (trial % 3 - 1.0);
        auto scale = torch::randn({2, ch}, gen) * 2;
        auto bias = torch::randn({2, ch}, gen) * 3;
        auto y = adain(x, scale, bias);
        auto mean = y.mean({2, 3});
        auto sd = (y - y.mean({2, 3}, true)).pow(2).mean({2, 3}).sqrt();
        worst_mean = std::max(worst_mean, val((mean - bias).abs().max()));
        worst_std = std::max(worst_std, val((sd - scale.abs()).abs().max()));
        auto m0 = x.mean({2, 3});
        auto s0 = (x - x.mean({2, 3}, true)).pow(2).mean({2, 3}).sqrt();
        worst_rec = std::max(worst_rec, val((adain(x, s0, m0) - x).abs().max() / (1.0 + x.abs().max())));
    }
    c.expect(worst_mean <= 1e-4, "mean " + std::to_string(worst_mean));
    c.expect(worst_std <= 1e-3, "std " + std::to_string(worst_std));
    c.expect(worst_rec <= 1e-3, "reconstruction " + std::to_string(worst_rec));
    char buf[160];
    std::snprintf(buf, sizeof(buf), "contracts on 1000 inputs (mean err %.1e, std err %.1e, identity err %.1e)", worst_mean,
                  worst_std, worst_rec);
    return c.outcome(buf);
}

Outcome protocol_fidelity() {
    Checks c;
    DatasetManifest m;
    for (int id = 0; id < 3000; ++id) {
        m.entries.push_back({"q" + std::to_string(id), id, 0});
        m.entries.push_back({"g" + std::to_string(id), id, 1});
    }
    Rng rng(2);
    const auto split = build_mlr_split(m, rng);
    std::map<double, int> counts;
    for (const auto& d : split.query_degradation) counts[d.param]++;
    std::ostringstream freq;
    c.expect(counts.size() == 3, "three ratios");
    for (double r : {2.0, 3.0, 4.0}) {
        const double f = counts[r] / 3000.0;
        freq << " r" << r << "=" << f;
        c.near(f, 1.0 / 3.0, 0.03, "ratio " + std::to_string(r));
    }

    // Single-shot: replay the gallery draws and recompute each trial with the
    // brute-force metrics.
    std::mt19937_64 gen(9);
    std::uniform_real_distribution<double> u(0, 1);
    double worst = 0;
    for (int inst = 0; inst < 20; ++inst) {
        oracle::Instance in;
        const int ids = 5 + inst % 6;
        for (int q = 0; q < ids; ++q) {
            in.qid.push_back(q);
            in.qcam.push_back(0);
        }
        for (int g = 0; g < 4 * ids; ++g) {
            in.gid.push_back(g % ids);
            in.gcam.push_back(1 + g % 2);
        }
        Matrix dist(in.qid.size(), in.gid.size());
        in.dist.assign(in.qid.size(), std::vector<double>(in.gid.size()));
        for (std::size_t q = 0; q < in.qid.size(); ++q)
            for (std::size_t g = 0; g < in.gid.size(); ++g) dist(q, g) = in.dist[q][g] = std::floor(u(gen) * 8) / 8;
        const RetrievalLabels labels{in.qid, in.gid, in.qcam, in.gcam};
        Rng a(100 + inst), replay(100 + inst);
        const auto got = single_shot_eval(dist, labels, 5, 10, a);
        std::vector<double> mean_cmc(5, 0.0);
        double mean_map = 0;
        for (int t = 0; t < 10; ++t) {
            std::map<int, std::vector<std::size_t>> cand;
            for (std::size_t g = 0; g < in.gid.size(); ++g) cand[in.gid[g]].push_back(g);
            oracle::Instance sub;
            sub.qid = in.qid;
            sub.qcam = in.qcam;
            sub.dist.assign(in.qid.size(), {});
            for (const auto& [id, cols] : cand) {
                const auto g = cols[replay.below(cols.size())];
                sub.gid.push_back(in.gid[g]);
                sub.gcam.push_back(in.gcam[g]);
                for (std::size_t q = 0; q < in.qid.size(); ++q) sub.dist[q].push_back(in.dist[q][g]);
            }
            const auto curve = *oracle::cmc(sub, 5);
            for (std::size_t k = 0; k < 5; ++k) mean_cmc[k] += curve[k] / 10;
            mean_map += *oracle::mean_ap(sub) / 10;
        }
        for (std::size_t k = 0; k < 5; ++k) worst = std::max(worst, std::abs(mean_cmc[k] - got.cmc.values[k]));
        worst = std::max(worst, std::abs(mean_map - got.map));
    }
    c.expect(worst <= 1e-9, "single-shot recomputation " + std::to_string(worst));
    char buf[64];
    std::snprintf(buf, sizeof(buf), "; single-shot max diff %.1e", worst);
    return c.outcome("protocol checks (MLR frequencies" + freq.str() + ")" + buf);
}

// ---------------------------------------------------------------------------
// Pipeline criteria

struct SeedRun {
    std::uint64_t seed = 0;
    double ranking_init = 0, ranking_after = 0;
    double cosine_init = 0, cosine_after = 0;
    std::map<std::string, double> rank1;
};

double probe_stat(const fs::path& ckpt, const NetworkConfig& net, const ProbePairs& pairs,
                  double (*stat)(Networks&, const ProbePairs&)) {
    Networks nets(net);
    load_checkpoint(ckpt, nets);
    nets->eval();
    return stat(nets, pairs);
}

SeedRun run_seed(const fs::path& out, std::uint64_t seed) {
    auto cfg = default_experiment_config();
    cfg.seed = seed;
    cfg.output_dir = out / ("seed-" + std::to_string(seed));
    SeedRun r;
    r.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    auto log = [&](const std::string& what) {
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::fprintf(stderr, "  seed %llu: %s (%.0f s)\n", static_cast<unsigned long long>(seed), what.c_str(), s);
    };
    for (const char* preset : {"full", "finv-only", "fsen-only", "no-dil"}) {
        r.rank1[preset] = run_ablation(cfg, preset).cmc.at(0);
        log(std::string(preset) + " rank-1 " + std::to_string(r.rank1[preset]));
    }

    const auto data = prepare_data(cfg);
    const auto net = network_for(cfg, data);
    const auto stage0 = run_pretrain(cfg, data);
    const auto stage1 = run_ddgan(cfg, data, stage0);
    const auto probes = make_probe_pairs(load_images(data.split.test, cfg.network.geometry), cfg.degradation,
                                         mix_seed(seed, 0x9B0E));
    r.ranking_init = probe_stat(stage0, net, probes, degradation_ranking_accuracy);
    r.ranking_after = probe_stat(stage1, net, probes, degradation_ranking_accuracy);
    r.cosine_init = probe_stat(stage0, net, probes, content_invariance);
    r.cosine_after = probe_stat(stage1, net, probes, content_invariance);
    log("probes done");
    return r;
}

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, a);
    return buf;
}

Outcome disentanglement(const std::vector<SeedRun>& runs) {
    double sum = 0;
    std::string per;
    for (const auto& r : runs) {
        sum += r.ranking_after;
        per += " s" + std::to_string(r.seed) + "=" + fmt("%.3f", r.ranking_after) + "(init " + fmt("%.3f", r.ranking_init) + ")";
    }
    const double mean = sum / runs.size();
    return {mean >= 0.8, "D_d ranks degraded member higher in " + fmt("%.1f", 100 * mean) + "% of held-out pairs (>= 80%);" + per};
}

Outcome invariance_gain(const std::vector<SeedRun>& runs) {
    double sum = 0;
    std::string per;
    for (const auto& r : runs) {
        sum += r.cosine_after - r.cosine_init;
        per += " s" + std::to_string(r.seed) + ": " + fmt("%.3f", r.cosine_init) + " -> " + fmt("%.3f", r.cosine_after);
    }
    const double gain = sum / runs.size();
    return {gain >= 0.1, "mean E_c cosine gain " + fmt("%+.3f", gain) + " (>= +0.100);" + per};
}

Outcome ablation_direction(const std::vector<SeedRun>& runs) {
    std::map<std::string, double> mean;
    for (const auto& r : runs)
        for (const auto& [k, v] : r.rank1) mean[k] += v / runs.size();
    const double gap = mean["full"] - mean["no-dil"];
    const double best_single = std::max(mean["finv-only"], mean["fsen-only"]);
    const bool pass = gap >= 0.05 && mean["full"] >= best_single - 0.01;
    return {pass, "rank-1 full " + fmt("%.3f", mean["full"]) + " vs no-dil " + fmt("%.3f", mean["no-dil"]) + " (gap " +
                      fmt("%+.3f", gap) + ", need >= +0.050); f_inv " + fmt("%.3f", mean["finv-only"]) + ", f_sen " +
                      fmt("%.3f", mean["fsen-only"]) + " (fused >= max - 0.010)"};
}

// Two identical small runs: metrics and every loss log must agree.
Outcome reproducibility(const fs::path& out) {
    auto cfg = default_experiment_config();
    cfg.synthetic.identities = 12;
    cfg.synthetic.per_identity = 6;
    cfg.pretrain.iterations = 20;
    cfg.ddgan.iterations = 10;
    cfg.dfen.iterations = 20;
    cfg.pretrain.identities_per_batch = cfg.dfen.identities_per_batch = 4;
    cfg.eval.max_rank = 5;
    cfg.seed = 4;
    std::vector<MetricsReport> reports;
    std::vector<std::vector<json>> logs;
    for (const char* tag : {"a", "b"}) {
        cfg.output_dir = out / "repro" / tag;
        fs::remove_all(cfg.output_dir);
        reports.push_back(run_ablation(cfg, "full"));
        std::vector<json> lines;
        std::vector<fs::path> files;
        for (const auto& e : fs::recursive_directory_iterator(cfg.output_dir))
            if (e.path().filename() == "log.jsonl") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            std::ifstream in(f);
            std::string line;
            while (std::getline(in, line)) lines.push_back(json::parse(line));
        }
        logs.push_back(std::move(lines));
    }
    double worst = 0;
    bool same_shape = logs[0].size() == logs[1].size() && !logs[0].empty() &&
                      reports[0].cmc.size() == reports[1].cmc.size();
    std::function<void(const json&, const json&)> compare = [&](const json& a, const json& b) {
        if (a.type() != b.type() && !(a.is_number() && b.is_number())) {
            same_shape = false;
        } else if (a.is_number()) {
            worst = std::max(worst, std::abs(a.get<double>() - b.get<double>()));
        } else if (a.is_object()) {
            if (a.size() != b.size()) same_shape = false;
            for (auto it = a.begin(); it != a.end(); ++it) {
                if (!b.contains(it.key())) same_shape = false;
                else compare(it.value(), b.at(it.key()));
            }
        } else if (a.is_array()) {
            if (a.size() != b.size()) same_shape = false;
            else
                for (std::size_t i = 0; i < a.size(); ++i) compare(a[i], b[i]);
        } else if (a != b) {
            same_shape = false;
        }
    };
    if (same_shape) {
        for (std::size_t i = 0; i < logs[0].size(); ++i) compare(logs[0][i], logs[1][i]);
        auto ja = reports[0].to_json(), jb = reports[1].to_json();
        ja.erase("checkpoint");
        jb.erase("checkpoint");
        compare(ja, jb);
    }
    return {same_shape && worst <= 1e-3, std::to_string(logs[0].size()) + " log lines and metrics compared, max diff " +
                                             fmt("%.1e", worst) + " (<= 1e-3)"};
}

}  // namespace

int main(int argc, char** argv) {
    torch::set_num_threads(1);
    CLI::App app{"acceptance criteria"};
    std::string out = "acceptance-runs";
    int seeds = 3;
    std::vector<int> only;
    app.add_option("--out", out, "work directory for training runs")->capture_default_str();
    app.add_option("--seeds", seeds, "seeds for the pipeline criteria")->capture_default_str();
    app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
    CLI11_PARSE(app, argc, argv);
    if (const char* root = std::getenv("DIREID_OUT"); root && *root && fs::path(out).is_relative()) out = fs::path(root) / out;
    const std::set<int> selected(only.begin(), only.end());
    auto wanted = [&](int n) { return selected.empty() || selected.contains(n); };

    const char* names[] = {"",
                           "loss kernel exactness",
                           "gradient correctness",
                           "metric oracle equivalence",
                           "AdaIN properties",
                           "disentanglement direction",
                           "invariance gain",
                           "ablation direction",
                           "protocol fidelity",
                           "reproducibility"};
    int failed = 0;
    auto report = [&](int n, const std::function<Outcome()>& f) {
        if (!wanted(n)) return;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", n, names[n], o.detail.c_str(), s);
        std::fflush(stdout);
    };

    report(1, loss_exactness);
    report(2, gradient_correctness);
    report(3, metric_oracle);
    report(4, adain_properties);

    std::vector<SeedRun> runs;
    std::string pipeline_error;
    if (wanted(5) || wanted(6) || wanted(7)) {
        try {
            for (int s = 1; s <= seeds; ++s) runs.push_back(run_seed(out, static_cast<std::uint64_t>(s)));
        } catch (const std::exception& e) {
            pipeline_error = e.what();
        }
    }
    auto pipeline = [&](Outcome (*f)(const std::vector<SeedRun>&)) {
        return [&, f]() -> Outcome {
            if (!pipeline_error.empty()) throw std::runtime_error(pipeline_error);
            return f(runs);
        };
    };
    report(5, pipeline(disentanglement));
    report(6, pipeline(invariance_gain));
    report(7, pipeline(ablation_direction));
    report(8, protocol_fidelity);
    report(9, [&] { return reproducibility(out); });
    return failed == 0 ? 0 : 1;
}
