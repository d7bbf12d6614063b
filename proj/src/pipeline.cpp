#include "direid/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "direid/checkpoint.hpp"
#include "direid/error.hpp"
#include "direid/features.hpp"
#include "direid/retrieval.hpp"

namespace direid {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string short_hash(const json& doc) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : doc.dump()) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf, 10);
}

json data_key(const ExperimentConfig& cfg) {
    json doc = to_json(cfg);
    return {{"seed", cfg.seed}, {"data", doc["data"]}, {"synthetic", doc["synthetic"]},
            {"network", doc["network"]}, {"degradation", doc["degradation"]}};
}

void write_json(const fs::path& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

std::optional<json> read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    auto doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) return std::nullopt;
    return doc;
}

// A stage directory is finished once its inputs file has been written after
// the final checkpoint.
struct StageDir {
    fs::path dir;
    fs::path checkpoint;
    json inputs;
    bool done = false;
};

StageDir stage_dir(const ExperimentConfig& cfg, int stage, const json& inputs, long iterations) {
    StageDir s;
    s.inputs = inputs;
    s.dir = cfg.output_dir / ("stage" + std::to_string(stage) + "-" + short_hash(inputs));
    s.checkpoint = s.dir / checkpoint_name(stage, iterations);
    const auto stored = read_json(s.dir / "inputs.json");
    s.done = stored && *stored == inputs && fs::exists(s.checkpoint);
    if (!s.done) {
        std::error_code ec;
        fs::remove(s.dir / "inputs.json", ec);
        fs::create_directories(s.dir, ec);
        if (ec) throw IoError("cannot create " + s.dir.string() + ": " + ec.message());
    }
    return s;
}

TrainConfig stage_train_config(const ExperimentConfig& cfg, Stage stage, const fs::path& dir) {
    auto t = cfg.stage_config(stage);
    t.output_dir = dir;
    return t;
}

}  // namespace

ExperimentData prepare_data(const ExperimentConfig& cfg) {
    ExperimentData d;
    if (cfg.manifest.empty()) {
        const auto& s = cfg.synthetic;
        const json key = {{"seed", cfg.seed}, {"synthetic", to_json(cfg)["synthetic"]},
                          {"height", cfg.network.geometry.height}, {"width", cfg.network.geometry.width}};
        const fs::path dir = cfg.output_dir / ("data-" + short_hash(key));
        if (fs::exists(dir / "manifest.csv")) {
            d.full = load_manifest(dir / "manifest.csv");
        } else {
            build_synthetic_dataset(s.identities, s.per_identity, s.cameras, cfg.seed, dir, cfg.network.geometry);
            d.full = load_manifest(dir / "manifest.csv");
        }
    } else {
        if (!fs::exists(cfg.manifest)) throw ConfigError("data.manifest does not exist: " + cfg.manifest.string());
        d.full = load_manifest(cfg.manifest);
    }
    d.split = split_identities(d.full, cfg.train_fraction, mix_seed(cfg.seed, 0x5B17));
    const auto clean = Corpus::load(d.split.train, cfg.network.geometry);
    d.train = with_capture_degradations(clean, cfg.degradation, cfg.capture_degradation_prob,
                                        mix_seed(cfg.seed, 0xCA97));
    return d;
}

NetworkConfig network_for(const ExperimentConfig& cfg, const ExperimentData& data) {
    auto n = cfg.network;
    n.num_identities = data.train.num_identities();
    n.validate();
    return n;
}

fs::path run_pretrain(const ExperimentConfig& cfg, const ExperimentData& data) {
    const json inputs = {{"data", data_key(cfg)},
                         {"train", to_json(cfg)["train"]["pretrain_id"]},
                         {"triplet_margin", cfg.weights.triplet_margin}};
    auto s = stage_dir(cfg, 0, inputs, cfg.pretrain.iterations);
    if (s.done) return s.checkpoint;
    torch::manual_seed(mix_seed(cfg.seed, 0x1417));
    Networks nets(network_for(cfg, data));
    TrainingLog log(s.dir / "log.jsonl");
    auto result = pretrain_identity_encoder(nets, stage_train_config(cfg, Stage::pretrain_id, s.dir), data.train, &log);
    log.write_line(json{{"phase", "pretrain"}, {"train_accuracy", result.train_accuracy}}.dump());
    write_json(s.dir / "inputs.json", inputs);
    return result.checkpoint;
}

fs::path run_ddgan(const ExperimentConfig& cfg, const ExperimentData& data, const fs::path& stage0) {
    const json inputs = {{"data", data_key(cfg)},
                         {"stage0", stage0.string()},
                         {"train", to_json(cfg)["train"]["ddgan"]},
                         {"weights", to_json(cfg)["weights"]}};
    auto s = stage_dir(cfg, 1, inputs, cfg.ddgan.iterations);
    if (s.done) return s.checkpoint;
    Networks nets(network_for(cfg, data));
    TrainingLog log(s.dir / "log.jsonl");
    auto result = train_ddgan(nets, stage_train_config(cfg, Stage::ddgan, s.dir), data.train, stage0, &log);
    write_json(s.dir / "inputs.json", inputs);
    return result.checkpoint;
}

fs::path run_dfen(const ExperimentConfig& cfg, const ExperimentData& data, const fs::path& stage0,
                  const std::optional<fs::path>& stage1) {
    const json inputs = {{"data", data_key(cfg)},
                         {"stage0", stage0.string()},
                         {"stage1", stage1 ? json(stage1->string()) : json(nullptr)},
                         {"train", to_json(cfg)["train"]["dfen"]},
                         {"weights", to_json(cfg)["weights"]}};
    auto s = stage_dir(cfg, 2, inputs, cfg.dfen.iterations);
    if (s.done) return s.checkpoint;
    Networks nets(network_for(cfg, data));
    load_dfen_prerequisites(nets, stage0, stage1);
    TrainingLog log(s.dir / "log.jsonl");
    auto result = train_dfen(nets, stage_train_config(cfg, Stage::dfen, s.dir), data.train, &log);
    write_json(s.dir / "inputs.json", inputs);
    return result.checkpoint;
}

// ---------------------------------------------------------------------------

json MetricsReport::to_json() const {
    return {{"variant", variant}, {"cmc", cmc}, {"map", map}, {"trials", trials}, {"seed", seed},
            {"checkpoint", checkpoint}};
}

MetricsReport MetricsReport::from_json(const json& doc, const std::string& source) {
    MetricsReport r;
    try {
        r.variant = doc.at("variant").get<std::string>();
        r.cmc = doc.at("cmc").get<std::vector<double>>();
        r.map = doc.at("map").get<double>();
        r.trials = doc.at("trials").get<int>();
        r.seed = doc.at("seed").get<std::uint64_t>();
        r.checkpoint = doc.at("checkpoint").get<std::string>();
    } catch (const json::exception& e) {
        throw IoError(source + ": not a metrics report (" + e.what() + ")");
    }
    if (r.cmc.empty()) throw IoError(source + ": not a metrics report (empty cmc)");
    return r;
}

void write_metrics(const fs::path& path, const MetricsReport& report) { write_json(path, report.to_json()); }

MetricsReport read_metrics(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read metrics file " + path.string());
    auto doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw IoError(path.string() + ": not valid JSON");
    return MetricsReport::from_json(doc, path.string());
}

MetricsReport evaluate_checkpoint(const ExperimentConfig& cfg, const DatasetManifest& test, const fs::path& checkpoint) {
    if (!fs::exists(checkpoint)) throw StateError("checkpoint not found: " + checkpoint.string());
    const auto info = read_checkpoint_info(checkpoint);
    Networks nets(info.network);
    load_checkpoint(checkpoint, nets);

    Rng rng(mix_seed(cfg.seed, 0xE7A1));
    const std::optional<int> qcam = cfg.eval.query_camera >= 0 ? std::optional<int>(cfg.eval.query_camera) : std::nullopt;
    const auto split = cfg.eval.split == "mlr" ? build_mlr_split(test, rng, qcam)
                                               : build_degraded_split(test, cfg.degradation, rng, qcam);
    const auto& geometry = info.network.geometry;
    const auto query_images = load_query_images(split, geometry);
    const auto gallery_images = load_images(split.gallery, geometry);

    auto labels_of = [](const DatasetManifest& m, bool camera) {
        std::vector<int> out;
        for (const auto& e : m.entries) out.push_back(camera ? e.camera : e.identity);
        return out;
    };
    const auto qid = labels_of(split.query, false), qcm = labels_of(split.query, true);
    const auto gid = labels_of(split.gallery, false), gcm = labels_of(split.gallery, true);
    const auto q = extract_features(nets, query_images, qid, qcm, cfg.eval.variant, cfg.eval.attention);
    const auto g = extract_features(nets, gallery_images, gid, gcm, cfg.eval.variant, cfg.eval.attention);
    const auto dist = distance_matrix(q, g);
    const RetrievalLabels labels{qid, gid, qcm, gcm};
    const auto result = single_shot_eval(dist, labels, static_cast<std::size_t>(cfg.eval.max_rank), cfg.eval.trials, rng);

    MetricsReport r;
    r.variant = std::string(to_string(cfg.eval.variant));
    r.cmc = result.cmc.values;
    r.map = result.map;
    r.trials = cfg.eval.trials;
    r.seed = cfg.seed;
    r.checkpoint = checkpoint.string();
    return r;
}

// ---------------------------------------------------------------------------

ExperimentConfig preset_config(const ExperimentConfig& base, std::string_view preset) {
    ExperimentConfig c = base;
    if (preset == "full") {
    } else if (preset == "no-dil") {
        c.dfen.attention = false;
        c.eval.attention = false;
    } else if (preset == "no-multiscale") {
        c.network.encoder_scales = 1;
    } else if (preset == "no-attention") {
        c.dfen.attention = false;
        c.eval.attention = false;
    } else if (preset == "finv-only") {
        c.eval.variant = FeatureVariant::f_inv;
    } else if (preset == "fsen-only") {
        c.eval.variant = FeatureVariant::f_sen_weighted;
    } else {
        throw ParameterError("unknown ablation preset '" + std::string(preset) + "'");
    }
    return c;
}

bool preset_uses_ddgan(std::string_view preset) { return preset != "no-dil"; }

MetricsReport run_ablation(const ExperimentConfig& base, std::string_view preset) {
    const auto cfg = preset_config(base, preset);
    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    if (ec) throw IoError("cannot create " + cfg.output_dir.string() + ": " + ec.message());
    write_json(cfg.output_dir / ("config-" + std::string(preset) + ".json"), to_json(cfg));

    const auto data = prepare_data(cfg);
    const auto stage0 = run_pretrain(cfg, data);
    std::optional<fs::path> stage1;
    if (preset_uses_ddgan(preset)) stage1 = run_ddgan(cfg, data, stage0);
    const auto stage2 = run_dfen(cfg, data, stage0, stage1);
    auto report = evaluate_checkpoint(cfg, data.split.test, stage2);
    write_metrics(cfg.output_dir / ("metrics-" + std::string(preset) + ".json"), report);
    return report;
}

std::string render_report(const std::vector<std::pair<std::string, MetricsReport>>& runs) {
    if (runs.empty()) throw ParameterError("report needs at least one metrics file");
    std::size_t name_width = 3;
    for (const auto& [name, _] : runs) name_width = std::max(name_width, name.size());

    auto value = [](const MetricsReport& r, int rank) -> std::optional<double> {
        if (rank == 0) return r.map;
        if (static_cast<std::size_t>(rank) > r.cmc.size()) return std::nullopt;
        return r.cmc[static_cast<std::size_t>(rank) - 1];
    };
    constexpr int columns[] = {1, 5, 10, 0};
    const char* titles[] = {"rank-1", "rank-5", "rank-10", "mAP"};

    std::ostringstream out;
    char buf[64];
    out << std::string(name_width, ' ').replace(0, 3, "run");
    for (const char* t : titles) {
        std::snprintf(buf, sizeof(buf), "  %9s", t);
        out << buf;
    }
    for (const char* t : titles) {
        std::snprintf(buf, sizeof(buf), "  %9s", (std::string("d.") + t).c_str());
        out << buf;
    }
    out << '\n';
    const auto& first = runs.front().second;
    for (const auto& [name, r] : runs) {
        out << name << std::string(name_width - name.size(), ' ');
        for (int k : columns) {
            const auto v = value(r, k);
            if (v) std::snprintf(buf, sizeof(buf), "  %9.3f", *v);
            else std::snprintf(buf, sizeof(buf), "  %9s", "-");
            out << buf;
        }
        for (int k : columns) {
            const auto v = value(r, k), v0 = value(first, k);
            if (v && v0) std::snprintf(buf, sizeof(buf), "  %+9.3f", *v - *v0);
            else std::snprintf(buf, sizeof(buf), "  %9s", "-");
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------

ProbePairs make_probe_pairs(const std::vector<Image>& images, const DegradationKind& kind, std::uint64_t seed) {
    ProbePairs p;
    for (std::size_t n = 0; n < images.size(); ++n) {
        Rng rng(mix_seed(seed, n));
        p.clean.push_back(images[n]);
        p.degraded.push_back(apply_degradation(images[n], kind.type, sample_degradation_param(kind, rng)));
    }
    return p;
}

namespace {

template <class F>
void for_chunks(const ProbePairs& pairs, F&& f) {
    constexpr std::size_t chunk = 64;
    const std::span<const Image> clean(pairs.clean), degraded(pairs.degraded);
    for (std::size_t start = 0; start < clean.size(); start += chunk) {
        const auto n = std::min(chunk, clean.size() - start);
        f(to_tensor(clean.subspan(start, n)), to_tensor(degraded.subspan(start, n)));
    }
}

}  // namespace

double degradation_ranking_accuracy(Networks& nets, const ProbePairs& pairs) {
    if (pairs.clean.empty()) throw ParameterError("no probe pairs");
    torch::NoGradGuard no_grad;
    nets->eval();
    long wins = 0;
    for_chunks(pairs, [&](const torch::Tensor& clean, const torch::Tensor& degraded) {
        auto s_clean = nets->degradation_score(clean).score;
        auto s_deg = nets->degradation_score(degraded).score;
        wins += (s_deg > s_clean).sum().item<long>();
    });
    return static_cast<double>(wins) / static_cast<double>(pairs.clean.size());
}

double content_invariance(Networks& nets, const ProbePairs& pairs) {
    if (pairs.clean.empty()) throw ParameterError("no probe pairs");
    torch::NoGradGuard no_grad;
    nets->eval();
    double sum = 0.0;
    for_chunks(pairs, [&](const torch::Tensor& clean, const torch::Tensor& degraded) {
        auto a = nets->encode_content(clean).pooled;
        auto b = nets->encode_content(degraded).pooled;
        sum += torch::cosine_similarity(a, b, 1, 1e-12).sum().item<double>();
    });
    return sum / static_cast<double>(pairs.clean.size());
}

}  // namespace direid
