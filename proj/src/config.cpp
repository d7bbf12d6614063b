#include "direid/config.hpp"

#include <fstream>

#include "direid/error.hpp"

namespace direid {

using nlohmann::json;

TrainConfig ExperimentConfig::stage_config(Stage stage) const {
    TrainConfig t = stage == Stage::pretrain_id ? pretrain : stage == Stage::ddgan ? ddgan : dfen;
    t.stage = stage;
    t.seed = mix_seed(seed, static_cast<std::uint64_t>(stage) + 100);
    t.degradation = degradation;
    t.weights = weights;
    t.output_dir = output_dir;
    return t;
}

ExperimentConfig default_experiment_config() {
    ExperimentConfig c;
    c.pretrain.iterations = 1500;
    c.pretrain.identities_per_batch = 8;
    c.pretrain.instances_per_identity = 4;
    c.ddgan.iterations = 5000;
    c.ddgan.batch_size = 8;
    c.ddgan.checkpoint_every = 1000;
    c.dfen.iterations = 1500;
    c.dfen.identities_per_batch = 8;
    c.dfen.instances_per_identity = 4;
    return c;
}

namespace {

json train_to_json(const TrainConfig& t) {
    return {{"iterations", t.iterations},
            {"batch_size", t.batch_size},
            {"identities_per_batch", t.identities_per_batch},
            {"instances_per_identity", t.instances_per_identity},
            {"lr_gan", t.lr_gan},
            {"lr_classifier", t.lr_classifier},
            {"finetune_scale", t.finetune_scale},
            {"adam_beta1", t.adam_beta1},
            {"adam_beta2", t.adam_beta2},
            {"checkpoint_every", t.checkpoint_every},
            {"attention", t.attention},
            {"freeze_content", t.freeze_content}};
}

void train_from_json(const json& j, TrainConfig& t) {
    t.iterations = j.at("iterations");
    t.batch_size = j.at("batch_size");
    t.identities_per_batch = j.at("identities_per_batch");
    t.instances_per_identity = j.at("instances_per_identity");
    t.lr_gan = j.at("lr_gan");
    t.lr_classifier = j.at("lr_classifier");
    t.finetune_scale = j.at("finetune_scale");
    t.adam_beta1 = j.at("adam_beta1");
    t.adam_beta2 = j.at("adam_beta2");
    t.checkpoint_every = j.at("checkpoint_every");
    t.attention = j.at("attention");
    t.freeze_content = j.at("freeze_content");
}

// Every key of `overlay` must exist in `base`; objects merge recursively.
void strict_merge(json& base, const json& overlay, const std::string& prefix) {
    if (!overlay.is_object()) throw ConfigError("config document must be an object at '" + prefix + "'");
    for (const auto& [key, value] : overlay.items()) {
        const std::string dotted = prefix.empty() ? key : prefix + "." + key;
        if (!base.contains(key)) throw ConfigError("unknown config key '" + dotted + "'");
        if (base[key].is_object()) {
            strict_merge(base[key], value, dotted);
        } else {
            base[key] = value;
        }
    }
}

}  // namespace

json to_json(const ExperimentConfig& c) {
    const auto& n = c.network;
    const auto& w = c.weights;
    return {
        {"seed", c.seed},
        {"output_dir", c.output_dir.string()},
        {"data",
         {{"manifest", c.manifest.string()},
          {"train_fraction", c.train_fraction},
          {"capture_degradation_prob", c.capture_degradation_prob}}},
        {"synthetic",
         {{"identities", c.synthetic.identities},
          {"per_identity", c.synthetic.per_identity},
          {"cameras", c.synthetic.cameras}}},
        {"network",
         {{"height", n.geometry.height},
          {"width", n.geometry.width},
          {"content_channels", n.content_channels},
          {"degradation_channels", n.degradation_channels},
          {"sensitive_channels", n.sensitive_channels},
          {"cue_channels", n.cue_channels},
          {"encoder_scales", n.encoder_scales},
          {"discriminator_scales", n.discriminator_scales},
          {"base_width", n.base_width},
          {"attention_hidden", n.attention_hidden}}},
        {"degradation", {{"kind", std::string(to_string(c.degradation.type))}, {"lo", c.degradation.lo}, {"hi", c.degradation.hi}}},
        {"weights",
         {{"invc", w.invc},
          {"recon", w.recon},
          {"pre", w.pre},
          {"real", w.real},
          {"deg", w.deg},
          {"id", w.id},
          {"inv", w.inv},
          {"sen", w.sen},
          {"both", w.both},
          {"rank_margin", w.rank_margin},
          {"triplet_margin", w.triplet_margin}}},
        {"train",
         {{"pretrain_id", train_to_json(c.pretrain)}, {"ddgan", train_to_json(c.ddgan)}, {"dfen", train_to_json(c.dfen)}}},
        {"eval",
         {{"split", c.eval.split},
          {"max_rank", c.eval.max_rank},
          {"trials", c.eval.trials},
          {"variant", std::string(to_string(c.eval.variant))},
          {"attention", c.eval.attention},
          {"query_camera", c.eval.query_camera}}},
    };
}

ExperimentConfig from_json(const json& overlay) {
    json doc = to_json(default_experiment_config());
    strict_merge(doc, overlay, "");
    ExperimentConfig c = default_experiment_config();
    try {
        c.seed = doc.at("seed").get<std::uint64_t>();
        c.output_dir = doc.at("output_dir").get<std::string>();
        const auto& d = doc.at("data");
        c.manifest = d.at("manifest").get<std::string>();
        c.train_fraction = d.at("train_fraction");
        c.capture_degradation_prob = d.at("capture_degradation_prob");
        const auto& s = doc.at("synthetic");
        c.synthetic = {s.at("identities"), s.at("per_identity"), s.at("cameras")};
        const auto& n = doc.at("network");
        c.network.geometry = {n.at("height").get<int>(), n.at("width").get<int>(), 3};
        c.network.content_channels = n.at("content_channels");
        c.network.degradation_channels = n.at("degradation_channels");
        c.network.sensitive_channels = n.at("sensitive_channels");
        c.network.cue_channels = n.at("cue_channels");
        c.network.encoder_scales = n.at("encoder_scales");
        c.network.discriminator_scales = n.at("discriminator_scales");
        c.network.base_width = n.at("base_width");
        c.network.attention_hidden = n.at("attention_hidden");
        const auto& g = doc.at("degradation");
        c.degradation.type = parse_degradation_type(g.at("kind").get<std::string>());
        c.degradation.lo = g.at("lo");
        c.degradation.hi = g.at("hi");
        const auto& w = doc.at("weights");
        c.weights = {w.at("invc"), w.at("recon"), w.at("pre"), w.at("real"), w.at("deg"), w.at("id"),
                     w.at("inv"),  w.at("sen"),   w.at("both"), w.at("rank_margin"), w.at("triplet_margin")};
        const auto& t = doc.at("train");
        train_from_json(t.at("pretrain_id"), c.pretrain);
        train_from_json(t.at("ddgan"), c.ddgan);
        train_from_json(t.at("dfen"), c.dfen);
        const auto& e = doc.at("eval");
        c.eval.split = e.at("split").get<std::string>();
        c.eval.max_rank = e.at("max_rank");
        c.eval.trials = e.at("trials");
        c.eval.variant = parse_feature_variant(e.at("variant").get<std::string>());
        c.eval.attention = e.at("attention");
        c.eval.query_camera = e.at("query_camera");
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("invalid config value: ") + ex.what());
    }
    if (c.eval.split != "degraded" && c.eval.split != "mlr") {
        throw ConfigError("eval.split must be 'degraded' or 'mlr'");
    }
    if (c.eval.max_rank < 1 || c.eval.trials < 1) throw ConfigError("eval.max_rank and eval.trials must be >= 1");
    if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) throw ConfigError("data.train_fraction must be in (0, 1)");
    if (!(c.capture_degradation_prob >= 0.0 && c.capture_degradation_prob <= 1.0)) {
        throw ConfigError("data.capture_degradation_prob must be in [0, 1]");
    }
    c.weights.validate();
    return c;
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "' must look like key.path=value");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    const json defaults = to_json(default_experiment_config());
    const json* schema = &defaults;
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!schema->is_object() || !schema->contains(part)) throw ConfigError("unknown config key '" + key + "'");
        schema = &(*schema)[part];
        if (!node->is_object()) *node = json::object();
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    if (schema->is_object()) throw ConfigError("config key '" + key + "' names a section, not a value");
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded() || (schema->is_string() && !value.is_string())) value = raw;
    *node = value;
}

ExperimentConfig resolve_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
    json doc = json::object();
    if (!file.empty()) {
        std::ifstream in(file);
        if (!in) throw ConfigError("config file not found: " + file.string());
        doc = json::parse(in, nullptr, false);
        if (doc.is_discarded()) throw ConfigError("config file is not valid JSON: " + file.string());
    }
    for (const auto& o : overrides) apply_override(doc, o);
    return from_json(doc);
}

}  // namespace direid
