#include "direid/checkpoint.hpp"

#include "json.hpp"

#include "direid/error.hpp"

namespace direid {

using nlohmann::json;

std::string network_config_to_json(const NetworkConfig& c) {
    json j = {{"height", c.geometry.height},
              {"width", c.geometry.width},
              {"channels", c.geometry.channels},
              {"content_channels", c.content_channels},
              {"degradation_channels", c.degradation_channels},
              {"sensitive_channels", c.sensitive_channels},
              {"cue_channels", c.cue_channels},
              {"encoder_scales", c.encoder_scales},
              {"discriminator_scales", c.discriminator_scales},
              {"num_identities", c.num_identities},
              {"base_width", c.base_width},
              {"attention_hidden", c.attention_hidden}};
    return j.dump();
}

NetworkConfig network_config_from_json(const std::string& text) {
    const json j = json::parse(text);
    NetworkConfig c;
    c.geometry = {j.at("height").get<int>(), j.at("width").get<int>(), j.at("channels").get<int>()};
    c.content_channels = j.at("content_channels");
    c.degradation_channels = j.at("degradation_channels");
    c.sensitive_channels = j.at("sensitive_channels");
    c.cue_channels = j.at("cue_channels");
    c.encoder_scales = j.at("encoder_scales");
    c.discriminator_scales = j.at("discriminator_scales");
    c.num_identities = j.at("num_identities");
    c.base_width = j.at("base_width");
    c.attention_hidden = j.at("attention_hidden");
    return c;
}

std::string checkpoint_name(int stage, long iteration) {
    return "stage" + std::to_string(stage) + "_iter" + std::to_string(iteration) + ".ckpt";
}

void save_checkpoint(const std::filesystem::path& path, Networks& nets, const CheckpointInfo& info,
                     const std::map<std::string, torch::optim::Optimizer*>& optimizers) {
    torch::serialize::OutputArchive archive;
    archive.write("format", c10::IValue(std::string(kCheckpointFormat)));
    archive.write("version", c10::IValue(static_cast<int64_t>(kCheckpointVersion)));
    archive.write("stage", c10::IValue(static_cast<int64_t>(info.stage)));
    archive.write("iteration", c10::IValue(static_cast<int64_t>(info.iteration)));
    archive.write("config", c10::IValue(network_config_to_json(nets->cfg)));

    torch::serialize::OutputArchive params;
    nets->save(params);
    archive.write("networks", params);
    for (const auto& [name, opt] : optimizers) {
        torch::serialize::OutputArchive sub;
        opt->save(sub);
        archive.write("optim." + name, sub);
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    try {
        archive.save_to(path.string());
    } catch (const c10::Error& e) {
        throw IoError("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
}

namespace {

torch::serialize::InputArchive open_archive(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw StateError("checkpoint not found: " + path.string());
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw StateError("unreadable checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
    c10::IValue format;
    if (!archive.try_read("format", format) || !format.isString() || format.toStringRef() != kCheckpointFormat) {
        throw StateError("not a checkpoint file: " + path.string());
    }
    c10::IValue version;
    archive.read("version", version);
    if (version.toInt() != kCheckpointVersion) {
        throw StateError("unsupported checkpoint version " + std::to_string(version.toInt()));
    }
    return archive;
}

CheckpointInfo read_info(torch::serialize::InputArchive& archive) {
    c10::IValue stage, iteration, config;
    archive.read("stage", stage);
    archive.read("iteration", iteration);
    archive.read("config", config);
    return {static_cast<int>(stage.toInt()), static_cast<long>(iteration.toInt()),
            network_config_from_json(config.toStringRef())};
}

}  // namespace

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
    auto archive = open_archive(path);
    return read_info(archive);
}

CheckpointInfo load_checkpoint(const std::filesystem::path& path, Networks& nets,
                               const std::map<std::string, torch::optim::Optimizer*>& optimizers) {
    auto archive = open_archive(path);
    const auto info = read_info(archive);
    if (!(info.network == nets->cfg)) {
        throw StateError("checkpoint network config " + network_config_to_json(info.network) +
                         " is incompatible with " + network_config_to_json(nets->cfg));
    }
    torch::serialize::InputArchive params;
    archive.read("networks", params);
    nets->load(params);
    for (const auto& [name, opt] : optimizers) {
        torch::serialize::InputArchive sub;
        if (archive.try_read("optim." + name, sub)) opt->load(sub);
    }
    return info;
}

}  // namespace direid
