#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <string>

#include "direid/networks.hpp"

namespace direid {

inline constexpr const char* kCheckpointFormat = "direid-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct CheckpointInfo {
    int stage = 0;
    long iteration = 0;
    NetworkConfig network;
};

std::string network_config_to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const std::string& text);

/// Writes the format tag, version, stage/iteration, the network config and
/// every parameter of `nets`; optimizers are stored under their map key.
void save_checkpoint(const std::filesystem::path& path, Networks& nets, const CheckpointInfo& info,
                     const std::map<std::string, torch::optim::Optimizer*>& optimizers = {});

/// Reads only the header fields.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Loads parameters into `nets` after checking that the stored network config
/// equals nets->cfg (StateError otherwise). Optimizers present in the map and
/// in the file are restored.
CheckpointInfo load_checkpoint(const std::filesystem::path& path, Networks& nets,
                               const std::map<std::string, torch::optim::Optimizer*>& optimizers = {});

/// `stage{S}_iter{N}.ckpt`
std::string checkpoint_name(int stage, long iteration);

}  // namespace direid
