#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <random>
#include <string>

#include "direid/data.hpp"
#include "direid/networks.hpp"
#include "direid/training.hpp"

namespace testing_helpers {

// Tiny networks for fast gradient and training tests: 16x8 images, C_c = 8.
inline direid::NetworkConfig tiny_config(int num_identities = 4) {
    direid::NetworkConfig c;
    c.geometry = {16, 8, 3};
    c.content_channels = 8;
    c.degradation_channels = 4;
    c.sensitive_channels = 8;
    c.cue_channels = 6;
    c.base_width = 4;
    c.attention_hidden = 5;
    c.num_identities = num_identities;
    return c;
}

// In-memory synthetic corpus (no files); entry paths are placeholders.
inline direid::Corpus tiny_corpus(int identities, int per_identity, int cameras, std::uint64_t seed,
                                  direid::Geometry geometry = {16, 8, 3}) {
    direid::DatasetManifest m;
    std::vector<direid::Image> images;
    for (int id = 0; id < identities; ++id) {
        const auto spec = direid::SyntheticIdentitySpec::from_seed(direid::synthetic_identity_seed(seed, id));
        for (int n = 0; n < per_identity; ++n) {
            const int cam = n % cameras;
            m.entries.push_back({"mem/" + std::to_string(id) + "_" + std::to_string(n) + ".png", id, cam});
            m.original_ids[id] = id;
            images.push_back(direid::synth_identity_image(spec, cam, static_cast<std::uint64_t>(n), geometry));
        }
    }
    return direid::Corpus::from_images(std::move(m), std::move(images));
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("direid-" + tag + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace testing_helpers
