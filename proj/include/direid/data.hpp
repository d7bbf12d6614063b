#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "direid/image.hpp"

namespace direid {

struct ManifestEntry {
    std::string path;  // relative to DatasetManifest::root
    int identity = 0;
    int camera = 0;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Identity/camera-labelled image index. After ingestion identities are the
/// contiguous range 0..K-1; `original_ids` maps the raw labels onto it.
struct DatasetManifest {
    std::filesystem::path root;
    std::vector<ManifestEntry> entries;
    std::map<long long, int> original_ids;

    std::size_t size() const { return entries.size(); }
    bool empty() const { return entries.empty(); }
    int num_identities() const;
    std::vector<int> cameras() const;
    std::filesystem::path resolve(const ManifestEntry& e) const { return root / e.path; }
};

/// Parses `relative_path,identity,camera` lines (no header). Blank lines are
/// ignored. Throws IngestError on a missing file, a malformed line (naming its
/// line number), a duplicate path, or an empty manifest.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Writes entries with their current (contiguous) identities.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Re-indexes identities to 0..K-1 in ascending order of the current labels,
/// composing with any existing original_ids map.
DatasetManifest relabel(DatasetManifest manifest);

/// Keeps the entries whose identity is in `identities`, then relabels.
DatasetManifest select_identities(const DatasetManifest& manifest, const std::vector<int>& identities);

struct IdentitySplit {
    DatasetManifest train;
    DatasetManifest test;
};

/// Seeded identity-disjoint split; `train_fraction` of identities (rounded
/// down, at least one on each side) go to training.
IdentitySplit split_identities(const DatasetManifest& manifest, double train_fraction, std::uint64_t seed);

/// Loads every image of the manifest at the given geometry (bilinear resize
/// when a file's size differs).
std::vector<Image> load_images(const DatasetManifest& manifest, const Geometry& geometry);

// ---------------------------------------------------------------------------
// Procedural pedestrians

/// Appearance of one synthetic identity; fully determined by identity_seed.
struct SyntheticIdentitySpec {
    std::uint64_t identity_seed = 0;
    double head_hue = 0.0;
    double torso_hue = 0.0;
    double leg_hue = 0.0;
    std::array<double, 3> body_proportions{};  // head, torso, legs; sums to 1
    double texture_phase = 0.0;
    double texture_frequency = 0.0;  // torso stripes per body height
    double torso_saturation = 0.0;
    double leg_value = 0.0;

    static SyntheticIdentitySpec from_seed(std::uint64_t identity_seed);
};

/// Background hue and additive brightness offset in [-0.1, 0.1] of a camera.
struct CameraLook {
    double background_hue;
    double brightness_offset;
};
CameraLook camera_look(int camera);

/// Deterministic render: three stacked coloured bands, camera background and
/// brightness, instance-seeded placement jitter. Values clamped to [0, 1].
Image synth_identity_image(const SyntheticIdentitySpec& spec, int camera, std::uint64_t instance_seed,
                           const Geometry& geometry = {});

/// Writes num_identities * images_per_identity PNGs plus `manifest.csv` under
/// out_dir. Cameras are assigned round-robin within each identity.
DatasetManifest build_synthetic_dataset(int num_identities, int images_per_identity, int num_cameras,
                                        std::uint64_t root_seed, const std::filesystem::path& out_dir,
                                        const Geometry& geometry = {});

/// Seed of identity `id` within a corpus built from `root_seed`.
std::uint64_t synthetic_identity_seed(std::uint64_t root_seed, int id);

/// Vertical extent [begin, end) of the three bands for one rendered instance.
struct BandLayout {
    std::array<int, 4> rows;  // head start, torso start, legs start, legs end
    int center_x;
};
BandLayout synth_band_layout(const SyntheticIdentitySpec& spec, std::uint64_t instance_seed, const Geometry& geometry);

}  // namespace direid
