#include "direid/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <unordered_set>

#include "direid/degradations.hpp"
#include "direid/error.hpp"
#include "direid/rng.hpp"

namespace direid {

int DatasetManifest::num_identities() const {
    int k = 0;
    for (const auto& e : entries) k = std::max(k, e.identity + 1);
    return k;
}

std::vector<int> DatasetManifest::cameras() const {
    std::set<int> cams;
    for (const auto& e : entries) cams.insert(e.camera);
    return {cams.begin(), cams.end()};
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

bool parse_non_negative(std::string_view field, long long& out) {
    field = trim(field);
    if (field.empty()) return false;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
    return ec == std::errc{} && ptr == field.data() + field.size() && out >= 0;
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("manifest not found: " + path.string());

    DatasetManifest manifest;
    manifest.root = path.parent_path();
    std::vector<long long> raw_ids;
    std::unordered_set<std::string> seen;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        const auto text = trim(line);
        if (text.empty()) continue;
        const auto c1 = text.find(',');
        const auto c2 = c1 == std::string_view::npos ? c1 : text.find(',', c1 + 1);
        long long id = 0;
        long long cam = 0;
        if (c2 == std::string_view::npos || text.find(',', c2 + 1) != std::string_view::npos ||
            trim(text.substr(0, c1)).empty() || !parse_non_negative(text.substr(c1 + 1, c2 - c1 - 1), id) ||
            !parse_non_negative(text.substr(c2 + 1), cam)) {
            throw IngestError("malformed manifest line " + std::to_string(lineno) + ": expected path,identity,camera");
        }
        std::string rel(trim(text.substr(0, c1)));
        if (!seen.insert(rel).second) {
            throw IngestError("duplicate image path on line " + std::to_string(lineno) + ": " + rel);
        }
        manifest.entries.push_back({std::move(rel), 0, static_cast<int>(cam)});
        raw_ids.push_back(id);
    }
    if (manifest.entries.empty()) throw IngestError("empty manifest: " + path.string());

    std::vector<long long> unique_ids = raw_ids;
    std::sort(unique_ids.begin(), unique_ids.end());
    unique_ids.erase(std::unique(unique_ids.begin(), unique_ids.end()), unique_ids.end());
    for (std::size_t i = 0; i < unique_ids.size(); ++i) manifest.original_ids[unique_ids[i]] = static_cast<int>(i);
    for (std::size_t i = 0; i < raw_ids.size(); ++i) manifest.entries[i].identity = manifest.original_ids[raw_ids[i]];
    return manifest;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write manifest: " + path.string());
    for (const auto& e : manifest.entries) out << e.path << ',' << e.identity << ',' << e.camera << '\n';
    if (!out) throw IoError("failed writing manifest: " + path.string());
}

DatasetManifest relabel(DatasetManifest manifest) {
    std::vector<int> ids;
    for (const auto& e : manifest.entries) ids.push_back(e.identity);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    auto new_id = [&ids](int old) {
        return static_cast<int>(std::lower_bound(ids.begin(), ids.end(), old) - ids.begin());
    };
    for (auto& e : manifest.entries) e.identity = new_id(e.identity);

    std::map<long long, int> composed;
    if (manifest.original_ids.empty()) {
        for (int old : ids) composed[old] = new_id(old);
    } else {
        for (const auto& [raw, old] : manifest.original_ids) {
            if (std::binary_search(ids.begin(), ids.end(), old)) composed[raw] = new_id(old);
        }
    }
    manifest.original_ids = std::move(composed);
    return manifest;
}

DatasetManifest select_identities(const DatasetManifest& manifest, const std::vector<int>& identities) {
    const std::set<int> keep(identities.begin(), identities.end());
    DatasetManifest out;
    out.root = manifest.root;
    out.original_ids = manifest.original_ids;
    for (const auto& e : manifest.entries) {
        if (keep.contains(e.identity)) out.entries.push_back(e);
    }
    return relabel(std::move(out));
}

IdentitySplit split_identities(const DatasetManifest& manifest, double train_fraction, std::uint64_t seed) {
    const int k = manifest.num_identities();
    if (k < 2) throw ProtocolError("identity split needs at least two identities");
    std::vector<int> ids(k);
    for (int i = 0; i < k; ++i) ids[i] = i;
    Rng rng(mix_seed(seed, 0x5));
    rng.shuffle(ids);
    const int n_train = std::clamp(static_cast<int>(std::floor(train_fraction * k)), 1, k - 1);
    std::vector<int> train(ids.begin(), ids.begin() + n_train);
    std::vector<int> test(ids.begin() + n_train, ids.end());
    return {select_identities(manifest, train), select_identities(manifest, test)};
}

std::vector<Image> load_images(const DatasetManifest& manifest, const Geometry& geometry) {
    std::vector<Image> images;
    images.reserve(manifest.size());
    for (const auto& e : manifest.entries) {
        Image img = read_png(manifest.resolve(e));
        if (img.height() != geometry.height || img.width() != geometry.width) {
            img = resize_bilinear(img, geometry.height, geometry.width);
        }
        images.push_back(std::move(img));
    }
    return images;
}

// ---------------------------------------------------------------------------

namespace {

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
    h = h - std::floor(h);
    const double hh = h * 6.0;
    const int sector = static_cast<int>(hh) % 6;
    const double f = hh - std::floor(hh);
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (sector) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

}  // namespace

SyntheticIdentitySpec SyntheticIdentitySpec::from_seed(std::uint64_t identity_seed) {
    Rng rng(mix_seed(identity_seed, 0x1D));
    SyntheticIdentitySpec s;
    s.identity_seed = identity_seed;
    s.head_hue = rng.uniform01();
    s.torso_hue = rng.uniform01();
    s.leg_hue = rng.uniform01();
    const double head = rng.uniform(0.12, 0.20);
    const double torso = rng.uniform(0.34, 0.46);
    s.body_proportions = {head, torso, 1.0 - head - torso};
    s.texture_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    s.texture_frequency = rng.uniform(2.0, 6.0);
    s.torso_saturation = rng.uniform(0.45, 0.9);
    s.leg_value = rng.uniform(0.35, 0.8);
    return s;
}

CameraLook camera_look(int camera) {
    Rng rng(mix_seed(static_cast<std::uint64_t>(camera), 0xCA));
    return {rng.uniform01(), rng.uniform(-0.1, 0.1)};
}

std::uint64_t synthetic_identity_seed(std::uint64_t root_seed, int id) {
    return mix_seed(root_seed, static_cast<std::uint64_t>(id) + 1);
}

BandLayout synth_band_layout(const SyntheticIdentitySpec& spec, std::uint64_t instance_seed, const Geometry& g) {
    Rng rng(mix_seed(spec.identity_seed ^ 0xB0D1, instance_seed));
    const double H = g.height;
    const double top = 0.04 * H;
    const double body = 0.92 * H;
    // Each interior boundary moves by at most 5% of the height, so a band edge
    // never shifts more than 10% of the height between two instances.
    double b1 = top + spec.body_proportions[0] * body + rng.uniform(-0.05, 0.05) * H;
    double b2 = top + (spec.body_proportions[0] + spec.body_proportions[1]) * body + rng.uniform(-0.05, 0.05) * H;
    const int cx = static_cast<int>(std::lround(g.width / 2.0 + rng.uniform(-0.06, 0.06) * g.width));
    return {{static_cast<int>(std::lround(top)), static_cast<int>(std::lround(b1)), static_cast<int>(std::lround(b2)),
             static_cast<int>(std::lround(top + body))},
            cx};
}

Image synth_identity_image(const SyntheticIdentitySpec& spec, int camera, std::uint64_t instance_seed,
                           const Geometry& g) {
    const BandLayout layout = synth_band_layout(spec, instance_seed, g);
    const CameraLook look = camera_look(camera);
    Rng noise(mix_seed(spec.identity_seed ^ 0x4015E, instance_seed));

    const auto head = hsv_to_rgb(spec.head_hue, 0.45, 0.85);
    const auto legs = hsv_to_rgb(spec.leg_hue, 0.65, spec.leg_value);
    const double H = g.height;
    const double W = g.width;
    const double head_half = 0.16 * W;
    const double body_half = 0.30 * W;

    Image img(g);
    for (int y = 0; y < g.height; ++y) {
        const double shade = 0.5 + 0.1 * (y / H);  // vertical background gradient
        const auto bg = hsv_to_rgb(look.background_hue, 0.25, shade);
        const int band = y < layout.rows[0] ? -1 : y < layout.rows[1] ? 0 : y < layout.rows[2] ? 1 : y < layout.rows[3] ? 2 : -1;
        const double half = band == 0 ? head_half : body_half;
        std::array<double, 3> fg{};
        if (band == 0) fg = head;
        if (band == 1) {
            const double stripe = std::sin(2.0 * std::numbers::pi * spec.texture_frequency * (y / H) + spec.texture_phase);
            fg = hsv_to_rgb(spec.torso_hue, spec.torso_saturation, 0.72 + 0.2 * stripe);
        }
        if (band == 2) fg = legs;
        for (int x = 0; x < g.width; ++x) {
            const bool on_body = band >= 0 && std::abs(x + 0.5 - layout.center_x) < half;
            // Leg gap.
            const bool gap = band == 2 && std::abs(x + 0.5 - layout.center_x) < 0.04 * W && y > layout.rows[2] + 0.3 * (layout.rows[3] - layout.rows[2]);
            const auto& rgb = on_body && !gap ? fg : bg;
            for (int c = 0; c < g.channels; ++c) {
                const double jitter = noise.uniform(-0.02, 0.02);
                img.at(y, x, c) = static_cast<float>(rgb[c % 3] + look.brightness_offset + jitter);
            }
        }
    }
    img.clamp01();
    return img;
}

DatasetManifest build_synthetic_dataset(int num_identities, int images_per_identity, int num_cameras,
                                        std::uint64_t root_seed, const std::filesystem::path& out_dir,
                                        const Geometry& geometry) {
    if (num_identities < 1 || images_per_identity < 1 || num_cameras < 1) {
        throw ParameterError("synthetic dataset counts must be >= 1");
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "images", ec);
    if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

    DatasetManifest manifest;
    manifest.root = out_dir;
    for (int id = 0; id < num_identities; ++id) {
        const auto spec = SyntheticIdentitySpec::from_seed(synthetic_identity_seed(root_seed, id));
        for (int n = 0; n < images_per_identity; ++n) {
            const int cam = n % num_cameras;
            char name[64];
            std::snprintf(name, sizeof(name), "images/%05d_c%d_%03d.png", id, cam, n);
            write_png(out_dir / name, synth_identity_image(spec, cam, static_cast<std::uint64_t>(n), geometry));
            manifest.entries.push_back({name, id, cam});
            manifest.original_ids[id] = id;
        }
    }
    write_manifest(out_dir / "manifest.csv", manifest);
    return manifest;
}

}  // namespace direid
