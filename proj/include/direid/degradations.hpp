#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "direid/data.hpp"
#include "direid/image.hpp"
#include "direid/rng.hpp"

namespace direid {

enum class DegradationType { resolution, illumination };

std::string_view to_string(DegradationType type);
DegradationType parse_degradation_type(std::string_view name);

/// A degradation family with the closed interval its parameter is drawn from.
/// Defaults: resolution ratio U[2, 4], illumination gamma U[2, 3.5].
struct DegradationKind {
    DegradationType type = DegradationType::resolution;
    double lo = 2.0;
    double hi = 4.0;

    static DegradationKind defaults(DegradationType type);
};

/// out = x^gamma elementwise. Throws ParameterError for gamma <= 0.
Image gamma_degrade(const Image& x, double gamma);

/// Area-average down to (ceil(H/ratio), ceil(W/ratio)), bilinear back to
/// (H, W). Throws ParameterError for ratio < 1.
Image resolution_degrade(const Image& x, double ratio);

/// Exact area-weighted resampling; intended for shrinking.
Image resize_area(const Image& x, int height, int width);

/// Bilinear resampling with half-pixel centres (corner-aligned = false) and
/// edge clamping.
Image resize_bilinear(const Image& x, int height, int width);

/// Dispatches to the operator of `type` with the given parameter.
Image apply_degradation(const Image& x, DegradationType type, double param);

/// Uniform draw from [kind.lo, kind.hi]; advances rng by one step.
double sample_degradation_param(const DegradationKind& kind, Rng& rng);

/// {x_i, x_j = F_deg(x_i)} with the parameter needed to recompute x_j.
struct SelfDegradedPair {
    Image original;
    Image degraded;
    int identity = 0;
    DegradationType type = DegradationType::resolution;
    double param = 1.0;
};

SelfDegradedPair make_self_degraded_pair(const Image& x, int identity, const DegradationKind& kind, Rng& rng);

// ---------------------------------------------------------------------------
// Retrieval splits with degraded queries and clean gallery.

struct QueryDegradation {
    DegradationType type;
    double param;
};

struct DatasetSplit {
    DatasetManifest query;
    DatasetManifest gallery;
    std::vector<QueryDegradation> query_degradation;  // one per query entry
};

/// Multi-low-resolution protocol: queries are the images of `query_camera`
/// (default: lowest camera id), each down-sampled by a ratio drawn uniformly
/// from {2, 3, 4}; all other cameras form the HR gallery.
/// Throws ProtocolError for single-camera manifests or when a query identity
/// has no gallery image.
DatasetSplit build_mlr_split(const DatasetManifest& manifest, Rng& rng, std::optional<int> query_camera = {});

/// Same partition, with each query degraded by a parameter drawn from `kind`.
DatasetSplit build_degraded_split(const DatasetManifest& manifest, const DegradationKind& kind, Rng& rng,
                                  std::optional<int> query_camera = {});

/// Throws ProtocolError unless every query identity appears in the gallery.
void validate_split(const DatasetSplit& split);

/// Loads and degrades the query images of a split.
std::vector<Image> load_query_images(const DatasetSplit& split, const Geometry& geometry);

}  // namespace direid
