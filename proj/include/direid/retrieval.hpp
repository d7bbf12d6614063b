#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "direid/rng.hpp"

namespace direid {

/// Row-major dense matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
    double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// One embedding per row, with the identity and camera of its image.
struct FeatureMatrix {
    Matrix features;
    std::vector<int> ids;
    std::vector<int> cams;

    std::size_t rows() const { return features.rows; }
    std::size_t dim() const { return features.cols; }
};

/// Cumulative match characteristic; values[k - 1] is the rank-k rate.
struct CmcCurve {
    std::vector<double> values;

    double at_rank(std::size_t k) const { return values.at(k - 1); }
};

/// Retrieval labels shared by cmc / mean_average_precision.
struct RetrievalLabels {
    std::span<const int> query_ids, gallery_ids, query_cams, gallery_cams;
};

/// Pairwise Euclidean distances. Throws ShapeError on a dimension mismatch.
Matrix distance_matrix(const FeatureMatrix& query, const FeatureMatrix& gallery);

/// Gallery indices of one query sorted by distance, ties by gallery index,
/// with same-identity-same-camera entries removed.
std::vector<std::size_t> ranked_gallery(const Matrix& dist, std::size_t query, const RetrievalLabels& labels);

/// Queries without any valid positive are dropped from the denominator;
/// ProtocolError when none remain.
CmcCurve cmc(const Matrix& dist, const RetrievalLabels& labels, std::size_t max_rank);

double mean_average_precision(const Matrix& dist, const RetrievalLabels& labels);

struct SingleShotResult {
    CmcCurve cmc;                    // elementwise mean of per-trial curves
    double map = 0.0;                // mean of per-trial mAP
    std::vector<CmcCurve> per_trial;
    std::vector<double> per_trial_map;
};

/// Each trial keeps one uniformly drawn gallery entry per identity and scores
/// all queries against that reduced gallery. ProtocolError when a query
/// identity has no gallery candidate.
SingleShotResult single_shot_eval(const Matrix& dist, const RetrievalLabels& labels, std::size_t max_rank,
                                  int trials, Rng& rng);

}  // namespace direid
