#include "direid/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "direid/error.hpp"

namespace direid {

Matrix distance_matrix(const FeatureMatrix& q, const FeatureMatrix& g) {
    if (q.dim() != g.dim()) throw ShapeError("distance matrix: feature dimensions differ");
    Matrix d(q.rows(), g.rows());
    for (std::size_t i = 0; i < q.rows(); ++i) {
        for (std::size_t j = 0; j < g.rows(); ++j) {
            double acc = 0.0;
            for (std::size_t c = 0; c < q.dim(); ++c) {
                const double diff = q.features(i, c) - g.features(j, c);
                acc += diff * diff;
            }
            d(i, j) = std::sqrt(acc);
        }
    }
    return d;
}

namespace {

void check_labels(const Matrix& dist, const RetrievalLabels& l) {
    if (l.query_ids.size() != dist.rows || l.query_cams.size() != dist.rows || l.gallery_ids.size() != dist.cols ||
        l.gallery_cams.size() != dist.cols) {
        throw ShapeError("retrieval labels do not match the distance matrix");
    }
}

}  // namespace

std::vector<std::size_t> ranked_gallery(const Matrix& dist, std::size_t q, const RetrievalLabels& l) {
    std::vector<std::size_t> order;
    order.reserve(dist.cols);
    for (std::size_t j = 0; j < dist.cols; ++j) {
        if (l.gallery_ids[j] == l.query_ids[q] && l.gallery_cams[j] == l.query_cams[q]) continue;
        order.push_back(j);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist(q, a) < dist(q, b); });
    return order;
}

CmcCurve cmc(const Matrix& dist, const RetrievalLabels& l, std::size_t max_rank) {
    check_labels(dist, l);
    if (max_rank == 0) throw ParameterError("cmc needs max_rank >= 1");
    std::vector<double> hits(max_rank, 0.0);
    std::size_t valid = 0;
    for (std::size_t q = 0; q < dist.rows; ++q) {
        const auto order = ranked_gallery(dist, q, l);
        const auto first = std::find_if(order.begin(), order.end(),
                                        [&](std::size_t j) { return l.gallery_ids[j] == l.query_ids[q]; });
        if (first == order.end()) continue;
        ++valid;
        const auto rank = static_cast<std::size_t>(first - order.begin());
        for (std::size_t k = rank; k < max_rank; ++k) hits[k] += 1.0;
    }
    if (valid == 0) throw ProtocolError("no query has a valid gallery match");
    for (double& h : hits) h /= static_cast<double>(valid);
    return {hits};
}

double mean_average_precision(const Matrix& dist, const RetrievalLabels& l) {
    check_labels(dist, l);
    double total = 0.0;
    std::size_t valid = 0;
    for (std::size_t q = 0; q < dist.rows; ++q) {
        const auto order = ranked_gallery(dist, q, l);
        double relevant = 0.0;
        double precision_sum = 0.0;
        for (std::size_t r = 0; r < order.size(); ++r) {
            if (l.gallery_ids[order[r]] == l.query_ids[q]) {
                relevant += 1.0;
                precision_sum += relevant / static_cast<double>(r + 1);
            }
        }
        if (relevant == 0.0) continue;
        ++valid;
        total += precision_sum / relevant;
    }
    if (valid == 0) throw ProtocolError("no query has a valid gallery match");
    return total / static_cast<double>(valid);
}

SingleShotResult single_shot_eval(const Matrix& dist, const RetrievalLabels& l, std::size_t max_rank, int trials,
                                  Rng& rng) {
    check_labels(dist, l);
    if (trials < 1) throw ParameterError("single-shot evaluation needs at least one trial");
    std::map<int, std::vector<std::size_t>> candidates;
    for (std::size_t j = 0; j < dist.cols; ++j) candidates[l.gallery_ids[j]].push_back(j);
    for (int id : l.query_ids) {
        if (!candidates.contains(id)) {
            throw ProtocolError("identity " + std::to_string(id) + " has no gallery candidate");
        }
    }

    SingleShotResult result;
    result.cmc.values.assign(max_rank, 0.0);
    for (int t = 0; t < trials; ++t) {
        std::vector<std::size_t> picked;
        for (const auto& [id, cols] : candidates) picked.push_back(cols[rng.below(cols.size())]);
        Matrix sub(dist.rows, picked.size());
        std::vector<int> g_ids, g_cams;
        for (std::size_t c = 0; c < picked.size(); ++c) {
            for (std::size_t q = 0; q < dist.rows; ++q) sub(q, c) = dist(q, picked[c]);
            g_ids.push_back(l.gallery_ids[picked[c]]);
            g_cams.push_back(l.gallery_cams[picked[c]]);
        }
        const RetrievalLabels sl{l.query_ids, g_ids, l.query_cams, g_cams};
        auto curve = cmc(sub, sl, max_rank);
        const double ap = mean_average_precision(sub, sl);
        for (std::size_t k = 0; k < max_rank; ++k) result.cmc.values[k] += curve.values[k];
        result.map += ap;
        result.per_trial.push_back(std::move(curve));
        result.per_trial_map.push_back(ap);
    }
    for (double& v : result.cmc.values) v /= trials;
    result.map /= trials;
    return result;
}

}  // namespace direid
