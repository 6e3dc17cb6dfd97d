#pragma once

// k-means with k-means++ seeding.

#include "cssad/core.hpp"

#include <numeric>
#include <random>

namespace cssad {

using Point = std::vector<double>;

inline double squared_distance(const Point &a, const Point &b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = a[i] - b[i];
        d += t * t;
    }
    return d;
}

struct KMeansOptions {
    std::size_t max_iterations = 300;
    double tolerance = 1e-8; ///< stop once no centroid moves farther than this
    std::size_t restarts = 1;
};

struct KMeansResult {
    std::vector<std::size_t> labels;
    std::vector<Point> centroids;
    double objective = 0.0;
    /// Sum of squared distances after each assignment step.
    std::vector<double> objective_history;
    std::size_t iterations = 0;
};

/// k-means++ seeding: the first centre uniformly, every further centre with
/// probability proportional to the squared distance to the nearest chosen
/// centre. If every remaining point coincides with a centre, the next centre
/// is drawn uniformly.
inline std::vector<Point> kmeanspp_seed(const std::vector<Point> &points, std::size_t k,
                                        std::mt19937_64 &rng) {
    std::vector<Point> centres;
    centres.reserve(k);
    std::uniform_int_distribution<std::size_t> any(0, points.size() - 1);
    centres.push_back(points[any(rng)]);
    std::vector<double> d2(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) d2[i] = squared_distance(points[i], centres[0]);
    while (centres.size() < k) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        std::size_t pick = 0;
        if (total > 0.0) {
            double r = std::uniform_real_distribution<>(0.0, total)(rng);
            pick = points.size() - 1;
            for (std::size_t i = 0; i < points.size(); ++i) {
                if (d2[i] <= 0.0) continue;
                if (r < d2[i]) {
                    pick = i;
                    break;
                }
                r -= d2[i];
            }
            while (d2[pick] <= 0.0) --pick; // guard against rounding in r
        } else {
            pick = any(rng);
        }
        centres.push_back(points[pick]);
        for (std::size_t i = 0; i < points.size(); ++i)
            d2[i] = std::min(d2[i], squared_distance(points[i], centres.back()));
    }
    return centres;
}

/// Lloyd iterations from the given centres. Nearest-centre ties go to the
/// lower index; an empty cluster keeps its previous centre.
inline KMeansResult kmeans_lloyd(const std::vector<Point> &points, std::vector<Point> centres,
                                 const KMeansOptions &opts = {}) {
    KMeansResult res;
    const std::size_t k = centres.size();
    const std::size_t dim = points.front().size();
    res.labels.assign(points.size(), 0);
    for (std::size_t it = 0; it < opts.max_iterations; ++it) {
        double objective = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            std::size_t best = 0;
            double best_d = squared_distance(points[i], centres[0]);
            for (std::size_t c = 1; c < k; ++c) {
                const double d = squared_distance(points[i], centres[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            res.labels[i] = best;
            objective += best_d;
        }
        res.objective_history.push_back(objective);
        res.iterations = it + 1;

        std::vector<Point> next(k, Point(dim, 0.0));
        std::vector<std::size_t> count(k, 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            ++count[res.labels[i]];
            for (std::size_t d = 0; d < dim; ++d) next[res.labels[i]][d] += points[i][d];
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (count[c] == 0) {
                next[c] = centres[c];
                continue;
            }
            for (auto &v : next[c]) v /= static_cast<double>(count[c]);
            shift = std::max(shift, std::sqrt(squared_distance(next[c], centres[c])));
        }
        centres = std::move(next);
        if (shift < opts.tolerance) break;
    }
    res.centroids = std::move(centres);
    res.objective = res.objective_history.back();
    return res;
}

/// Best of `opts.restarts` seeded runs (lowest objective, earliest on ties).
/// Labels are renumbered in order of first appearance.
inline KMeansResult kmeans(const std::vector<Point> &points, std::size_t k, std::uint64_t seed,
                           const KMeansOptions &opts = {}) {
    if (k == 0) throw InvalidArgument("kmeans: k must be at least 1");
    if (k > points.size())
        throw InvalidArgument("kmeans: k=" + std::to_string(k) + " exceeds " +
                              std::to_string(points.size()) + " points");
    std::optional<KMeansResult> best;
    for (std::size_t r = 0; r < std::max<std::size_t>(1, opts.restarts); ++r) {
        std::mt19937_64 rng(mix_seed(seed, r));
        auto res = kmeans_lloyd(points, kmeanspp_seed(points, k, rng), opts);
        if (!best || res.objective < best->objective) best = std::move(res);
    }
    std::vector<std::size_t> remap(k, k);
    std::size_t next = 0;
    for (auto &l : best->labels) {
        if (remap[l] == k) remap[l] = next++;
        l = remap[l];
    }
    std::vector<Point> centroids(k);
    for (std::size_t c = 0; c < k; ++c) {
        if (remap[c] == k) remap[c] = next++;
        centroids[remap[c]] = std::move(best->centroids[c]);
    }
    best->centroids = std::move(centroids);
    return *best;
}

} // namespace cssad
