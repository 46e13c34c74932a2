#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gmmvs/dataset.hpp"
#include "gmmvs/errors.hpp"
#include "gmmvs/parallel.hpp"
#include "gmmvs/seeding.hpp"

namespace gmmvs {

/// Hard starting partition for EM.
struct InitAssignment {
    std::vector<int> labels;
    double wcss = 0.0;
};

struct KMeansOptions {
    std::size_t n_restarts = 50;
    std::size_t max_iter = 300;
    unsigned threads = 1;
};

namespace detail {

/// d x S matrix of outcome values restricted to a subset (one column per subject).
inline Eigen::MatrixXd gather_points(const LongitudinalDataset& data, const TimepointSet& subset) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(subset.size()), static_cast<Eigen::Index>(data.n_subjects()));
    for (std::size_t j = 0; j < subset.size(); ++j) m.row(static_cast<Eigen::Index>(j)) = data.outcome(subset[j]).transpose();
    return m;
}

inline double wcss_of(const Eigen::MatrixXd& pts, const std::vector<int>& labels, std::size_t k) {
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(pts.rows(), static_cast<Eigen::Index>(k));
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    for (Eigen::Index s = 0; s < pts.cols(); ++s) {
        mean.col(labels[static_cast<std::size_t>(s)]) += pts.col(s);
        counts(labels[static_cast<std::size_t>(s)]) += 1.0;
    }
    for (Eigen::Index c = 0; c < mean.cols(); ++c) mean.col(c) /= std::max(counts(c), 1.0);
    double w = 0.0;
    for (Eigen::Index s = 0; s < pts.cols(); ++s)
        w += (pts.col(s) - mean.col(labels[static_cast<std::size_t>(s)])).squaredNorm();
    return w;
}

/// One Lloyd run from the given d x k initial centroids. Stops when no
/// assignment changes or after max_iter passes.
inline InitAssignment lloyd(const Eigen::MatrixXd& pts, const Eigen::VectorXd& point_norms, Eigen::MatrixXd centroids,
                            std::size_t max_iter) {
    const auto S = pts.cols();
    const auto k = centroids.cols();
    std::vector<int> labels(static_cast<std::size_t>(S), -1);
    Eigen::VectorXd dist(S);
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k));
    Eigen::MatrixXd cross(k, S);
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        // ||p - c||^2 = ||p||^2 - 2 p.c + ||c||^2
        cross.noalias() = centroids.transpose() * pts;
        const Eigen::VectorXd cnorm = centroids.colwise().squaredNorm().transpose();
        bool changed = false;
        for (Eigen::Index s = 0; s < S; ++s) {
            Eigen::Index arg = 0;
            double best = cnorm(0) - 2.0 * cross(0, s);
            for (Eigen::Index c = 1; c < k; ++c) {
                const double d = cnorm(c) - 2.0 * cross(c, s);
                if (d < best) {
                    best = d;
                    arg = c;
                }
            }
            auto& l = labels[static_cast<std::size_t>(s)];
            if (l != static_cast<int>(arg)) changed = true;
            l = static_cast<int>(arg);
            dist(s) = std::max(best + point_norms(s), 0.0);
        }
        // Empty clusters take the point farthest from its own centroid.
        std::fill(counts.begin(), counts.end(), 0);
        for (auto l : labels) ++counts[static_cast<std::size_t>(l)];
        for (Eigen::Index c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] != 0) continue;
            Eigen::Index far = S;
            double far_d = -1.0;
            for (Eigen::Index s = 0; s < S; ++s) {
                if (counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(s)])] > 1 && dist(s) > far_d) {
                    far_d = dist(s);
                    far = s;
                }
            }
            if (far == S) break;
            --counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(far)])];
            labels[static_cast<std::size_t>(far)] = static_cast<int>(c);
            dist(far) = 0.0;
            counts[static_cast<std::size_t>(c)] = 1;
            changed = true;
        }
        if (!changed) break;
        centroids.setZero();
        for (Eigen::Index s = 0; s < S; ++s) centroids.col(labels[static_cast<std::size_t>(s)]) += pts.col(s);
        for (Eigen::Index c = 0; c < k; ++c) centroids.col(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }
    InitAssignment out;
    out.wcss = wcss_of(pts, labels, static_cast<std::size_t>(k));
    out.labels = std::move(labels);
    return out;
}

}  // namespace detail

/// Within-cluster sum of squares of a labeling over the subset.
inline double within_cluster_ss(const LongitudinalDataset& data, const TimepointSet& subset, const std::vector<int>& labels,
                                std::size_t k) {
    return detail::wcss_of(detail::gather_points(data, subset), labels, k);
}

/// Lloyd's k-means on the raw outcome values of `subset`, best of
/// n_restarts runs, each seeded from k distinct random subjects. Ties
/// between restarts go to the lowest restart index.
inline InitAssignment kmeans_init(const LongitudinalDataset& data, const TimepointSet& subset, std::size_t k,
                                  std::uint64_t seed, const KMeansOptions& opts = {}) {
    const std::size_t S = data.n_subjects();
    if (subset.empty()) throw Error(ErrorKind::EmptySubset, "k-means needs at least one time point");
    if (k == 0) throw Error(ErrorKind::InvalidArgument, "k must be at least 1");
    if (k > S) throw Error(ErrorKind::TooFewSubjects, "k = " + std::to_string(k) + " exceeds S = " + std::to_string(S));
    if (opts.n_restarts == 0) throw Error(ErrorKind::InvalidArgument, "n_restarts must be at least 1");

    const Eigen::MatrixXd pts = detail::gather_points(data, subset);
    if (k == 1) {
        InitAssignment one;
        one.labels.assign(S, 0);
        one.wcss = detail::wcss_of(pts, one.labels, 1);
        return one;
    }
    const Eigen::VectorXd norms = pts.colwise().squaredNorm().transpose();

    std::vector<InitAssignment> runs(opts.n_restarts);
    parallel_for(
        opts.n_restarts,
        [&](std::size_t r) {
            std::mt19937_64 rng(derive_seed(seed, {r}));
            // Partial Fisher-Yates for k distinct subjects.
            std::vector<std::size_t> order(S);
            for (std::size_t s = 0; s < S; ++s) order[s] = s;
            for (std::size_t i = 0; i < k; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, S - 1);
                std::swap(order[i], order[pick(rng)]);
            }
            Eigen::MatrixXd centroids(pts.rows(), static_cast<Eigen::Index>(k));
            for (std::size_t c = 0; c < k; ++c)
                centroids.col(static_cast<Eigen::Index>(c)) = pts.col(static_cast<Eigen::Index>(order[c]));
            runs[r] = detail::lloyd(pts, norms, std::move(centroids), opts.max_iter);
        },
        opts.threads);

    std::size_t best = 0;
    for (std::size_t r = 1; r < runs.size(); ++r)
        if (runs[r].wcss < runs[best].wcss) best = r;
    return std::move(runs[best]);
}

}  // namespace gmmvs
