#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "gmmvs/dataset.hpp"
#include "gmmvs/errors.hpp"
#include "gmmvs/kmeans.hpp"
#include "gmmvs/parallel.hpp"
#include "gmmvs/seeding.hpp"

namespace gmmvs {

/// Per-time-point component regressions: coefficients are (p_n + 1) x K with
/// the intercept in row 0; one variance per component.
struct TimepointParams {
    Eigen::MatrixXd coef;
    Eigen::VectorXd variance;
};

/// Conditional-independence growth mixture over a set of time points. With
/// p_n = 0 each component reduces to a mean and a variance per time point.
struct GmmModel {
    std::size_t k = 0;
    Eigen::VectorXd weights;
    TimepointSet subset;
    std::vector<TimepointParams> params;  // aligned with subset

    /// (K - 1) free weights plus, per time point and component, p_n slopes,
    /// one intercept and one variance.
    std::size_t n_params() const {
        std::size_t per_component = 0;
        for (const auto& tp : params) per_component += static_cast<std::size_t>(tp.coef.rows()) + 1;
        return (k - 1) + k * per_component;
    }
};

struct FitResult {
    GmmModel model;
    double loglik = 0.0;
    double bic = 0.0;
    std::size_t n_params = 0;
    Eigen::MatrixXd posteriors;  // S x K, rows sum to one
    std::vector<int> map_labels;
    std::size_t n_iterations = 0;
    bool converged = false;
    std::vector<double> loglik_trace;  // one entry per EM iteration
};

struct EmOptions {
    double tol = 1e-6;
    std::size_t max_iter = 1000;
};

/// Variance floor relative to the total outcome variance at a time point.
inline constexpr double kVarianceFloorFactor = 1e-8;

inline double variance_floor(const LongitudinalDataset& data, std::size_t n) {
    return std::max(kVarianceFloorFactor * data.outcome_variance(n), std::numeric_limits<double>::min());
}

/// Smaller is better. No factor of two on the log-likelihood.
inline double bic_of(double loglik, std::size_t n_params, std::size_t n_subjects) {
    if (n_subjects == 0) throw Error(ErrorKind::InvalidArgument, "BIC needs at least one subject");
    return -loglik + static_cast<double>(n_params) * std::log(static_cast<double>(n_subjects));
}

inline double gaussian_logpdf(double y, double mean, double variance) {
    const double r = y - mean;
    return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + r * r / variance);
}

/// log f_k(y_s | x_s) summed over the model's time points.
inline double component_logdensity(const GmmModel& model, const LongitudinalDataset& data, std::size_t subject,
                                   std::size_t component) {
    if (subject >= data.n_subjects() || component >= model.k)
        throw Error(ErrorKind::InvalidArgument, "subject or component out of range");
    const auto s = static_cast<Eigen::Index>(subject);
    const auto c = static_cast<Eigen::Index>(component);
    double acc = 0.0;
    for (std::size_t j = 0; j < model.subset.size(); ++j) {
        const std::size_t n = model.subset[j];
        const auto& tp = model.params[j];
        const double mean = data.design(n).row(s).dot(tp.coef.col(c));
        acc += gaussian_logpdf(data.outcome(n)(s), mean, tp.variance(c));
    }
    return acc;
}

namespace detail {

/// S x K matrix of log pi_k + log f_k(y_s).
inline Eigen::MatrixXd log_joint(const GmmModel& model, const LongitudinalDataset& data) {
    const auto S = static_cast<Eigen::Index>(data.n_subjects());
    const auto K = static_cast<Eigen::Index>(model.k);
    Eigen::MatrixXd out(S, K);
    for (Eigen::Index c = 0; c < K; ++c) out.col(c).setConstant(std::log(model.weights(c)));
    for (std::size_t j = 0; j < model.subset.size(); ++j) {
        const std::size_t n = model.subset[j];
        const auto& tp = model.params[j];
        const Eigen::MatrixXd mean = data.design(n) * tp.coef;
        const auto y = data.outcome(n);
        for (Eigen::Index c = 0; c < K; ++c) {
            const double v = tp.variance(c);
            const double lognorm = -0.5 * std::log(2.0 * std::numbers::pi * v);
            out.col(c).array() += lognorm - (y.array() - mean.col(c).array()).square() / (2.0 * v);
        }
    }
    return out;
}

struct EStepResult {
    Eigen::MatrixXd posteriors;
    double loglik = 0.0;
};

inline EStepResult e_step_with_loglik(const GmmModel& model, const LongitudinalDataset& data) {
    EStepResult r;
    r.posteriors = log_joint(model, data);
    for (Eigen::Index s = 0; s < r.posteriors.rows(); ++s) {
        auto row = r.posteriors.row(s);
        const double m = row.maxCoeff();
        if (!std::isfinite(m))
            throw Error(ErrorKind::NumericalUnderflow, "all component densities vanish for subject " + std::to_string(s));
        row.array() = (row.array() - m).exp();
        const double total = row.sum();
        row /= total;
        r.loglik += m + std::log(total);
    }
    return r;
}

struct MStepResult {
    GmmModel model;
    std::vector<char> floored;  // per (time point, component), row-major over subset
};

inline MStepResult m_step_impl(const LongitudinalDataset& data, const TimepointSet& subset, const Eigen::MatrixXd& posteriors) {
    const auto S = static_cast<Eigen::Index>(data.n_subjects());
    const auto K = posteriors.cols();
    if (posteriors.rows() != S) throw Error(ErrorKind::ShapeMismatch, "posteriors must have S rows");
    if (S == 0) throw Error(ErrorKind::TooFewSubjects, "no subjects");
    MStepResult r;
    auto& m = r.model;
    m.k = static_cast<std::size_t>(K);
    m.subset = subset;
    const Eigen::VectorXd sizes = posteriors.colwise().sum().transpose();
    m.weights = sizes / static_cast<double>(S);
    r.floored.assign(subset.size() * m.k, 0);
    m.params.reserve(subset.size());
    for (std::size_t j = 0; j < subset.size(); ++j) {
        const std::size_t n = subset[j];
        const auto& X = data.design(n);
        const auto y = data.outcome(n);
        const auto q = X.cols();
        const double floor = variance_floor(data, n);
        TimepointParams tp{Eigen::MatrixXd(q, K), Eigen::VectorXd(K)};
        for (Eigen::Index c = 0; c < K; ++c) {
            if (sizes(c) < static_cast<double>(q + 1))
                throw Error(ErrorKind::DegenerateComponent,
                            "component " + std::to_string(c) + " has effective size " + std::to_string(sizes(c)));
            const auto w = posteriors.col(c).array();
            const Eigen::MatrixXd Xw = X.array().colwise() * w;
            const Eigen::MatrixXd xtwx = Xw.transpose().lazyProduct(X);
            const Eigen::VectorXd xtwy = Xw.transpose() * y;
            Eigen::FullPivLU<Eigen::MatrixXd> lu(xtwx);
            lu.setThreshold(1e-10);
            if (lu.rank() < q)
                throw Error(ErrorKind::DegenerateComponent,
                            "weighted design is rank deficient for component " + std::to_string(c));
            tp.coef.col(c) = lu.solve(xtwy);
            const double rss = (w * (y - X * tp.coef.col(c)).array().square()).sum();
            double var = rss / sizes(c);
            if (!(var >= floor)) {
                var = floor;
                r.floored[j * m.k + static_cast<std::size_t>(c)] = 1;
            }
            tp.variance(c) = var;
        }
        m.params.push_back(std::move(tp));
    }
    return r;
}

}  // namespace detail

inline double loglik(const GmmModel& model, const LongitudinalDataset& data) {
    return detail::e_step_with_loglik(model, data).loglik;
}

/// Posterior membership probabilities, computed in log space.
inline Eigen::MatrixXd e_step(const GmmModel& model, const LongitudinalDataset& data) {
    return detail::e_step_with_loglik(model, data).posteriors;
}

/// Weighted least squares per (time point, component); weights are the
/// posterior columns. Throws DegenerateComponent on tiny or singular components.
inline GmmModel m_step(const LongitudinalDataset& data, const TimepointSet& subset, const Eigen::MatrixXd& posteriors) {
    return detail::m_step_impl(data, subset, posteriors).model;
}

/// Argmax per row, ties to the lowest component.
inline std::vector<int> map_assign(const Eigen::MatrixXd& posteriors) {
    std::vector<int> labels(static_cast<std::size_t>(posteriors.rows()));
    for (Eigen::Index s = 0; s < posteriors.rows(); ++s) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < posteriors.cols(); ++c)
            if (posteriors(s, c) > posteriors(s, best)) best = c;
        labels[static_cast<std::size_t>(s)] = static_cast<int>(best);
    }
    return labels;
}

inline Eigen::MatrixXd hard_posteriors(const std::vector<int>& labels, std::size_t k) {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(k));
    for (std::size_t s = 0; s < labels.size(); ++s) {
        if (labels[s] < 0 || static_cast<std::size_t>(labels[s]) >= k)
            throw Error(ErrorKind::InvalidArgument, "initial label out of range");
        p(static_cast<Eigen::Index>(s), labels[s]) = 1.0;
    }
    return p;
}

/// Assembles a FitResult for a fixed model (posteriors, MAP labels, BIC).
inline FitResult evaluate_model(GmmModel model, const LongitudinalDataset& data) {
    auto e = detail::e_step_with_loglik(model, data);
    FitResult r;
    r.loglik = e.loglik;
    r.n_params = model.n_params();
    r.bic = bic_of(r.loglik, r.n_params, data.n_subjects());
    r.map_labels = map_assign(e.posteriors);
    r.posteriors = std::move(e.posteriors);
    r.model = std::move(model);
    return r;
}

/// EM from the hard partition `init`. Stops on a fixed point of the
/// posteriors or when the relative log-likelihood change drops below tol.
inline FitResult fit_em(const LongitudinalDataset& data, const TimepointSet& subset, std::size_t k, const InitAssignment& init,
                        const EmOptions& opts = {}) {
    if (k == 0) throw Error(ErrorKind::InvalidArgument, "k must be at least 1");
    if (init.labels.size() != data.n_subjects()) throw Error(ErrorKind::LengthMismatch, "init labels must cover every subject");
    if (opts.max_iter == 0) throw Error(ErrorKind::InvalidArgument, "max_iter must be at least 1");

    FitResult r;
    Eigen::MatrixXd post = hard_posteriors(init.labels, k);
    std::vector<char> prev_floored;
    GmmModel model;
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (std::size_t it = 1; it <= opts.max_iter; ++it) {
        auto m = detail::m_step_impl(data, subset, post);
        if (!prev_floored.empty()) {
            for (std::size_t i = 0; i < m.floored.size(); ++i)
                if (m.floored[i] && prev_floored[i])
                    throw Error(ErrorKind::DegenerateComponent, "variance collapsed to the floor twice in a row");
        }
        prev_floored = std::move(m.floored);
        model = std::move(m.model);
        auto e = detail::e_step_with_loglik(model, data);
        r.loglik_trace.push_back(e.loglik);
        r.n_iterations = it;
        const bool fixed_point = e.posteriors == post;
        const bool small_change = it > 1 && std::abs(e.loglik - prev_ll) < opts.tol * std::abs(e.loglik);
        post = std::move(e.posteriors);
        r.loglik = e.loglik;
        prev_ll = e.loglik;
        if (fixed_point || small_change) {
            r.converged = true;
            break;
        }
    }
    r.n_params = model.n_params();
    r.bic = bic_of(r.loglik, r.n_params, data.n_subjects());
    r.map_labels = map_assign(post);
    r.posteriors = std::move(post);
    r.model = std::move(model);
    return r;
}

/// Inclusive range of component counts.
struct KRange {
    std::size_t min = 1;
    std::size_t max = 6;
};

struct SelectKOptions {
    KRange k_range;
    std::size_t n_restarts = 50;
    EmOptions em;
    unsigned threads = 1;
};

/// Seed for the k-means start of a (subset, k) fit. Keyed on the subset so
/// the same clustering model is reproduced wherever it is requested.
inline std::uint64_t fit_seed(std::uint64_t seed, const TimepointSet& subset, std::size_t k) {
    return derive_seed(seed, {hash_indices(std::span<const std::size_t>(subset.indices())), k});
}

/// Fits every k in range from a k-means start and keeps the smallest BIC.
/// Degenerate fits are skipped; BIC ties within 1e-9 go to the smaller k.
inline FitResult select_k(const LongitudinalDataset& data, const TimepointSet& subset, std::uint64_t seed,
                          const SelectKOptions& opts = {}) {
    if (opts.k_range.min < 1 || opts.k_range.max < opts.k_range.min)
        throw Error(ErrorKind::InvalidArgument, "invalid k range");
    if (subset.empty()) throw Error(ErrorKind::EmptySubset, "cannot cluster on an empty time-point set");
    std::optional<FitResult> best;
    std::string last_failure = "no k attempted";
    const KMeansOptions km{opts.n_restarts, 300, opts.threads};
    for (std::size_t k = opts.k_range.min; k <= opts.k_range.max; ++k) {
        try {
            const auto init = kmeans_init(data, subset, k, fit_seed(seed, subset, k), km);
            auto fit = fit_em(data, subset, k, init, opts.em);
            if (!best || fit.bic < best->bic - 1e-9) best = std::move(fit);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::DegenerateComponent && e.kind() != ErrorKind::TooFewSubjects &&
                e.kind() != ErrorKind::NumericalUnderflow)
                throw;
            last_failure = e.what();
        }
    }
    if (!best) throw Error(ErrorKind::AllFitsFailed, "every k in range failed; last: " + last_failure);
    return std::move(*best);
}

}  // namespace gmmvs
