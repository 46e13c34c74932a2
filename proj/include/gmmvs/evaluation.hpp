#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gmmvs/dataset.hpp"
#include "gmmvs/errors.hpp"
#include "gmmvs/mixture.hpp"
#include "gmmvs/regression.hpp"
#include "gmmvs/selection.hpp"

namespace gmmvs {

using Partition = std::vector<int>;

/// Hubert-Arabie adjusted Rand index from the contingency table. Two
/// trivial partitions that agree (all singletons, or one block) score 1.
inline double ari(const Partition& a, const Partition& b) {
    if (a.size() != b.size()) throw Error(ErrorKind::LengthMismatch, "partitions differ in length");
    const auto pairs = [](double n) { return n * (n - 1.0) / 2.0; };
    std::map<std::pair<int, int>, double> cells;
    std::map<int, double> rows, cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cells[{a[i], b[i]}] += 1.0;
        rows[a[i]] += 1.0;
        cols[b[i]] += 1.0;
    }
    double index = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [key, n] : cells) index += pairs(n);
    for (const auto& [key, n] : rows) sum_a += pairs(n);
    for (const auto& [key, n] : cols) sum_b += pairs(n);
    const double total = pairs(static_cast<double>(a.size()));
    if (total == 0.0) return 1.0;
    const double expected = sum_a * sum_b / total;
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

/// S x N fitted outcomes. Time points in the fit use the posterior-weighted
/// component regressions (or the MAP component when hard = true); the rest
/// use a single-group OLS fit when one_group_fill is set and are NaN otherwise.
inline Eigen::MatrixXd fitted_values(const FitResult& fit, const LongitudinalDataset& data, const TimepointSet& all_timepoints,
                                     bool one_group_fill, bool hard = false) {
    const auto S = static_cast<Eigen::Index>(data.n_subjects());
    Eigen::MatrixXd out = Eigen::MatrixXd::Constant(S, static_cast<Eigen::Index>(data.n_timepoints()),
                                                    std::numeric_limits<double>::quiet_NaN());
    Eigen::MatrixXd weights = fit.posteriors;
    if (hard) weights = hard_posteriors(fit.map_labels, fit.model.k);
    const auto& model = fit.model;
    for (std::size_t j = 0; j < model.subset.size(); ++j) {
        const std::size_t n = model.subset[j];
        const auto& X = data.design(n);
        if (X.cols() != model.params[j].coef.rows())
            throw Error(ErrorKind::ShapeMismatch, "fit and dataset disagree on covariates at a time point");
        const Eigen::MatrixXd means = X * model.params[j].coef;
        out.col(static_cast<Eigen::Index>(n)) = (means.array() * weights.array()).rowwise().sum();
    }
    if (one_group_fill) {
        for (auto n : all_timepoints) {
            if (model.subset.contains(n)) continue;
            const auto f = ols_fit(data.outcome(n), data.covariates(n));
            out.col(static_cast<Eigen::Index>(n)) = data.outcome(n) - f.residuals;
        }
    }
    return out;
}

/// Single-group OLS predictions at every time point (used when nothing was selected).
inline Eigen::MatrixXd one_group_values(const LongitudinalDataset& data) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(data.n_subjects()), static_cast<Eigen::Index>(data.n_timepoints()));
    for (std::size_t n = 0; n < data.n_timepoints(); ++n) {
        const auto f = ols_fit(data.outcome(n), data.covariates(n));
        out.col(static_cast<Eigen::Index>(n)) = data.outcome(n) - f.residuals;
    }
    return out;
}

inline double rmse(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& reference) {
    if (predictions.rows() != reference.rows() || predictions.cols() != reference.cols())
        throw Error(ErrorKind::ShapeMismatch, "prediction and reference shapes differ");
    if (predictions.size() == 0) return 0.0;
    return std::sqrt((predictions - reference).array().square().mean());
}

struct GroundTruth {
    Partition labels;
    Eigen::MatrixXd means;
};

/// Selected-variable model against the all-variable model. Differences are
/// selected minus full: positive ARI and negative RMSE favour selection.
struct ComparisonReport {
    std::optional<double> ari_selected;
    std::optional<double> ari_full;
    std::optional<double> ari_diff;
    double rmse_selected = 0.0;
    double rmse_full = 0.0;
    double rmse_diff = 0.0;
    std::size_t k_selected = 1;
    std::size_t k_full = 1;
};

/// `data` must be the dataset the fits were estimated on (covariates
/// stripped when the search ran without them).
inline ComparisonReport compare_models(const SelectionResult& sel, const LongitudinalDataset& data,
                                       const std::optional<GroundTruth>& truth = std::nullopt) {
    ComparisonReport r;
    const auto all = data.all_timepoints();
    const Eigen::MatrixXd pred_full = fitted_values(sel.full_fit, data, all, true);
    Eigen::MatrixXd pred_sel;
    Partition labels_sel;
    if (sel.final_fit) {
        pred_sel = fitted_values(*sel.final_fit, data, all, true);
        labels_sel = sel.final_fit->map_labels;
        r.k_selected = sel.final_fit->model.k;
    } else {
        pred_sel = one_group_values(data);
        labels_sel.assign(data.n_subjects(), 0);
        r.k_selected = 1;
    }
    r.k_full = sel.full_fit.model.k;
    const Eigen::MatrixXd& reference = truth ? truth->means : data.outcomes();
    r.rmse_selected = rmse(pred_sel, reference);
    r.rmse_full = rmse(pred_full, reference);
    r.rmse_diff = r.rmse_selected - r.rmse_full;
    if (truth) {
        r.ari_selected = ari(labels_sel, truth->labels);
        r.ari_full = ari(sel.full_fit.map_labels, truth->labels);
        r.ari_diff = *r.ari_selected - *r.ari_full;
    }
    return r;
}

}  // namespace gmmvs
