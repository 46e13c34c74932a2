#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "gmmvs/dataset.hpp"
#include "gmmvs/errors.hpp"
#include "gmmvs/mixture.hpp"

namespace gmmvs {

/// Gaussian linear regression at its maximum-likelihood estimate.
struct OlsFit {
    Eigen::VectorXd coefficients;  // intercept first, then design columns in order
    Eigen::VectorXd residuals;
    double rss = 0.0;
    double sigma2 = 0.0;
    double loglik = 0.0;
    std::size_t n_params = 0;  // columns + intercept + variance
    double bic = 0.0;
};

/// Relative floor on the residual variance (same scale as the mixture floor).
inline double regression_variance_floor(const Eigen::Ref<const Eigen::VectorXd>& response) {
    double var = 0.0;
    if (response.size() > 0) var = (response.array() - response.mean()).square().mean();
    return std::max(kVarianceFloorFactor * var, std::numeric_limits<double>::min());
}

/// Least squares of response on [1, columns]; sigma2 uses the ML divisor S.
inline OlsFit ols_fit(const Eigen::Ref<const Eigen::VectorXd>& response, const Eigen::Ref<const Eigen::MatrixXd>& columns) {
    const auto S = response.size();
    const auto p = columns.cols();
    if (columns.rows() != S) throw Error(ErrorKind::ShapeMismatch, "design rows must match the response length");
    if (S <= p + 1)
        throw Error(ErrorKind::RankDeficientDesign,
                    "need more than " + std::to_string(p + 1) + " observations, have " + std::to_string(S));
    Eigen::MatrixXd X(S, p + 1);
    X.col(0).setOnes();
    if (p > 0) X.rightCols(p) = columns;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < p + 1) throw Error(ErrorKind::RankDeficientDesign, "design matrix is rank deficient");
    OlsFit f;
    f.coefficients = qr.solve(response);
    f.residuals = response - X * f.coefficients;
    f.rss = f.residuals.squaredNorm();
    const double n = static_cast<double>(S);
    f.sigma2 = std::max(f.rss / n, regression_variance_floor(response));
    f.loglik = -0.5 * n * std::log(2.0 * std::numbers::pi * f.sigma2) - f.rss / (2.0 * f.sigma2);
    f.n_params = static_cast<std::size_t>(p) + 2;
    f.bic = bic_of(f.loglik, f.n_params, static_cast<std::size_t>(S));
    return f;
}

/// Result of the greedy BIC subset search over candidate columns.
struct StepwiseResult {
    std::vector<std::size_t> selected;  // candidate positions, ascending
    OlsFit fit;                         // forced columns first, then selected candidates
    std::vector<double> bic_trace;      // BIC of the start model and after each accepted move
    std::vector<std::size_t> skipped;   // candidates whose addition made the design singular
};

namespace detail {

inline Eigen::MatrixXd assemble_design(const Eigen::MatrixXd& forced, const Eigen::MatrixXd& candidates,
                                       const std::vector<std::size_t>& chosen) {
    Eigen::MatrixXd X(forced.rows(), forced.cols() + static_cast<Eigen::Index>(chosen.size()));
    if (forced.cols() > 0) X.leftCols(forced.cols()) = forced;
    for (std::size_t i = 0; i < chosen.size(); ++i)
        X.col(forced.cols() + static_cast<Eigen::Index>(i)) = candidates.col(static_cast<Eigen::Index>(chosen[i]));
    return X;
}

}  // namespace detail

/// Forward-backward stepwise selection by BIC, starting from the model with
/// only the intercept and the forced columns. Each round tries every single
/// addition and deletion and applies the one with the lowest BIC if it
/// improves on the current model. Ties go to the lowest candidate position.
inline StepwiseResult stepwise_bic(const Eigen::VectorXd& response, const Eigen::MatrixXd& candidates,
                                   const Eigen::MatrixXd& forced) {
    const auto S = response.size();
    if (candidates.rows() != S && candidates.cols() > 0)
        throw Error(ErrorKind::ShapeMismatch, "candidate rows must match the response length");
    const Eigen::MatrixXd forced_cols = forced.cols() > 0 ? forced : Eigen::MatrixXd(S, 0);

    StepwiseResult r;
    r.fit = ols_fit(response, forced_cols);
    r.bic_trace.push_back(r.fit.bic);
    std::vector<char> in_model(static_cast<std::size_t>(candidates.cols()), 0);
    std::vector<char> singular(static_cast<std::size_t>(candidates.cols()), 0);

    for (;;) {
        std::optional<std::size_t> best_move;
        OlsFit best_fit;
        for (std::size_t j = 0; j < in_model.size(); ++j) {
            if (singular[j] && !in_model[j]) continue;
            std::vector<std::size_t> trial;
            for (std::size_t i = 0; i < in_model.size(); ++i)
                if ((i == j) != static_cast<bool>(in_model[i])) trial.push_back(i);
            OlsFit f;
            try {
                f = ols_fit(response, detail::assemble_design(forced_cols, candidates, trial));
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::RankDeficientDesign) throw;
                if (!in_model[j]) {
                    singular[j] = 1;
                    r.skipped.push_back(j);
                }
                continue;
            }
            if (!best_move || f.bic < best_fit.bic) {
                best_move = j;
                best_fit = std::move(f);
            }
        }
        if (!best_move || !(best_fit.bic < r.fit.bic)) break;
        in_model[*best_move] = in_model[*best_move] ? 0 : 1;
        r.fit = std::move(best_fit);
        r.bic_trace.push_back(r.fit.bic);
    }
    for (std::size_t j = 0; j < in_model.size(); ++j)
        if (in_model[j]) r.selected.push_back(j);
    return r;
}

/// Regression of one time point's outcome on selected other time points
/// (and, optionally, that time point's own covariates).
struct RegressionModel {
    std::size_t response_index = 0;
    TimepointSet predictor_indices;
    std::size_t covariate_count = 0;
    Eigen::VectorXd coefficients;  // intercept, covariate slopes, predictor slopes
    double sigma2 = 0.0;
    double loglik = 0.0;
    double bic = 0.0;
    std::vector<std::size_t> skipped;  // time points dropped for singularity
};

namespace detail {

inline Eigen::MatrixXd outcome_columns(const LongitudinalDataset& data, const TimepointSet& indices) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(data.n_subjects()), static_cast<Eigen::Index>(indices.size()));
    for (std::size_t j = 0; j < indices.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = data.outcome(indices[j]);
    return m;
}

inline std::vector<std::size_t> to_indices(const TimepointSet& set, const std::vector<std::size_t>& positions) {
    std::vector<std::size_t> out;
    out.reserve(positions.size());
    for (auto p : positions) out.push_back(set[p]);
    return out;
}

}  // namespace detail

/// Stepwise BIC regression of y_response on a subset of the candidate time points.
inline RegressionModel stepwise_bic_regression(std::size_t response_index, const TimepointSet& candidate_indices,
                                               const LongitudinalDataset& data,
                                               const std::optional<Eigen::MatrixXd>& forced_covariates = std::nullopt) {
    if (candidate_indices.contains(response_index))
        throw Error(ErrorKind::InvalidArgument, "candidates must exclude the response");
    const Eigen::VectorXd y = data.outcome(response_index);
    const Eigen::MatrixXd forced =
        forced_covariates ? *forced_covariates : Eigen::MatrixXd(static_cast<Eigen::Index>(data.n_subjects()), 0);
    auto sw = stepwise_bic(y, detail::outcome_columns(data, candidate_indices), forced);
    RegressionModel m;
    m.response_index = response_index;
    m.predictor_indices = TimepointSet(detail::to_indices(candidate_indices, sw.selected));
    m.covariate_count = static_cast<std::size_t>(forced.cols());
    m.coefficients = sw.fit.coefficients;
    m.sigma2 = sw.fit.sigma2;
    m.loglik = sw.fit.loglik;
    m.bic = sw.fit.bic;
    m.skipped = detail::to_indices(candidate_indices, sw.skipped);
    return m;
}

/// Residuals of y_n regressed on its own covariates (with intercept).
inline Eigen::VectorXd residualize_on_covariates(std::size_t response_index, const LongitudinalDataset& data) {
    if (data.covariate_count(response_index) == 0)
        throw Error(ErrorKind::InvalidArgument, "time point has no covariates to residualize on");
    return ols_fit(data.outcome(response_index), data.covariates(response_index)).residuals;
}

struct NotClustResult {
    double bic = 0.0;
    RegressionModel model;
};

/// BIC of the non-clustering model for y_proposal given the current set.
/// Without covariates: stepwise regression on the current set. With
/// covariates: select current predictors against the covariate residuals,
/// then fit y_proposal on its covariates and the selected predictors jointly.
/// An empty selection leaves the single-group model for y_proposal.
inline NotClustResult not_clust_bic(std::size_t proposal_index, const TimepointSet& current, const LongitudinalDataset& data,
                                    bool use_covariates) {
    if (current.contains(proposal_index)) throw Error(ErrorKind::InvalidArgument, "proposal must not be in the current set");
    NotClustResult out;
    if (!use_covariates || data.covariate_count(proposal_index) == 0) {
        out.model = stepwise_bic_regression(proposal_index, current, data);
        out.bic = out.model.bic;
        return out;
    }
    const Eigen::VectorXd resid = residualize_on_covariates(proposal_index, data);
    const auto sw = stepwise_bic(resid, detail::outcome_columns(data, current),
                                 Eigen::MatrixXd(static_cast<Eigen::Index>(data.n_subjects()), 0));
    const TimepointSet chosen(detail::to_indices(current, sw.selected));
    const auto& x = data.covariates(proposal_index);
    Eigen::MatrixXd design(x.rows(), x.cols() + static_cast<Eigen::Index>(chosen.size()));
    design.leftCols(x.cols()) = x;
    if (!chosen.empty()) design.rightCols(static_cast<Eigen::Index>(chosen.size())) = detail::outcome_columns(data, chosen);
    const auto joint = ols_fit(data.outcome(proposal_index), design);
    auto& m = out.model;
    m.response_index = proposal_index;
    m.predictor_indices = chosen;
    m.covariate_count = static_cast<std::size_t>(x.cols());
    m.coefficients = joint.coefficients;
    m.sigma2 = joint.sigma2;
    m.loglik = joint.loglik;
    m.bic = joint.bic;
    m.skipped = detail::to_indices(current, sw.skipped);
    out.bic = m.bic;
    return out;
}

}  // namespace gmmvs
