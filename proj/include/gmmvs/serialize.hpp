#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmmvs/dataset.hpp"
#include "gmmvs/errors.hpp"
#include "gmmvs/evaluation.hpp"
#include "gmmvs/mixture.hpp"
#include "gmmvs/regression.hpp"
#include "gmmvs/selection.hpp"
#include "gmmvs/simulation.hpp"

// JSON views of results. Time points are written 1-based.
namespace gmmvs {

using json = nlohmann::ordered_json;

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json to_json(const GmmModel& m) {
    json tps = json::array();
    for (std::size_t j = 0; j < m.subset.size(); ++j) {
        const auto& tp = m.params[j];
        json comps = json::array();
        for (Eigen::Index c = 0; c < tp.coef.cols(); ++c) {
            std::vector<double> coef(tp.coef.col(c).data(), tp.coef.col(c).data() + tp.coef.rows());
            comps.push_back({{"coefficients", coef}, {"variance", tp.variance(c)}});
        }
        tps.push_back({{"timepoint", m.subset[j] + 1}, {"components", std::move(comps)}});
    }
    return {{"k", m.k},
            {"weights", std::vector<double>(m.weights.data(), m.weights.data() + m.weights.size())},
            {"timepoints", std::move(tps)}};
}

inline json to_json(const FitResult& f, bool with_labels = true) {
    json j{{"k", f.model.k},
           {"loglik", number_or_null(f.loglik)},
           {"bic", number_or_null(f.bic)},
           {"n_params", f.n_params},
           {"n_iterations", f.n_iterations},
           {"converged", f.converged},
           {"selected_timepoints", f.model.subset.one_based()},
           {"model", to_json(f.model)}};
    if (with_labels) j["map_labels"] = f.map_labels;
    return j;
}

inline json to_json(const StepRecord& r) {
    return {{"step", r.step},
            {"proposal", r.proposal + 1},
            {"bic_clust_with", number_or_null(r.bic_clust_with)},
            {"bic_clust_without", number_or_null(r.bic_clust_without)},
            {"bic_not_clust", number_or_null(r.bic_not_clust)},
            {"bic_diff", number_or_null(r.bic_diff)},
            {"k_with", r.k_with},
            {"k_without", r.k_without},
            {"regression_predictors", r.regression_predictors.one_based()},
            {"removed", r.removed}};
}

inline json to_json(const SelectionResult& s) {
    json removed = json::array();
    for (const auto& r : s.state.removed) removed.push_back({{"timepoint", r.index + 1}, {"bic_diff", number_or_null(r.bic_diff)}});
    json trace = json::array();
    for (const auto& r : s.state.trace) trace.push_back(to_json(r));
    return {{"selected", s.selected.one_based()},
            {"no_clustering_structure", s.no_clustering_structure},
            {"removed", std::move(removed)},
            {"trace", std::move(trace)},
            {"final_fit", s.final_fit ? to_json(*s.final_fit) : json(nullptr)},
            {"full_fit", to_json(s.full_fit)}};
}

inline json to_json(const ComparisonReport& c) {
    auto opt = [](const std::optional<double>& v) { return v ? number_or_null(*v) : json(nullptr); };
    return {{"ari_selected", opt(c.ari_selected)},
            {"ari_full", opt(c.ari_full)},
            {"ari_diff", opt(c.ari_diff)},
            {"rmse_selected", number_or_null(c.rmse_selected)},
            {"rmse_full", number_or_null(c.rmse_full)},
            {"rmse_diff", number_or_null(c.rmse_diff)},
            {"k_selected", c.k_selected},
            {"k_full", c.k_full}};
}

inline json to_json(const SimulationConfig& c) {
    return {{"n_subjects", c.n_subjects},
            {"n_timepoints", c.n_timepoints},
            {"weights", c.weights},
            {"clustering_timepoints", c.clustering_timepoints.one_based()},
            {"slopes", c.slopes},
            {"intercepts", c.intercepts},
            {"noise_sd", c.noise_sd},
            {"background_intercept", c.background_intercept},
            {"background_slope", c.background_slope}};
}

inline json to_json(const SummaryStats& s) {
    return {{"min", s.min}, {"q1", s.q1}, {"median", s.median}, {"mean", s.mean}, {"q3", s.q3}, {"max", s.max}};
}

inline json histogram_json(const std::map<std::size_t, double>& h) {
    json j = json::object();
    for (const auto& [k, v] : h) j[std::to_string(k)] = v;
    return j;
}

/// Mirrors the row structure of a published simulation table.
inline json to_json(const StudySummary& s) {
    json per_tp = json::object();
    for (std::size_t j = 0; j < s.clustering_timepoints.size(); ++j)
        per_tp[std::to_string(s.clustering_timepoints[j])] = s.pct_selected[j];
    return {{"n_reps", s.n_reps},
            {"n_completed", s.n_completed},
            {"n_failed", s.n_failed},
            {"pct_clustering_timepoint_selected", std::move(per_tp)},
            {"pct_both_selected", s.pct_both_selected},
            {"pct_by_noise_timepoints_selected", histogram_json(s.noise_selected_hist)},
            {"pct_by_k_selected_model", histogram_json(s.k_selected_hist)},
            {"pct_by_k_full_model", histogram_json(s.k_full_hist)},
            {"ari_diff", to_json(s.ari_diff)},
            {"pct_higher_ari_selected", s.pct_higher_ari},
            {"rmse_diff", to_json(s.rmse_diff)},
            {"pct_lower_rmse_selected", s.pct_lower_rmse}};
}

inline json to_json(const RepRow& r) {
    return {{"rep", r.rep},
            {"data_seed", r.data_seed},
            {"ok", r.ok},
            {"error", r.error},
            {"selected", r.selected},
            {"both_selected", r.both_selected},
            {"n_noise_selected", r.n_noise_selected},
            {"comparison", to_json(r.comparison)}};
}

inline json to_json(const StudyReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows) rows.push_back(to_json(row));
    return {{"simulation", to_json(r.config)},
            {"search", std::string(to_string(r.search))},
            {"n_reps", r.n_reps},
            {"seed", r.seed},
            {"summary", to_json(r.summary)},
            {"reps", std::move(rows)}};
}

/// One CSV line per replicate.
inline std::string study_rows_csv(const StudyReport& r) {
    std::ostringstream out;
    out << "rep,data_seed,ok,selected,both_selected,n_noise_selected,k_selected,k_full,ari_selected,ari_full,ari_diff,"
           "rmse_selected,rmse_full,rmse_diff,error\n";
    auto num = [](const std::optional<double>& v) { return v ? detail::format_double(*v) : std::string(); };
    for (const auto& row : r.rows) {
        std::string sel;
        for (std::size_t i = 0; i < row.selected.size(); ++i) sel += (i ? ";" : "") + std::to_string(row.selected[i]);
        const auto& c = row.comparison;
        out << row.rep << ',' << row.data_seed << ',' << (row.ok ? 1 : 0) << ',' << sel << ',' << (row.both_selected ? 1 : 0)
            << ',' << row.n_noise_selected << ',' << c.k_selected << ',' << c.k_full << ',' << num(c.ari_selected) << ','
            << num(c.ari_full) << ',' << num(c.ari_diff) << ',' << detail::format_double(c.rmse_selected) << ','
            << detail::format_double(c.rmse_full) << ',' << detail::format_double(c.rmse_diff) << ','
            << detail::quote_csv(row.error) << '\n';
    }
    return out.str();
}

/// subject_id,map_label,posterior_0..posterior_{K-1}
inline std::string labels_csv(const std::vector<std::string>& ids, const FitResult& f) {
    std::ostringstream out;
    out << "subject_id,map_label";
    for (std::size_t c = 0; c < f.model.k; ++c) out << ",posterior_" << c;
    out << '\n';
    for (std::size_t s = 0; s < ids.size(); ++s) {
        out << detail::quote_csv(ids[s]) << ',' << f.map_labels[s];
        for (Eigen::Index c = 0; c < f.posteriors.cols(); ++c)
            out << ',' << detail::format_double(f.posteriors(static_cast<Eigen::Index>(s), c));
        out << '\n';
    }
    return out.str();
}

/// Writes to a sibling temporary and renames over the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::IoFailure, "cannot open " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorKind::IoFailure, "cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline void write_json_atomic(const std::filesystem::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

}  // namespace gmmvs
