#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gmmvs/dataset.hpp"
#include "gmmvs/errors.hpp"
#include "gmmvs/evaluation.hpp"
#include "gmmvs/parallel.hpp"
#include "gmmvs/seeding.hpp"
#include "gmmvs/selection.hpp"

namespace gmmvs {

/// Generator settings. Clustering time points are 0-based; slopes and
/// intercepts are indexed [clustering point][group]. Every other time point
/// follows y = 0 + 1 * x + noise.
struct SimulationConfig {
    std::size_t n_subjects = 400;
    std::size_t n_timepoints = 20;
    std::vector<double> weights{0.3, 0.3, 0.4};
    TimepointSet clustering_timepoints{std::vector<std::size_t>{4, 14}};
    std::vector<std::vector<double>> slopes{{1.0, 3.0, -2.0}, {1.0, 2.5, -0.5}};
    std::vector<std::vector<double>> intercepts;  // empty = all zero
    double noise_sd = 0.5;
    double background_intercept = 0.0;
    double background_slope = 1.0;
    std::uint64_t seed = 0;

    std::size_t n_groups() const noexcept { return weights.size(); }

    void validate() const {
        if (weights.empty()) throw Error(ErrorKind::InvalidArgument, "at least one group weight required");
        double total = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0)) throw Error(ErrorKind::InvalidArgument, "group weights must be nonnegative");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorKind::InvalidArgument, "group weights must sum to 1");
        if (slopes.size() != clustering_timepoints.size())
            throw Error(ErrorKind::ShapeMismatch, "one slope row per clustering time point required");
        for (const auto& row : slopes)
            if (row.size() != n_groups()) throw Error(ErrorKind::ShapeMismatch, "one slope per group required");
        if (!intercepts.empty()) {
            if (intercepts.size() != clustering_timepoints.size())
                throw Error(ErrorKind::ShapeMismatch, "one intercept row per clustering time point required");
            for (const auto& row : intercepts)
                if (row.size() != n_groups()) throw Error(ErrorKind::ShapeMismatch, "one intercept per group required");
        }
        if (!clustering_timepoints.empty() && clustering_timepoints.back() >= n_timepoints)
            throw Error(ErrorKind::InvalidArgument, "clustering time point beyond the grid");
        if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw Error(ErrorKind::InvalidArgument, "noise sd must be >= 0");
    }
};

enum class Preset { T1, T2, T3, T4 };

inline Preset parse_preset(std::string_view name) {
    if (name == "T1") return Preset::T1;
    if (name == "T2") return Preset::T2;
    if (name == "T3") return Preset::T3;
    if (name == "T4") return Preset::T4;
    throw Error(ErrorKind::InvalidArgument, "unknown preset '" + std::string(name) + "' (expected T1..T4)");
}

constexpr std::string_view to_string(Preset p) {
    switch (p) {
    case Preset::T1: return "T1";
    case Preset::T2: return "T2";
    case Preset::T3: return "T3";
    case Preset::T4: return "T4";
    }
    return "?";
}

/// The four published simulation designs: 400 subjects, 20 time points,
/// clustering at time points 5 and 15 (1-based), noise sd 0.5.
inline SimulationConfig preset_config(Preset p) {
    SimulationConfig c;
    switch (p) {
    case Preset::T1:
        c.weights = {0.3, 0.3, 0.4};
        c.slopes = {{1.0, 3.0, -2.0}, {1.0, 2.5, -0.5}};
        break;
    case Preset::T2:
        c.weights = {0.3, 0.3, 0.4};
        c.slopes = {{1.0, 2.5, -0.5}, {1.0, 2.5, -0.5}};
        break;
    case Preset::T3:
        c.weights = {0.3, 0.3, 0.4};
        c.slopes = {{1.0, 3.0, -2.0}, {1.0, 3.0, -2.0}};
        break;
    case Preset::T4:
        c.weights = {0.7, 0.15, 0.15};
        c.slopes = {{1.0, 2.5, -0.5}, {1.0, 2.5, -0.5}};
        break;
    }
    return c;
}

struct SimulatedDataset {
    LongitudinalDataset dataset;
    Partition true_labels;
    Eigen::MatrixXd true_means;  // S x N noiseless means
};

/// Draws all group labels first, then (x, noise) per subject and time point
/// in row-major order, from one mt19937_64 stream.
inline SimulatedDataset simulate(const SimulationConfig& cfg) {
    cfg.validate();
    const std::size_t S = cfg.n_subjects;
    const std::size_t N = cfg.n_timepoints;
    std::mt19937_64 rng(cfg.seed);
    std::discrete_distribution<int> group(cfg.weights.begin(), cfg.weights.end());
    std::normal_distribution<double> normal(0.0, 1.0);

    SimulatedDataset out;
    out.true_labels.resize(S);
    for (auto& g : out.true_labels) g = group(rng);

    // Per time point: (intercept, slope) for each group.
    std::vector<std::vector<std::pair<double, double>>> law(N, std::vector<std::pair<double, double>>(
                                                                    cfg.n_groups(), {cfg.background_intercept, cfg.background_slope}));
    for (std::size_t j = 0; j < cfg.clustering_timepoints.size(); ++j)
        for (std::size_t g = 0; g < cfg.n_groups(); ++g)
            law[cfg.clustering_timepoints[j]][g] = {cfg.intercepts.empty() ? 0.0 : cfg.intercepts[j][g], cfg.slopes[j][g]};

    const auto Si = static_cast<Eigen::Index>(S);
    Eigen::MatrixXd y(Si, static_cast<Eigen::Index>(N));
    out.true_means.resize(Si, static_cast<Eigen::Index>(N));
    std::vector<Eigen::MatrixXd> cov(N, Eigen::MatrixXd(Si, 1));
    for (std::size_t s = 0; s < S; ++s) {
        const auto g = static_cast<std::size_t>(out.true_labels[s]);
        for (std::size_t n = 0; n < N; ++n) {
            const double x = normal(rng);
            const double e = normal(rng);
            const auto [a, b] = law[n][g];
            const double mean = a + b * x;
            const auto si = static_cast<Eigen::Index>(s);
            const auto ni = static_cast<Eigen::Index>(n);
            cov[n](si, 0) = x;
            out.true_means(si, ni) = mean;
            y(si, ni) = mean + cfg.noise_sd * e;
        }
    }
    const int width = static_cast<int>(std::to_string(std::max<std::size_t>(S, 1)).size());
    std::vector<std::string> ids(S);
    for (std::size_t s = 0; s < S; ++s) {
        auto num = std::to_string(s + 1);
        ids[s] = "s" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
    }
    std::vector<double> times(N);
    for (std::size_t n = 0; n < N; ++n) times[n] = static_cast<double>(n + 1);
    out.dataset = LongitudinalDataset(std::move(ids), std::move(times), std::move(y), std::move(cov));
    return out;
}

/// One simulation replicate. Time-point labels are 1-based.
struct RepRow {
    std::size_t rep = 0;
    std::uint64_t data_seed = 0;
    bool ok = false;
    std::string error;
    std::vector<std::size_t> selected;
    std::vector<bool> clustering_selected;  // per clustering time point
    bool both_selected = false;
    std::size_t n_noise_selected = 0;
    ComparisonReport comparison;
};

struct SummaryStats {
    double min = 0.0, q1 = 0.0, median = 0.0, mean = 0.0, q3 = 0.0, max = 0.0;
};

/// Min, linear-interpolation quartiles (R's default type 7), mean, max.
inline SummaryStats summarize(std::vector<double> v) {
    SummaryStats s;
    if (v.empty()) return s;
    std::sort(v.begin(), v.end());
    auto q = [&](double p) {
        const double h = (static_cast<double>(v.size()) - 1.0) * p;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const auto hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    s.min = v.front();
    s.max = v.back();
    s.q1 = q(0.25);
    s.median = q(0.5);
    s.q3 = q(0.75);
    double total = 0.0;
    for (double x : v) total += x;
    s.mean = total / static_cast<double>(v.size());
    return s;
}

/// Aggregates over completed replicates, in percent.
struct StudySummary {
    std::size_t n_reps = 0;
    std::size_t n_completed = 0;
    std::size_t n_failed = 0;
    std::vector<std::size_t> clustering_timepoints;  // 1-based
    std::vector<double> pct_selected;                // per clustering time point
    double pct_both_selected = 0.0;
    std::map<std::size_t, double> noise_selected_hist;
    std::map<std::size_t, double> k_selected_hist;
    std::map<std::size_t, double> k_full_hist;
    SummaryStats ari_diff;
    SummaryStats rmse_diff;
    double pct_higher_ari = 0.0;
    double pct_lower_rmse = 0.0;

    std::size_t modal_k_selected() const { return modal(k_selected_hist); }
    std::size_t modal_k_full() const { return modal(k_full_hist); }

private:
    static std::size_t modal(const std::map<std::size_t, double>& h) {
        std::size_t best = 0;
        double share = -1.0;
        for (const auto& [k, pct] : h)
            if (pct > share) {
                share = pct;
                best = k;
            }
        return best;
    }
};

struct StudyReport {
    SimulationConfig config;
    SearchKind search = SearchKind::Backward;
    std::size_t n_reps = 0;
    std::uint64_t seed = 0;
    std::vector<RepRow> rows;
    StudySummary summary;
};

inline StudySummary aggregate(const std::vector<RepRow>& rows, const TimepointSet& clustering) {
    StudySummary s;
    s.n_reps = rows.size();
    s.clustering_timepoints = clustering.one_based();
    s.pct_selected.assign(clustering.size(), 0.0);
    std::vector<double> ari_d, rmse_d;
    std::size_t higher_ari = 0, lower_rmse = 0, both = 0;
    for (const auto& r : rows) {
        if (!r.ok) {
            ++s.n_failed;
            continue;
        }
        ++s.n_completed;
        for (std::size_t j = 0; j < clustering.size(); ++j)
            if (r.clustering_selected[j]) s.pct_selected[j] += 1.0;
        if (r.both_selected) ++both;
        s.noise_selected_hist[r.n_noise_selected] += 1.0;
        s.k_selected_hist[r.comparison.k_selected] += 1.0;
        s.k_full_hist[r.comparison.k_full] += 1.0;
        if (r.comparison.ari_diff) {
            ari_d.push_back(*r.comparison.ari_diff);
            if (*r.comparison.ari_diff > 0.0) ++higher_ari;
        }
        rmse_d.push_back(r.comparison.rmse_diff);
        if (r.comparison.rmse_diff < 0.0) ++lower_rmse;
    }
    if (s.n_completed == 0) return s;
    const double scale = 100.0 / static_cast<double>(s.n_completed);
    for (auto& p : s.pct_selected) p *= scale;
    for (auto* h : {&s.noise_selected_hist, &s.k_selected_hist, &s.k_full_hist})
        for (auto& [k, v] : *h) v *= scale;
    s.pct_both_selected = static_cast<double>(both) * scale;
    s.pct_higher_ari = static_cast<double>(higher_ari) * scale;
    s.pct_lower_rmse = static_cast<double>(lower_rmse) * scale;
    s.ari_diff = summarize(ari_d);
    s.rmse_diff = summarize(rmse_d);
    return s;
}

/// Runs one replicate end to end: simulate, search, compare against truth.
inline RepRow run_replicate(const SimulationConfig& base, std::size_t rep, SearchKind kind, const SearchOptions& search,
                            std::uint64_t seed) {
    RepRow row;
    row.rep = rep;
    const std::uint64_t rep_seed = derive_seed(seed, {rep});
    row.data_seed = derive_seed(rep_seed, {0});
    try {
        auto cfg = base;
        cfg.seed = row.data_seed;
        const auto sim = simulate(cfg);
        auto opts = search;
        opts.seed = derive_seed(rep_seed, {1});
        const auto sel = run_search(sim.dataset, kind, opts);
        const auto& fitted_on = opts.use_covariates ? sim.dataset : sim.dataset.without_covariates();
        row.comparison = compare_models(sel, fitted_on, GroundTruth{sim.true_labels, sim.true_means});
        row.selected = sel.selected.one_based();
        row.both_selected = !cfg.clustering_timepoints.empty();
        for (auto t : cfg.clustering_timepoints) {
            const bool hit = sel.selected.contains(t);
            row.clustering_selected.push_back(hit);
            row.both_selected = row.both_selected && hit;
        }
        for (auto t : sel.selected)
            if (!cfg.clustering_timepoints.contains(t)) ++row.n_noise_selected;
        row.ok = true;
    } catch (const Error& e) {
        row.ok = false;
        row.error = e.what();
    }
    return row;
}

/// Replicates are independent with per-replicate child seeds, so running
/// them concurrently leaves the report unchanged.
inline StudyReport run_study(const SimulationConfig& config, std::size_t n_reps, SearchKind kind, const SearchOptions& search,
                             std::uint64_t seed, unsigned threads = 1) {
    if (n_reps == 0) throw Error(ErrorKind::InvalidArgument, "n_reps must be at least 1");
    config.validate();
    StudyReport report;
    report.config = config;
    report.search = kind;
    report.n_reps = n_reps;
    report.seed = seed;
    report.rows.resize(n_reps);
    auto inner = search;
    if (threads != 1) inner.threads = 1;
    parallel_for(n_reps, [&](std::size_t r) { report.rows[r] = run_replicate(config, r, kind, inner, seed); }, threads);
    report.summary = aggregate(report.rows, config.clustering_timepoints);
    return report;
}

}  // namespace gmmvs
