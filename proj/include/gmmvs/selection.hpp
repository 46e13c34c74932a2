#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string_view>
#include <vector>

#include "gmmvs/dataset.hpp"
#include "gmmvs/errors.hpp"
#include "gmmvs/mixture.hpp"
#include "gmmvs/parallel.hpp"
#include "gmmvs/regression.hpp"

namespace gmmvs {

enum class SearchKind { Backward, Monotone };

constexpr std::string_view to_string(SearchKind k) { return k == SearchKind::Backward ? "backward" : "monotone"; }

inline SearchKind parse_search_kind(std::string_view s) {
    if (s == "backward") return SearchKind::Backward;
    if (s == "monotone") return SearchKind::Monotone;
    throw Error(ErrorKind::InvalidArgument, "unknown search '" + std::string(s) + "' (expected backward or monotone)");
}

struct SearchOptions {
    SelectKOptions clustering;  // k range, restarts, EM settings
    double threshold = 0.0;
    bool use_covariates = false;
    std::uint64_t seed = 0;
    unsigned threads = 0;  // proposals evaluated concurrently; 0 = hardware
};

/// Memo of select_k results by time-point subset. Fits are pure functions
/// of (data, subset, seed, options), so sharing is safe.
class ClusterFitCache {
public:
    ClusterFitCache(const LongitudinalDataset& data, SelectKOptions opts, std::uint64_t seed)
        : data_(data), opts_(opts), seed_(seed) {
        opts_.threads = 1;
    }

    std::shared_ptr<const FitResult> get(const TimepointSet& subset) {
        {
            std::lock_guard lock(mutex_);
            if (auto it = fits_.find(subset); it != fits_.end()) return it->second;
        }
        auto fit = std::make_shared<const FitResult>(select_k(data_, subset, seed_, opts_));
        std::lock_guard lock(mutex_);
        return fits_.try_emplace(subset, std::move(fit)).first->second;
    }

    std::size_t size() const {
        std::lock_guard lock(mutex_);
        return fits_.size();
    }

private:
    const LongitudinalDataset& data_;
    SelectKOptions opts_;
    std::uint64_t seed_;
    mutable std::mutex mutex_;
    std::map<TimepointSet, std::shared_ptr<const FitResult>> fits_;
};

/// One evaluated proposal.
struct StepRecord {
    std::size_t step = 0;
    std::size_t proposal = 0;
    double bic_clust_with = 0.0;     // clustering model on the current set
    double bic_clust_without = 0.0;  // clustering model without the proposal (0 if that set is empty)
    double bic_not_clust = 0.0;      // regression of the proposal on the reduced set
    double bic_diff = 0.0;
    std::size_t k_with = 0;
    std::size_t k_without = 0;  // 0 when the reduced set is empty
    TimepointSet regression_predictors;
    bool removed = false;
};

struct Removal {
    std::size_t index = 0;
    double bic_diff = 0.0;
};

struct SelectionState {
    TimepointSet current;
    std::vector<Removal> removed;
    std::vector<StepRecord> trace;
};

struct SelectionResult {
    TimepointSet selected;
    std::optional<FitResult> final_fit;  // empty when nothing survives
    FitResult full_fit;
    SelectionState state;
    bool no_clustering_structure = false;
};

/// BIC(clust on current) - [BIC(clust on current \ p) + BIC(not-clust p | current \ p)].
/// Positive values favour treating the proposal as non-clustering.
inline StepRecord bic_diff(std::size_t proposal, const TimepointSet& current, const LongitudinalDataset& data,
                           ClusterFitCache& cache, bool use_covariates) {
    if (!current.contains(proposal)) throw Error(ErrorKind::InvalidArgument, "proposal must belong to the current set");
    StepRecord rec;
    rec.proposal = proposal;
    const auto with = cache.get(current);
    rec.bic_clust_with = with->bic;
    rec.k_with = with->model.k;
    const auto reduced = current.without(proposal);
    if (!reduced.empty()) {
        const auto without = cache.get(reduced);
        rec.bic_clust_without = without->bic;
        rec.k_without = without->model.k;
    }
    const auto nc = not_clust_bic(proposal, reduced, data, use_covariates);
    rec.bic_not_clust = nc.bic;
    rec.regression_predictors = nc.model.predictor_indices;
    rec.bic_diff = rec.bic_clust_with - (rec.bic_clust_without + rec.bic_not_clust);
    return rec;
}

inline StepRecord bic_diff(std::size_t proposal, const TimepointSet& current, const LongitudinalDataset& data,
                           const SearchOptions& opts) {
    ClusterFitCache cache(data, opts.clustering, opts.seed);
    return bic_diff(proposal, current, data, cache, opts.use_covariates);
}

namespace detail {

inline SelectionResult backward_search(const LongitudinalDataset& source, const SearchOptions& opts, SearchKind kind) {
    if (source.n_timepoints() == 0) throw Error(ErrorKind::EmptySubset, "dataset has no time points");
    const LongitudinalDataset stripped = opts.use_covariates ? LongitudinalDataset{} : source.without_covariates();
    const LongitudinalDataset& data = opts.use_covariates ? source : stripped;
    ClusterFitCache cache(data, opts.clustering, opts.seed);

    SelectionResult result;
    auto& state = result.state;
    state.current = data.all_timepoints();
    for (std::size_t step = 0; !state.current.empty(); ++step) {
        std::vector<std::size_t> proposals;
        if (kind == SearchKind::Backward) {
            proposals = state.current.indices();
        } else {
            proposals.push_back(state.current.front());
            if (state.current.size() > 1) proposals.push_back(state.current.back());
        }
        std::vector<StepRecord> records(proposals.size());
        parallel_for(
            proposals.size(),
            [&](std::size_t i) { records[i] = bic_diff(proposals[i], state.current, data, cache, opts.use_covariates); },
            opts.threads);

        std::size_t best = 0;
        for (std::size_t i = 0; i < records.size(); ++i) {
            records[i].step = step;
            if (records[i].bic_diff > records[best].bic_diff + 1e-9) best = i;
        }
        const bool remove = records[best].bic_diff > opts.threshold;
        records[best].removed = remove;
        for (auto& r : records) state.trace.push_back(std::move(r));
        if (!remove) break;
        const auto& chosen = state.trace[state.trace.size() - records.size() + best];
        state.removed.push_back({chosen.proposal, chosen.bic_diff});
        state.current = state.current.without(chosen.proposal);
    }

    result.selected = state.current;
    result.no_clustering_structure = result.selected.empty();
    if (!result.selected.empty()) result.final_fit = *cache.get(result.selected);
    result.full_fit = *cache.get(data.all_timepoints());
    return result;
}

}  // namespace detail

/// Repeatedly removes the time point with the largest BIC difference while it
/// exceeds the threshold.
inline SelectionResult backward_greedy_search(const LongitudinalDataset& data, const SearchOptions& opts = {}) {
    return detail::backward_search(data, opts, SearchKind::Backward);
}

/// As backward_greedy_search, but only the earliest and latest remaining time
/// points are proposed, so the survivors form a contiguous interval.
inline SelectionResult backward_monotone_search(const LongitudinalDataset& data, const SearchOptions& opts = {}) {
    return detail::backward_search(data, opts, SearchKind::Monotone);
}

inline SelectionResult run_search(const LongitudinalDataset& data, SearchKind kind, const SearchOptions& opts) {
    return detail::backward_search(data, opts, kind);
}

}  // namespace gmmvs
