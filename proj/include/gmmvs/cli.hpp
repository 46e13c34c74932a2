#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gmmvs/dataset.hpp"
#include "gmmvs/errors.hpp"
#include "gmmvs/evaluation.hpp"
#include "gmmvs/mixture.hpp"
#include "gmmvs/selection.hpp"
#include "gmmvs/serialize.hpp"
#include "gmmvs/simulation.hpp"

namespace gmmvs::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kNumerical = 3 };

struct RunConfig {
    KRange k_range{1, 6};
    SearchKind search = SearchKind::Backward;
    double threshold = 0.0;
    double em_tol = 1e-6;
    std::size_t em_max_iter = 1000;
    std::size_t n_restarts = 50;
    bool use_covariates = false;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = ".";
    unsigned threads = 0;

    void validate() const {
        if (k_range.min < 1) throw Error(ErrorKind::InvalidArgument, "k range lower bound must be >= 1");
        if (k_range.max < k_range.min) throw Error(ErrorKind::InvalidArgument, "k range upper bound below lower bound");
        if (std::isnan(threshold) || threshold == -std::numeric_limits<double>::infinity())
            throw Error(ErrorKind::InvalidArgument, "threshold must be a number (+inf allowed)");
        if (!(em_tol > 0.0)) throw Error(ErrorKind::InvalidArgument, "em_tol must be positive");
        if (em_max_iter == 0) throw Error(ErrorKind::InvalidArgument, "em_max_iter must be >= 1");
        if (n_restarts == 0) throw Error(ErrorKind::InvalidArgument, "n_restarts must be >= 1");
    }

    SearchOptions search_options() const {
        SearchOptions o;
        o.clustering.k_range = k_range;
        o.clustering.n_restarts = n_restarts;
        o.clustering.em = {em_tol, em_max_iter};
        o.threshold = threshold;
        o.use_covariates = use_covariates;
        o.seed = seed;
        o.threads = threads;
        return o;
    }

    SelectKOptions select_k_options() const {
        SelectKOptions o;
        o.k_range = k_range;
        o.n_restarts = n_restarts;
        o.em = {em_tol, em_max_iter};
        o.threads = threads == 0 ? default_threads() : threads;
        return o;
    }
};

/// Result-affecting settings only: output location and thread count are
/// left out so artifacts compare equal across directories and machines.
inline json to_json(const RunConfig& c) {
    return {{"k_min", c.k_range.min},
            {"k_max", c.k_range.max},
            {"search", std::string(to_string(c.search))},
            {"threshold", number_or_null(c.threshold)},
            {"em_tol", c.em_tol},
            {"em_max_iter", c.em_max_iter},
            {"n_restarts", c.n_restarts},
            {"use_covariates", c.use_covariates},
            {"seed", c.seed}};
}

namespace detail {

using gmmvs::detail::trim;

inline std::map<std::string, std::string> read_key_values(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty() || line == "\r") continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorKind::InvalidArgument, "config line " + std::to_string(line_no) + " is not key = value");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

inline double to_double(const std::string& key, const std::string& v) {
    if (v == "inf" || v == "+inf" || v == "infinity") return std::numeric_limits<double>::infinity();
    if (v == "-inf") return -std::numeric_limits<double>::infinity();
    const auto d = gmmvs::detail::parse_double(v);
    if (!d) throw Error(ErrorKind::InvalidArgument, "empty value for " + key);
    return *d;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw Error(ErrorKind::InvalidArgument, "'" + v + "' is not a nonnegative integer for " + key);
    return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw Error(ErrorKind::InvalidArgument, "'" + v + "' is not a boolean for " + key);
}

inline std::vector<double> to_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
    return out;
}

/// "lo..hi" or a single value.
inline KRange to_k_range(const std::string& v) {
    const auto dots = v.find("..");
    if (dots == std::string::npos) {
        const auto k = to_uint("k_range", trim(v));
        return {k, k};
    }
    return {to_uint("k_range", trim(v.substr(0, dots))), to_uint("k_range", trim(v.substr(dots + 2)))};
}

}  // namespace detail

/// Flat key = value file mirroring RunConfig; '#' starts a comment.
inline RunConfig parse_run_config(std::istream& in, RunConfig base = {}) {
    for (const auto& [key, v] : detail::read_key_values(in)) {
        if (key == "k_range") base.k_range = detail::to_k_range(v);
        else if (key == "k_min") base.k_range.min = detail::to_uint(key, v);
        else if (key == "k_max") base.k_range.max = detail::to_uint(key, v);
        else if (key == "search") base.search = parse_search_kind(v);
        else if (key == "threshold") base.threshold = detail::to_double(key, v);
        else if (key == "em_tol") base.em_tol = detail::to_double(key, v);
        else if (key == "em_max_iter") base.em_max_iter = detail::to_uint(key, v);
        else if (key == "n_restarts") base.n_restarts = detail::to_uint(key, v);
        else if (key == "use_covariates") base.use_covariates = detail::to_bool(key, v);
        else if (key == "seed") base.seed = detail::to_uint(key, v);
        else if (key == "output_dir") base.output_dir = v;
        else if (key == "threads") base.threads = static_cast<unsigned>(detail::to_uint(key, v));
        else throw Error(ErrorKind::InvalidArgument, "unknown config key '" + key + "'");
    }
    return base;
}

inline RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open config " + path.string());
    return parse_run_config(in, std::move(base));
}

/// Simulation design file. Time points are 1-based; slope and intercept
/// rows are separated by ';'. A `preset` key selects the starting design.
inline SimulationConfig parse_simulation_config(std::istream& in) {
    const auto kv = detail::read_key_values(in);
    SimulationConfig c;
    if (auto it = kv.find("preset"); it != kv.end()) c = preset_config(parse_preset(it->second));
    auto rows = [](const std::string& key, const std::string& v) {
        std::vector<std::vector<double>> out;
        std::stringstream ss(v);
        std::string row;
        while (std::getline(ss, row, ';')) out.push_back(detail::to_list(key, row));
        return out;
    };
    for (const auto& [key, v] : kv) {
        if (key == "preset") continue;
        if (key == "n_subjects") c.n_subjects = detail::to_uint(key, v);
        else if (key == "n_timepoints") c.n_timepoints = detail::to_uint(key, v);
        else if (key == "weights") c.weights = detail::to_list(key, v);
        else if (key == "clustering_timepoints") {
            std::vector<std::size_t> idx;
            for (double t : detail::to_list(key, v)) {
                if (t < 1 || t != std::floor(t)) throw Error(ErrorKind::InvalidArgument, "time points are 1-based integers");
                idx.push_back(static_cast<std::size_t>(t) - 1);
            }
            c.clustering_timepoints = TimepointSet(std::move(idx));
        } else if (key == "slopes") c.slopes = rows(key, v);
        else if (key == "intercepts") c.intercepts = rows(key, v);
        else if (key == "noise_sd") c.noise_sd = detail::to_double(key, v);
        else if (key == "background_intercept") c.background_intercept = detail::to_double(key, v);
        else if (key == "background_slope") c.background_slope = detail::to_double(key, v);
        else throw Error(ErrorKind::InvalidArgument, "unknown simulation key '" + key + "'");
    }
    c.validate();
    return c;
}

inline SimulationConfig load_simulation_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open simulation config " + path.string());
    return parse_simulation_config(in);
}

/// Reads the label column of a labels CSV: `map_label`, else `label`, else
/// the only column, else the second column.
inline std::vector<int> read_labels_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::IoFailure, path.string() + " is empty");
    auto header = gmmvs::detail::split_csv_line(line);
    for (auto& h : header) h = detail::trim(h);
    std::size_t col = header.size() == 1 ? 0 : 1;
    for (const char* name : {"label", "map_label"})
        if (auto it = std::find(header.begin(), header.end(), name); it != header.end())
            col = static_cast<std::size_t>(it - header.begin());
    std::vector<int> labels;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        const auto f = gmmvs::detail::split_csv_line(line);
        if (col >= f.size()) throw Error(ErrorKind::MissingCell, "row without a label in " + path.string());
        const auto v = detail::trim(f[col]);
        int x = 0;
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
        if (ec != std::errc() || ptr != v.data() + v.size())
            throw Error(ErrorKind::NonNumericValue, "label '" + v + "' is not an integer");
        labels.push_back(x);
    }
    return labels;
}

/// Maps library errors to exit codes and prints a one-line diagnostic.
inline int guarded(std::ostream& err, const std::function<int()>& body) {
    try {
        return body();
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return e.is_numerical() ? kNumerical : kUsage;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: IoFailure: " << e.what() << '\n';
        return kUsage;
    }
}

/// Fits the mixture on every time point with K chosen by BIC.
/// Artifacts: model.json, labels.csv, fit_summary.json.
inline int cmd_fit(const std::filesystem::path& data_path, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        cfg.validate();
        auto data = parse_long_csv(data_path);
        if (!cfg.use_covariates) data = data.without_covariates();
        if (data.n_timepoints() == 0) throw Error(ErrorKind::EmptySubset, "dataset has no time points");
        const auto fit = select_k(data, data.all_timepoints(), cfg.seed, cfg.select_k_options());
        json model{{"config", to_json(cfg)}, {"fit", to_json(fit)}};
        json summary{{"config", to_json(cfg)},
                     {"n_subjects", data.n_subjects()},
                     {"n_timepoints", data.n_timepoints()},
                     {"k", fit.model.k},
                     {"loglik", number_or_null(fit.loglik)},
                     {"bic", number_or_null(fit.bic)},
                     {"converged", fit.converged}};
        write_json_atomic(cfg.output_dir / "model.json", model);
        write_file_atomic(cfg.output_dir / "labels.csv", labels_csv(data.subject_ids(), fit));
        write_json_atomic(cfg.output_dir / "fit_summary.json", summary);
        out << "K = " << fit.model.k << "  loglik = " << std::setprecision(10) << fit.loglik << "  bic = " << fit.bic << '\n';
        return static_cast<int>(kOk);
    });
}

/// Runs the configured backward search.
/// Artifacts: selection.json, labels_selected.csv, labels_full.csv.
inline int cmd_select(const std::filesystem::path& data_path, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        cfg.validate();
        const auto data = parse_long_csv(data_path);
        const auto sel = run_search(data, cfg.search, cfg.search_options());
        json j{{"config", to_json(cfg)}, {"selection", to_json(sel)}};
        write_json_atomic(cfg.output_dir / "selection.json", j);
        write_file_atomic(cfg.output_dir / "labels_full.csv", labels_csv(data.subject_ids(), sel.full_fit));
        if (sel.final_fit) {
            write_file_atomic(cfg.output_dir / "labels_selected.csv", labels_csv(data.subject_ids(), *sel.final_fit));
        } else {
            // Nothing survived: everyone in one group.
            FitResult one;
            one.model.k = 1;
            one.map_labels.assign(data.n_subjects(), 0);
            one.posteriors = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(data.n_subjects()), 1);
            write_file_atomic(cfg.output_dir / "labels_selected.csv", labels_csv(data.subject_ids(), one));
        }
        out << "selected time points:";
        for (auto t : sel.selected.one_based()) out << ' ' << t;
        if (sel.selected.empty()) out << " (none: no clustering structure)";
        out << "\nK (selected) = " << (sel.final_fit ? sel.final_fit->model.k : 1) << "  K (all) = " << sel.full_fit.model.k
            << '\n';
        return static_cast<int>(kOk);
    });
}

struct SimulateArgs {
    std::optional<std::string> preset;
    std::optional<std::filesystem::path> config;
    std::optional<std::size_t> n_subjects;
    std::size_t n_reps = 1;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = ".";
    bool write_data = true;
};

inline SimulationConfig resolve_simulation(const std::optional<std::string>& preset,
                                           const std::optional<std::filesystem::path>& config,
                                           const std::optional<std::size_t>& n_subjects) {
    if (preset && config) throw Error(ErrorKind::InvalidArgument, "give either a preset or a simulation config, not both");
    SimulationConfig c = config ? load_simulation_config(*config) : preset_config(parse_preset(preset.value_or("T1")));
    if (n_subjects) c.n_subjects = *n_subjects;
    c.validate();
    return c;
}

/// Generates replicate datasets. Artifacts: data_rep<NNN>.csv and
/// truth_rep<NNN>.csv per replicate (unless disabled) and simulation.json.
inline int cmd_simulate(const SimulateArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (args.n_reps == 0) throw Error(ErrorKind::InvalidArgument, "--reps must be at least 1");
        const auto base = resolve_simulation(args.preset, args.config, args.n_subjects);
        json reps = json::array();
        for (std::size_t r = 0; r < args.n_reps; ++r) {
            auto cfg = base;
            cfg.seed = derive_seed(derive_seed(args.seed, {r}), {0});
            const auto sim = simulate(cfg);
            std::vector<std::size_t> counts(cfg.n_groups(), 0);
            for (auto g : sim.true_labels) ++counts[static_cast<std::size_t>(g)];
            char tag[32];
            std::snprintf(tag, sizeof tag, "rep%03zu", r + 1);
            if (args.write_data) {
                std::ostringstream data, truth;
                write_long_csv(sim.dataset, data);
                truth << "subject_id,label\n";
                for (std::size_t s = 0; s < sim.true_labels.size(); ++s)
                    truth << sim.dataset.subject_ids()[s] << ',' << sim.true_labels[s] << '\n';
                write_file_atomic(args.output_dir / (std::string("data_") + tag + ".csv"), data.str());
                write_file_atomic(args.output_dir / (std::string("truth_") + tag + ".csv"), truth.str());
            }
            reps.push_back({{"rep", r + 1},
                            {"data_seed", cfg.seed},
                            {"n_subjects", sim.dataset.n_subjects()},
                            {"n_timepoints", sim.dataset.n_timepoints()},
                            {"group_counts", counts}});
        }
        json report{{"simulation", to_json(base)},
                    {"preset", args.preset ? json(*args.preset) : json(nullptr)},
                    {"n_reps", args.n_reps},
                    {"seed", args.seed},
                    {"reps", std::move(reps)}};
        write_json_atomic(args.output_dir / "simulation.json", report);
        out << "wrote " << args.n_reps << " replicate(s) of " << base.n_subjects << " subjects x " << base.n_timepoints
            << " time points to " << args.output_dir.string() << '\n';
        return static_cast<int>(kOk);
    });
}

struct BenchArgs {
    std::optional<std::string> preset;
    std::optional<std::filesystem::path> config;
    std::optional<std::size_t> n_subjects;
    std::size_t n_reps = 20;
    RunConfig run;  // seed, search and output_dir are taken from here
};

/// Printable table in the layout of the published simulation tables.
inline std::string format_summary_table(const StudySummary& s) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(1);
    o << "completed reps: " << s.n_completed << " / " << s.n_reps << " (failed " << s.n_failed << ")\n";
    o << "clustering time point selected:";
    for (std::size_t j = 0; j < s.clustering_timepoints.size(); ++j)
        o << "  t" << s.clustering_timepoints[j] << " " << s.pct_selected[j] << "%";
    o << "  both " << s.pct_both_selected << "%\n";
    o << "non-clustering time points selected:";
    for (const auto& [n, pct] : s.noise_selected_hist) o << "  " << n << ": " << pct << "%";
    o << "\nK chosen (selected vars):";
    for (const auto& [k, pct] : s.k_selected_hist) o << "  " << k << ": " << pct << "%";
    o << "\nK chosen (all vars):     ";
    for (const auto& [k, pct] : s.k_full_hist) o << "  " << k << ": " << pct << "%";
    o << std::setprecision(5);
    auto stats = [&](const char* name, const SummaryStats& st) {
        o << '\n' << name << " min " << st.min << "  q1 " << st.q1 << "  median " << st.median << "  mean " << st.mean
          << "  q3 " << st.q3 << "  max " << st.max;
    };
    stats("ARI diff (selected - all): ", s.ari_diff);
    stats("RMSE diff (selected - all):", s.rmse_diff);
    o << std::setprecision(1) << "\nhigher ARI with selected vars: " << s.pct_higher_ari
      << "%\nlower RMSE with selected vars: " << s.pct_lower_rmse << "%\n";
    return o.str();
}

/// Runs a simulation study. Artifacts: bench_rows.csv, bench_summary.json.
inline int cmd_bench(const BenchArgs& args, std::ostream& out, std::ostream& err, StudyReport* report_out = nullptr) {
    return guarded(err, [&] {
        if (args.n_reps == 0) throw Error(ErrorKind::InvalidArgument, "--reps must be at least 1");
        args.run.validate();
        const auto sim = resolve_simulation(args.preset, args.config, args.n_subjects);
        auto report = run_study(sim, args.n_reps, args.run.search, args.run.search_options(), args.run.seed,
                                args.run.threads == 0 ? default_threads() : args.run.threads);
        json j{{"config", to_json(args.run)},
               {"preset", args.preset ? json(*args.preset) : json(nullptr)},
               {"study", to_json(report)}};
        write_json_atomic(args.run.output_dir / "bench_summary.json", j);
        write_file_atomic(args.run.output_dir / "bench_rows.csv", study_rows_csv(report));
        out << format_summary_table(report.summary);
        if (report_out) *report_out = std::move(report);
        return static_cast<int>(kOk);
    });
}

/// ARI between two label files (matched by row order).
inline int cmd_evaluate(const std::filesystem::path& a, const std::filesystem::path& b,
                        const std::optional<std::filesystem::path>& json_out, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto la = read_labels_csv(a);
        const auto lb = read_labels_csv(b);
        const double value = ari(la, lb);
        json j{{"ari", value}, {"n_subjects", la.size()}};
        if (json_out) write_json_atomic(*json_out, j);
        out << j.dump() << '\n';
        return static_cast<int>(kOk);
    });
}

}  // namespace gmmvs::cli
