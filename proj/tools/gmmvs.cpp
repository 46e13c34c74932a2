// Command-line front end: fit, select, simulate, bench, evaluate.
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "gmmvs/cli.hpp"

namespace {

using gmmvs::cli::RunConfig;

struct RunFlags {
    std::optional<std::string> config_file;
    std::optional<std::string> k_range;
    std::optional<std::string> search;
    std::optional<std::string> threshold;
    std::optional<double> em_tol;
    std::optional<std::size_t> em_max_iter;
    std::optional<std::size_t> n_restarts;
    std::optional<bool> covariates;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<unsigned> threads;

    void add_to(CLI::App* app) {
        app->add_option("--config", config_file, "key = value file with run settings");
        app->add_option("--k-range", k_range, "component counts to try, e.g. 1..6");
        app->add_option("--search", search, "backward or monotone");
        app->add_option("--threshold", threshold, "remove while BIC difference exceeds this (inf allowed)");
        app->add_option("--em-tol", em_tol, "relative log-likelihood tolerance");
        app->add_option("--em-max-iter", em_max_iter, "EM iteration cap");
        app->add_option("--restarts", n_restarts, "k-means restarts per fit");
        app->add_flag("--covariates,!--no-covariates", covariates, "use per-time-point covariates");
        app->add_option("--seed", seed, "master seed");
        app->add_option("--out", out, "output directory");
        app->add_option("--threads", threads, "worker threads (0 = hardware)");
    }

    /// Command-line values override the config file, which overrides defaults.
    RunConfig resolve(RunConfig base) const {
        if (config_file) base = gmmvs::cli::load_run_config(*config_file, base);
        std::string kv;
        if (k_range) kv += "k_range = " + *k_range + "\n";
        if (search) kv += "search = " + *search + "\n";
        if (threshold) kv += "threshold = " + *threshold + "\n";
        std::istringstream in(kv);
        base = gmmvs::cli::parse_run_config(in, base);
        if (em_tol) base.em_tol = *em_tol;
        if (em_max_iter) base.em_max_iter = *em_max_iter;
        if (n_restarts) base.n_restarts = *n_restarts;
        if (covariates) base.use_covariates = *covariates;
        if (seed) base.seed = *seed;
        if (out) base.output_dir = *out;
        if (threads) base.threads = *threads;
        return base;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Growth mixture models with stepwise time point selection"};
    app.require_subcommand(1);

    std::string data_path;
    RunFlags fit_flags, select_flags, bench_flags;

    auto* fit = app.add_subcommand("fit", "fit the mixture on all time points, K chosen by BIC");
    fit->add_option("data", data_path, "long-format CSV")->required();
    fit_flags.add_to(fit);

    auto* select = app.add_subcommand("select", "backward search for clustering time points");
    select->add_option("data", data_path, "long-format CSV")->required();
    select_flags.add_to(select);

    gmmvs::cli::SimulateArgs sim;
    std::optional<std::string> sim_config;
    std::string sim_out = ".";
    bool no_data = false;
    auto* simulate = app.add_subcommand("simulate", "generate replicate datasets");
    simulate->add_option("--preset", sim.preset, "T1, T2, T3 or T4");
    simulate->add_option("--sim-config", sim_config, "simulation design file");
    simulate->add_option("--subjects", sim.n_subjects, "override the number of subjects");
    simulate->add_option("--reps", sim.n_reps, "number of replicates");
    simulate->add_option("--seed", sim.seed, "master seed");
    simulate->add_option("--out", sim_out, "output directory");
    simulate->add_flag("--no-data", no_data, "write only simulation.json");

    gmmvs::cli::BenchArgs bench;
    std::optional<std::string> bench_sim_config;
    auto* benchc = app.add_subcommand("bench", "simulation study comparing selected and full models");
    benchc->add_option("--preset", bench.preset, "T1, T2, T3 or T4");
    benchc->add_option("--sim-config", bench_sim_config, "simulation design file");
    benchc->add_option("--subjects", bench.n_subjects, "override the number of subjects");
    benchc->add_option("--reps", bench.n_reps, "number of replicates");
    bench_flags.add_to(benchc);

    std::string labels_a, labels_b;
    std::optional<std::string> eval_out;
    auto* evaluate = app.add_subcommand("evaluate", "adjusted Rand index between two label files");
    evaluate->add_option("labels_a", labels_a)->required();
    evaluate->add_option("labels_b", labels_b)->required();
    evaluate->add_option("--out", eval_out, "write the result as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return gmmvs::cli::kUsage;
    }

    auto& out = std::cout;
    auto& err = std::cerr;
    return gmmvs::cli::guarded(err, [&]() -> int {
        if (*fit) return gmmvs::cli::cmd_fit(data_path, fit_flags.resolve({}), out, err);
        if (*select) return gmmvs::cli::cmd_select(data_path, select_flags.resolve({}), out, err);
        if (*simulate) {
            if (sim_config) sim.config = *sim_config;
            sim.output_dir = sim_out;
            sim.write_data = !no_data;
            return gmmvs::cli::cmd_simulate(sim, out, err);
        }
        if (*benchc) {
            if (bench_sim_config) bench.config = *bench_sim_config;
            RunConfig base;
            base.use_covariates = true;  // simulated groups differ through the covariate slope
            bench.run = bench_flags.resolve(base);
            return gmmvs::cli::cmd_bench(bench, out, err);
        }
        return gmmvs::cli::cmd_evaluate(labels_a, labels_b,
                                        eval_out ? std::optional<std::filesystem::path>(*eval_out) : std::nullopt, out, err);
    });
}
