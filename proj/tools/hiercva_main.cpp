#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hiercva/ard.hpp"
#include "hiercva/config.hpp"
#include "hiercva/errors.hpp"
#include "hiercva/pipeline.hpp"
#include "hiercva/planner.hpp"

namespace fs = std::filesystem;
using namespace hiercva;

namespace {

struct CommonFlags {
    std::string config_path;
    int m_override = -1;
    int n_override = -1;
    long long seed_override = -1;
    std::string out_override;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("-c,--config", flags.config_path, "pipeline config (JSON)")->required();
    cmd->add_option("--M", flags.m_override, "override market path count M");
    cmd->add_option("--N", flags.n_override, "override hierarchical factor N");
    cmd->add_option("--seed", flags.seed_override, "override the seed");
    cmd->add_option("--out", flags.out_override, "override the output directory");
}

PipelineConfig load_with_overrides(const CommonFlags& flags) {
    PipelineConfig cfg = load_config(flags.config_path);
    if (flags.m_override > 0) cfg.sim.paths = flags.m_override;
    if (flags.n_override > 0) cfg.sim.replicas = flags.n_override;
    if (flags.seed_override >= 0) {
        cfg.seed = static_cast<std::uint64_t>(flags.seed_override);
        cfg.training.base.seed = cfg.seed;
    }
    if (!flags.out_override.empty()) cfg.output_dir = flags.out_override;
    cfg.validate();
    return cfg;
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    return out;
}

int cmd_simulate(const CommonFlags& flags) {
    PipelineConfig cfg = load_with_overrides(flags);
    fs::create_directories(cfg.output_dir);
    RandomStream root(cfg.seed);
    std::vector<SwapSpec> book = resolve_book(cfg);
    save_book_csv((fs::path(cfg.output_dir) / "book.csv").string(), book);
    SimulationSet sim = simulate_set(cfg.model, cfg.grid, book, cfg.sim.paths, cfg.sim.replicas,
                                     root.split(stream_keys::kTrainSim));
    save_market((fs::path(cfg.output_dir) / "market.bin").string(), sim.market, cfg.grid,
                cfg.seed);

    // Per-step summary: mean discount and survival fraction per client.
    std::ofstream out((fs::path(cfg.output_dir) / "simulate_summary.csv").string());
    out << "step,mean_discount";
    for (int c = 1; c < sim.defaults.n_names(); ++c) out << ",survival_" << c;
    out << "\n";
    for (int i = 0; i <= cfg.grid.n_steps; ++i) {
        double beta = 0.0;
        for (int k = 0; k < cfg.sim.paths; ++k) beta += sim.market.discount(k, i);
        out << i << ',' << format_double(beta / cfg.sim.paths);
        for (int c = 1; c < sim.defaults.n_names(); ++c) {
            long long surv = 0;
            for (int k = 0; k < cfg.sim.paths; ++k)
                for (int l = 0; l < cfg.sim.replicas; ++l)
                    surv += sim.defaults.indicator(k, l, i, c) ? 0 : 1;
            out << ',' << format_double(static_cast<double>(surv) /
                                        (static_cast<double>(cfg.sim.paths) * cfg.sim.replicas));
        }
        out << '\n';
    }
    std::cout << "simulated M=" << cfg.sim.paths << " N=" << cfg.sim.replicas << " -> "
              << cfg.output_dir << "\n";
    return 0;
}

int cmd_run(const CommonFlags& flags) {
    PipelineConfig cfg = load_with_overrides(flags);
    RunManifest manifest = run(cfg);
    std::cout << "run complete, config hash " << manifest.config_hash << "\n";
    for (const auto& [phase, secs] : manifest.phase_seconds)
        std::cout << "  " << phase << ": " << secs << " s\n";
    return 0;
}

int cmd_train(const CommonFlags& flags) {
    PipelineConfig cfg = load_with_overrides(flags);
    cfg.validation.twin = false;
    cfg.validation.nested = false;
    RunManifest manifest = run(cfg);
    std::cout << "trained " << cfg.grid.n_steps << " per-step models, config hash "
              << manifest.config_hash << "\n";
    return 0;
}

int cmd_validate(const CommonFlags& flags, bool twin_only) {
    PipelineConfig cfg = load_with_overrides(flags);
    cfg.validation.twin = true;
    if (twin_only) cfg.validation.nested = false;
    RunManifest manifest = run(cfg);
    std::cout << (twin_only ? "twin-check" : "validate") << " complete, results in "
              << cfg.output_dir << "/error_report.csv\n";
    (void)manifest;
    return 0;
}

int cmd_benchmark(const CommonFlags& flags) {
    PipelineConfig cfg = load_with_overrides(flags);
    cfg.validation.nested = true;
    RunManifest manifest = run(cfg);
    (void)manifest;
    std::cout << "nested benchmark written to " << cfg.output_dir << "/nested.csv\n";
    return 0;
}

int cmd_matrix(const CommonFlags& flags, const std::string& m_csv, const std::string& n_csv) {
    PipelineConfig cfg = load_with_overrides(flags);
    auto rows = run_matrix(cfg, parse_int_list(m_csv), parse_int_list(n_csv),
                           (fs::path(cfg.output_dir) / "matrix.csv").string());
    std::cout << "M,N,twin_rmse,nested_rmse,sim_s,train_s,status\n";
    for (const auto& r : rows)
        std::cout << r.m << ',' << r.n_factor << ',' << r.twin_rmse << ',' << r.nested_rmse << ','
                  << r.sim_seconds << ',' << r.train_seconds << ',' << r.status << '\n';
    return 0;
}

int cmd_plan(const CommonFlags& flags, const std::string& qr_csv, const std::string& timing_csv,
             double budget) {
    PipelineConfig cfg = load_with_overrides(flags);
    if (budget <= 0.0) budget = cfg.planner.budget;

    std::ifstream qr(qr_csv);
    if (!qr) throw config_error("plan: cannot open " + qr_csv);
    std::string line;
    std::getline(qr, line);  // header
    std::vector<TraceEntry> trace;
    while (std::getline(qr, line)) {
        std::stringstream ss(line);
        std::string f[4];
        for (auto& x : f) std::getline(ss, x, ',');
        trace.push_back({std::stod(f[2]), std::stod(f[3])});
    }

    std::ifstream tf(timing_csv);
    if (!tf) throw config_error("plan: cannot open " + timing_csv);
    std::getline(tf, line);  // header: N,T
    std::vector<std::pair<double, double>> timings;
    while (std::getline(tf, line)) {
        std::stringstream ss(line);
        std::string a, b;
        std::getline(ss, a, ',');
        std::getline(ss, b, ',');
        timings.emplace_back(std::stod(a), std::stod(b));
    }
    if (timings.size() < 2) throw config_error("plan: need at least two timing rows");

    const double p = estimate_p(timings.front().first, timings.front().second,
                                timings.back().first, timings.back().second);
    AverageN avg = average_optimal_n(trace, p);
    std::cout << "estimated cost ratio P = " << p << "\n";
    std::cout << "recommended N (mean of sqrt(QP/R)) = " << avg.mean_n
              << " (median " << avg.median_n << ", " << avg.per_entry.size() << " entries)\n";
    if (budget > 0.0) {
        const long long m = heuristic_m(budget, static_cast<double>(avg.mean_n), p);
        std::cout << "budget B = " << budget << " -> M = " << m << "\n";
    }
    if (cfg.planner.has_bounds) {
        const long long m_conf = required_m(cfg.planner.bounds, static_cast<double>(avg.mean_n));
        std::cout << "confidence-based M (Corollary formula) = " << m_conf << "\n";
    }
    return 0;
}

int cmd_ard(const CommonFlags& flags) {
    PipelineConfig cfg = load_with_overrides(flags);
    fs::create_directories(cfg.output_dir);
    RandomStream root(cfg.seed);
    std::vector<SwapSpec> book = resolve_book(cfg);
    int rejected = 0;
    auto samples = sample_variances(cfg.model, cfg.grid, book, cfg.ard.prior, cfg.ard.dgp_draws,
                                    cfg.ard.paths_per_draw, root.split(stream_keys::kArd),
                                    &rejected);
    ArdDataset data = make_ard_dataset(samples, cfg.ard.aggregate_families,
                                       cfg.model.n_economies(), cfg.model.n_clients());
    auto results = randomized_ard(data, cfg.ard.subsamples, cfg.ard.fraction, cfg.ard.restarts,
                                  root.split(stream_keys::kArd).split(1));

    std::ofstream rows_csv((fs::path(cfg.output_dir) / "ard_samples.csv").string());
    rows_csv << "subsample";
    for (const auto& nm : data.names) rows_csv << ",inv_lambda[" << nm << "]";
    rows_csv << "\n";
    for (std::size_t s = 0; s < results.size(); ++s) {
        rows_csv << s;
        for (double il : results[s].std_inverse_length_scales) rows_csv << ',' << format_double(il);
        rows_csv << '\n';
    }

    std::ofstream q_csv((fs::path(cfg.output_dir) / "ard_quantiles.csv").string());
    q_csv << "dimension,q10,q25,q50,q75,q90\n";
    for (std::size_t d = 0; d < data.names.size(); ++d) {
        std::vector<double> v;
        for (const auto& r : results) v.push_back(r.std_inverse_length_scales[d]);
        std::sort(v.begin(), v.end());
        auto quant = [&](double q) {
            double pos = q * (v.size() - 1.0);
            std::size_t i = static_cast<std::size_t>(pos);
            double fr = pos - i;
            return (i + 1 < v.size()) ? v[i] * (1 - fr) + v[i + 1] * fr : v[i];
        };
        q_csv << data.names[d] << ',' << format_double(quant(0.10)) << ','
              << format_double(quant(0.25)) << ',' << format_double(quant(0.50)) << ','
              << format_double(quant(0.75)) << ',' << format_double(quant(0.90)) << '\n';
    }
    std::cout << "ard: " << results.size() << " sub-sample fits over " << data.names.size()
              << " dimensions (" << rejected << " prior draws rejected)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hiercva: hierarchical-simulation CVA learner"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string m_csv = "256", n_csv = "1";
    std::string qr_csv, timing_csv;
    double budget = 0.0;

    CLI::App* c_sim = app.add_subcommand("simulate", "simulate market and default scenarios");
    add_common(c_sim, flags);
    CLI::App* c_train = app.add_subcommand("train", "simulate and train per-step CVA models");
    add_common(c_train, flags);
    CLI::App* c_val = app.add_subcommand("validate", "out-of-sample twin validation + percentiles");
    add_common(c_val, flags);
    CLI::App* c_bench = app.add_subcommand("benchmark", "nested Monte Carlo benchmark");
    add_common(c_bench, flags);
    CLI::App* c_plan = app.add_subcommand("plan", "recommend (N, M) from Q/R trace and timings");
    add_common(c_plan, flags);
    c_plan->add_option("--qr-trace", qr_csv, "Q/R trace CSV (step,epoch,Q,R)")->required();
    c_plan->add_option("--timings", timing_csv, "timing CSV (N,T), equal M rows")->required();
    c_plan->add_option("--budget", budget, "budget B in units of one X-simulation");
    CLI::App* c_ard = app.add_subcommand("ard", "randomized GP-ARD relevance study");
    add_common(c_ard, flags);
    CLI::App* c_matrix = app.add_subcommand("matrix", "sweep (M, N) combinations");
    add_common(c_matrix, flags);
    c_matrix->add_option("--M-list", m_csv, "comma-separated M values")->required();
    c_matrix->add_option("--N-list", n_csv, "comma-separated N values")->required();
    CLI::App* c_twin = app.add_subcommand("twin-check", "fast twin L2 check of trained models");
    add_common(c_twin, flags);
    CLI::App* c_run = app.add_subcommand("run", "full pipeline: simulate, train, validate");
    add_common(c_run, flags);

    try {
        app.parse(argc, argv);
        if (c_sim->parsed()) return cmd_simulate(flags);
        if (c_train->parsed()) return cmd_train(flags);
        if (c_val->parsed()) return cmd_validate(flags, false);
        if (c_twin->parsed()) return cmd_validate(flags, true);
        if (c_bench->parsed()) return cmd_benchmark(flags);
        if (c_plan->parsed()) return cmd_plan(flags, qr_csv, timing_csv, budget);
        if (c_ard->parsed()) return cmd_ard(flags);
        if (c_matrix->parsed()) return cmd_matrix(flags, m_csv, n_csv);
        if (c_run->parsed()) return cmd_run(flags);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const config_error& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
