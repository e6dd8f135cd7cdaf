#include "hiercva/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "hiercva/errors.hpp"
#include "hiercva/parallel.hpp"

namespace hiercva {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Eigen::MatrixXd to_eigen(const FeatureMatrix& f) {
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                          Eigen::RowMajor>>(f.values.data(), f.rows, f.cols())
        .cast<double>();
}

Eigen::VectorXd to_eigen(const LabelSet& l) {
    return Eigen::Map<const Eigen::VectorXd>(l.values.data(),
                                             static_cast<Eigen::Index>(l.values.size()));
}

double percentile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * (static_cast<double>(sorted.size()) - 1.0);
    const std::size_t idx = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(idx);
    if (idx + 1 < sorted.size()) return sorted[idx] * (1.0 - frac) + sorted[idx + 1] * frac;
    return sorted[idx];
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

std::vector<SwapSpec> resolve_book(const PipelineConfig& cfg) {
    if (cfg.book.from_file) return load_book_csv(cfg.book.file, cfg.model, cfg.grid);
    RandomStream root(cfg.seed);
    return generate_book(cfg.model, cfg.grid, cfg.book.gen, root.split(stream_keys::kBook));
}

SimulationSet simulate_set(const ModelParams& params, const TimeGrid& grid,
                           const std::vector<SwapSpec>& book, int n_paths, int n_replicas,
                           const RandomStream& stream) {
    MarketBlock market = simulate_market(params, grid, n_paths, stream.split(0));
    DefaultBlock defaults = sample_default_block(market, n_replicas, stream.split(1));
    MtMCube cube = build_mtm_cube(market, book, params);
    return SimulationSet{std::move(market), std::move(defaults), std::move(cube)};
}

LabelSource make_label_source(const SimulationSet& sim, const std::vector<SwapSpec>& book,
                              const ModelParams& params, const std::string& label_kind,
                              bool with_qr_probe, const RandomStream& probe_stream) {
    (void)book;
    const bool intensity = (label_kind == "intensity");
    // Two extra conditionally independent replicas per outer path feed the
    // Q/R probe, per the one-extra-X-simulation recipe.
    std::shared_ptr<DefaultBlock> aux;
    if (with_qr_probe)
        aux = std::make_shared<DefaultBlock>(sample_default_block(sim.market, 2, probe_stream));

    return [&sim, &params, intensity, aux](int step) {
        StepData data;
        FeatureMatrix f = features_at(step, sim.market, sim.defaults);
        data.features = to_eigen(f);
        data.passthrough = f.p;
        LabelSet labels = intensity ? intensity_label(step, sim.market, sim.defaults, sim.cube)
                                    : defaults_label(step, sim.market, sim.defaults, sim.cube);
        data.labels = to_eigen(labels);
        if (aux) {
            // Split the aux block into its two replica columns.
            const int m = sim.market.n_paths();
            FeatureMatrix fa = features_at(step, sim.market, *aux);
            LabelSet la = intensity ? intensity_label(step, sim.market, *aux, sim.cube)
                                    : defaults_label(step, sim.market, *aux, sim.cube);
            Eigen::MatrixXd fae = to_eigen(fa);
            data.probe.x1.resize(m, fae.cols());
            data.probe.x2.resize(m, fae.cols());
            data.probe.y1.resize(m);
            data.probe.y2.resize(m);
            for (int k = 0; k < m; ++k) {
                data.probe.x1.row(k) = fae.row(2 * k);
                data.probe.x2.row(k) = fae.row(2 * k + 1);
                data.probe.y1(k) = la.at(k, 0);
                data.probe.y2(k) = la.at(k, 1);
            }
        }
        return data;
    };
}

void append_error_csv(const std::string& path, const std::vector<ErrorRow>& rows) {
    const bool exists = fs::exists(path);
    std::ofstream out(path, std::ios::app);
    if (!out) throw config_error("cannot write " + path);
    // Runtimes stay in the manifest: the CSV artifacts are byte-reproducible
    // from (config, seed) alone.
    if (!exists) out << "M,N,step,metric,value,std_error,sample_size\n";
    for (const auto& r : rows) {
        out << r.m << ',' << r.n_factor << ',' << r.step << ',' << r.metric << ','
            << format_double(r.value) << ',' << format_double(r.std_error) << ','
            << r.sample_size << '\n';
    }
}

void write_percentiles_csv(const std::string& path, const std::vector<PercentileRow>& rows) {
    std::ofstream out(path);
    if (!out) throw config_error("cannot write " + path);
    out << "step,mean,p1,p2.5,p97.5,p99\n";
    for (const auto& r : rows) {
        out << r.step << ',' << format_double(r.mean) << ',' << format_double(r.p1) << ','
            << format_double(r.p2_5) << ',' << format_double(r.p97_5) << ','
            << format_double(r.p99) << '\n';
    }
}

std::vector<PercentileRow> percentile_table(const TrainedModelSequence& models,
                                            const SimulationSet& validation) {
    std::vector<PercentileRow> rows;
    for (int i = 1; i <= models.n_steps; ++i) {
        FeatureMatrix f = features_at(i, validation.market, validation.defaults);
        Eigen::VectorXd pred = models.predict(i, to_eigen(f));
        std::vector<double> v(pred.data(), pred.data() + pred.size());
        std::sort(v.begin(), v.end());
        PercentileRow row;
        row.step = i;
        row.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        row.p1 = percentile_sorted(v, 0.01);
        row.p2_5 = percentile_sorted(v, 0.025);
        row.p97_5 = percentile_sorted(v, 0.975);
        row.p99 = percentile_sorted(v, 0.99);
        rows.push_back(row);
    }
    return rows;
}

void write_manifest(const std::string& path, const RunManifest& m) {
    nlohmann::json j;
    j["config_hash"] = m.config_hash;
    j["seed"] = m.seed;
    j["version"] = m.version;
    j["phase_seconds"] = m.phase_seconds;
    j["peak_memory_estimate_bytes"] = m.peak_memory_estimate_bytes;
    j["outputs"] = m.outputs;
    std::ofstream out(path);
    if (!out) throw config_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

RunManifest run(const PipelineConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.output_dir);
    const auto out_path = [&](const std::string& name) {
        return (fs::path(cfg.output_dir) / name).string();
    };

    RunManifest manifest;
    manifest.config_hash = config_hash(cfg);
    manifest.seed = cfg.seed;
    manifest.version = "hiercva 0.1.0";

    RandomStream root(cfg.seed);
    std::vector<SwapSpec> book = resolve_book(cfg);
    save_book_csv(out_path("book.csv"), book);
    manifest.outputs.push_back("book.csv");

    // Phase: simulation of the training set.
    auto t0 = Clock::now();
    SimulationSet train_set = simulate_set(cfg.model, cfg.grid, book, cfg.sim.paths,
                                           cfg.sim.replicas, root.split(stream_keys::kTrainSim));
    manifest.phase_seconds["simulate"] = seconds_since(t0);
    std::size_t mem = train_set.market.memory_bytes() + train_set.defaults.memory_bytes() +
                      train_set.cube.values.size() * sizeof(double);

    // Phase: backward training.
    t0 = Clock::now();
    std::vector<QrSample> qr_trace;
    LabelSource source = make_label_source(
        train_set, book, cfg.model, cfg.training.label_kind, cfg.training.collect_qr_trace,
        root.split(stream_keys::kTrainSim).split(2));
    TrainedModelSequence models =
        backward_learn(cfg.grid.n_steps, source, cfg.training.base,
                       cfg.training.collect_qr_trace ? &qr_trace : nullptr);
    models.config_hash = manifest.config_hash;
    manifest.phase_seconds["train"] = seconds_since(t0);
    // Transient per-step feature matrix dominates the training overhead.
    mem += static_cast<std::size_t>(cfg.sim.paths) * cfg.sim.replicas *
           (train_set.market.n_economies() * 3 + train_set.market.n_credit() * 2) * sizeof(double);

    models.save(out_path("models.bin"));
    manifest.outputs.push_back("models.bin");
    {
        std::ofstream rep(out_path("train_report.csv"));
        rep << "step,best_epoch,best_loss,epoch_losses\n";
        for (int i = 1; i <= models.n_steps; ++i) {
            const TrainReport& r = models.at(i).report;
            rep << i << ',' << r.best_epoch << ',' << format_double(r.best_loss) << ',';
            for (std::size_t e = 0; e < r.epoch_losses.size(); ++e)
                rep << (e ? ";" : "") << format_double(r.epoch_losses[e]);
            rep << '\n';
        }
        manifest.outputs.push_back("train_report.csv");
    }
    if (cfg.training.collect_qr_trace) {
        std::ofstream qr(out_path("qr_trace.csv"));
        qr << "step,epoch,Q,R\n";
        for (const auto& s : qr_trace)
            qr << s.step << ',' << s.epoch << ',' << format_double(s.q) << ','
               << format_double(s.r) << '\n';
        manifest.outputs.push_back("qr_trace.csv");
    }

    // Phase: out-of-sample validation (fresh seed branch).
    t0 = Clock::now();
    RandomStream vstream = root.split(stream_keys::kValidationSim);
    SimulationSet val_set =
        simulate_set(cfg.model, cfg.grid, book, cfg.validation.paths, 1, vstream);
    mem = std::max(mem, val_set.market.memory_bytes() + val_set.defaults.memory_bytes());

    write_percentiles_csv(out_path("percentiles.csv"), percentile_table(models, val_set));
    manifest.outputs.push_back("percentiles.csv");

    std::vector<ErrorRow> rows;
    if (cfg.validation.twin) {
        for (int step : cfg.validation_steps()) {
            auto tt = Clock::now();
            FeatureMatrix f = features_at(step, val_set.market, val_set.defaults);
            Eigen::VectorXd pred = models.predict(step, to_eigen(f));
            auto [t1, t2] = twin_labels(step, cfg.model, cfg.grid, book, val_set.market,
                                        val_set.defaults, vstream.split(2).split(step));
            std::vector<double> phi(pred.data(), pred.data() + pred.size());
            EstimateWithError l2 = twin_l2_error(phi, t1.values, t2.values, 1);
            const double elapsed = seconds_since(tt);
            rows.push_back({cfg.sim.paths, cfg.sim.replicas, step, "twin_l2", l2.value,
                            l2.std_error, phi.size(), elapsed});
            try {
                double rmse = twin_relative_rmse(phi, t1.values, t2.values);
                double rmse_se = twin_relative_rmse_std_error(phi, t1.values, t2.values, 1);
                rows.push_back({cfg.sim.paths, cfg.sim.replicas, step, "twin_relative_rmse",
                                rmse, rmse_se, phi.size(), elapsed});
            } catch (const numeric_error&) {
                // Degenerate normalization (no coincident defaults in the
                // validation sample): keep the raw L2 row, skip the ratio.
            }
        }
    }
    manifest.phase_seconds["validate"] = seconds_since(t0);

    // Phase: nested Monte Carlo benchmark.
    if (cfg.validation.nested) {
        t0 = Clock::now();
        const int inner = cfg.validation.inner_paths > 0
                              ? cfg.validation.inner_paths
                              : default_inner_count(cfg.sim.paths);
        std::ofstream nested_csv(out_path("nested.csv"));
        nested_csv << "step,state,nested_cva,nested_std_error,prediction\n";
        for (int step : cfg.validation_steps()) {
            auto tt = Clock::now();
            const int n_states = std::min(cfg.validation.nested_states, val_set.market.n_paths());
            FeatureMatrix f = features_at(step, val_set.market, val_set.defaults);
            Eigen::VectorXd pred_all = models.predict(step, to_eigen(f));
            std::vector<double> preds(n_states), benchmarks(n_states), ses(n_states);
            RandomStream nstream = vstream.split(3).split(step);
            parallel_for(n_states, [&](int s) {
                EstimateWithError est =
                    nested_cva(cfg.model, cfg.grid, book, val_set.market, val_set.defaults, s, 0,
                               step, inner, nstream.split(s));
                benchmarks[s] = est.value;
                ses[s] = est.std_error;
                preds[s] = pred_all(s);
            });
            for (int s = 0; s < n_states; ++s)
                nested_csv << step << ',' << s << ',' << format_double(benchmarks[s]) << ','
                           << format_double(ses[s]) << ',' << format_double(preds[s]) << '\n';
            NestedRmse nr = nested_relative_rmse(preds, benchmarks);
            rows.push_back({cfg.sim.paths, cfg.sim.replicas, step, "nested_relative_rmse",
                            nr.value, nr.std_error, nr.used, seconds_since(tt)});
        }
        manifest.outputs.push_back("nested.csv");
        manifest.phase_seconds["benchmark"] = seconds_since(t0);
    }

    append_error_csv(out_path("error_report.csv"), rows);
    manifest.outputs.push_back("error_report.csv");

    manifest.peak_memory_estimate_bytes = mem;
    write_manifest(out_path("manifest.json"), manifest);
    return manifest;
}

std::vector<MatrixRow> run_matrix(PipelineConfig cfg, const std::vector<int>& m_list,
                                  const std::vector<int>& n_list, const std::string& csv_path) {
    if (m_list.empty() || n_list.empty())
        throw config_error("matrix: M and N lists must be non-empty");
    std::vector<MatrixRow> rows;
    for (int m : m_list) {
        for (int n : n_list) {
            MatrixRow row;
            row.m = m;
            row.n_factor = n;
            try {
                PipelineConfig cell = cfg;
                cell.sim.paths = m;
                cell.sim.replicas = n;
                cell.output_dir =
                    (fs::path(cfg.output_dir) / ("cell_M" + std::to_string(m) + "_N" +
                                                 std::to_string(n))).string();
                RunManifest manifest = run(cell);
                row.sim_seconds = manifest.phase_seconds.at("simulate");
                row.train_seconds = manifest.phase_seconds.at("train");
                // Pull the mid-step metrics back out of the error report.
                std::ifstream err((fs::path(cell.output_dir) / "error_report.csv").string());
                std::string line;
                std::getline(err, line);  // header
                double twin = 0.0, nested = 0.0;
                int twin_count = 0, nested_count = 0;
                while (std::getline(err, line)) {
                    std::stringstream ss(line);
                    std::string fields[8];
                    for (auto& fd : fields) std::getline(ss, fd, ',');
                    if (fields[3] == "twin_relative_rmse") {
                        twin += std::stod(fields[4]);
                        ++twin_count;
                    } else if (fields[3] == "nested_relative_rmse") {
                        nested += std::stod(fields[4]);
                        ++nested_count;
                    }
                }
                row.twin_rmse = twin_count ? twin / twin_count : 0.0;
                row.nested_rmse = nested_count ? nested / nested_count : 0.0;
            } catch (const std::exception& e) {
                row.status = std::string("failed: ") + e.what();
            }
            rows.push_back(row);
        }
    }
    std::ofstream out(csv_path);
    if (!out) throw config_error("cannot write " + csv_path);
    out << "M,N,twin_relative_rmse,nested_relative_rmse,sim_seconds,train_seconds,status\n";
    for (const auto& r : rows)
        out << r.m << ',' << r.n_factor << ',' << format_double(r.twin_rmse) << ','
            << format_double(r.nested_rmse) << ',' << format_double(r.sim_seconds) << ','
            << format_double(r.train_seconds) << ',' << r.status << '\n';
    return rows;
}

// ---- market block binary dump -----------------------------------------------

namespace {
constexpr char kMarketMagic[8] = {'H', 'C', 'V', 'A', 'M', 'K', 'T', '1'};

template <typename T>
void wpod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T rpod(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw numeric_error("market dump truncated");
    return v;
}
}  // namespace

void save_market(const std::string& path, const MarketBlock& block, const TimeGrid& grid,
                 std::uint64_t seed) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot write " + path);
    out.write(kMarketMagic, sizeof(kMarketMagic));
    wpod<std::uint32_t>(out, 1u);
    wpod<std::uint64_t>(out, seed);
    wpod<std::int32_t>(out, block.n_paths());
    wpod<std::int32_t>(out, block.n_steps());
    wpod<std::int32_t>(out, block.n_economies());
    wpod<std::int32_t>(out, block.n_credit());
    wpod<std::int32_t>(out, block.start_step());
    wpod<double>(out, block.dt());
    wpod<std::int32_t>(out, grid.substeps);
    for (int k = 0; k < block.n_paths(); ++k) {
        for (int i = 0; i <= block.n_steps(); ++i) {
            for (int e = 0; e < block.n_economies(); ++e) wpod(out, block.rate(k, i, e));
            for (int e = 1; e < block.n_economies(); ++e) wpod(out, block.fx(k, i, e));
            for (int c = 0; c < block.n_credit(); ++c) wpod(out, block.intensity(k, i, c));
            for (int e = 0; e < block.n_economies(); ++e) wpod(out, block.lagged_rate(k, i, e));
            wpod(out, block.discount(k, i));
            for (int c = 0; c < block.n_credit(); ++c) wpod(out, block.hazard(k, i, c));
        }
    }
}

MarketBlock load_market(const std::string& path, TimeGrid* grid_out, std::uint64_t* seed_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMarketMagic, sizeof(kMarketMagic)) != 0)
        throw config_error("not a market dump: " + path);
    if (rpod<std::uint32_t>(in) != 1u) throw config_error("unsupported market dump version");
    const auto seed = rpod<std::uint64_t>(in);
    const auto paths = rpod<std::int32_t>(in);
    const auto steps = rpod<std::int32_t>(in);
    const auto econ = rpod<std::int32_t>(in);
    const auto credit = rpod<std::int32_t>(in);
    const auto start = rpod<std::int32_t>(in);
    const auto dt = rpod<double>(in);
    const auto substeps = rpod<std::int32_t>(in);
    if (seed_out) *seed_out = seed;
    if (grid_out) *grid_out = TimeGrid{steps, substeps, dt};
    MarketBlock block(paths, steps, econ, credit, dt, start);
    for (int k = 0; k < paths; ++k) {
        for (int i = 0; i <= steps; ++i) {
            for (int e = 0; e < econ; ++e) block.rate(k, i, e) = rpod<double>(in);
            for (int e = 1; e < econ; ++e) block.fx_raw(k, i, e - 1) = rpod<double>(in);
            for (int c = 0; c < credit; ++c) block.intensity(k, i, c) = rpod<double>(in);
            for (int e = 0; e < econ; ++e) block.lagged_rate(k, i, e) = rpod<double>(in);
            block.discount(k, i) = rpod<double>(in);
            for (int c = 0; c < credit; ++c) block.hazard(k, i, c) = rpod<double>(in);
        }
    }
    return block;
}

}  // namespace hiercva
