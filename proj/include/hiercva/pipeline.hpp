#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hiercva/config.hpp"
#include "hiercva/defaults.hpp"
#include "hiercva/labels.hpp"
#include "hiercva/market.hpp"
#include "hiercva/portfolio.hpp"
#include "hiercva/regressor.hpp"
#include "hiercva/validation.hpp"

namespace hiercva {

// One simulated training or validation set.
struct SimulationSet {
    MarketBlock market;
    DefaultBlock defaults;
    MtMCube cube;
};

// Stream lineage keys of the pipeline phases (children of the root seed).
namespace stream_keys {
inline constexpr std::uint64_t kBook = 0;
inline constexpr std::uint64_t kTrainSim = 1;
inline constexpr std::uint64_t kValidationSim = 2;
inline constexpr std::uint64_t kArd = 3;
}  // namespace stream_keys

std::vector<SwapSpec> resolve_book(const PipelineConfig& cfg);

SimulationSet simulate_set(const ModelParams& params, const TimeGrid& grid,
                           const std::vector<SwapSpec>& book, int n_paths, int n_replicas,
                           const RandomStream& stream);

// Label source over a simulation set for backward learning; generates
// features/labels per step on the fly. When with_qr_probe is set, two extra
// default replicas per path feed the Q/R trace.
LabelSource make_label_source(const SimulationSet& sim, const std::vector<SwapSpec>& book,
                              const ModelParams& params, const std::string& label_kind,
                              bool with_qr_probe, const RandomStream& probe_stream);

// One row of the error-report CSV, keyed by (M, N, step, metric).
struct ErrorRow {
    int m = 0;
    int n_factor = 0;
    int step = 0;
    std::string metric;
    double value = 0.0;
    double std_error = 0.0;
    std::size_t sample_size = 0;
    double runtime_seconds = 0.0;
};
void append_error_csv(const std::string& path, const std::vector<ErrorRow>& rows);

struct PercentileRow {
    int step = 0;
    double mean = 0.0, p1 = 0.0, p2_5 = 0.0, p97_5 = 0.0, p99 = 0.0;
};
void write_percentiles_csv(const std::string& path, const std::vector<PercentileRow>& rows);

// Out-of-sample percentile bands of the learned CVA across pricing steps.
std::vector<PercentileRow> percentile_table(const TrainedModelSequence& models,
                                            const SimulationSet& validation);

struct RunManifest {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string version;
    std::map<std::string, double> phase_seconds;
    std::size_t peak_memory_estimate_bytes = 0;
    std::vector<std::string> outputs;
};
void write_manifest(const std::string& path, const RunManifest& manifest);

// Full pipeline: simulate -> train -> validate (-> nested benchmark),
// writing every artifact under cfg.output_dir.
RunManifest run(const PipelineConfig& cfg);

// One row per (M, N) cell: twin/nested RMSE and phase timings. Cell
// failures are recorded in the status column and the sweep continues.
struct MatrixRow {
    int m = 0;
    int n_factor = 0;
    double twin_rmse = 0.0;
    double nested_rmse = 0.0;
    double sim_seconds = 0.0;
    double train_seconds = 0.0;
    std::string status = "ok";
};
std::vector<MatrixRow> run_matrix(PipelineConfig cfg, const std::vector<int>& m_list,
                                  const std::vector<int>& n_list, const std::string& csv_path);

// Versioned binary dump of a market block for reuse across runs.
void save_market(const std::string& path, const MarketBlock& block, const TimeGrid& grid,
                 std::uint64_t seed);
MarketBlock load_market(const std::string& path, TimeGrid* grid_out = nullptr,
                        std::uint64_t* seed_out = nullptr);

std::string format_double(double v);  // shortest round-trip decimal, locale-free

}  // namespace hiercva
