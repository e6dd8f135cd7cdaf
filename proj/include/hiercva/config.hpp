#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hiercva/ard.hpp"
#include "hiercva/market.hpp"
#include "hiercva/planner.hpp"
#include "hiercva/portfolio.hpp"
#include "hiercva/regressor.hpp"

namespace hiercva {

struct BookSpec {
    bool from_file = false;
    std::string file;     // CSV path when from_file
    BookGenSpec gen;      // seeded generator otherwise
};

struct SimulationSpec {
    int paths = 256;    // M
    int replicas = 1;   // N
};

struct TrainingSpec {
    TrainConfig base;
    std::string label_kind = "defaults";  // or "intensity"
    bool collect_qr_trace = false;
};

struct ValidationSpec {
    bool twin = true;
    bool nested = false;
    int inner_paths = 0;        // 0 = square-root rule
    std::vector<int> steps;     // empty = a default mid-grid selection
    int paths = 512;            // out-of-sample M
    int nested_states = 128;    // outer states per validated step
};

struct PlannerSpec {
    double budget = 0.0;
    bool has_bounds = false;
    BoundParams bounds;
};

struct ArdSpec {
    int dgp_draws = 60;
    int paths_per_draw = 128;
    int subsamples = 10;
    double fraction = 0.8;
    int restarts = 8;
    bool aggregate_families = true;
    ArdPrior prior;
};

struct PipelineConfig {
    ModelParams model;
    TimeGrid grid;
    BookSpec book;
    SimulationSpec sim;
    TrainingSpec training;
    ValidationSpec validation;
    PlannerSpec planner;
    ArdSpec ard;
    std::uint64_t seed = 0;
    std::string output_dir = "out";

    void validate() const;
    // Steps to validate; defaults to quartile steps when unspecified.
    std::vector<int> validation_steps() const;
};

PipelineConfig load_config(const std::string& path);
PipelineConfig parse_config(const std::string& json_text);
std::string dump_config(const PipelineConfig& cfg);  // canonical JSON

// FNV-1a over the canonical serialization.
std::string config_hash(const PipelineConfig& cfg);

}  // namespace hiercva
