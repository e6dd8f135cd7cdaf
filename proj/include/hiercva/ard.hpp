#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "hiercva/market.hpp"
#include "hiercva/portfolio.hpp"
#include "hiercva/rng.hpp"

namespace hiercva {

// Time-averaged per-component variances under one draw of the DGP
// parameters: (1/(n+1)) sum_i Var_paths(.) at each pricing step.
struct VarianceSample {
    std::vector<double> v_x;  // one per client (default indicators)
    std::vector<double> v_y;  // rates, cross FX, client intensities
    double v_xi = 0.0;        // defaults-based cumulative-loss labels
};

// Instrumental distribution over the DGP parameters: independent uniform
// multiplicative boxes around the baseline (correlations held fixed).
struct ArdPrior {
    double vol_lo = 0.5, vol_hi = 1.5;      // sigma_r, sigma_chi, nu
    double level_lo = 0.5, level_hi = 2.0;  // b, delta, gamma0
    double speed_lo = 0.5, speed_hi = 1.5;  // a, alpha
};

// Simulate paths_per_dgp paths for each of n_dgp prior draws and measure the
// variance triple. Draws that break the model invariants are rejected and
// redrawn (count reported through *rejected).
std::vector<VarianceSample> sample_variances(const ModelParams& base, const TimeGrid& grid,
                                             const std::vector<SwapSpec>& book,
                                             const ArdPrior& prior, int n_dgp, int paths_per_dgp,
                                             const RandomStream& stream, int* rejected = nullptr);

// Regression table for the GP: inputs are the V(X|nu) components followed by
// the V(Y|nu) components (optionally aggregated into rate/FX/intensity
// families), output is V(xi|nu).
struct ArdDataset {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    std::vector<std::string> names;
};
ArdDataset make_ard_dataset(const std::vector<VarianceSample>& samples, bool aggregate_families,
                            int n_economies, int n_clients);

struct ArdResult {
    std::vector<double> length_scales;          // original input units
    std::vector<double> inverse_length_scales;  // 1/length_scales
    // Relevance per unit input standard deviation; the scale on which
    // dimensions are comparable (the box-plot quantity).
    std::vector<double> std_inverse_length_scales;
    double signal_scale = 0.0;
    double noise_scale = 0.0;
    double log_marginal = 0.0;
    std::vector<double> restart_init_logml;  // evidence at each restart's start
};

// Anisotropic squared-exponential GP, evidence maximized over log
// length-scales and signal/noise scales by multi-restart gradient ascent.
ArdResult fit_ard(const ArdDataset& data, int restarts, const RandomStream& stream);

// Independent fits on random sub-samples (without replacement); the rows of
// the returned vector feed the box plots.
std::vector<ArdResult> randomized_ard(const ArdDataset& data, int n_subsamples, double fraction,
                                      int restarts, const RandomStream& stream);

}  // namespace hiercva
