#pragma once

#include <utility>
#include <vector>

#include "hiercva/defaults.hpp"
#include "hiercva/labels.hpp"
#include "hiercva/market.hpp"
#include "hiercva/portfolio.hpp"
#include "hiercva/rng.hpp"

namespace hiercva {

struct EstimateWithError {
    double value = 0.0;
    double std_error = 0.0;
};

// Twin identity estimator of E[(phi - E[xi|X,Y])^2]:
// sample mean of phi^2 - (xi1 + xi2) phi + xi1 xi2. May be slightly negative
// by MC noise; reported raw. When `paths_per_block` > 1 the standard error is
// cluster-robust over outer paths (replicas of one path share its market
// continuation state).
EstimateWithError twin_l2_error(const std::vector<double>& predictions,
                                const std::vector<double>& twin1,
                                const std::vector<double>& twin2,
                                int paths_per_block = 1);

// sqrt(max(twin_l2, 0) / mean(xi1 xi2)); the denominator is the product-
// identity estimate of E[(E[xi|X,Y])^2].
double twin_relative_rmse(const std::vector<double>& predictions,
                          const std::vector<double>& twin1, const std::vector<double>& twin2);

// Nested Monte Carlo CVA at one outer state: inner market continuations from
// the frozen Y-state, intensity-form payoff restricted to the clients that
// survived to step i (no inner default simulation needed). Discounted to
// time i.
EstimateWithError nested_cva(const ModelParams& params, const TimeGrid& grid,
                             const std::vector<SwapSpec>& book, const MarketState& state,
                             const std::vector<bool>& client_survived_i, int step, int inner_count,
                             const RandomStream& stream);

// Convenience: nested CVA for outer path k of a simulated block/replica.
EstimateWithError nested_cva(const ModelParams& params, const TimeGrid& grid,
                             const std::vector<SwapSpec>& book, const MarketBlock& market,
                             const DefaultBlock& defaults, int k, int l, int step, int inner_count,
                             const RandomStream& stream);

// sqrt(mean over nonzero benchmarks of ((pred - nested)/nested)^2), the
// count of excluded zero-benchmark samples, and a delta-method std error of
// the RMSE.
struct NestedRmse {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t excluded_zero = 0;
    std::size_t used = 0;
};
NestedRmse nested_relative_rmse(const std::vector<double>& predictions,
                                const std::vector<double>& nested);

// Delta-method std error for the twin relative RMSE (used when comparing the
// two error metrics at matched scales).
double twin_relative_rmse_std_error(const std::vector<double>& predictions,
                                    const std::vector<double>& twin1,
                                    const std::vector<double>& twin2, int paths_per_block = 1);

// Default inner count: the square-root rule.
int default_inner_count(int n_outer_paths);

}  // namespace hiercva
