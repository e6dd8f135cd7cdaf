#pragma once

#include <utility>
#include <vector>

#include "hiercva/defaults.hpp"
#include "hiercva/market.hpp"
#include "hiercva/portfolio.hpp"
#include "hiercva/rng.hpp"

namespace hiercva {

// Regression labels at one pricing step, one value per replica (k,l),
// expressed in time-i units (beta_i^{-1} beta_j discounting).
struct LabelSet {
    int step = 0;
    int n_paths = 0;
    int n_replicas = 0;
    std::vector<double> values;  // [k*N + l]

    double at(int k, int l) const { return values[static_cast<std::size_t>(k) * n_replicas + l]; }
    double& at(int k, int l) { return values[static_cast<std::size_t>(k) * n_replicas + l]; }
};

// Regression inputs at one pricing step: client default indicators (p
// columns, {0,1}) followed by the diffusive state (rates, FX, client
// intensities, lagged reset rates).
struct FeatureMatrix {
    int rows = 0;
    int p = 0;  // indicator columns
    int q = 0;  // diffusive columns
    std::vector<double> values;  // row-major, rows x (p+q)

    int cols() const { return p + q; }
    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * (p + q) + c]; }
};

// Discounted loss on realized defaults:
//   xi[k][l] = sum_c sum_{j=i}^{n-1} beta_i^{-1} beta_{j+1} (MtM^c_{j+1})^+ 1{j < tau_c <= j+1}.
// The bank (name 0) never contributes. i == n yields all zeros.
LabelSet defaults_label(int i, const MarketBlock& market, const DefaultBlock& defaults,
                        const MtMCube& cube);

// Survival-weighted intensity form (same continuous-time limit):
//   xi~[k][l] = sum_c 1{i < tau_c} sum_{j=i}^{n-1} beta_i^{-1} beta_j (MtM^c_j)^+
//               gamma^c_j dt exp(-sum_{s=i}^{j-1} gamma^c_s dt).
LabelSet intensity_label(int i, const MarketBlock& market, const DefaultBlock& defaults,
                         const MtMCube& cube);

// Two copies of the defaults-based label that are conditionally independent
// given (X_i, Y_i): each twin gets its own market continuation on (i, n]
// (the Markov restart of Y) and its own default continuation for the
// surviving clients; names already defaulted at i stay defaulted and
// contribute nothing after i.
std::pair<LabelSet, LabelSet> twin_labels(int i, const ModelParams& params, const TimeGrid& grid,
                                          const std::vector<SwapSpec>& book,
                                          const MarketBlock& market, const DefaultBlock& defaults,
                                          const RandomStream& stream);

// Feature rows for all replicas (k,l) at step i.
FeatureMatrix features_at(int i, const MarketBlock& market, const DefaultBlock& defaults);

}  // namespace hiercva
