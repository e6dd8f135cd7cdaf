#include "hiercva/validation.hpp"

#include <algorithm>
#include <cmath>

#include "hiercva/errors.hpp"

namespace hiercva {

namespace {

void check_triplet(const std::vector<double>& a, const std::vector<double>& b,
                   const std::vector<double>& c) {
    if (a.size() != b.size() || a.size() != c.size() || a.empty())
        throw contract_error("twin estimator: size mismatch or empty input");
}

// Cluster-robust std error of the mean of v, blocks of `block` consecutive
// entries (block == 1 reduces to the iid formula).
double clustered_std_error(const std::vector<double>& v, int block) {
    const std::size_t n = v.size();
    if (block <= 1 || n % static_cast<std::size_t>(block) != 0) block = 1;
    const std::size_t nb = n / block;
    if (nb < 2) return 0.0;
    double grand = 0.0;
    for (double x : v) grand += x;
    grand /= static_cast<double>(n);
    double s = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
        double bm = 0.0;
        for (int j = 0; j < block; ++j) bm += v[b * block + j];
        bm /= static_cast<double>(block);
        s += (bm - grand) * (bm - grand);
    }
    s /= static_cast<double>(nb - 1);
    return std::sqrt(s / static_cast<double>(nb));
}

}  // namespace

EstimateWithError twin_l2_error(const std::vector<double>& predictions,
                                const std::vector<double>& twin1,
                                const std::vector<double>& twin2, int paths_per_block) {
    check_triplet(predictions, twin1, twin2);
    std::vector<double> terms(predictions.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < predictions.size(); ++j) {
        const double phi = predictions[j];
        terms[j] = phi * phi - (twin1[j] + twin2[j]) * phi + twin1[j] * twin2[j];
        sum += terms[j];
    }
    EstimateWithError out;
    out.value = sum / static_cast<double>(terms.size());
    out.std_error = clustered_std_error(terms, paths_per_block);
    return out;
}

double twin_relative_rmse(const std::vector<double>& predictions,
                          const std::vector<double>& twin1, const std::vector<double>& twin2) {
    check_triplet(predictions, twin1, twin2);
    double denom = 0.0;
    for (std::size_t j = 0; j < twin1.size(); ++j) denom += twin1[j] * twin2[j];
    denom /= static_cast<double>(twin1.size());
    if (denom <= 0.0)
        throw numeric_error("twin_relative_rmse: E[xi1 xi2] <= 0 (degenerate portfolio)");
    const double l2 = twin_l2_error(predictions, twin1, twin2).value;
    return std::sqrt(std::max(l2, 0.0) / denom);
}

double twin_relative_rmse_std_error(const std::vector<double>& predictions,
                                    const std::vector<double>& twin1,
                                    const std::vector<double>& twin2, int paths_per_block) {
    // Delta method on rho = sqrt(A/B) with A = mean twin terms, B = mean
    // product terms; Var(rho) ~ (1/4) rho^2 (VarA/A^2 + VarB/B^2 - 2Cov/AB).
    check_triplet(predictions, twin1, twin2);
    const std::size_t n = predictions.size();
    std::vector<double> at(n), bt(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double phi = predictions[j];
        at[j] = phi * phi - (twin1[j] + twin2[j]) * phi + twin1[j] * twin2[j];
        bt[j] = twin1[j] * twin2[j];
    }
    double ma = 0.0, mb = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        ma += at[j];
        mb += bt[j];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    if (ma <= 0.0 || mb <= 0.0) return 0.0;

    // Cluster the covariance pieces over outer-path blocks.
    int block = paths_per_block;
    if (block <= 1 || n % static_cast<std::size_t>(block) != 0) block = 1;
    const std::size_t nb = n / block;
    if (nb < 2) return 0.0;
    double va = 0.0, vb = 0.0, cab = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
        double bma = 0.0, bmb = 0.0;
        for (int j = 0; j < block; ++j) {
            bma += at[b * block + j];
            bmb += bt[b * block + j];
        }
        bma /= static_cast<double>(block);
        bmb /= static_cast<double>(block);
        va += (bma - ma) * (bma - ma);
        vb += (bmb - mb) * (bmb - mb);
        cab += (bma - ma) * (bmb - mb);
    }
    const double nbm1 = static_cast<double>(nb - 1) * static_cast<double>(nb);
    va /= nbm1;
    vb /= nbm1;
    cab /= nbm1;
    const double rho = std::sqrt(ma / mb);
    const double rel = va / (ma * ma) + vb / (mb * mb) - 2.0 * cab / (ma * mb);
    return 0.5 * rho * std::sqrt(std::max(rel, 0.0));
}

int default_inner_count(int n_outer_paths) {
    return std::max(1, static_cast<int>(std::llround(std::sqrt(static_cast<double>(n_outer_paths)))));
}

EstimateWithError nested_cva(const ModelParams& params, const TimeGrid& grid,
                             const std::vector<SwapSpec>& book, const MarketState& state,
                             const std::vector<bool>& client_survived_i, int step, int inner_count,
                             const RandomStream& stream) {
    if (inner_count < 1) throw contract_error("nested_cva: inner_count must be >= 1");
    const int n = grid.n_steps;
    const int horizon = n - step;
    const int n_clients = params.n_clients();
    if (static_cast<int>(client_survived_i.size()) != n_clients)
        throw contract_error("nested_cva: survivor vector must have one entry per client");

    EstimateWithError out;
    bool any_survivor = false;
    for (bool s : client_survived_i) any_survivor = any_survivor || s;
    if (!any_survivor || horizon == 0) return out;  // exactly zero

    MarketBlock inner =
        simulate_conditional_market(params, grid, state, step, horizon, inner_count, stream);
    MtMCube cube = build_mtm_cube(inner, book, params);
    const double dt = grid.dt;

    double sum = 0.0, sum_sq = 0.0;
    for (int l = 0; l < inner_count; ++l) {
        double payoff = 0.0;
        for (int c = 1; c <= n_clients; ++c) {
            if (!client_survived_i[c - 1]) continue;
            double gamma_sum = 0.0;
            for (int j = 0; j <= horizon - 1; ++j) {
                // Local step j is global step + j; discounts are rebased to i.
                const double exposure = std::max(cube.at(l, j, c), 0.0);
                const double gamma_j = inner.intensity(l, j, c);
                payoff += inner.discount(l, j) * exposure * gamma_j * dt * std::exp(-gamma_sum);
                gamma_sum += gamma_j * dt;
            }
        }
        sum += payoff;
        sum_sq += payoff * payoff;
    }
    const double m = sum / inner_count;
    out.value = m;
    if (inner_count > 1) {
        const double var = (sum_sq - inner_count * m * m) / (inner_count - 1);
        out.std_error = std::sqrt(std::max(var, 0.0) / inner_count);
    }
    return out;
}

EstimateWithError nested_cva(const ModelParams& params, const TimeGrid& grid,
                             const std::vector<SwapSpec>& book, const MarketBlock& market,
                             const DefaultBlock& defaults, int k, int l, int step, int inner_count,
                             const RandomStream& stream) {
    std::vector<bool> survived(params.n_clients());
    for (int c = 1; c <= params.n_clients(); ++c)
        survived[c - 1] = defaults.default_step(k, l, c) > step;
    return nested_cva(params, grid, book, market.state_at(k, step), survived, step, inner_count,
                      stream);
}

NestedRmse nested_relative_rmse(const std::vector<double>& predictions,
                                const std::vector<double>& nested) {
    if (predictions.size() != nested.size() || predictions.empty())
        throw contract_error("nested_relative_rmse: size mismatch or empty input");
    NestedRmse out;
    std::vector<double> sq;
    sq.reserve(nested.size());
    for (std::size_t j = 0; j < nested.size(); ++j) {
        if (nested[j] == 0.0) {
            ++out.excluded_zero;
            continue;
        }
        const double rel = (predictions[j] - nested[j]) / nested[j];
        sq.push_back(rel * rel);
    }
    if (sq.empty()) throw numeric_error("nested_relative_rmse: all benchmarks are zero");
    out.used = sq.size();
    double m = 0.0;
    for (double x : sq) m += x;
    m /= static_cast<double>(sq.size());
    out.value = std::sqrt(m);
    if (sq.size() > 1 && m > 0.0) {
        double var = 0.0;
        for (double x : sq) var += (x - m) * (x - m);
        var /= static_cast<double>(sq.size() - 1);
        // Delta method: sd( sqrt(mean) ) = sd(mean) / (2 sqrt(mean)).
        out.std_error = std::sqrt(var / static_cast<double>(sq.size())) / (2.0 * out.value);
    }
    return out;
}

}  // namespace hiercva
