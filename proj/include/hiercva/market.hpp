#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hiercva/rng.hpp"

namespace hiercva {

struct VasicekParams {
    double a = 0.0;      // mean-reversion speed /yr
    double b = 0.0;      // long-run rate
    double sigma = 0.0;  // vol /sqrt(yr)
    double r0 = 0.0;
};

struct FxParams {
    double sigma = 0.0;  // log-FX vol
    double rho = 0.0;    // corr(B_r, B_chi) of the same economy
    double chi0 = 1.0;   // initial exchange rate to the reference currency
};

struct CirParams {
    double alpha = 0.0;
    double delta = 0.0;   // long-run level
    double nu = 0.0;      // vol of sqrt diffusion
    double gamma0 = 0.0;  // initial intensity, >= 0
};

// Hybrid multi-economy short-rate / FX / default-intensity model.
// Economy 0 is the reference currency; credit name 0 is the bank itself
// (simulated but never a CVA loss contributor), names 1..n_clients are the
// clients.
struct ModelParams {
    std::vector<VasicekParams> rates;  // size E, economy 0 first
    std::vector<FxParams> fx;          // size E-1, for economies 1..E-1
    std::vector<CirParams> credit;     // size n_clients+1, index 0 = bank
    // Optional full correlation matrix over all driving Brownians, row-major,
    // factor order [r_0..r_{E-1}, chi_1..chi_{E-1}, gamma_0..gamma_C].
    // Empty means block-diagonal: identity plus the per-economy (r, chi)
    // entries rho.
    std::vector<double> brownian_correlation;

    int n_economies() const { return static_cast<int>(rates.size()); }
    int n_clients() const { return static_cast<int>(credit.size()) - 1; }
    // Driving Brownians, bank spread included.
    int n_factors() const { return n_economies() * 2 - 1 + n_clients() + 1; }
    // Diffusive market risk factors as exposed to the regression:
    // rates + cross FX + client intensities (bank spread excluded).
    int n_market_factors() const { return n_economies() * 2 - 1 + n_clients(); }

    void validate() const;  // throws config_error
    // Effective correlation matrix (n_factors x n_factors, row-major).
    std::vector<double> correlation_matrix() const;
};

struct TimeGrid {
    int n_steps = 0;    // pricing steps
    int substeps = 1;   // fine simulation substeps per pricing step
    double dt = 1.0;    // pricing step length in years

    double fine_dt() const { return dt / substeps; }
    double time_of(int step) const { return step * dt; }
    void validate() const;
};

// Full Markov state of the diffusive component at one pricing step.
struct MarketState {
    std::vector<double> rates;         // size E
    std::vector<double> log_fx;        // size E-1
    std::vector<double> intensities;   // size C+1 (bank first)
    std::vector<double> lagged_rates;  // size E, short rates at the previous reset
};

// M paths of the diffusive factors stored at pricing steps only.
// Discount factors and cumulative hazards are accumulated on the fine grid;
// for blocks restarted at step `start_step` they are rebased so that
// discount(k,0) = 1 and hazard(k,0,c) = 0.
class MarketBlock {
public:
    MarketBlock(int n_paths, int n_steps, int n_economies, int n_credit,
                double dt, int start_step = 0);

    int n_paths() const { return n_paths_; }
    int n_steps() const { return n_steps_; }  // stored local steps 0..n_steps
    int n_economies() const { return n_economies_; }
    int n_credit() const { return n_credit_; }  // bank + clients
    double dt() const { return dt_; }
    int start_step() const { return start_step_; }

    double rate(int k, int i, int e) const { return rates_[idx_e(k, i, e)]; }
    double fx(int k, int i, int e) const;  // chi of economy e (chi_0 == 1)
    double intensity(int k, int i, int c) const { return intensities_[idx_c(k, i, c)]; }
    double lagged_rate(int k, int i, int e) const { return lagged_[idx_e(k, i, e)]; }
    double discount(int k, int i) const { return discounts_[k * (n_steps_ + 1) + i]; }
    double hazard(int k, int i, int c) const { return hazards_[idx_c(k, i, c)]; }

    double& rate(int k, int i, int e) { return rates_[idx_e(k, i, e)]; }
    double& fx_raw(int k, int i, int e1) { return fx_[(static_cast<std::size_t>(k) * (n_steps_ + 1) + i) * (n_economies_ - 1) + e1]; }
    double& intensity(int k, int i, int c) { return intensities_[idx_c(k, i, c)]; }
    double& lagged_rate(int k, int i, int e) { return lagged_[idx_e(k, i, e)]; }
    double& discount(int k, int i) { return discounts_[k * (n_steps_ + 1) + i]; }
    double& hazard(int k, int i, int c) { return hazards_[idx_c(k, i, c)]; }

    // Cumulative hazard path of one credit name on one path.
    std::vector<double> hazard_path(int k, int c) const;
    MarketState state_at(int k, int i) const;

    std::size_t memory_bytes() const;

private:
    std::size_t idx_e(int k, int i, int e) const {
        return (static_cast<std::size_t>(k) * (n_steps_ + 1) + i) * n_economies_ + e;
    }
    std::size_t idx_c(int k, int i, int c) const {
        return (static_cast<std::size_t>(k) * (n_steps_ + 1) + i) * n_credit_ + c;
    }

    int n_paths_, n_steps_, n_economies_, n_credit_, start_step_;
    double dt_;
    std::vector<double> rates_, fx_, intensities_, lagged_, discounts_, hazards_;
};

// --- elementary Euler steps -------------------------------------------------

// Vasicek under the reference measure: r + (a(b-r) - quanto_adjust) dt
// + sigma sqrt(dt) z. Economy 0 has quanto_adjust = 0; economy e>0 uses
// rho_e * sigma_chi_e * sigma_r_e.
double step_vasicek(double r, double dt, double a, double b, double sigma,
                    double quanto_adjust, double z);

// log chi + (r0 - re - sigma^2/2) dt + sigma sqrt(dt) z.
double step_log_fx(double log_chi, double r0, double re, double dt, double sigma, double z);

// Full-truncation Euler for CIR; never negative.
double step_cir(double gamma, double dt, double alpha, double delta, double nu, double z);

// --- path simulation ---------------------------------------------------------

// M i.i.d. paths; path k draws from stream.split(k). Correlated Gaussian
// increments via the Cholesky factor of the Brownian correlation matrix,
// discounts and hazards accumulated with left-endpoint sums on the fine grid.
MarketBlock simulate_market(const ModelParams& params, const TimeGrid& grid, int n_paths,
                            const RandomStream& stream);

// n_inner conditional continuations restarted from `state` at pricing step
// `start_step`, covering `horizon` further pricing steps. Discounts are
// rebased to 1 and hazards to 0 at the restart. Inner path l draws from
// stream.split(l).
MarketBlock simulate_conditional_market(const ModelParams& params, const TimeGrid& grid,
                                        const MarketState& state, int start_step, int horizon,
                                        int n_inner, const RandomStream& stream);

// Lower-triangular Cholesky factor of a PSD matrix (row-major, n x n);
// throws config_error naming the offending leading minor otherwise.
std::vector<double> cholesky_lower(const std::vector<double>& matrix, int n,
                                   const std::string& what);

}  // namespace hiercva
