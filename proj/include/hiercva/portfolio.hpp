#pragma once

#include <string>
#include <vector>

#include "hiercva/market.hpp"
#include "hiercva/rng.hpp"

namespace hiercva {

// One payer swap: pays fixed delta*Sigma, receives floating 1/ZC_{t-}(t) - 1
// at every reset, spot starting with resets every `tenor` years up to
// `maturity`. Prices are per unit notional in the swap's own currency.
struct SwapSpec {
    int economy = 0;
    int client = 1;          // 1..n_clients
    double notional = 1.0;
    double tenor = 1.0;      // reset spacing delta, years
    double maturity = 1.0;   // last reset, multiple of tenor
    double fixed_rate = 0.0; // Sigma

    void validate(int n_economies, int n_clients) const;
};

// Pathwise mark-to-market per client in reference-currency units.
struct MtMCube {
    int n_paths = 0;
    int n_steps = 0;   // local steps 0..n_steps
    int n_clients = 0;
    std::vector<double> values;  // [k][i][c-1]

    double at(int k, int i, int client) const {
        return values[(static_cast<std::size_t>(k) * (n_steps + 1) + i) * n_clients + (client - 1)];
    }
    double& at(int k, int i, int client) {
        return values[(static_cast<std::size_t>(k) * (n_steps + 1) + i) * n_clients + (client - 1)];
    }
};

// Vasicek zero-coupon bond price exp(-A(tau) - B(tau) r); a = 0 handled by
// the analytic limit.
double zc_price(double r, double tau, const VasicekParams& p);

// Par rate off the economy's initial curve: swap_price(0, .) == 0.
double par_rate(double maturity, double tenor, const VasicekParams& p);

// Appendix-style three-branch swap price at time t given the current short
// rate and the short rate at the reset date immediately preceding t.
// `r_lagged` may be NaN only for t == 0.
double swap_price(double t, double r_now, double r_lagged, const SwapSpec& spec,
                  const VasicekParams& p);

// Sum over the book per (path, step, client), converted to the reference
// currency with the path's FX rate. Swaps past maturity drop out.
MtMCube build_mtm_cube(const MarketBlock& market, const std::vector<SwapSpec>& book,
                       const ModelParams& params);

// Random book: uniform economy and client, log-uniform notional, maturity
// uniform over grid multiples of the tenor (= one pricing step), all at par.
struct BookGenSpec {
    int count = 10;
    double notional_min = 1.0;
    double notional_max = 100.0;
};
std::vector<SwapSpec> generate_book(const ModelParams& params, const TimeGrid& grid,
                                    const BookGenSpec& spec, RandomStream stream);

// CSV, one swap per row: economy,client,notional,tenor,maturity,rate
// where rate is a number or the literal "par".
std::vector<SwapSpec> load_book_csv(const std::string& path, const ModelParams& params,
                                    const TimeGrid& grid);
void save_book_csv(const std::string& path, const std::vector<SwapSpec>& book);

}  // namespace hiercva
