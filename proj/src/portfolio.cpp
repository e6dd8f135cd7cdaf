#include "hiercva/portfolio.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "hiercva/errors.hpp"
#include "hiercva/parallel.hpp"

namespace hiercva {

namespace {

constexpr double kGridTol = 1e-9;

bool is_multiple(double x, double step) {
    double q = x / step;
    return std::fabs(q - std::round(q)) < kGridTol * std::max(1.0, std::fabs(q));
}

}  // namespace

void SwapSpec::validate(int n_economies, int n_clients) const {
    if (economy < 0 || economy >= n_economies)
        throw config_error("swap: economy index out of range");
    if (client < 1 || client > n_clients) throw config_error("swap: client index out of range");
    if (tenor <= 0.0 || maturity <= 0.0) throw config_error("swap: tenor and maturity must be > 0");
    if (!is_multiple(maturity, tenor))
        throw config_error("swap: maturity must be an integer multiple of the tenor");
}

double zc_price(double r, double tau, const VasicekParams& p) {
    if (tau < 0.0) throw contract_error("zc_price: negative maturity");
    if (tau == 0.0) return 1.0;
    const double a = p.a, b = p.b, s = p.sigma;
    if (std::fabs(a) < 1e-8) {
        // a -> 0 limit: r is a driftless Brownian, E[exp(-int r)] closed form.
        return std::exp(-r * tau + s * s * tau * tau * tau / 6.0);
    }
    const double B = (1.0 - std::exp(-a * tau)) / a;
    const double lnA = (b - s * s / (2.0 * a * a)) * (B - tau) - s * s * B * B / (4.0 * a);
    return std::exp(lnA - B * r);
}

double par_rate(double maturity, double tenor, const VasicekParams& p) {
    if (tenor <= 0.0 || maturity <= 0.0 || !is_multiple(maturity, tenor))
        throw contract_error("par_rate: invalid schedule");
    const int m = static_cast<int>(std::llround(maturity / tenor));
    double annuity = 0.0;
    for (int j = 1; j <= m; ++j) annuity += zc_price(p.r0, j * tenor, p);
    if (annuity <= 0.0 || !std::isfinite(annuity))
        throw numeric_error("par_rate: degenerate annuity");
    return (1.0 - zc_price(p.r0, maturity, p)) / (tenor * annuity);
}

double swap_price(double t, double r_now, double r_lagged, const SwapSpec& spec,
                  const VasicekParams& p) {
    const double delta = spec.tenor;
    const double tbar = spec.maturity;
    const double sigma_rate = spec.fixed_rate;
    if (t > tbar + kGridTol) throw contract_error("swap_price: t past maturity");

    if (t < kGridTol) {
        // t = 0: 1 - ZC_0(tbar) - delta*Sigma * sum_{t' in R\{0}} ZC_0(t').
        const int m = static_cast<int>(std::llround(tbar / delta));
        double annuity = 0.0;
        for (int j = 1; j <= m; ++j) annuity += zc_price(r_now, j * delta, p);
        return 1.0 - zc_price(r_now, tbar, p) - delta * sigma_rate * annuity;
    }
    if (std::isnan(r_lagged))
        throw contract_error("swap_price: lagged reset rate required for t > 0");

    const bool on_reset = is_multiple(t, delta);
    // Reset dates strictly after t.
    const int m_total = static_cast<int>(std::llround(tbar / delta));
    const int j_first = on_reset ? static_cast<int>(std::llround(t / delta)) + 1
                                 : static_cast<int>(std::floor(t / delta + kGridTol)) + 1;
    double annuity = 0.0;
    for (int j = j_first; j <= m_total; ++j) annuity += zc_price(r_now, j * delta - t, p);

    if (on_reset) {
        // t in R\{0}: 1/ZC_{t-}(t) - ZC_t(tbar) - delta*Sigma*(1 + annuity).
        const double zc_prev = zc_price(r_lagged, delta, p);
        return 1.0 / zc_prev - zc_price(r_now, tbar - t, p) -
               delta * sigma_rate * (1.0 + annuity);
    }
    // t not a reset: ZC_t(t+)/ZC_{t-}(t+) - ZC_t(tbar) - delta*Sigma*annuity.
    const double t_prev = std::floor(t / delta + kGridTol) * delta;
    const double t_next = t_prev + delta;
    const double zc_prev = zc_price(r_lagged, t_next - t_prev, p);
    return zc_price(r_now, t_next - t, p) / zc_prev - zc_price(r_now, tbar - t, p) -
           delta * sigma_rate * annuity;
}

MtMCube build_mtm_cube(const MarketBlock& market, const std::vector<SwapSpec>& book,
                       const ModelParams& params) {
    if (book.empty()) throw contract_error("build_mtm_cube: empty book");
    const int C = market.n_credit() - 1;  // clients only
    MtMCube cube;
    cube.n_paths = market.n_paths();
    cube.n_steps = market.n_steps();
    cube.n_clients = C;
    cube.values.assign(static_cast<std::size_t>(cube.n_paths) * (cube.n_steps + 1) * C, 0.0);

    const double dt = market.dt();
    for (const auto& swap : book) {
        if (swap.client < 1 || swap.client > C)
            throw contract_error("build_mtm_cube: swap client out of range");
        // Reset lag in pricing steps; conditional blocks carry only a
        // one-step lag, so their books must reset every pricing step.
        const double lag_steps_d = swap.tenor / dt;
        const int lag_steps = static_cast<int>(std::llround(lag_steps_d));
        if (std::fabs(lag_steps_d - lag_steps) > kGridTol || lag_steps < 1)
            throw config_error("build_mtm_cube: swap tenor must be a multiple of the pricing step");
        if (market.start_step() > 0 && lag_steps != 1)
            throw contract_error(
                "build_mtm_cube: conditional blocks require tenor == pricing step");
    }

    parallel_for(cube.n_paths, [&](int k) {
        for (const auto& swap : book) {
            const VasicekParams& vp = params.rates[swap.economy];
            const int lag_steps = static_cast<int>(std::llround(swap.tenor / dt));
            for (int i = 0; i <= cube.n_steps; ++i) {
                const int global_step = market.start_step() + i;
                const double t = global_step * dt;
                if (t > swap.maturity + kGridTol) break;
                const double r_now = market.rate(k, i, swap.economy);
                double r_lagged;
                if (global_step == 0) {
                    r_lagged = std::numeric_limits<double>::quiet_NaN();
                } else {
                    // Rate at the reset immediately preceding t.
                    const int prev_reset_global = ((global_step - 1) / lag_steps) * lag_steps;
                    const int prev_local = prev_reset_global - market.start_step();
                    r_lagged = (prev_local >= 0) ? market.rate(k, prev_local, swap.economy)
                                                 : market.lagged_rate(k, 0, swap.economy);
                }
                const double px = swap_price(t, r_now, r_lagged, swap, vp);
                cube.at(k, i, swap.client) += swap.notional * px * market.fx(k, i, swap.economy);
            }
        }
    });
    return cube;
}

std::vector<SwapSpec> generate_book(const ModelParams& params, const TimeGrid& grid,
                                    const BookGenSpec& spec, RandomStream stream) {
    if (spec.count < 1) throw config_error("book generator: count must be >= 1");
    if (spec.notional_min <= 0.0 || spec.notional_max < spec.notional_min)
        throw config_error("book generator: invalid notional range");
    std::vector<SwapSpec> book;
    book.reserve(spec.count);
    const int E = params.n_economies();
    const int C = params.n_clients();
    for (int s = 0; s < spec.count; ++s) {
        SwapSpec sw;
        sw.economy = static_cast<int>(stream.next_uniform() * E);
        if (sw.economy >= E) sw.economy = E - 1;
        sw.client = 1 + static_cast<int>(stream.next_uniform() * C);
        if (sw.client > C) sw.client = C;
        const double u = stream.next_uniform();
        sw.notional = spec.notional_min * std::exp(u * std::log(spec.notional_max / spec.notional_min));
        sw.tenor = grid.dt;
        int steps = 1 + static_cast<int>(stream.next_uniform() * grid.n_steps);
        if (steps > grid.n_steps) steps = grid.n_steps;
        sw.maturity = steps * grid.dt;
        sw.fixed_rate = par_rate(sw.maturity, sw.tenor, params.rates[sw.economy]);
        book.push_back(sw);
    }
    return book;
}

std::vector<SwapSpec> load_book_csv(const std::string& path, const ModelParams& params,
                                    const TimeGrid& grid) {
    std::ifstream in(path);
    if (!in) throw config_error("book: cannot open " + path);
    std::vector<SwapSpec> book;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first && line.rfind("economy", 0) == 0) {  // header
            first = false;
            continue;
        }
        first = false;
        std::stringstream ss(line);
        std::string field;
        SwapSpec sw;
        auto next_field = [&]() {
            if (!std::getline(ss, field, ',')) throw config_error("book: malformed row: " + line);
            return field;
        };
        sw.economy = std::stoi(next_field());
        sw.client = std::stoi(next_field());
        sw.notional = std::stod(next_field());
        sw.tenor = std::stod(next_field());
        sw.maturity = std::stod(next_field());
        std::string rate = next_field();
        sw.validate(params.n_economies(), params.n_clients());
        if (!is_multiple(sw.tenor, grid.dt))
            throw config_error("book: tenor must be a multiple of the pricing step");
        if (rate == "par")
            sw.fixed_rate = par_rate(sw.maturity, sw.tenor, params.rates[sw.economy]);
        else
            sw.fixed_rate = std::stod(rate);
        book.push_back(sw);
    }
    if (book.empty()) throw config_error("book: no swaps in " + path);
    return book;
}

void save_book_csv(const std::string& path, const std::vector<SwapSpec>& book) {
    std::ofstream out(path);
    if (!out) throw config_error("book: cannot write " + path);
    out << "economy,client,notional,tenor,maturity,rate\n";
    char buf[256];
    for (const auto& sw : book) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%.17g\n", sw.economy, sw.client,
                      sw.notional, sw.tenor, sw.maturity, sw.fixed_rate);
        out << buf;
    }
}

}  // namespace hiercva
