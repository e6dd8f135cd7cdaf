#include "hiercva/market.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hiercva/errors.hpp"
#include "hiercva/parallel.hpp"

namespace hiercva {

void ModelParams::validate() const {
    if (rates.empty()) throw config_error("model: at least one economy required");
    if (fx.size() + 1 != rates.size())
        throw config_error("model: need exactly one FX process per non-reference economy");
    if (credit.empty()) throw config_error("model: credit list must include the bank (index 0)");
    for (std::size_t e = 0; e < rates.size(); ++e) {
        if (rates[e].sigma < 0.0) throw config_error("model: rate vol must be >= 0");
        if (rates[e].a < 0.0) throw config_error("model: mean-reversion speed must be >= 0");
    }
    for (std::size_t e = 0; e < fx.size(); ++e) {
        if (fx[e].sigma < 0.0) throw config_error("model: FX vol must be >= 0");
        if (std::fabs(fx[e].rho) > 1.0) throw config_error("model: |rho| must be <= 1");
        if (fx[e].chi0 <= 0.0) throw config_error("model: initial FX rate must be > 0");
    }
    for (std::size_t c = 0; c < credit.size(); ++c) {
        if (credit[c].delta < 0.0 || credit[c].gamma0 < 0.0 || credit[c].nu < 0.0 ||
            credit[c].alpha < 0.0)
            throw config_error("model: CIR parameters must be >= 0");
    }
    if (!brownian_correlation.empty()) {
        const std::size_t d = n_factors();
        if (brownian_correlation.size() != d * d)
            throw config_error("model: correlation matrix must be n_factors x n_factors");
        for (std::size_t i = 0; i < d; ++i) {
            if (std::fabs(brownian_correlation[i * d + i] - 1.0) > 1e-12)
                throw config_error("model: correlation matrix must have unit diagonal");
            for (std::size_t j = 0; j < d; ++j)
                if (std::fabs(brownian_correlation[i * d + j] - brownian_correlation[j * d + i]) > 1e-12)
                    throw config_error("model: correlation matrix must be symmetric");
        }
        // The (r_e, chi_e) entries are pinned by the per-economy rho.
        const int E = n_economies();
        for (int e = 1; e < E; ++e) {
            double entry = brownian_correlation[e * d + (E + e - 1)];
            if (std::fabs(entry - fx[e - 1].rho) > 1e-12)
                throw config_error("model: correlation entry (r_e, chi_e) must equal rho of economy " +
                                   std::to_string(e));
        }
    }
}

std::vector<double> ModelParams::correlation_matrix() const {
    const int d = n_factors();
    if (!brownian_correlation.empty()) return brownian_correlation;
    std::vector<double> corr(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) corr[static_cast<std::size_t>(i) * d + i] = 1.0;
    const int E = n_economies();
    for (int e = 1; e < E; ++e) {
        corr[static_cast<std::size_t>(e) * d + (E + e - 1)] = fx[e - 1].rho;
        corr[static_cast<std::size_t>(E + e - 1) * d + e] = fx[e - 1].rho;
    }
    return corr;
}

void TimeGrid::validate() const {
    if (n_steps <= 0 || substeps <= 0 || dt <= 0.0)
        throw config_error("grid: steps, substeps and dt must all be positive");
}

MarketBlock::MarketBlock(int n_paths, int n_steps, int n_economies, int n_credit, double dt,
                         int start_step)
    : n_paths_(n_paths),
      n_steps_(n_steps),
      n_economies_(n_economies),
      n_credit_(n_credit),
      start_step_(start_step),
      dt_(dt) {
    const std::size_t ke = static_cast<std::size_t>(n_paths) * (n_steps + 1) * n_economies;
    const std::size_t kc = static_cast<std::size_t>(n_paths) * (n_steps + 1) * n_credit;
    rates_.assign(ke, 0.0);
    fx_.assign(static_cast<std::size_t>(n_paths) * (n_steps + 1) * (n_economies - 1), 0.0);
    intensities_.assign(kc, 0.0);
    lagged_.assign(ke, 0.0);
    discounts_.assign(static_cast<std::size_t>(n_paths) * (n_steps + 1), 1.0);
    hazards_.assign(kc, 0.0);
}

double MarketBlock::fx(int k, int i, int e) const {
    if (e == 0) return 1.0;
    return fx_[(static_cast<std::size_t>(k) * (n_steps_ + 1) + i) * (n_economies_ - 1) + (e - 1)];
}

std::vector<double> MarketBlock::hazard_path(int k, int c) const {
    std::vector<double> out(n_steps_ + 1);
    for (int i = 0; i <= n_steps_; ++i) out[i] = hazard(k, i, c);
    return out;
}

MarketState MarketBlock::state_at(int k, int i) const {
    MarketState s;
    s.rates.resize(n_economies_);
    s.log_fx.resize(n_economies_ - 1);
    s.intensities.resize(n_credit_);
    s.lagged_rates.resize(n_economies_);
    for (int e = 0; e < n_economies_; ++e) {
        s.rates[e] = rate(k, i, e);
        s.lagged_rates[e] = lagged_rate(k, i, e);
    }
    for (int e = 1; e < n_economies_; ++e) s.log_fx[e - 1] = std::log(fx(k, i, e));
    for (int c = 0; c < n_credit_; ++c) s.intensities[c] = intensity(k, i, c);
    return s;
}

std::size_t MarketBlock::memory_bytes() const {
    return (rates_.size() + fx_.size() + intensities_.size() + lagged_.size() +
            discounts_.size() + hazards_.size()) *
           sizeof(double);
}

double step_vasicek(double r, double dt, double a, double b, double sigma, double quanto_adjust,
                    double z) {
    return r + (a * (b - r) - quanto_adjust) * dt + sigma * std::sqrt(dt) * z;
}

double step_log_fx(double log_chi, double r0, double re, double dt, double sigma, double z) {
    return log_chi + (r0 - re - 0.5 * sigma * sigma) * dt + sigma * std::sqrt(dt) * z;
}

double step_cir(double gamma, double dt, double alpha, double delta, double nu, double z) {
    double gp = std::max(gamma, 0.0);
    double next = gamma + alpha * (delta - gp) * dt + nu * std::sqrt(gp) * std::sqrt(dt) * z;
    return std::max(next, 0.0);
}

std::vector<double> cholesky_lower(const std::vector<double>& matrix, int n,
                                   const std::string& what) {
    std::vector<double> l(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double sum = matrix[static_cast<std::size_t>(i) * n + j];
            for (int k = 0; k < j; ++k)
                sum -= l[static_cast<std::size_t>(i) * n + k] * l[static_cast<std::size_t>(j) * n + k];
            if (i == j) {
                if (sum < -1e-12) {
                    std::ostringstream msg;
                    msg << what << ": not positive semi-definite, leading minor of order "
                        << (i + 1) << " is negative";
                    throw config_error(msg.str());
                }
                l[static_cast<std::size_t>(i) * n + i] = std::sqrt(std::max(sum, 0.0));
            } else {
                double d = l[static_cast<std::size_t>(j) * n + j];
                l[static_cast<std::size_t>(i) * n + j] = (d > 0.0) ? sum / d : 0.0;
            }
        }
    }
    return l;
}

MarketBlock simulate_market(const ModelParams& params, const TimeGrid& grid, int n_paths,
                            const RandomStream& stream) {
    params.validate();
    grid.validate();
    if (n_paths < 1) throw contract_error("simulate_market: n_paths must be >= 1");

    const int E = params.n_economies();
    const int C = params.n_clients() + 1;
    const int D = params.n_factors();
    const int n = grid.n_steps;
    const double h = grid.fine_dt();
    const std::vector<double> chol = cholesky_lower(params.correlation_matrix(), D,
                                                    "brownian correlation");

    MarketBlock block(n_paths, n, E, C, grid.dt, 0);

    parallel_for(n_paths, [&](int k) {
        RandomStream ps = stream.split(static_cast<std::uint64_t>(k));
        std::vector<double> r(E), logchi(E - 1), gamma(C), hazard(C, 0.0);
        std::vector<double> zraw(D), z(D);
        for (int e = 0; e < E; ++e) r[e] = params.rates[e].r0;
        for (int e = 1; e < E; ++e) logchi[e - 1] = std::log(params.fx[e - 1].chi0);
        for (int c = 0; c < C; ++c) gamma[c] = params.credit[c].gamma0;
        double log_beta = 0.0;

        auto store = [&](int i) {
            for (int e = 0; e < E; ++e) block.rate(k, i, e) = r[e];
            for (int e = 1; e < E; ++e) block.fx_raw(k, i, e - 1) = std::exp(logchi[e - 1]);
            for (int c = 0; c < C; ++c) block.intensity(k, i, c) = gamma[c];
            for (int c = 0; c < C; ++c) block.hazard(k, i, c) = hazard[c];
            block.discount(k, i) = std::exp(-log_beta);
            // Short rates at the reset date preceding step i (one pricing step).
            for (int e = 0; e < E; ++e)
                block.lagged_rate(k, i, e) = (i == 0) ? params.rates[e].r0 : block.rate(k, i - 1, e);
        };
        store(0);

        for (int i = 1; i <= n; ++i) {
            for (int s = 0; s < grid.substeps; ++s) {
                ps.fill_normals(zraw.data(), D);
                for (int d = 0; d < D; ++d) {
                    double acc = 0.0;
                    const double* row = chol.data() + static_cast<std::size_t>(d) * D;
                    for (int j = 0; j <= d; ++j) acc += row[j] * zraw[j];
                    z[d] = acc;
                }
                // Left-endpoint quadrature of -ln beta and the hazards.
                log_beta += r[0] * h;
                for (int c = 0; c < C; ++c) hazard[c] += gamma[c] * h;

                const double r0_now = r[0];
                std::vector<double> r_now(r);
                for (int e = 0; e < E; ++e) {
                    const double quanto = (e == 0) ? 0.0
                                                   : params.fx[e - 1].rho * params.fx[e - 1].sigma *
                                                         params.rates[e].sigma;
                    r[e] = step_vasicek(r[e], h, params.rates[e].a, params.rates[e].b,
                                        params.rates[e].sigma, quanto, z[e]);
                }
                for (int e = 1; e < E; ++e) {
                    logchi[e - 1] = step_log_fx(logchi[e - 1], r0_now, r_now[e], h,
                                                params.fx[e - 1].sigma, z[E + e - 1]);
                }
                for (int c = 0; c < C; ++c) {
                    gamma[c] = step_cir(gamma[c], h, params.credit[c].alpha, params.credit[c].delta,
                                        params.credit[c].nu, z[E + (E - 1) + c]);
                }
            }
            store(i);
        }
    });

    return block;
}

MarketBlock simulate_conditional_market(const ModelParams& params, const TimeGrid& grid,
                                        const MarketState& state, int start_step, int horizon,
                                        int n_inner, const RandomStream& stream) {
    params.validate();
    grid.validate();
    const int E = params.n_economies();
    const int C = params.n_clients() + 1;
    const int D = params.n_factors();
    if (static_cast<int>(state.rates.size()) != E ||
        static_cast<int>(state.log_fx.size()) != E - 1 ||
        static_cast<int>(state.intensities.size()) != C ||
        static_cast<int>(state.lagged_rates.size()) != E)
        throw contract_error("simulate_conditional_market: state shape mismatch");
    if (horizon < 0 || start_step + horizon > grid.n_steps)
        throw contract_error("simulate_conditional_market: horizon out of range");
    const double h = grid.fine_dt();
    const std::vector<double> chol = cholesky_lower(params.correlation_matrix(), D,
                                                    "brownian correlation");

    MarketBlock block(n_inner, horizon, E, C, grid.dt, start_step);

    parallel_for(n_inner, [&](int l) {
        RandomStream ps = stream.split(static_cast<std::uint64_t>(l));
        std::vector<double> r(state.rates), logchi(state.log_fx), gamma(state.intensities);
        std::vector<double> hazard(C, 0.0), zraw(D), z(D);
        double log_beta = 0.0;

        auto store = [&](int i) {
            for (int e = 0; e < E; ++e) block.rate(l, i, e) = r[e];
            for (int e = 1; e < E; ++e) block.fx_raw(l, i, e - 1) = std::exp(logchi[e - 1]);
            for (int c = 0; c < C; ++c) block.intensity(l, i, c) = gamma[c];
            for (int c = 0; c < C; ++c) block.hazard(l, i, c) = hazard[c];
            block.discount(l, i) = std::exp(-log_beta);
            for (int e = 0; e < E; ++e)
                block.lagged_rate(l, i, e) =
                    (i == 0) ? state.lagged_rates[e] : block.rate(l, i - 1, e);
        };
        store(0);

        for (int i = 1; i <= horizon; ++i) {
            for (int s = 0; s < grid.substeps; ++s) {
                ps.fill_normals(zraw.data(), D);
                for (int d = 0; d < D; ++d) {
                    double acc = 0.0;
                    const double* row = chol.data() + static_cast<std::size_t>(d) * D;
                    for (int j = 0; j <= d; ++j) acc += row[j] * zraw[j];
                    z[d] = acc;
                }
                log_beta += r[0] * h;
                for (int c = 0; c < C; ++c) hazard[c] += gamma[c] * h;

                const double r0_now = r[0];
                std::vector<double> r_now(r);
                for (int e = 0; e < E; ++e) {
                    const double quanto = (e == 0) ? 0.0
                                                   : params.fx[e - 1].rho * params.fx[e - 1].sigma *
                                                         params.rates[e].sigma;
                    r[e] = step_vasicek(r[e], h, params.rates[e].a, params.rates[e].b,
                                        params.rates[e].sigma, quanto, z[e]);
                }
                for (int e = 1; e < E; ++e) {
                    logchi[e - 1] = step_log_fx(logchi[e - 1], r0_now, r_now[e], h,
                                                params.fx[e - 1].sigma, z[E + e - 1]);
                }
                for (int c = 0; c < C; ++c) {
                    gamma[c] = step_cir(gamma[c], h, params.credit[c].alpha, params.credit[c].delta,
                                        params.credit[c].nu, z[E + (E - 1) + c]);
                }
            }
            store(i);
        }
    });

    return block;
}

}  // namespace hiercva
