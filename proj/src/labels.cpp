#include "hiercva/labels.hpp"

#include <algorithm>
#include <cmath>

#include "hiercva/errors.hpp"
#include "hiercva/parallel.hpp"

namespace hiercva {

namespace {

void check_step(int i, const MarketBlock& market) {
    if (i < 0 || i > market.n_steps()) throw contract_error("label step out of range");
    if (market.start_step() != 0)
        throw contract_error("labels expect an outer (non-rebased) market block");
}

}  // namespace

LabelSet defaults_label(int i, const MarketBlock& market, const DefaultBlock& defaults,
                        const MtMCube& cube) {
    check_step(i, market);
    const int M = market.n_paths();
    const int N = defaults.n_replicas();
    const int n = market.n_steps();
    LabelSet out;
    out.step = i;
    out.n_paths = M;
    out.n_replicas = N;
    out.values.assign(static_cast<std::size_t>(M) * N, 0.0);

    parallel_for(M, [&](int k) {
        const double inv_beta_i = 1.0 / market.discount(k, i);
        for (int l = 0; l < N; ++l) {
            double sum = 0.0;
            for (int c = 1; c < defaults.n_names(); ++c) {
                const int s = defaults.default_step(k, l, c);
                if (s > i && s <= n) {
                    const double exposure = std::max(cube.at(k, s, c), 0.0);
                    sum += inv_beta_i * market.discount(k, s) * exposure;
                }
            }
            out.at(k, l) = sum;
        }
    });
    return out;
}

LabelSet intensity_label(int i, const MarketBlock& market, const DefaultBlock& defaults,
                         const MtMCube& cube) {
    check_step(i, market);
    const int M = market.n_paths();
    const int N = defaults.n_replicas();
    const int n = market.n_steps();
    const int C = defaults.n_names();
    const double dt = market.dt();
    LabelSet out;
    out.step = i;
    out.n_paths = M;
    out.n_replicas = N;
    out.values.assign(static_cast<std::size_t>(M) * N, 0.0);

    parallel_for(M, [&](int k) {
        const double inv_beta_i = 1.0 / market.discount(k, i);
        // Per-client contribution of the surviving branch; replica-independent.
        std::vector<double> survivor_value(C, 0.0);
        for (int c = 1; c < C; ++c) {
            double acc = 0.0;
            double gamma_sum = 0.0;  // sum_{s=i}^{j-1} gamma_s dt
            for (int j = i; j <= n - 1; ++j) {
                const double exposure = std::max(cube.at(k, j, c), 0.0);
                const double gamma_j = market.intensity(k, j, c);
                acc += inv_beta_i * market.discount(k, j) * exposure * gamma_j * dt *
                       std::exp(-gamma_sum);
                gamma_sum += gamma_j * dt;
            }
            survivor_value[c] = acc;
        }
        for (int l = 0; l < N; ++l) {
            double sum = 0.0;
            for (int c = 1; c < C; ++c)
                if (defaults.default_step(k, l, c) > i) sum += survivor_value[c];
            out.at(k, l) = sum;
        }
    });
    return out;
}

std::pair<LabelSet, LabelSet> twin_labels(int i, const ModelParams& params, const TimeGrid& grid,
                                          const std::vector<SwapSpec>& book,
                                          const MarketBlock& market, const DefaultBlock& defaults,
                                          const RandomStream& stream) {
    check_step(i, market);
    const int M = market.n_paths();
    const int N = defaults.n_replicas();
    const int n = market.n_steps();
    const int C = defaults.n_names();
    const int horizon = n - i;

    LabelSet t1, t2;
    t1.step = t2.step = i;
    t1.n_paths = t2.n_paths = M;
    t1.n_replicas = t2.n_replicas = N;
    t1.values.assign(static_cast<std::size_t>(M) * N, 0.0);
    t2.values.assign(static_cast<std::size_t>(M) * N, 0.0);
    if (horizon == 0) return {t1, t2};

    parallel_for(M, [&](int k) {
        RandomStream path_stream = stream.split(static_cast<std::uint64_t>(k));
        // Two fresh market continuations; inner paths 0 and 1 are the twins.
        MarketBlock cont = simulate_conditional_market(params, grid, market.state_at(k, i), i,
                                                       horizon, 2, path_stream.split(0));
        MtMCube cube_cont = build_mtm_cube(cont, book, params);
        std::vector<std::vector<double>> hz(2 * C);
        for (int t = 0; t < 2; ++t)
            for (int c = 1; c < C; ++c) hz[t * C + c] = cont.hazard_path(t, c);
        RandomStream default_stream = path_stream.split(1);

        for (int l = 0; l < N; ++l) {
            RandomStream rep_stream = default_stream.split(static_cast<std::uint64_t>(l));
            for (int t = 0; t < 2; ++t) {
                RandomStream twin_stream = rep_stream.split(static_cast<std::uint64_t>(t));
                double sum = 0.0;
                for (int c = 1; c < C; ++c) {
                    if (defaults.default_step(k, l, c) <= i) continue;  // stays defaulted
                    auto hit = resample_continuation(std::span<const double>(hz[t * C + c]), 0,
                                                     twin_stream);
                    if (hit) {
                        const double exposure = std::max(cube_cont.at(t, *hit, c), 0.0);
                        // Continuation discounts are already rebased to step i.
                        sum += cont.discount(t, *hit) * exposure;
                    }
                }
                (t == 0 ? t1 : t2).at(k, l) = sum;
            }
        }
    });
    return {t1, t2};
}

FeatureMatrix features_at(int i, const MarketBlock& market, const DefaultBlock& defaults) {
    check_step(i, market);
    const int M = market.n_paths();
    const int N = defaults.n_replicas();
    const int E = market.n_economies();
    const int C = defaults.n_names();
    FeatureMatrix f;
    f.rows = M * N;
    f.p = C - 1;                         // client indicators, bank excluded
    f.q = E + (E - 1) + (C - 1) + E;     // rates, fx, client intensities, lagged rates
    f.values.assign(static_cast<std::size_t>(f.rows) * f.cols(), 0.0);

    parallel_for(M, [&](int k) {
        for (int l = 0; l < N; ++l) {
            double* row = f.values.data() +
                          (static_cast<std::size_t>(k) * N + l) * f.cols();
            int col = 0;
            for (int c = 1; c < C; ++c) row[col++] = defaults.indicator(k, l, i, c) ? 1.0 : 0.0;
            for (int e = 0; e < E; ++e) row[col++] = market.rate(k, i, e);
            for (int e = 1; e < E; ++e) row[col++] = market.fx(k, i, e);
            for (int c = 1; c < C; ++c) row[col++] = market.intensity(k, i, c);
            for (int e = 0; e < E; ++e) row[col++] = market.lagged_rate(k, i, e);
        }
    });
    return f;
}

}  // namespace hiercva
