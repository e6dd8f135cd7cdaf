#include "hiercva/ard.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hiercva/defaults.hpp"
#include "hiercva/errors.hpp"
#include "hiercva/labels.hpp"
#include "hiercva/parallel.hpp"

namespace hiercva {

namespace {

double uniform_in(RandomStream& s, double lo, double hi) {
    return lo + (hi - lo) * s.next_uniform();
}

ModelParams perturb(const ModelParams& base, const ArdPrior& prior, RandomStream& s) {
    ModelParams p = base;
    for (auto& r : p.rates) {
        r.a *= uniform_in(s, prior.speed_lo, prior.speed_hi);
        r.b *= uniform_in(s, prior.level_lo, prior.level_hi);
        r.sigma *= uniform_in(s, prior.vol_lo, prior.vol_hi);
    }
    for (auto& f : p.fx) f.sigma *= uniform_in(s, prior.vol_lo, prior.vol_hi);
    for (auto& c : p.credit) {
        c.alpha *= uniform_in(s, prior.speed_lo, prior.speed_hi);
        c.delta *= uniform_in(s, prior.level_lo, prior.level_hi);
        c.nu *= uniform_in(s, prior.vol_lo, prior.vol_hi);
        c.gamma0 *= uniform_in(s, prior.level_lo, prior.level_hi);
    }
    return p;
}

double time_averaged_variance(const std::vector<double>& values, int n_paths, int n_steps) {
    // values[k * (n_steps+1) + i]
    double acc = 0.0;
    for (int i = 0; i <= n_steps; ++i) {
        double m = 0.0;
        for (int k = 0; k < n_paths; ++k) m += values[static_cast<std::size_t>(k) * (n_steps + 1) + i];
        m /= n_paths;
        double v = 0.0;
        for (int k = 0; k < n_paths; ++k) {
            const double d = values[static_cast<std::size_t>(k) * (n_steps + 1) + i] - m;
            v += d * d;
        }
        acc += v / n_paths;
    }
    return acc / (n_steps + 1);
}

}  // namespace

std::vector<VarianceSample> sample_variances(const ModelParams& base, const TimeGrid& grid,
                                             const std::vector<SwapSpec>& book,
                                             const ArdPrior& prior, int n_dgp, int paths_per_dgp,
                                             const RandomStream& stream, int* rejected) {
    base.validate();
    grid.validate();
    if (n_dgp < 1 || paths_per_dgp < 2) throw config_error("ard: need n_dgp >= 1 and paths >= 2");
    const int E = base.n_economies();
    const int C = base.n_clients();
    const int n = grid.n_steps;
    int reject_count = 0;

    std::vector<VarianceSample> out(n_dgp);
    RandomStream prior_stream = stream.split(0);
    std::vector<ModelParams> draws;
    draws.reserve(n_dgp);
    while (static_cast<int>(draws.size()) < n_dgp) {
        ModelParams nu = perturb(base, prior, prior_stream);
        try {
            nu.validate();
        } catch (const config_error&) {
            ++reject_count;
            continue;
        }
        draws.push_back(std::move(nu));
    }
    if (rejected) *rejected = reject_count;

    parallel_for(n_dgp, [&](int d) {
        const ModelParams& nu = draws[d];
        RandomStream sim_stream = stream.split(1).split(static_cast<std::uint64_t>(d));
        MarketBlock market = simulate_market(nu, grid, paths_per_dgp, sim_stream.split(0));
        DefaultBlock defaults = sample_default_block(market, 1, sim_stream.split(1));
        MtMCube cube = build_mtm_cube(market, book, nu);

        VarianceSample& vs = out[d];
        vs.v_x.assign(C, 0.0);
        vs.v_y.assign(nu.n_market_factors(), 0.0);

        const int steps1 = n + 1;
        std::vector<double> buf(static_cast<std::size_t>(paths_per_dgp) * steps1);
        auto fill_and_var = [&](auto&& getter) {
            for (int k = 0; k < paths_per_dgp; ++k)
                for (int i = 0; i <= n; ++i)
                    buf[static_cast<std::size_t>(k) * steps1 + i] = getter(k, i);
            return time_averaged_variance(buf, paths_per_dgp, n);
        };

        for (int c = 1; c <= C; ++c)
            vs.v_x[c - 1] = fill_and_var(
                [&](int k, int i) { return defaults.indicator(k, 0, i, c) ? 1.0 : 0.0; });
        int col = 0;
        for (int e = 0; e < E; ++e)
            vs.v_y[col++] = fill_and_var([&](int k, int i) { return market.rate(k, i, e); });
        for (int e = 1; e < E; ++e)
            vs.v_y[col++] = fill_and_var([&](int k, int i) { return market.fx(k, i, e); });
        for (int c = 1; c <= C; ++c)
            vs.v_y[col++] = fill_and_var([&](int k, int i) { return market.intensity(k, i, c); });

        // xi_{i,n} for every i, one replica per path.
        std::vector<double> xi(static_cast<std::size_t>(paths_per_dgp) * steps1);
        for (int i = 0; i <= n; ++i) {
            LabelSet ls = defaults_label(i, market, defaults, cube);
            for (int k = 0; k < paths_per_dgp; ++k)
                xi[static_cast<std::size_t>(k) * steps1 + i] = ls.at(k, 0);
        }
        vs.v_xi = time_averaged_variance(xi, paths_per_dgp, n);
    });
    return out;
}

ArdDataset make_ard_dataset(const std::vector<VarianceSample>& samples, bool aggregate_families,
                            int n_economies, int n_clients) {
    if (samples.empty()) throw contract_error("ard: empty sample set");
    const int E = n_economies, C = n_clients;
    ArdDataset data;
    const int p = static_cast<int>(samples.front().v_x.size());
    const int q = static_cast<int>(samples.front().v_y.size());
    if (q != 2 * E - 1 + C) throw contract_error("ard: V(Y) component count mismatch");

    if (aggregate_families) {
        data.names = {"V(X)", "V(Y:rates)", "V(Y:fx)", "V(Y:intensities)"};
        const int cols = (E > 1) ? 4 : 3;
        if (E == 1) data.names = {"V(X)", "V(Y:rates)", "V(Y:intensities)"};
        data.x.resize(samples.size(), cols);
        for (std::size_t s = 0; s < samples.size(); ++s) {
            const auto& vs = samples[s];
            double vx = std::accumulate(vs.v_x.begin(), vs.v_x.end(), 0.0) / p;
            double vr = 0.0, vf = 0.0, vi = 0.0;
            for (int e = 0; e < E; ++e) vr += vs.v_y[e];
            vr /= E;
            if (E > 1) {
                for (int e = 0; e < E - 1; ++e) vf += vs.v_y[E + e];
                vf /= (E - 1);
            }
            for (int c = 0; c < C; ++c) vi += vs.v_y[2 * E - 1 + c];
            vi /= C;
            int col = 0;
            data.x(s, col++) = vx;
            data.x(s, col++) = vr;
            if (E > 1) data.x(s, col++) = vf;
            data.x(s, col++) = vi;
        }
    } else {
        data.x.resize(samples.size(), p + q);
        for (int j = 0; j < p; ++j) data.names.push_back("V(X:" + std::to_string(j + 1) + ")");
        for (int e = 0; e < E; ++e) data.names.push_back("V(Y:rate" + std::to_string(e) + ")");
        for (int e = 1; e < E; ++e) data.names.push_back("V(Y:fx" + std::to_string(e) + ")");
        for (int c = 0; c < C; ++c) data.names.push_back("V(Y:gamma" + std::to_string(c + 1) + ")");
        for (std::size_t s = 0; s < samples.size(); ++s) {
            for (int j = 0; j < p; ++j) data.x(s, j) = samples[s].v_x[j];
            for (int j = 0; j < q; ++j) data.x(s, p + j) = samples[s].v_y[j];
        }
    }
    data.y.resize(samples.size());
    for (std::size_t s = 0; s < samples.size(); ++s) data.y(s) = samples[s].v_xi;
    return data;
}

namespace {

// Gaussian-process evidence and gradient in the standardized space.
// theta = [log lambda_1..d, log sf, log sn].
struct GpEval {
    double logml;
    Eigen::VectorXd grad;
    bool ok;
};

GpEval gp_evidence(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                   const Eigen::VectorXd& theta) {
    const int n = static_cast<int>(x.rows());
    const int d = static_cast<int>(x.cols());
    GpEval out;
    out.ok = false;
    out.grad = Eigen::VectorXd::Zero(d + 2);

    const double sf2 = std::exp(2.0 * theta(d));
    const double sn2 = std::exp(2.0 * theta(d + 1));
    Eigen::VectorXd inv_l2(d);
    for (int j = 0; j < d; ++j) inv_l2(j) = std::exp(-2.0 * theta(j));

    // Scaled squared distances per dimension are reused for the gradient.
    Eigen::MatrixXd kf(n, n);
    std::vector<Eigen::MatrixXd> sq(d, Eigen::MatrixXd(n, n));
    for (int i = 0; i < n; ++i) {
        for (int j2 = 0; j2 <= i; ++j2) {
            double acc = 0.0;
            for (int m = 0; m < d; ++m) {
                const double diff = x(i, m) - x(j2, m);
                const double s = diff * diff * inv_l2(m);
                sq[m](i, j2) = s;
                sq[m](j2, i) = s;
                acc += s;
            }
            const double v = sf2 * std::exp(-0.5 * acc);
            kf(i, j2) = v;
            kf(j2, i) = v;
        }
    }

    // Jitter escalation on Cholesky failure.
    double jitter = 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt;
    for (int attempt = 0; attempt < 8; ++attempt) {
        Eigen::MatrixXd k = kf;
        k.diagonal().array() += sn2 + jitter;
        llt.compute(k);
        if (llt.info() == Eigen::Success) break;
        jitter = (jitter == 0.0) ? 1e-10 * sf2 : jitter * 10.0;
    }
    if (llt.info() != Eigen::Success) return out;

    Eigen::VectorXd alpha = llt.solve(y);
    double logdet = 0.0;
    for (int i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    out.logml = -0.5 * y.dot(alpha) - 0.5 * logdet - 0.5 * n * std::log(2.0 * M_PI);

    // dL/dtheta_m = 0.5 tr((alpha alpha' - K^{-1}) dK/dtheta_m).
    Eigen::MatrixXd kinv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    Eigen::MatrixXd w = alpha * alpha.transpose() - kinv;
    for (int m = 0; m < d; ++m)
        out.grad(m) = 0.5 * (w.array() * kf.array() * sq[m].array()).sum();
    out.grad(d) = (w.array() * kf.array()).sum();           // d/dlog sf: 2*kf, times 1/2
    out.grad(d + 1) = sn2 * w.diagonal().sum();             // d/dlog sn: 2*sn2*I, times 1/2
    out.ok = true;
    return out;
}

}  // namespace

ArdResult fit_ard(const ArdDataset& data, int restarts, const RandomStream& stream) {
    const int n = static_cast<int>(data.x.rows());
    const int d = static_cast<int>(data.x.cols());
    if (n < 10) throw config_error("fit_ard: need at least 10 samples");
    if (restarts < 1) throw config_error("fit_ard: need at least one restart");

    // Standardize inputs and output; length scales are mapped back at the end.
    Eigen::VectorXd xm = data.x.colwise().mean();
    Eigen::VectorXd xs(d);
    for (int j = 0; j < d; ++j) {
        const double v = (data.x.col(j).array() - xm(j)).square().sum() / n;
        xs(j) = (std::sqrt(v) > 1e-14) ? std::sqrt(v) : 1.0;
    }
    Eigen::MatrixXd xstd = (data.x.rowwise() - xm.transpose()).array().rowwise() /
                           xs.transpose().array();
    const double ym = data.y.mean();
    double yv = (data.y.array() - ym).square().sum() / n;
    if (yv < 1e-28) {
        // Constant output: no signal, every direction irrelevant.
        ArdResult flat;
        flat.length_scales.assign(d, std::numeric_limits<double>::infinity());
        flat.inverse_length_scales.assign(d, 0.0);
        flat.std_inverse_length_scales.assign(d, 0.0);
        flat.signal_scale = 0.0;
        flat.noise_scale = 0.0;
        flat.log_marginal = 0.0;
        return flat;
    }
    const double ys = std::sqrt(yv);
    Eigen::VectorXd ystd = (data.y.array() - ym) / ys;

    ArdResult best;
    best.log_marginal = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_theta;

    RandomStream rs(stream);
    for (int r = 0; r < restarts; ++r) {
        RandomStream init = rs.split(static_cast<std::uint64_t>(r));
        Eigen::VectorXd theta(d + 2);
        for (int j = 0; j < d; ++j) theta(j) = -1.5 + 3.0 * init.next_uniform();
        theta(d) = -0.7 + 1.4 * init.next_uniform();
        theta(d + 1) = -3.0 + 2.5 * init.next_uniform();

        GpEval cur = gp_evidence(xstd, ystd, theta);
        if (!cur.ok) continue;
        best.restart_init_logml.push_back(cur.logml);

        // Gradient ascent, accept-only with adaptive step.
        double step = 0.1;
        for (int it = 0; it < 120; ++it) {
            Eigen::VectorXd cand = theta + step * cur.grad;
            GpEval next = gp_evidence(xstd, ystd, cand);
            if (next.ok && next.logml > cur.logml) {
                theta = cand;
                cur = next;
                step = std::min(step * 1.25, 2.0);
            } else {
                step *= 0.5;
                if (step < 1e-7) break;
            }
        }
        if (cur.logml > best.log_marginal) {
            best.log_marginal = cur.logml;
            best_theta = theta;
        }
    }
    if (!best_theta.size()) throw numeric_error("fit_ard: kernel matrix not PD at any restart");

    best.length_scales.resize(d);
    best.inverse_length_scales.resize(d);
    best.std_inverse_length_scales.resize(d);
    for (int j = 0; j < d; ++j) {
        const double lam = std::exp(best_theta(j)) * xs(j);
        best.length_scales[j] = lam;
        best.inverse_length_scales[j] = 1.0 / lam;
        best.std_inverse_length_scales[j] = std::exp(-best_theta(j));
    }
    best.signal_scale = std::exp(best_theta(d)) * ys;
    best.noise_scale = std::exp(best_theta(d + 1)) * ys;
    return best;
}

std::vector<ArdResult> randomized_ard(const ArdDataset& data, int n_subsamples, double fraction,
                                      int restarts, const RandomStream& stream) {
    if (fraction <= 0.0 || fraction > 1.0) throw config_error("randomized_ard: fraction in (0,1]");
    if (n_subsamples < 1) throw config_error("randomized_ard: need at least one sub-sample");
    const int n = static_cast<int>(data.x.rows());
    const int keep = std::max(10, static_cast<int>(std::lround(fraction * n)));
    std::vector<ArdResult> out(n_subsamples);

    parallel_for(n_subsamples, [&](int s) {
        RandomStream sub = stream.split(static_cast<std::uint64_t>(s));
        // Partial Fisher-Yates draw without replacement; the full sample
        // keeps its order so fraction = 1 reduces exactly to fit_ard.
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        if (keep < n)
            for (int j = 0; j < std::min(keep, n - 1); ++j) {
                const int pick = j + static_cast<int>(sub.next_uniform() * (n - j));
                std::swap(idx[j], idx[std::min(pick, n - 1)]);
            }
        ArdDataset d2;
        d2.names = data.names;
        const int rows = std::min(keep, n);
        d2.x.resize(rows, data.x.cols());
        d2.y.resize(rows);
        for (int j = 0; j < rows; ++j) {
            d2.x.row(j) = data.x.row(idx[j]);
            d2.y(j) = data.y(idx[j]);
        }
        out[s] = fit_ard(d2, restarts, sub.split(0xF17));
    });
    return out;
}

}  // namespace hiercva
