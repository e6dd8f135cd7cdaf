#include "hiercva/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hiercva/errors.hpp"

namespace hiercva {

QRDecomposition estimate_qr(const std::vector<double>& g1, const std::vector<double>& g2) {
    if (g1.size() != g2.size()) throw contract_error("estimate_qr: pair length mismatch");
    const std::size_t n = g1.size();
    if (n < 2) throw numeric_error("estimate_qr: need at least two outer paths");

    double grand = 0.0;
    for (std::size_t k = 0; k < n; ++k) grand += g1[k] + g2[k];
    grand /= static_cast<double>(2 * n);

    double total = 0.0, r = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double d1 = g1[k] - grand;
        const double d2 = g2[k] - grand;
        total += d1 * d1 + d2 * d2;
        r += d1 * d2;
    }
    total /= static_cast<double>(2 * n);
    r /= static_cast<double>(n);

    QRDecomposition qr;
    qr.total = total;
    qr.r = r;
    qr.q = total - r;  // identity by construction
    qr.n_pairs = n;

    // Batch-means standard errors (20 batches, or fewer for tiny samples).
    const std::size_t n_batches = std::min<std::size_t>(20, n / 2);
    if (n_batches >= 2) {
        std::vector<double> qb(n_batches), rb(n_batches);
        const std::size_t bs = n / n_batches;
        for (std::size_t b = 0; b < n_batches; ++b) {
            double bgrand = 0.0;
            for (std::size_t k = b * bs; k < (b + 1) * bs; ++k) bgrand += g1[k] + g2[k];
            bgrand /= static_cast<double>(2 * bs);
            double bt = 0.0, br = 0.0;
            for (std::size_t k = b * bs; k < (b + 1) * bs; ++k) {
                const double d1 = g1[k] - bgrand;
                const double d2 = g2[k] - bgrand;
                bt += d1 * d1 + d2 * d2;
                br += d1 * d2;
            }
            bt /= static_cast<double>(2 * bs);
            br /= static_cast<double>(bs);
            qb[b] = bt - br;
            rb[b] = br;
        }
        auto se = [&](const std::vector<double>& v) {
            double m = 0.0;
            for (double x : v) m += x;
            m /= static_cast<double>(v.size());
            double s = 0.0;
            for (double x : v) s += (x - m) * (x - m);
            s /= static_cast<double>(v.size() - 1);
            return std::sqrt(s / static_cast<double>(v.size()));
        };
        qr.q_std_error = se(qb);
        qr.r_std_error = se(rb);
    }
    return qr;
}

OptimalN optimal_n(double q, double r, double p) {
    if (q <= 0.0 || p <= 0.0) throw contract_error("optimal_n: Q and P must be positive");
    OptimalN out;
    // MC covariance estimates can come out negative; clamp at a small
    // positive floor relative to the total variance before dividing.
    const double floor = 1e-12 * (q + std::max(r, 0.0));
    if (r < floor) {
        out.value = std::numeric_limits<double>::infinity();
        out.r_floored = true;
        return out;
    }
    out.value = std::sqrt(q * p / r);
    return out;
}

double estimate_p(double n1, double t1, double n2, double t2) {
    if (n1 == n2) throw contract_error("estimate_p: need two distinct N values");
    if (t1 <= 0.0 || t2 <= 0.0) throw contract_error("estimate_p: timings must be positive");
    if (t1 == t2)
        throw numeric_error("estimate_p: equal timings at distinct N; "
                            "increase M to beat measurement noise");
    const double p = (n2 * t1 - n1 * t2) / (t2 - t1);
    if (!std::isfinite(p) || p <= 0.0)
        throw numeric_error("estimate_p: non-positive cost ratio; timings too noisy, "
                            "rerun with larger M");
    return p;
}

long long heuristic_m(double budget, double n, double p) {
    if (budget <= 0.0 || n <= 0.0 || p <= 0.0)
        throw contract_error("heuristic_m: inputs must be positive");
    if (budget < n + p) throw config_error("heuristic_m: budget below the cost of one path");
    return static_cast<long long>(std::floor(budget / (n + p)));
}

void BoundParams::validate() const {
    if (!(0.0 < delta && delta < epsilon)) throw config_error("bounds: need 0 < delta < epsilon");
    if (!(0.0 < alpha && alpha < 1.0)) throw config_error("bounds: need 0 < alpha < 1");
    if (!(0.0 < u && u < 1.0)) throw config_error("bounds: need 0 < u < 1");
    if (!(l_prime > l_bar)) throw config_error("bounds: need L' > L_bar");
    if (b1 < 0.0 || b2 <= 0.0 || l1 < 0.0 || l2 <= 0.0)
        throw config_error("bounds: scales must be positive (b1, l1 may be zero)");
    if (diameter <= 0.0 || dim < 1) throw config_error("bounds: need D > 0 and d >= 1");
}

long long required_m(const BoundParams& bp, double n) {
    bp.validate();
    if (n <= 0.0) throw contract_error("required_m: N must be positive");

    // log( (8 L' D / (eps-delta) + 1)^d + 1 ) in log space.
    const double gap = bp.epsilon - bp.delta;
    const double t = static_cast<double>(bp.dim) * std::log(8.0 * bp.l_prime * bp.diameter / gap + 1.0);
    const double log_cover = t + std::log1p(std::exp(-t));

    const double term1 =
        8.0 * (bp.b1 * bp.b1 / n + bp.b2 * bp.b2) / (gap * gap) *
        (std::log(1.0 / (bp.u * bp.alpha)) + log_cover);
    const double term2 = 8.0 * (bp.l1 * bp.l1 / n + bp.l2 * bp.l2) /
                         ((bp.l_prime - bp.l_bar) * (bp.l_prime - bp.l_bar)) *
                         std::log(1.0 / ((1.0 - bp.u) * bp.alpha));
    const double m = std::ceil(std::max(term1, term2));
    if (!std::isfinite(m) || m > 4.0e18)
        throw config_error("required_m: configuration yields an unrepresentable M");
    return std::max<long long>(static_cast<long long>(m), 1);
}

AverageN average_optimal_n(const std::vector<TraceEntry>& trace, double p) {
    if (trace.empty()) throw contract_error("average_optimal_n: empty trace");
    AverageN out;
    out.per_entry.reserve(trace.size());
    double sum = 0.0;
    for (const auto& e : trace) {
        // MC noise can push R to or below zero; clamp before dividing.
        const double total = e.q + std::max(e.r, 0.0);
        const double r = std::max(e.r, 1e-12 * total);
        if (e.q <= 0.0 || r <= 0.0)
            throw numeric_error("average_optimal_n: degenerate trace entry");
        const double value = std::sqrt(e.q * p / r);
        out.per_entry.push_back(value);
        sum += value;
    }
    out.mean_n = static_cast<long long>(std::llround(sum / static_cast<double>(trace.size())));
    std::vector<double> sorted = out.per_entry;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    const double med = (sorted.size() % 2 == 1) ? sorted[mid]
                                                : 0.5 * (sorted[mid - 1] + sorted[mid]);
    out.median_n = static_cast<long long>(std::llround(med));
    return out;
}

}  // namespace hiercva
