#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hiercva/errors.hpp"
#include "hiercva/planner.hpp"
#include "hiercva/rng.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace hiercva;

TEST_CASE("estimate_qr: degenerate cases are exact") {
    RandomStream s(3);
    const int n = 5000;
    std::vector<double> g1(n), g2(n);

    SUBCASE("g depends on Y only") {
        for (int k = 0; k < n; ++k) g1[k] = g2[k] = s.next_normal();
        QRDecomposition qr = estimate_qr(g1, g2);
        CHECK(qr.q == doctest::Approx(0.0).epsilon(1e-14));
        CHECK(qr.r == doctest::Approx(qr.total).epsilon(1e-14));
    }
    SUBCASE("pure inner noise") {
        for (int k = 0; k < n; ++k) {
            g1[k] = s.next_normal();
            g2[k] = s.next_normal();
        }
        QRDecomposition qr = estimate_qr(g1, g2);
        CHECK(std::fabs(qr.r) < 3 * qr.r_std_error + 0.01);
        CHECK(qr.q == doctest::Approx(qr.total - qr.r).epsilon(1e-14));
    }
}

TEST_CASE("estimate_qr recovers a planted variance decomposition") {
    // g = A + B with A Y-measurable (var a^2) and B conditional noise
    // (var b^2): Q -> b^2, R -> a^2.
    const double a = 1.5, b = 0.7;
    RandomStream s(11);
    const int n = 100000;
    std::vector<double> g1(n), g2(n);
    for (int k = 0; k < n; ++k) {
        const double shared = a * s.next_normal();
        g1[k] = shared + b * s.next_normal();
        g2[k] = shared + b * s.next_normal();
    }
    QRDecomposition qr = estimate_qr(g1, g2);
    CHECK(std::fabs(qr.r - a * a) < 3 * qr.r_std_error);
    CHECK(std::fabs(qr.q - b * b) < 3 * qr.q_std_error);
    CHECK(qr.q + qr.r == doctest::Approx(qr.total).epsilon(1e-13));
    CHECK_THROWS_AS(estimate_qr({1.0}, {1.0}), numeric_error);
}

TEST_CASE("optimal_n closed form and scaling") {
    CHECK(optimal_n(1.0, 1.0, 1.0).value == doctest::Approx(1.0));
    // Paper-scale magnitudes: sqrt(Q/R) = 22 and P ~ 497 lands in the
    // few-hundreds range.
    const double q = 22.0 * 22.0, r = 1.0, p = 497.0;
    const double n = optimal_n(q, r, p).value;
    CHECK(n == doctest::Approx(22.0 * std::sqrt(497.0)).epsilon(1e-12));
    CHECK(n > 100.0);
    CHECK(n < 1000.0);
    // sqrt(P) scaling is exact.
    CHECK(optimal_n(3.0, 2.0, 4.0 * p).value ==
          doctest::Approx(2.0 * optimal_n(3.0, 2.0, p).value).epsilon(1e-14));
    // Vanishing R: +inf sentinel with the flag set.
    OptimalN sentinel = optimal_n(1.0, 0.0, 10.0);
    CHECK(std::isinf(sentinel.value));
    CHECK(sentinel.r_floored);
}

TEST_CASE("block-mean variance matches R/M + Q/(MN)") {
    // Hierarchical Gaussian toy, repeated blocks as the oracle of the
    // proof's variance formula.
    const double a = 1.0, b = 2.0;  // R = a^2, Q = b^2
    RandomStream root(17);
    auto block_mean = [&](RandomStream s, int m, int n_rep) {
        double acc = 0.0;
        for (int k = 0; k < m; ++k) {
            const double shared = a * s.next_normal();
            for (int l = 0; l < n_rep; ++l) acc += shared + b * s.next_normal();
        }
        return acc / (static_cast<double>(m) * n_rep);
    };
    for (auto [m, n_rep] : std::vector<std::pair<int, int>>{{256, 1}, {256, 4}, {64, 16}}) {
        const int reps = 4000;
        std::vector<double> means(reps);
        for (int rrep = 0; rrep < reps; ++rrep)
            means[rrep] = block_mean(root.split(m).split(n_rep).split(rrep), m, n_rep);
        const double want = a * a / m + b * b / (static_cast<double>(m) * n_rep);
        const double got = testsup::variance(means);
        // Var of a variance estimate of Gaussians: ~ Var * sqrt(2/(reps-1)).
        const double se = want * std::sqrt(2.0 / (reps - 1));
        CHECK(std::fabs(got - want) < 3 * se);
    }
}

TEST_CASE("the proof's variance expression is minimized at sqrt(QP/R)") {
    RandomStream s(23);
    for (int trial = 0; trial < 20; ++trial) {
        const double q = 0.1 + 5.0 * s.next_uniform();
        const double r = 0.1 + 5.0 * s.next_uniform();
        const double p = 1.0 + 900.0 * s.next_uniform();
        const double n_star = std::sqrt(q * p / r);
        const double budget = 1e4;
        auto expr = [&](double n) {
            return (r / budget) *
                   ((1.0 / n) * (n - n_star) * (n - n_star) +
                    (std::sqrt(q / r) + std::sqrt(p)) * (std::sqrt(q / r) + std::sqrt(p)));
        };
        // Scan a grid that contains n_star; the argmin must be the closest
        // grid point to n_star.
        double best_n = 0.0, best_v = 1e300;
        double closest = 0.0, closest_d = 1e300;
        for (double n = n_star / 8.0; n <= n_star * 8.0; n += n_star / 64.0) {
            const double v = expr(n);
            if (v < best_v) {
                best_v = v;
                best_n = n;
            }
            if (std::fabs(n - n_star) < closest_d) {
                closest_d = std::fabs(n - n_star);
                closest = n;
            }
        }
        CHECK(best_n == doctest::Approx(closest).epsilon(1e-12));
    }
}

TEST_CASE("estimate_p recovers the cost ratio") {
    // Noiseless timings shaped exactly as (P+N)/(P+N').
    const double p = 497.0, n1 = 512.0, n2 = 1024.0;
    const double t2 = 10.0;
    const double t1 = t2 * (p + n1) / (p + n2);
    CHECK(estimate_p(n1, t1, n2, t2) == doctest::Approx(497.0).epsilon(1e-9));

    // Degenerate timing exercises the error path.
    CHECK_THROWS_AS(estimate_p(512.0, 10.0, 1024.0, 10.0), numeric_error);
    CHECK_THROWS_AS(estimate_p(512.0, 10.0, 512.0, 12.0), contract_error);

    // 1% multiplicative noise: recovered within 15% in most repeats.
    RandomStream s(31);
    int good = 0;
    const int reps = 100;
    for (int rep = 0; rep < reps; ++rep) {
        const double noisy_t1 = t1 * (1.0 + 0.01 * s.next_normal());
        const double noisy_t2 = t2 * (1.0 + 0.01 * s.next_normal());
        try {
            const double est = estimate_p(n1, noisy_t1, n2, noisy_t2);
            if (std::fabs(est - p) / p < 0.15) ++good;
        } catch (const numeric_error&) {
        }
    }
    CHECK(good >= 85);
}

TEST_CASE("heuristic_m budget arithmetic") {
    CHECK(heuristic_m((512.0 + 497.0) * 1000.0, 512.0, 497.0) == 1000);
    CHECK(heuristic_m(16384.0 * (512.0 + 497.0), 512.0, 497.0) == 16384);
    CHECK(heuristic_m(512.0 + 497.0, 512.0, 497.0) == 1);
    CHECK_THROWS_AS(heuristic_m(100.0, 512.0, 497.0), config_error);
}

TEST_CASE("required_m: monotone in N, N-free when b1 = l1 = 0, double-checked") {
    BoundParams bp;
    bp.b1 = 1.0;
    bp.b2 = 0.5;
    bp.l1 = 0.8;
    bp.l2 = 0.4;
    bp.l_bar = 2.0;
    bp.l_prime = 3.0;
    bp.diameter = 10.0;
    bp.dim = 1000;
    bp.epsilon = 0.2;
    bp.delta = 0.1;
    bp.alpha = 0.05;
    bp.u = 0.5;

    const long long m8 = required_m(bp, 8.0);
    const long long m64 = required_m(bp, 64.0);
    const long long m4096 = required_m(bp, 4096.0);
    CHECK(m64 <= m8);
    CHECK(m4096 <= m64);
    CHECK(m4096 >= 1);

    // Independent direct transcription of the displayed two-term max
    // (small d so the covering number fits in a double without log tricks).
    BoundParams small = bp;
    small.dim = 7;
    const double gap = small.epsilon - small.delta;
    const double cover = std::pow(8.0 * small.l_prime * small.diameter / gap + 1.0, 7.0) + 1.0;
    const double t1 = 8.0 * (small.b1 * small.b1 / 16.0 + small.b2 * small.b2) / (gap * gap) *
                      std::log(cover / (small.u * small.alpha));
    const double t2 = 8.0 * (small.l1 * small.l1 / 16.0 + small.l2 * small.l2) /
                      ((small.l_prime - small.l_bar) * (small.l_prime - small.l_bar)) *
                      std::log(1.0 / ((1.0 - small.u) * small.alpha));
    CHECK(required_m(small, 16.0) == static_cast<long long>(std::ceil(std::max(t1, t2))));

    // No inner-noise terms: M is independent of N.
    BoundParams flat = bp;
    flat.b1 = 0.0;
    flat.l1 = 0.0;
    CHECK(required_m(flat, 2.0) == required_m(flat, 1 << 20));

    // The large-N limit stays strictly positive.
    CHECK(required_m(bp, 1e12) >= required_m(flat, 1e12));
    CHECK(required_m(flat, 1e12) > 0);

    BoundParams bad = bp;
    bad.delta = 0.3;  // delta >= epsilon
    CHECK_THROWS_AS(required_m(bad, 8.0), config_error);
}

TEST_CASE("average_optimal_n: arithmetic mean with median reported") {
    std::vector<TraceEntry> constant{{4.0, 1.0}, {4.0, 1.0}, {4.0, 1.0}};
    AverageN c = average_optimal_n(constant, 1.0);
    CHECK(c.mean_n == 2);
    CHECK(c.median_n == 2);

    // Entries {10, 20, 30} at P = 1 -> mean 20.
    std::vector<TraceEntry> trace{{100.0, 1.0}, {400.0, 1.0}, {900.0, 1.0}};
    AverageN avg = average_optimal_n(trace, 1.0);
    CHECK(avg.mean_n == 20);
    CHECK(avg.median_n == 20);
    CHECK(avg.per_entry.size() == 3);
    CHECK_THROWS_AS(average_optimal_n({}, 1.0), contract_error);
}
