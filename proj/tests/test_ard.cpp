#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hiercva/ard.hpp"
#include "hiercva/errors.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace hiercva;

namespace {

ModelParams ard_model(int economies, int clients) {
    ModelParams p;
    p.rates.push_back({0.5, 0.03, 0.01, 0.02});
    for (int e = 1; e < economies; ++e) {
        p.rates.push_back({0.4, 0.025, 0.012, 0.02});
        p.fx.push_back({0.1, -0.2, 1.1});
    }
    p.credit.push_back({0.3, 0.01, 0.05, 0.01});  // bank
    for (int c = 0; c < clients; ++c) p.credit.push_back({0.5, 0.04, 0.10, 0.03});
    return p;
}

ArdDataset planted_dataset(int n, double noise, std::uint64_t seed) {
    // y depends on dimension 0 only; dimension 1 is pure noise input.
    ArdDataset d;
    d.x.resize(n, 2);
    d.y.resize(n);
    d.names = {"signal", "noise"};
    RandomStream s(seed);
    for (int i = 0; i < n; ++i) {
        d.x(i, 0) = s.next_normal();
        d.x(i, 1) = s.next_normal();
        d.y(i) = std::sin(1.5 * d.x(i, 0)) + noise * s.next_normal();
    }
    return d;
}

}  // namespace

TEST_CASE("planted relevance: the signal dimension dominates") {
    ArdDataset data = planted_dataset(200, 0.05, 3);
    ArdResult fit = fit_ard(data, 8, RandomStream(5));
    REQUIRE(fit.inverse_length_scales.size() == 2);
    CHECK(fit.std_inverse_length_scales[0] > 5.0 * fit.std_inverse_length_scales[1]);
    // Monotone accept: the returned evidence beats every restart's start.
    for (double init : fit.restart_init_logml) CHECK(fit.log_marginal >= init);
}

TEST_CASE("constant output has no relevant directions") {
    ArdDataset data = planted_dataset(60, 0.0, 7);
    data.y.setConstant(3.25);
    ArdResult fit = fit_ard(data, 4, RandomStream(9));
    for (double il : fit.inverse_length_scales) CHECK(il < 1e-2);
}

TEST_CASE("input scaling equivariance is exact under internal standardization") {
    ArdDataset data = planted_dataset(120, 0.1, 11);
    ArdResult base = fit_ard(data, 4, RandomStream(13));

    ArdDataset scaled = data;
    const double s = 37.5;
    scaled.x.col(1) *= s;
    ArdResult rescaled = fit_ard(scaled, 4, RandomStream(13));
    CHECK(rescaled.log_marginal == doctest::Approx(base.log_marginal).epsilon(1e-12));
    CHECK(rescaled.length_scales[1] ==
          doctest::Approx(s * base.length_scales[1]).epsilon(1e-12));
    CHECK(rescaled.length_scales[0] == doctest::Approx(base.length_scales[0]).epsilon(1e-12));
}

TEST_CASE("randomized ard bookkeeping and the full-sample reduction") {
    ArdDataset data = planted_dataset(80, 0.1, 17);
    auto rows = randomized_ard(data, 6, 0.8, 3, RandomStream(19));
    CHECK(rows.size() == 6);

    auto full = randomized_ard(data, 1, 1.0, 3, RandomStream(21));
    ArdResult direct = fit_ard(data, 3, RandomStream(21).split(0).split(0xF17));
    REQUIRE(full.size() == 1);
    for (std::size_t j = 0; j < direct.inverse_length_scales.size(); ++j)
        CHECK(full[0].inverse_length_scales[j] == direct.inverse_length_scales[j]);

    // Planted-relevance ordering is stable across sub-samples.
    ArdDataset planted = planted_dataset(200, 0.05, 23);
    auto subs = randomized_ard(planted, 10, 0.8, 4, RandomStream(25));
    int ordered = 0;
    for (const auto& r : subs)
        if (r.std_inverse_length_scales[0] > r.std_inverse_length_scales[1]) ++ordered;
    CHECK(ordered >= 8);
}

TEST_CASE("sample_variances: degenerate prior, deterministic model, smoke sweep") {
    ModelParams p = ard_model(2, 1);
    TimeGrid grid{6, 2, 1.0};
    BookGenSpec gen;
    gen.count = 3;
    auto book = generate_book(p, grid, gen, RandomStream(1));

    SUBCASE("degenerate prior shares the parameter draw") {
        ArdPrior point;
        point.vol_lo = point.vol_hi = 1.0;
        point.level_lo = point.level_hi = 1.0;
        point.speed_lo = point.speed_hi = 1.0;
        auto samples = sample_variances(p, grid, book, point, 8, 1024, RandomStream(2));
        REQUIRE(samples.size() == 8);
        // Same nu, independent paths: values agree up to Monte Carlo noise
        // (loss variances are heavy-tailed, so the band is generous).
        std::vector<double> vxi;
        for (const auto& s : samples) vxi.push_back(s.v_xi);
        const double m = testsup::mean(vxi);
        CHECK(m > 0.0);
        for (double v : vxi) {
            CHECK(v > 0.25 * m);
            CHECK(v < 4.0 * m);
        }
    }

    SUBCASE("deterministic model yields exactly zero variances") {
        ModelParams q = ard_model(2, 1);
        q.rates[0].sigma = q.rates[1].sigma = 0.0;
        q.fx[0].sigma = 0.0;
        for (auto& c : q.credit) c.nu = 0.0;
        q.credit[1].gamma0 = 0.0;
        q.credit[1].delta = 0.0;
        auto bookq = generate_book(q, grid, gen, RandomStream(1));
        ArdPrior point;
        point.vol_lo = point.vol_hi = 1.0;
        point.level_lo = point.level_hi = 1.0;
        point.speed_lo = point.speed_hi = 1.0;
        auto samples = sample_variances(q, grid, bookq, point, 2, 64, RandomStream(3));
        for (const auto& s : samples) {
            // Exact zeros up to the dust of averaging identical doubles.
            for (double v : s.v_x) CHECK(v <= 1e-20);
            for (double v : s.v_y) CHECK(v <= 1e-20);
            CHECK(s.v_xi <= 1e-20);
        }
    }

    SUBCASE("smoke sweep: 100 prior draws give finite nonnegative variances") {
        ArdPrior prior;  // default boxes
        int rejected = -1;
        auto samples = sample_variances(p, grid, book, prior, 100, 64, RandomStream(4),
                                        &rejected);
        CHECK(samples.size() == 100);
        CHECK(rejected >= 0);
        for (const auto& s : samples) {
            CHECK(std::isfinite(s.v_xi));
            CHECK(s.v_xi >= 0.0);
            for (double v : s.v_x) CHECK(v >= 0.0);
            for (double v : s.v_y) CHECK(v >= 0.0);
        }
    }
}

TEST_CASE("single-client study: the default indicator variance dominates") {
    // Scaled-down variant of the box-plot study: one client, wide credit
    // prior, narrow market prior; the inverse length-scale of V(X) must
    // exceed every V(Y) family.
    ModelParams p = ard_model(2, 1);
    TimeGrid grid{8, 4, 1.0};
    BookGenSpec gen;
    gen.count = 4;
    gen.notional_min = 2.0;
    gen.notional_max = 20.0;
    auto book = generate_book(p, grid, gen, RandomStream(31));

    ArdPrior prior;
    prior.level_lo = 0.25;
    prior.level_hi = 4.0;   // wide hazard-level boxes drive default variance
    prior.vol_lo = 0.9;
    prior.vol_hi = 1.1;
    prior.speed_lo = 0.9;
    prior.speed_hi = 1.1;
    auto samples = sample_variances(p, grid, book, prior, 80, 192, RandomStream(33));
    ArdDataset data = make_ard_dataset(samples, true, 2, 1);
    REQUIRE(data.names.front() == "V(X)");
    ArdResult fit = fit_ard(data, 8, RandomStream(35));
    // Relevance is compared per unit input spread (the box-plot scale).
    for (std::size_t j = 1; j < fit.std_inverse_length_scales.size(); ++j)
        CHECK(fit.std_inverse_length_scales[0] > fit.std_inverse_length_scales[j]);
}
