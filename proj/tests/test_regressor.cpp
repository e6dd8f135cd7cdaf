#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hiercva/errors.hpp"
#include "hiercva/regressor.hpp"
#include "test_support.hpp"

#include <cmath>
#include <filesystem>

using namespace hiercva;

namespace {

TrainConfig toy_config(int width = 16, int epochs = 8, int batches = 4) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.n_batches = batches;
    cfg.hidden_layers = 2;
    cfg.width = width;
    cfg.seed = 7;
    return cfg;
}

// Collect all parameters into one flat vector (for FD checks).
std::vector<double*> parameter_slots(NetworkParams& net) {
    std::vector<double*> slots;
    for (auto& w : net.weights)
        for (Eigen::Index i = 0; i < w.size(); ++i) slots.push_back(w.data() + i);
    for (auto& b : net.biases)
        for (Eigen::Index i = 0; i < b.size(); ++i) slots.push_back(b.data() + i);
    slots.push_back(&net.mu);
    return slots;
}

std::vector<double> gradient_slots(const NetworkParams& net, const Gradients& g) {
    std::vector<double> out;
    for (std::size_t l = 0; l < net.weights.size(); ++l)
        for (Eigen::Index i = 0; i < g.w[l].size(); ++i) out.push_back(*(g.w[l].data() + i));
    for (std::size_t l = 0; l < net.biases.size(); ++l)
        for (Eigen::Index i = 0; i < g.b[l].size(); ++i) out.push_back(*(g.b[l].data() + i));
    out.push_back(g.mu);
    return out;
}

}  // namespace

TEST_CASE("forward: zero network is the constant mu, positive head floors at mu") {
    TrainConfig cfg = toy_config();
    NetworkParams net = init_network(3, cfg, RandomStream(1));
    for (auto& w : net.weights) w.setZero();
    for (auto& b : net.biases) b.setZero();
    net.mu = 0.37;
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(20, 3);
    Eigen::VectorXd out = forward(net, x);
    for (int i = 0; i < 20; ++i) CHECK(out(i) == doctest::Approx(0.37).epsilon(1e-15));

    NetworkParams pos = init_network(3, cfg, RandomStream(2));
    pos.positive_head = true;
    pos.mu = 0.0;
    Eigen::VectorXd po = forward(pos, x);
    for (int i = 0; i < 20; ++i) CHECK(po(i) >= 0.0);
    pos.mu = 0.25;
    po = forward(pos, x);
    for (int i = 0; i < 20; ++i) CHECK(po(i) >= 0.25);
}

TEST_CASE("gradients match central finite differences") {
    // Smooth activations at 10 random points; relative tolerance 1e-5.
    for (Activation act : {Activation::Tanh, Activation::Sigmoid, Activation::Softplus}) {
        TrainConfig cfg = toy_config(6);
        cfg.activation = act;
        NetworkParams net = init_network(4, cfg, RandomStream(11));
        net.mu = 0.1;
        RandomStream ds(12);
        Eigen::MatrixXd x(10, 4);
        Eigen::VectorXd y(10);
        for (int i = 0; i < 10; ++i) {
            for (int j = 0; j < 4; ++j) x(i, j) = ds.next_normal();
            y(i) = ds.next_normal();
        }

        Gradients g;
        quadratic_loss(net, x, y, &g);
        std::vector<double> analytic = gradient_slots(net, g);
        std::vector<double*> slots = parameter_slots(net);
        REQUIRE(analytic.size() == slots.size());

        double max_rel = 0.0;
        for (std::size_t s = 0; s < slots.size(); ++s) {
            const double h = 1e-6 * std::max(1.0, std::fabs(*slots[s]));
            const double save = *slots[s];
            *slots[s] = save + h;
            const double lp = quadratic_loss(net, x, y, nullptr);
            *slots[s] = save - h;
            const double lm = quadratic_loss(net, x, y, nullptr);
            *slots[s] = save;
            const double fd = (lp - lm) / (2.0 * h);
            const double scale = std::max({std::fabs(fd), std::fabs(analytic[s]), 1e-8});
            max_rel = std::max(max_rel, std::fabs(fd - analytic[s]) / scale);
        }
        CHECK(max_rel < 1e-5);
    }
}

TEST_CASE("positive-head gradients match finite differences away from kinks") {
    TrainConfig cfg = toy_config(6);
    NetworkParams net = init_network(3, cfg, RandomStream(21));
    net.positive_head = true;
    net.mu = 0.05;
    RandomStream ds(22);
    Eigen::MatrixXd x(16, 3);
    Eigen::VectorXd y(16);
    for (int i = 0; i < 16; ++i) {
        for (int j = 0; j < 3; ++j) x(i, j) = ds.next_normal();
        y(i) = std::fabs(ds.next_normal());
    }
    Gradients g;
    quadratic_loss(net, x, y, &g);
    std::vector<double> analytic = gradient_slots(net, g);
    std::vector<double*> slots = parameter_slots(net);
    double max_rel = 0.0;
    for (std::size_t s = 0; s < slots.size(); ++s) {
        const double h = 1e-6 * std::max(1.0, std::fabs(*slots[s]));
        const double save = *slots[s];
        *slots[s] = save + h;
        const double lp = quadratic_loss(net, x, y, nullptr);
        *slots[s] = save - h;
        const double lm = quadratic_loss(net, x, y, nullptr);
        *slots[s] = save;
        const double fd = (lp - lm) / (2.0 * h);
        const double scale = std::max({std::fabs(fd), std::fabs(analytic[s]), 1e-8});
        max_rel = std::max(max_rel, std::fabs(fd - analytic[s]) / scale);
    }
    // Random preactivations are almost surely away from the measure-zero tie
    // f = 0, so the subgradient choice never fires.
    CHECK(max_rel < 1e-5);
}

TEST_CASE("make_batches is an equal-size partition") {
    SUBCASE("2x2 in two batches") {
        auto b = make_batches(2, 2, 2);
        REQUIRE(b.size() == 2);
        CHECK(b[0] == std::pair<std::size_t, std::size_t>{0, 2});
        CHECK(b[1] == std::pair<std::size_t, std::size_t>{2, 4});
    }
    SUBCASE("single batch is everything") {
        auto b = make_batches(5, 3, 1);
        REQUIRE(b.size() == 1);
        CHECK(b[0] == std::pair<std::size_t, std::size_t>{0, 15});
    }
    SUBCASE("4x8 in 4 batches: brute-force partition check") {
        auto b = make_batches(4, 8, 4);
        REQUIRE(b.size() == 4);
        std::vector<int> hit(32, 0);
        for (auto [lo, hi] : b) {
            CHECK(hi - lo == 8);
            for (std::size_t f = lo; f < hi; ++f) ++hit[f];
        }
        for (int f = 0; f < 32; ++f) CHECK(hit[f] == 1);  // disjoint and exhaustive
    }
    SUBCASE("divisibility enforced") {
        CHECK_THROWS_AS(make_batches(3, 3, 2), config_error);
    }
}

TEST_CASE("refit_output_layer solves the ridge normal equations") {
    // Width-1 hidden feature, scalar input: compare against the hand 2x2 solve.
    TrainConfig cfg = toy_config(1);
    cfg.hidden_layers = 1;
    NetworkParams net = init_network(1, cfg, RandomStream(31));
    net.mu = 0.2;
    RandomStream ds(32);
    Eigen::MatrixXd x(40, 1);
    Eigen::VectorXd y(40);
    for (int i = 0; i < 40; ++i) {
        x(i, 0) = ds.next_normal();
        y(i) = 0.8 * x(i, 0) + 0.1 * ds.next_normal();
    }
    const double ridge = 1e-8;
    NetworkParams refitted = net;
    refit_output_layer(refitted, x, y, ridge);

    // Hidden feature h_i = act(w x_i + b).
    const double w0 = net.weights[0](0, 0), b0 = net.biases[0](0);
    Eigen::VectorXd hidden(40);
    for (int i = 0; i < 40; ++i) hidden(i) = std::tanh(w0 * x(i, 0) + b0);
    double shh = 0.0, sh1 = 0.0, s11 = 40.0, shy = 0.0, s1y = 0.0;
    for (int i = 0; i < 40; ++i) {
        shh += hidden(i) * hidden(i);
        sh1 += hidden(i);
        shy += hidden(i) * (y(i) - net.mu);
        s1y += (y(i) - net.mu);
    }
    const double lam = ridge * (shh + s11) / 2.0;
    // Solve [shh+lam, sh1; sh1, s11+lam] [w; b] = [shy; s1y].
    const double det = (shh + lam) * (s11 + lam) - sh1 * sh1;
    const double w_hand = ((s11 + lam) * shy - sh1 * s1y) / det;
    const double b_hand = ((shh + lam) * s1y - sh1 * shy) / det;
    CHECK(refitted.weights[1](0, 0) == doctest::Approx(w_hand).epsilon(1e-10));
    CHECK(refitted.biases[1](0) == doctest::Approx(b_hand).epsilon(1e-10));
}

TEST_CASE("refit_output_layer never raises the in-sample plain-head MSE") {
    RandomStream root(777);
    for (int inst = 0; inst < 20; ++inst) {
        TrainConfig cfg = toy_config(8);
        cfg.seed = 100 + inst;
        NetworkParams net = init_network(3, cfg, root.split(inst));
        net.mu = 0.1 * inst;
        RandomStream ds = root.split(1000 + inst);
        Eigen::MatrixXd x(64, 3);
        Eigen::VectorXd y(64);
        for (int i = 0; i < 64; ++i) {
            for (int j = 0; j < 3; ++j) x(i, j) = ds.next_normal();
            y(i) = std::sin(x(i, 0)) + 0.3 * ds.next_normal();
        }
        const double before = quadratic_loss(net, x, y, nullptr);
        refit_output_layer(net, x, y, 1e-8);
        const double after = quadratic_loss(net, x, y, nullptr);
        CHECK(after <= before + 1e-8 * std::max(1.0, before));
    }
}

TEST_CASE("refit is a fixed point when labels equal the current outputs") {
    TrainConfig cfg = toy_config(8);
    NetworkParams net = init_network(3, cfg, RandomStream(41));
    net.mu = 0.3;
    RandomStream ds(42);
    Eigen::MatrixXd x(64, 3);
    for (int i = 0; i < 64; ++i)
        for (int j = 0; j < 3; ++j) x(i, j) = ds.next_normal();
    Eigen::VectorXd y = forward(net, x);
    const double before = quadratic_loss(net, x, y, nullptr);
    CHECK(before == doctest::Approx(0.0).epsilon(1e-18));
    refit_output_layer(net, x, y, 1e-8);
    const double after = quadratic_loss(net, x, y, nullptr);
    CHECK(after <= 1e-10);
}

TEST_CASE("train_base: constant labels are fit to the mean predictor") {
    const int rows = 512;
    Eigen::MatrixXd x(rows, 2);
    RandomStream ds(51);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < 2; ++j) x(i, j) = ds.next_normal();
    const double c = 0.7;
    Eigen::VectorXd y = Eigen::VectorXd::Constant(rows, c);

    TrainConfig cfg = toy_config(16, 8, 8);
    NetworkParams init = init_network(2, cfg, RandomStream(cfg.seed));
    init.mu = y.mean();  // label-mean initialization
    auto [best, report] = train_base(x, y, make_batches(rows, 1, cfg.n_batches), cfg, init);
    CHECK(report.best_loss <= 1e-6);
}

TEST_CASE("best tracking is exact and the best-prefix is monotone") {
    const int rows = 256;
    RandomStream ds(61);
    Eigen::MatrixXd x(rows, 2);
    Eigen::VectorXd y(rows);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < 2; ++j) x(i, j) = ds.next_normal();
        y(i) = x(i, 0) * x(i, 0) + 0.2 * ds.next_normal();
    }
    TrainConfig cfg = toy_config(16, 10, 4);
    NetworkParams init = init_network(2, cfg, RandomStream(cfg.seed));
    init.mu = y.mean();
    auto [best, report] = train_base(x, y, make_batches(rows, 1, cfg.n_batches), cfg, init);

    double running = report.epoch_losses.front();
    double overall = running;
    for (double l : report.epoch_losses) {
        running = std::min(running, l);
        overall = std::min(overall, l);
    }
    CHECK(report.best_loss == doctest::Approx(overall).epsilon(1e-15));
    // Best parameters evaluated with the positive head reproduce best_loss.
    const double replay = quadratic_loss(best, x, y, nullptr);
    CHECK(replay == doctest::Approx(report.best_loss).epsilon(1e-12));
}

TEST_CASE("one-dimensional toy regression reaches the noise floor") {
    // E[xi|z] = z^2 with noise sd 0.1: out-of-sample MSE within 10% of the
    // noise variance at 1e4 samples.
    const int rows = 10000;
    RandomStream ds(71);
    Eigen::MatrixXd x(rows, 1), xt(rows, 1);
    Eigen::VectorXd y(rows), yt(rows);
    const double noise_sd = 0.1;
    for (int i = 0; i < rows; ++i) {
        x(i, 0) = 2.0 * ds.next_uniform() - 1.0;
        y(i) = x(i, 0) * x(i, 0) + noise_sd * ds.next_normal();
        xt(i, 0) = 2.0 * ds.next_uniform() - 1.0;
        yt(i) = xt(i, 0) * xt(i, 0) + noise_sd * ds.next_normal();
    }
    TrainConfig cfg = toy_config(32, 40, 25);
    NetworkParams init = init_network(1, cfg, RandomStream(cfg.seed));
    init.mu = y.mean();
    auto [best, report] = train_base(x, y, make_batches(rows, 1, cfg.n_batches), cfg, init);
    const double oos = quadratic_loss(best, xt, yt, nullptr);
    CHECK(oos < 1.10 * noise_sd * noise_sd);
    CHECK(oos > 0.90 * noise_sd * noise_sd);
}

TEST_CASE("backward learning: n=1 reduces to one train_base call") {
    const int rows = 128;
    RandomStream ds(81);
    Eigen::MatrixXd x(rows, 2);
    Eigen::VectorXd y(rows);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < 2; ++j) x(i, j) = ds.next_normal();
        y(i) = x(i, 0) + 0.1 * ds.next_normal();
    }
    TrainConfig cfg = toy_config(8, 6, 4);
    auto source = [&](int) {
        StepData d;
        d.features = x;
        d.labels = y;
        d.passthrough = 0;
        return d;
    };
    TrainedModelSequence seq = backward_learn(1, source, cfg);
    CHECK(seq.n_steps == 1);

    // Replicate by hand: standardize, init with the same lineage, train.
    StandardScaler scaler = fit_scaler(x, 0);
    Eigen::MatrixXd xs = scaler.apply(x);
    NetworkParams init = init_network(2, cfg, RandomStream(cfg.seed).split(0xBEEF).split(1));
    init.mu = y.mean();
    auto [best, report] = train_base(xs, y, make_batches(rows, 1, cfg.n_batches), cfg, init);
    CHECK(report.best_loss == doctest::Approx(seq.at(1).report.best_loss).epsilon(1e-15));
    for (int l = 0; l < best.n_layers(); ++l)
        CHECK((best.weights[l] - seq.at(1).net.weights[l]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("warm-started backward learning never loses to the cold start") {
    // Identical label distributions across steps: best loss at every earlier
    // step must stay within 5% of the terminal (cold-start) loss.
    const int rows = 2048, n_steps = 5;
    RandomStream ds(91);
    std::vector<Eigen::MatrixXd> xs(n_steps + 1);
    std::vector<Eigen::VectorXd> ys(n_steps + 1);
    for (int s = 1; s <= n_steps; ++s) {
        xs[s].resize(rows, 1);
        ys[s].resize(rows);
        for (int i = 0; i < rows; ++i) {
            xs[s](i, 0) = ds.next_normal();
            const double u = std::sin(xs[s](i, 0));
            ys[s](i) = u * u + 0.1 * ds.next_normal();
        }
    }
    TrainConfig cfg = toy_config(16, 8, 8);
    auto source = [&](int step) {
        StepData d;
        d.features = xs[step];
        d.labels = ys[step];
        d.passthrough = 0;
        return d;
    };
    TrainedModelSequence seq = backward_learn(n_steps, source, cfg);
    // One common out-of-sample yardstick removes the per-step noise-floor
    // wobble from the comparison.
    Eigen::MatrixXd xo(rows, 1);
    Eigen::VectorXd yo(rows);
    for (int i = 0; i < rows; ++i) {
        xo(i, 0) = ds.next_normal();
        const double u = std::sin(xo(i, 0));
        yo(i) = u * u + 0.1 * ds.next_normal();
    }
    auto oos = [&](int step) {
        Eigen::VectorXd pred = seq.predict(step, xo);
        return (pred - yo).squaredNorm() / rows;
    };
    const double cold = oos(n_steps);
    for (int s = 1; s < n_steps; ++s) CHECK(oos(s) <= 1.05 * cold);
}

TEST_CASE("backward learning is deterministic and round-trips through disk") {
    const int rows = 256, n_steps = 3;
    RandomStream ds(101);
    Eigen::MatrixXd x(rows, 3);
    Eigen::VectorXd y(rows);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < 3; ++j) x(i, j) = ds.next_normal();
        y(i) = x(i, 1) * 0.5 + 0.05 * ds.next_normal();
    }
    TrainConfig cfg = toy_config(8, 6, 4);
    auto source = [&](int) {
        StepData d;
        d.features = x;
        d.labels = y;
        d.passthrough = 1;
        return d;
    };
    TrainedModelSequence a = backward_learn(n_steps, source, cfg);
    TrainedModelSequence b = backward_learn(n_steps, source, cfg);
    for (int s = 1; s <= n_steps; ++s)
        for (int l = 0; l < a.at(s).net.n_layers(); ++l)
            CHECK((a.at(s).net.weights[l] - b.at(s).net.weights[l]).cwiseAbs().maxCoeff() == 0.0);

    a.config_hash = "cafebabe";
    const std::string path = "test_models_roundtrip.bin";
    a.save(path);
    TrainedModelSequence c = TrainedModelSequence::load(path);
    CHECK(c.n_steps == a.n_steps);
    CHECK(c.config_hash == "cafebabe");
    Eigen::MatrixXd probe = Eigen::MatrixXd::Random(10, 3);
    for (int s = 1; s <= n_steps; ++s) {
        Eigen::VectorXd pa = a.predict(s, probe);
        Eigen::VectorXd pc = c.predict(s, probe);
        CHECK((pa - pc).cwiseAbs().maxCoeff() == 0.0);
    }
    std::filesystem::remove(path);
}

TEST_CASE("NaN loss aborts with a learning-rate diagnostic") {
    const int rows = 64;
    RandomStream ds(111);
    Eigen::MatrixXd x(rows, 2);
    Eigen::VectorXd y(rows);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < 2; ++j) x(i, j) = ds.next_normal();
        y(i) = ds.next_normal();
    }
    TrainConfig cfg = toy_config(8, 12, 4);
    cfg.adam = false;
    cfg.learning_rate = 1e6;  // guaranteed blow-up with plain SGD
    NetworkParams init = init_network(2, cfg, RandomStream(1));
    CHECK_THROWS_WITH_AS(
        train_base(x, y, make_batches(rows, 1, cfg.n_batches), cfg, init),
        doctest::Contains("learning rate"), numeric_error);
}

TEST_CASE("epochs below two are rejected") {
    TrainConfig cfg = toy_config(4, 1, 1);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(8, 2);
    Eigen::VectorXd y = Eigen::VectorXd::Random(8);
    NetworkParams init = init_network(2, cfg, RandomStream(1));
    CHECK_THROWS_AS(train_base(x, y, make_batches(8, 1, 1), cfg, init), config_error);
}
