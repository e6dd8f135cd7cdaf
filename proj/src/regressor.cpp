#include "hiercva/regressor.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "hiercva/errors.hpp"
#include "hiercva/planner.hpp"

namespace hiercva {

Activation activation_from_string(const std::string& name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "softplus") return Activation::Softplus;
    if (name == "relu") return Activation::Relu;
    throw config_error("unknown activation: " + name);
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Softplus: return "softplus";
        case Activation::Relu: return "relu";
    }
    return "?";
}

namespace {

// Elementwise activation (in place) and its derivative.
void apply_activation(Activation a, Eigen::MatrixXd& z, Eigen::MatrixXd* deriv) {
    switch (a) {
        case Activation::Tanh:
            z = z.array().tanh().matrix();
            if (deriv) *deriv = (1.0 - z.array().square()).matrix();
            break;
        case Activation::Sigmoid:
            z = (1.0 / (1.0 + (-z.array()).exp())).matrix();
            if (deriv) *deriv = (z.array() * (1.0 - z.array())).matrix();
            break;
        case Activation::Softplus: {
            // Overflow-safe: softplus(x) = max(x,0) + log1p(exp(-|x|)).
            Eigen::ArrayXXd sig = 1.0 / (1.0 + (-z.array()).exp());
            z = (z.array().max(0.0) + (-z.array().abs()).exp().log1p()).matrix();
            if (deriv) *deriv = sig.matrix();
            break;
        }
        case Activation::Relu:
            if (deriv) *deriv = (z.array() > 0.0).cast<double>().matrix();
            z = z.array().max(0.0).matrix();
            break;
    }
}

}  // namespace

void NetworkParams::check_shapes() const {
    if (weights.empty() || weights.size() != biases.size())
        throw contract_error("network: empty or mismatched layer lists");
    for (std::size_t l = 0; l + 1 < weights.size(); ++l) {
        if (weights[l + 1].cols() != weights[l].rows())
            throw contract_error("network: weight shape chain broken");
        if (biases[l].size() != weights[l].rows())
            throw contract_error("network: bias shape mismatch");
    }
    if (weights.back().rows() != 1 || biases.back().size() != 1)
        throw contract_error("network: output layer must be scalar");
    for (const auto& w : weights)
        if (!w.allFinite()) throw contract_error("network: non-finite weights");
}

Eigen::MatrixXd StandardScaler::apply(const Eigen::MatrixXd& x) const {
    if (x.cols() != mean.size()) throw contract_error("scaler: feature dimension mismatch");
    return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

StandardScaler fit_scaler(const Eigen::MatrixXd& x, int passthrough) {
    StandardScaler s;
    const int d = static_cast<int>(x.cols());
    s.mean = Eigen::VectorXd::Zero(d);
    s.scale = Eigen::VectorXd::Ones(d);
    const double n = static_cast<double>(x.rows());
    for (int j = passthrough; j < d; ++j) {
        const double m = x.col(j).mean();
        const double var = (x.col(j).array() - m).square().sum() / n;
        const double sd = std::sqrt(var);
        s.mean(j) = m;
        s.scale(j) = (sd > 1e-12) ? sd : 1.0;
    }
    return s;
}

Eigen::VectorXd forward(const NetworkParams& net, const Eigen::MatrixXd& x) {
    net.check_shapes();
    if (x.cols() != net.input_dim()) throw contract_error("forward: feature dimension mismatch");
    Eigen::MatrixXd z = x;
    const int h = net.n_layers() - 1;
    for (int l = 0; l < h; ++l) {
        Eigen::MatrixXd pre = (z * net.weights[l].transpose()).rowwise() + net.biases[l].transpose();
        apply_activation(net.activation, pre, nullptr);
        z = std::move(pre);
    }
    Eigen::VectorXd f = z * net.weights[h].transpose().col(0);
    f.array() += net.biases[h](0);
    if (net.positive_head) f = f.array().max(0.0).matrix();
    f.array() += net.mu;
    return f;
}

double quadratic_loss(const NetworkParams& net, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                      Gradients* grads) {
    const int h = net.n_layers() - 1;
    const double nb = static_cast<double>(x.rows());

    // Forward, keeping activations and derivative factors.
    std::vector<Eigen::MatrixXd> act(h + 1), dact(h);
    act[0] = x;
    for (int l = 0; l < h; ++l) {
        Eigen::MatrixXd pre =
            (act[l] * net.weights[l].transpose()).rowwise() + net.biases[l].transpose();
        apply_activation(net.activation, pre, &dact[l]);
        act[l + 1] = std::move(pre);
    }
    Eigen::VectorXd f = act[h] * net.weights[h].transpose().col(0);
    f.array() += net.biases[h](0);
    Eigen::VectorXd pred = f;
    if (net.positive_head) pred = f.array().max(0.0).matrix();
    pred.array() += net.mu;

    Eigen::VectorXd resid = pred - y;
    const double loss = resid.squaredNorm() / nb;
    if (!grads) return loss;

    grads->w.assign(h + 1, Eigen::MatrixXd());
    grads->b.assign(h + 1, Eigen::VectorXd());
    grads->mu = 2.0 * resid.sum() / nb;

    // Output-head gradient; the ReLU kink passes gradient only where f > 0.
    Eigen::VectorXd d = (2.0 / nb) * resid;
    if (net.positive_head)
        d = (d.array() * (f.array() > 0.0).cast<double>()).matrix();

    grads->w[h] = (d.transpose() * act[h]);
    grads->b[h] = Eigen::VectorXd::Constant(1, d.sum());

    Eigen::MatrixXd g = d * net.weights[h];  // rows x width
    for (int l = h - 1; l >= 0; --l) {
        g = g.array() * dact[l].array();
        grads->w[l] = g.transpose() * act[l];
        grads->b[l] = g.colwise().sum().transpose();
        if (l > 0) g = g * net.weights[l];
    }
    return loss;
}

std::vector<std::pair<std::size_t, std::size_t>> make_batches(int n_paths, int n_replicas,
                                                              int n_batches) {
    const std::size_t total = static_cast<std::size_t>(n_paths) * n_replicas;
    if (n_batches < 1 || total % static_cast<std::size_t>(n_batches) != 0)
        throw config_error("make_batches: batch count must divide M*N");
    const std::size_t size = total / n_batches;
    std::vector<std::pair<std::size_t, std::size_t>> out;
    out.reserve(n_batches);
    for (int b = 0; b < n_batches; ++b) out.emplace_back(b * size, (b + 1) * size);
    return out;
}

NetworkParams init_network(int input_dim, const TrainConfig& cfg, RandomStream stream) {
    NetworkParams net;
    net.activation = cfg.activation;
    net.positive_head = false;
    net.mu = 0.0;
    int fan_in = input_dim;
    for (int l = 0; l < cfg.hidden_layers + 1; ++l) {
        const int fan_out = (l == cfg.hidden_layers) ? 1 : cfg.width;
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        Eigen::MatrixXd w(fan_out, fan_in);
        for (int r = 0; r < fan_out; ++r)
            for (int c = 0; c < fan_in; ++c) w(r, c) = limit * (2.0 * stream.next_uniform() - 1.0);
        net.weights.push_back(std::move(w));
        net.biases.push_back(Eigen::VectorXd::Zero(fan_out));
        fan_in = fan_out;
    }
    return net;
}

void refit_output_layer(NetworkParams& net, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        double ridge) {
    if (net.positive_head)
        throw contract_error("refit_output_layer: positive head must be off");
    const int h = net.n_layers() - 1;
    Eigen::MatrixXd z = x;
    for (int l = 0; l < h; ++l) {
        Eigen::MatrixXd pre = (z * net.weights[l].transpose()).rowwise() + net.biases[l].transpose();
        apply_activation(net.activation, pre, nullptr);
        z = std::move(pre);
    }
    const int u = static_cast<int>(z.cols());
    Eigen::MatrixXd g(z.rows(), u + 1);
    g.leftCols(u) = z;
    g.col(u).setOnes();
    Eigen::MatrixXd gram = g.transpose() * g;
    const double lam = std::max(ridge * gram.trace() / (u + 1), 1e-300);
    gram.diagonal().array() += lam;
    Eigen::VectorXd rhs = g.transpose() * (y.array() - net.mu).matrix();
    Eigen::VectorXd theta = gram.ldlt().solve(rhs);
    net.weights[h].row(0) = theta.head(u).transpose();
    net.biases[h](0) = theta(u);
}

namespace {

// Adam moments for every tensor of the network.
struct AdamState {
    std::vector<Eigen::MatrixXd> mw, vw;
    std::vector<Eigen::VectorXd> mb, vb;
    double mmu = 0.0, vmu = 0.0;
    long t = 0;

    explicit AdamState(const NetworkParams& net) {
        for (const auto& w : net.weights) {
            mw.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
            vw.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
        }
        for (const auto& b : net.biases) {
            mb.push_back(Eigen::VectorXd::Zero(b.size()));
            vb.push_back(Eigen::VectorXd::Zero(b.size()));
        }
    }
};

void sgd_update(NetworkParams& net, const Gradients& g, double lr) {
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        net.weights[l] -= lr * g.w[l];
        net.biases[l] -= lr * g.b[l];
    }
    net.mu -= lr * g.mu;
}

void adam_update(NetworkParams& net, const Gradients& g, AdamState& st, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++st.t;
    const double c1 = 1.0 - std::pow(b1, st.t);
    const double c2 = 1.0 - std::pow(b2, st.t);
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        st.mw[l] = b1 * st.mw[l] + (1.0 - b1) * g.w[l];
        st.vw[l] = (b2 * st.vw[l].array() + (1.0 - b2) * g.w[l].array().square()).matrix();
        net.weights[l].array() -=
            lr * (st.mw[l].array() / c1) / ((st.vw[l].array() / c2).sqrt() + eps);
        st.mb[l] = b1 * st.mb[l] + (1.0 - b1) * g.b[l];
        st.vb[l] = (b2 * st.vb[l].array() + (1.0 - b2) * g.b[l].array().square()).matrix();
        net.biases[l].array() -= lr * (st.mb[l].array() / c1) / ((st.vb[l].array() / c2).sqrt() + eps);
    }
    st.mmu = b1 * st.mmu + (1.0 - b1) * g.mu;
    st.vmu = b2 * st.vmu + (1.0 - b2) * g.mu * g.mu;
    net.mu -= lr * (st.mmu / c1) / (std::sqrt(st.vmu / c2) + eps);
}

}  // namespace

std::pair<NetworkParams, TrainReport> train_base(
    const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
    const std::vector<std::pair<std::size_t, std::size_t>>& batches, const TrainConfig& cfg,
    NetworkParams init, const QrProbe* probe, std::vector<QrSample>* trace, int step_tag) {
    if (cfg.epochs < 2) throw config_error("training: epochs must be >= 2 (head switch at E/2)");
    if (x.rows() != y.size()) throw contract_error("training: feature/label row mismatch");
    init.check_shapes();

    const auto t_start = std::chrono::steady_clock::now();
    NetworkParams net = std::move(init);
    net.positive_head = false;

    NetworkParams best = net;
    best.positive_head = true;
    double best_loss = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    TrainReport report;

    AdamState adam(net);
    Gradients grads;
    const int switch_epoch = cfg.epochs / 2;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (const auto& [b0, b1] : batches) {
            const auto rows = static_cast<Eigen::Index>(b1 - b0);
            double l = quadratic_loss(net, x.middleRows(b0, rows), y.segment(b0, rows), &grads);
            if (!std::isfinite(l))
                throw numeric_error("training diverged (non-finite batch loss); "
                                    "try a smaller learning rate");
            if (cfg.adam)
                adam_update(net, grads, adam, cfg.learning_rate);
            else
                sgd_update(net, grads, cfg.learning_rate);
        }
        if (epoch == switch_epoch) {
            refit_output_layer(net, x, y, cfg.ridge);
            // The plain-head loss leaves the (mu, output-bias) split free.
            // Resolve it so that restoring the ReLU is lossless on-sample:
            // shift mass into the bias until f >= 0 wherever the fit is
            // nonnegative, with mu kept >= 0 to preserve the head contract.
            Eigen::VectorXd fitted = forward(net, x);
            const double mu_new = std::max(0.0, fitted.minCoeff());
            net.biases.back()(0) += net.mu - mu_new;
            net.mu = mu_new;
            net.positive_head = true;
            // The head switch changes the loss surface and the output layer
            // discontinuously; stale curvature estimates would turn the
            // first post-switch steps into large overshoots.
            adam = AdamState(net);
        }
        // Full-sample evaluation always uses the positive head.
        const bool head = net.positive_head;
        net.positive_head = true;
        const double eval = quadratic_loss(net, x, y, nullptr);
        if (!std::isfinite(eval))
            throw numeric_error("training diverged (non-finite loss); try a smaller learning rate");
        report.epoch_losses.push_back(eval);
        if (eval < best_loss) {
            best_loss = eval;
            best_epoch = epoch;
            best = net;
            best.positive_head = true;
        }
        if (probe && probe->valid() && trace) {
            Eigen::VectorXd p1 = forward(net, probe->x1);
            Eigen::VectorXd p2 = forward(net, probe->x2);
            std::vector<double> g1(p1.size()), g2(p2.size());
            for (Eigen::Index j = 0; j < p1.size(); ++j) {
                g1[j] = (p1(j) - probe->y1(j)) * (p1(j) - probe->y1(j));
                g2[j] = (p2(j) - probe->y2(j)) * (p2(j) - probe->y2(j));
            }
            QRDecomposition qr = estimate_qr(g1, g2);
            trace->push_back({step_tag, epoch, qr.q, qr.r});
        }
        net.positive_head = head;
    }

    report.best_loss = best_loss;
    report.best_epoch = best_epoch;
    report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return {std::move(best), report};
}

Eigen::VectorXd TrainedModelSequence::predict(int step, const Eigen::MatrixXd& raw) const {
    const StepModel& m = at(step);
    return forward(m.net, m.scaler.apply(raw));
}

TrainedModelSequence backward_learn(int n_steps, const LabelSource& source,
                                    const TrainConfig& cfg, std::vector<QrSample>* qr_trace) {
    if (n_steps < 1) throw config_error("backward_learn: need at least one step");
    TrainedModelSequence seq;
    seq.n_steps = n_steps;
    seq.steps.resize(n_steps);
    seq.seed = cfg.seed;

    NetworkParams carry;
    for (int i = n_steps; i >= 1; --i) {
        StepData data = source(i);
        const int rows = static_cast<int>(data.features.rows());
        StandardScaler scaler = fit_scaler(data.features, data.passthrough);
        Eigen::MatrixXd xs = scaler.apply(data.features);

        NetworkParams start;
        if (i == n_steps) {
            start = init_network(static_cast<int>(xs.cols()), cfg,
                                 RandomStream(cfg.seed).split(0xBEEF).split(i));
            start.mu = data.labels.mean();
        } else {
            start = carry;
        }

        QrProbe probe;
        const QrProbe* probe_ptr = nullptr;
        if (data.probe.valid()) {
            probe.x1 = scaler.apply(data.probe.x1);
            probe.x2 = scaler.apply(data.probe.x2);
            probe.y1 = data.probe.y1;
            probe.y2 = data.probe.y2;
            probe_ptr = &probe;
        }

        auto batches = make_batches(rows, 1, cfg.n_batches);
        auto [best, report] = train_base(xs, data.labels, batches, cfg, std::move(start),
                                         probe_ptr, qr_trace, i);
        carry = best;
        seq.steps[i - 1] = StepModel{std::move(best), std::move(scaler), std::move(report)};
    }
    return seq;
}

// ---- serialization ----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'H', 'C', 'V', 'A', 'M', 'D', 'L', '1'};

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw numeric_error("model file truncated");
    return v;
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
    write_pod<std::int64_t>(out, m.rows());
    write_pod<std::int64_t>(out, m.cols());
    out.write(reinterpret_cast<const char*>(m.data()), sizeof(double) * m.size());
}

Eigen::MatrixXd read_matrix(std::istream& in) {
    const auto rows = read_pod<std::int64_t>(in);
    const auto cols = read_pod<std::int64_t>(in);
    Eigen::MatrixXd m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), sizeof(double) * m.size());
    if (!in) throw numeric_error("model file truncated");
    return m;
}

}  // namespace

void TrainedModelSequence::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot write model file " + path);
    out.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(out, 1u);  // format version
    write_pod<std::uint64_t>(out, seed);
    write_pod<std::int32_t>(out, n_steps);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(config_hash.size()));
    out.write(config_hash.data(), static_cast<std::streamsize>(config_hash.size()));
    for (const auto& s : steps) {
        write_pod<std::int32_t>(out, s.net.n_layers());
        write_pod<std::int32_t>(out, static_cast<std::int32_t>(s.net.activation));
        write_pod<double>(out, s.net.mu);
        for (const auto& w : s.net.weights) write_matrix(out, w);
        for (const auto& b : s.net.biases) write_matrix(out, b);
        write_matrix(out, s.scaler.mean);
        write_matrix(out, s.scaler.scale);
    }
}

TrainedModelSequence TrainedModelSequence::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open model file " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw config_error("not a model file: " + path);
    const auto version = read_pod<std::uint32_t>(in);
    if (version != 1u) throw config_error("unsupported model file version");
    TrainedModelSequence seq;
    seq.seed = read_pod<std::uint64_t>(in);
    seq.n_steps = read_pod<std::int32_t>(in);
    const auto hash_len = read_pod<std::uint32_t>(in);
    seq.config_hash.resize(hash_len);
    in.read(seq.config_hash.data(), hash_len);
    seq.steps.resize(seq.n_steps);
    for (auto& s : seq.steps) {
        const auto layers = read_pod<std::int32_t>(in);
        s.net.activation = static_cast<Activation>(read_pod<std::int32_t>(in));
        s.net.mu = read_pod<double>(in);
        s.net.positive_head = true;
        for (int l = 0; l < layers; ++l) s.net.weights.push_back(read_matrix(in));
        for (int l = 0; l < layers; ++l) s.net.biases.push_back(Eigen::VectorXd(read_matrix(in)));
        s.scaler.mean = Eigen::VectorXd(read_matrix(in));
        s.scaler.scale = Eigen::VectorXd(read_matrix(in));
        s.net.check_shapes();
    }
    return seq;
}

}  // namespace hiercva
