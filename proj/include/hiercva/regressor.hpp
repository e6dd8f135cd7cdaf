#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hiercva/rng.hpp"

namespace hiercva {

enum class Activation { Tanh, Sigmoid, Softplus, Relu };
Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

// Feed-forward net with scalar output and optional positive head:
// prediction = f(z) + mu, or (f(z))^+ + mu when positive_head is set.
struct NetworkParams {
    std::vector<Eigen::MatrixXd> weights;  // weights[l]: layer l -> l+1; last row maps to scalar
    std::vector<Eigen::VectorXd> biases;
    double mu = 0.0;
    bool positive_head = false;
    Activation activation = Activation::Tanh;

    int input_dim() const { return static_cast<int>(weights.front().cols()); }
    int n_layers() const { return static_cast<int>(weights.size()); }  // h+1
    void check_shapes() const;  // throws contract_error
};

struct TrainConfig {
    int epochs = 8;       // >= 2, head switch at floor(epochs/2)
    int n_batches = 32;   // must divide the sample count
    double learning_rate = 0.001;  // Adam default
    bool adam = true;     // plain SGD otherwise
    int hidden_layers = 2;
    int width = 64;
    Activation activation = Activation::Tanh;
    std::uint64_t seed = 0;
    double ridge = 1e-8;  // trace-normalized ridge for the output refit
};

struct TrainReport {
    std::vector<double> epoch_losses;  // full-sample positive-head loss per epoch
    double best_loss = 0.0;
    int best_epoch = 0;  // 1-based
    double seconds = 0.0;
};

// One Q/R observation collected at an epoch boundary.
struct QrSample {
    int step = 0;
    int epoch = 0;
    double q = 0.0;
    double r = 0.0;
};

// Pair of conditionally independent loss evaluations per outer path,
// used for Q/R estimation during training (same market path, two replicas).
struct QrProbe {
    Eigen::MatrixXd x1, x2;
    Eigen::VectorXd y1, y2;
    bool valid() const { return x1.rows() > 1 && x1.rows() == x2.rows(); }
};

// Per-column affine standardization; the first `passthrough` columns
// (default indicators) are left untouched.
struct StandardScaler {
    Eigen::VectorXd mean, scale;
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};
StandardScaler fit_scaler(const Eigen::MatrixXd& x, int passthrough);

Eigen::VectorXd forward(const NetworkParams& net, const Eigen::MatrixXd& x);

// Mean quadratic loss; gradients w.r.t. every parameter when `grads` given.
struct Gradients {
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::VectorXd> b;
    double mu = 0.0;
};
double quadratic_loss(const NetworkParams& net, const Eigen::MatrixXd& x,
                      const Eigen::VectorXd& y, Gradients* grads = nullptr);

// Contiguous equal batches over the row-major replica index k*N + l.
std::vector<std::pair<std::size_t, std::size_t>> make_batches(int n_paths, int n_replicas,
                                                              int n_batches);

NetworkParams init_network(int input_dim, const TrainConfig& cfg, RandomStream stream);

// Closed-form ridge least-squares refit of the output layer on the hidden
// features (positive head must be off). In-sample plain-head MSE never
// increases beyond ridge shrinkage.
void refit_output_layer(NetworkParams& net, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        double ridge);

// Half-run head switch + closed-form refit + best-parameter tracking.
// Returns the best parameters (positive head on) and the loss trace.
std::pair<NetworkParams, TrainReport> train_base(
    const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
    const std::vector<std::pair<std::size_t, std::size_t>>& batches, const TrainConfig& cfg,
    NetworkParams init, const QrProbe* probe = nullptr, std::vector<QrSample>* trace = nullptr,
    int step_tag = 0);

// Training data for one pricing step.
struct StepData {
    Eigen::MatrixXd features;  // raw, rows = M*N
    Eigen::VectorXd labels;
    int passthrough = 0;  // leading indicator columns
    QrProbe probe;        // optional
};

struct StepModel {
    NetworkParams net;  // positive head on
    StandardScaler scaler;
    TrainReport report;
};

struct TrainedModelSequence {
    int n_steps = 0;
    std::vector<StepModel> steps;  // steps[i-1] is the model at pricing step i
    std::uint64_t seed = 0;
    std::string config_hash;

    const StepModel& at(int step) const { return steps.at(step - 1); }
    Eigen::VectorXd predict(int step, const Eigen::MatrixXd& raw_features) const;

    void save(const std::string& path) const;
    static TrainedModelSequence load(const std::string& path);
};

using LabelSource = std::function<StepData(int step)>;

// Algorithm-2 style backward pass: step n starts fresh (mu = label mean),
// step i < n starts from the best parameters of step i+1.
TrainedModelSequence backward_learn(int n_steps, const LabelSource& source,
                                    const TrainConfig& cfg,
                                    std::vector<QrSample>* qr_trace = nullptr);

}  // namespace hiercva
