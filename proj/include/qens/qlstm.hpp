#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "qens/dataset.hpp"
#include "qens/hyperconfig.hpp"
#include "qens/quantum_core.hpp"
#include "qens/training.hpp"
#include "qens/types.hpp"

namespace qens::qlstm {

/// Index of each VQC inside a cell.
enum Block : std::size_t {
    kForget = 0,
    kInput = 1,
    kUpdate = 2,
    kOutput = 3,
    kHidden = 4,
    kHead = 5,
};
inline constexpr std::size_t kNumBlocks = 6;

/**
 * @brief Trainable state of one QLSTM cell.
 *
 * The four gate VQCs read v_t = in_proj * [h_{t-1}; x_t] + in_bias, an
 * n_qubits vector. Gate activations and the cell state live in qubit space
 * (n_qubits entries). The hidden-state VQC and the head VQC read
 * o_t * tanh(c_t) and are mapped to hidden_units / output_dim entries by
 * the output projections.
 */
struct QLSTMParams {
    std::vector<quantum::VQCBlock> vqc; // kNumBlocks entries
    Eigen::MatrixXd in_proj;            // n_qubits x (hidden_units + input_dim)
    Eigen::VectorXd in_bias;            // n_qubits
    Eigen::MatrixXd out_proj_h;         // hidden_units x n_qubits
    Eigen::VectorXd out_bias_h;         // hidden_units
    Eigen::MatrixXd out_proj_y;         // output_dim x n_qubits
    Eigen::VectorXd out_bias_y;         // output_dim
    std::size_t hidden_units{0};
    std::size_t input_dim{0};

    /// All thetas and projections zero.
    static QLSTMParams zeros(std::size_t n_qubits, std::size_t n_layers,
                             std::size_t hidden_units, std::size_t input_dim,
                             std::size_t output_dim = 1);

    /// Thetas uniform in [-pi, pi]; projection weights uniform in
    /// [-0.1, 0.1]; biases zero.
    static QLSTMParams random(std::size_t n_qubits, std::size_t n_layers,
                              std::size_t hidden_units, std::size_t input_dim,
                              Rng &rng, std::size_t output_dim = 1);

    [[nodiscard]] std::size_t n_qubits() const;
    [[nodiscard]] std::size_t n_layers() const;
    [[nodiscard]] std::size_t output_dim() const;

    /// Throws ShapeError on any inconsistent dimension.
    void check_shapes() const;

    /// Every trainable tensor, in a fixed order.
    std::vector<std::span<double>> tensors();
    [[nodiscard]] std::vector<std::span<const double>> tensors() const;

    bool operator==(const QLSTMParams &other) const;
};

/// Intermediates of one cell step, kept for backpropagation and auditing.
struct StepTrace {
    Eigen::VectorXd u;      // [h_prev; x]
    Eigen::VectorXd v;      // projected VQC input
    Eigen::VectorXd f, i, g, o;
    Eigen::VectorXd c_prev;
    Eigen::VectorXd c;
    Eigen::VectorXd s;      // o * tanh(c)
    Eigen::VectorXd q_hidden, q_head; // raw VQC5 / VQC6 outputs
    Eigen::VectorXd h;
    Eigen::VectorXd y;
};

struct StepOutput {
    Eigen::VectorXd h;
    Eigen::VectorXd c;
    Eigen::VectorXd y;
};

StepOutput qlstm_step(const QLSTMParams &params, std::span<const double> x,
                      std::span<const double> h_prev,
                      std::span<const double> c_prev);

/// Same as qlstm_step, returning every intermediate.
StepTrace qlstm_step_traced(const QLSTMParams &params,
                            std::span<const double> x,
                            std::span<const double> h_prev,
                            std::span<const double> c_prev);

/// Runs the cell over the window from zero (h, c) and returns the first
/// component of the final y_t.
double forward_sequence(const QLSTMParams &params, WindowRef window);

/// Squared error (prediction - target)^2 of one window and its gradient,
/// by backpropagation through time with parameter-shift VQC gradients.
/// The gradient has the same layout as `params`.
double loss_and_gradient(const QLSTMParams &params, WindowRef window,
                         double target, QLSTMParams &grad);

/// Zero-valued tensor with the shapes of `params`.
QLSTMParams zeros_like(const QLSTMParams &params);

/// Builds an initialised model for `config` (seeded).
QLSTMParams init_params(const HyperConfig &config, std::size_t input_dim,
                        std::uint64_t seed);

/**
 * @brief Minimises MSE with Adam over minibatches of `train_set`.
 *
 * Minibatch order is reshuffled every epoch from `seed`. Losses are full
 * passes over each set after every epoch. Throws ConfigError on an empty
 * training set and NumericError if a loss becomes non-finite.
 */
TrainReport train(QLSTMParams &params, const HyperConfig &config,
                  const WindowedDataset &train_set,
                  const WindowedDataset &test_set, std::uint64_t seed,
                  const AdamOptions &adam = {});

/// Predictions for every window of `set`.
std::vector<double> predict(const QLSTMParams &params,
                            const WindowedDataset &set);

} // namespace qens::qlstm
