#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "qens/dataset.hpp"
#include "qens/hyperconfig.hpp"
#include "qens/rng.hpp"
#include "qens/training.hpp"
#include "qens/types.hpp"

namespace qens::lstm {

/// Classical LSTM cell with a linear read-out of the final hidden state.
/// Gate rows of `weights` / `bias` are stacked as [input; forget; cell; output].
struct LSTMParams {
    Eigen::MatrixXd weights; // 4H x (H + D)
    Eigen::VectorXd bias;    // 4H
    Eigen::MatrixXd head;    // 1 x H
    Eigen::VectorXd head_bias;
    std::size_t hidden_units{0};
    std::size_t input_dim{0};

    static LSTMParams zeros(std::size_t hidden_units, std::size_t input_dim);
    /// Uniform in [-1/sqrt(H), 1/sqrt(H)].
    static LSTMParams random(std::size_t hidden_units, std::size_t input_dim,
                             Rng &rng);

    std::vector<std::span<double>> tensors();
    [[nodiscard]] std::vector<std::span<const double>> tensors() const;

    bool operator==(const LSTMParams &other) const;
};

double forward_sequence(const LSTMParams &params, WindowRef window);

/// Adds the gradient of (prediction - target)^2 into `grad`.
double loss_and_gradient(const LSTMParams &params, WindowRef window,
                         double target, LSTMParams &grad);

LSTMParams zeros_like(const LSTMParams &params);

LSTMParams init_params(const HyperConfig &config, std::size_t input_dim,
                       std::uint64_t seed);

/// Same contract as qlstm::train.
TrainReport classical_lstm_train(LSTMParams &params, const HyperConfig &config,
                                 const WindowedDataset &train_set,
                                 const WindowedDataset &test_set,
                                 std::uint64_t seed,
                                 const AdamOptions &adam = {});

std::vector<double> predict(const LSTMParams &params,
                            const WindowedDataset &set);

} // namespace qens::lstm
