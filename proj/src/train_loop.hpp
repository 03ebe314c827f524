#pragma once

// Adam minibatch loop shared by the quantum and classical recurrent models.

#include <chrono>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "qens/dataset.hpp"
#include "qens/error.hpp"
#include "qens/hyperconfig.hpp"
#include "qens/rng.hpp"
#include "qens/training.hpp"

namespace qens::detail {

template <class Model, class Forward>
double dataset_mse(const Model &params, const WindowedDataset &set,
                   Forward &&forward) {
    double acc = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const double r = forward(params, set.window(i)) - set.targets[i];
        acc += r * r;
    }
    return acc / static_cast<double>(set.size());
}

/// Model must expose tensors(); LossGrad(params, window, target, grad) adds
/// the gradient of the squared error into grad and returns the error.
template <class Model, class Forward, class LossGrad, class ZerosLike>
TrainReport run_training(Model &params, const HyperConfig &config,
                         const WindowedDataset &train_set,
                         const WindowedDataset &test_set, std::uint64_t seed,
                         const AdamOptions &adam, Forward &&forward,
                         LossGrad &&loss_grad, ZerosLike &&zeros_like) {
    const auto t0 = std::chrono::steady_clock::now();
    if (train_set.empty() || test_set.empty()) {
        throw ConfigError("training and test sets must be non-empty");
    }
    if (train_set.sequence_length != config.sequence_length ||
        test_set.sequence_length != config.sequence_length) {
        throw ConfigError("datasets are not windowed to the configured "
                          "sequence length");
    }
    if (!std::isfinite(config.learning_rate) || config.learning_rate < 0.0) {
        throw ConfigError("learning rate must be finite and >= 0");
    }
    if (config.batch_size < 1 || config.epochs < 1) {
        throw ConfigError("batch_size and epochs must be >= 1");
    }

    auto check = [](double loss, const char *what) {
        if (!std::isfinite(loss)) {
            throw NumericError(std::string("numeric divergence: ") + what +
                               " loss is not finite");
        }
        return loss;
    };

    TrainReport report;
    report.initial_train_loss =
        check(dataset_mse(params, train_set, forward), "train");
    report.initial_test_loss =
        check(dataset_mse(params, test_set, forward), "test");

    std::size_t total = 0;
    for (auto t : params.tensors()) {
        total += t.size();
    }
    std::vector<double> m(total, 0.0);
    std::vector<double> v(total, 0.0);
    std::size_t step = 0;

    Rng rng(seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t k = order.size(); k > 1; --k) {
            const auto j = static_cast<std::size_t>(
                uniform01(rng) * static_cast<double>(k));
            std::swap(order[k - 1], order[std::min(j, k - 1)]);
        }
        if (config.learning_rate > 0.0) {
            for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
                const std::size_t e =
                    std::min(order.size(), b + config.batch_size);
                Model grad = zeros_like(params);
                for (std::size_t k = b; k < e; ++k) {
                    const auto idx = order[k];
                    loss_grad(params, train_set.window(idx),
                              train_set.targets[idx], grad);
                }
                const double scale = 1.0 / static_cast<double>(e - b);
                ++step;
                const double bc1 =
                    1.0 - std::pow(adam.beta1, static_cast<double>(step));
                const double bc2 =
                    1.0 - std::pow(adam.beta2, static_cast<double>(step));
                auto pt = params.tensors();
                auto gt = grad.tensors();
                std::size_t flat = 0;
                for (std::size_t t = 0; t < pt.size(); ++t) {
                    for (std::size_t j = 0; j < pt[t].size(); ++j, ++flat) {
                        const double g = gt[t][j] * scale;
                        if (!std::isfinite(g)) {
                            throw NumericError(
                                "numeric divergence: non-finite gradient");
                        }
                        m[flat] = adam.beta1 * m[flat] + (1.0 - adam.beta1) * g;
                        v[flat] =
                            adam.beta2 * v[flat] + (1.0 - adam.beta2) * g * g;
                        const double mhat = m[flat] / bc1;
                        const double vhat = v[flat] / bc2;
                        pt[t][j] -= config.learning_rate * mhat /
                                    (std::sqrt(vhat) + adam.epsilon);
                    }
                }
            }
        }
        report.train_loss.push_back(
            check(dataset_mse(params, train_set, forward), "train"));
        report.test_loss.push_back(
            check(dataset_mse(params, test_set, forward), "test"));
    }
    report.final_validation_loss = report.test_loss.back();
    report.wall_seconds = std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
    return report;
}

} // namespace qens::detail
