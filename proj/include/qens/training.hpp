#pragma once

#include <cstdint>
#include <vector>

namespace qens {

/// Loss curves of one training run. Losses are MSE in standardized units.
struct TrainReport {
    double initial_train_loss{0.0};
    double initial_test_loss{0.0};
    std::vector<double> train_loss; // one entry per epoch
    std::vector<double> test_loss;  // one entry per epoch
    double final_validation_loss{0.0};
    double wall_seconds{0.0};
};

/// Adam hyperparameters; the step size comes from HyperConfig.
struct AdamOptions {
    double beta1{0.9};
    double beta2{0.999};
    double epsilon{1e-8};
};

} // namespace qens
