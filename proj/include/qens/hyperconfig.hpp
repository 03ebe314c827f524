#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace qens {

/// One point of the QLSTM hyperparameter space.
struct HyperConfig {
    double learning_rate{0.01};
    std::size_t n_layers{1};
    std::size_t n_qubits{2};
    std::size_t hidden_units{2};
    std::size_t sequence_length{3};
    std::size_t batch_size{32};
    std::size_t epochs{30};

    /// Throws ConfigError unless every bound holds and the learning rate
    /// lies in [lr_min, lr_max]. A learning rate of exactly 0 is accepted so
    /// that frozen-parameter runs are expressible.
    void validate(double lr_min = 1e-4, double lr_max = 0.2) const;

    [[nodiscard]] std::string to_string() const;

    bool operator==(const HyperConfig &) const = default;
    auto operator<=>(const HyperConfig &) const = default;
};

/// Inclusive integer range.
struct IntRange {
    std::size_t lo;
    std::size_t hi;
};

/**
 * @brief Box of tunable hyperparameters, addressed through the unit cube.
 *
 * Tuners search [0,1]^5 over (learning rate, layers, qubits, hidden units,
 * batch size). The learning rate is log-scaled; integer dimensions are
 * rounded half-up after the affine map, so every unit point yields an
 * in-bounds configuration. Sequence length and epoch count are fixed.
 */
struct SearchSpace {
    double lr_min{1e-4};
    double lr_max{0.2};
    IntRange layers{1, 3};
    IntRange qubits{2, 6};
    IntRange hidden{2, 8};
    IntRange batch{16, 256};
    std::size_t sequence_length{3};
    std::size_t epochs{30};

    static constexpr std::size_t kDims = 5;

    void validate() const;

    /// Clamps `unit` into [0,1]^5 and decodes it.
    [[nodiscard]] HyperConfig decode(std::span<const double> unit) const;

    /// A unit point that decodes back to `config` (inverse of decode on the
    /// lattice of representable configurations).
    [[nodiscard]] std::vector<double> encode(const HyperConfig &config) const;

    /// Fixed-point bit widths used by the binary (QGA) encoding.
    [[nodiscard]] std::vector<std::size_t> bit_widths() const;
};

} // namespace qens
