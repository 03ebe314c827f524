#include "qens/hyperconfig.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>

#include <fmt/format.h>

#include "qens/error.hpp"
#include "qens/quantum_core.hpp"

namespace qens {

void HyperConfig::validate(double lr_min, double lr_max) const {
    if (!std::isfinite(learning_rate) || learning_rate < 0.0 ||
        (learning_rate != 0.0 &&
         (learning_rate < lr_min || learning_rate > lr_max))) {
        throw ConfigError(fmt::format(
            "learning rate {} outside [{}, {}]", learning_rate, lr_min, lr_max));
    }
    if (n_layers < 1) {
        throw ConfigError("n_layers must be >= 1");
    }
    if (n_qubits < 2 || n_qubits > quantum::kMaxQubits) {
        throw ConfigError(fmt::format("n_qubits {} outside [2, {}]", n_qubits,
                                      quantum::kMaxQubits));
    }
    if (hidden_units < 1 || sequence_length < 1 || batch_size < 1 ||
        epochs < 1) {
        throw ConfigError(
            "hidden_units, sequence_length, batch_size and epochs must be >= 1");
    }
}

std::string HyperConfig::to_string() const {
    return fmt::format("lr={:.6g} layers={} qubits={} hidden={} seq={} "
                       "batch={} epochs={}",
                       learning_rate, n_layers, n_qubits, hidden_units,
                       sequence_length, batch_size, epochs);
}

void SearchSpace::validate() const {
    if (!(lr_min > 0.0) || !(lr_max >= lr_min)) {
        throw ConfigError("learning-rate box must satisfy 0 < min <= max");
    }
    for (const auto &r : {layers, qubits, hidden, batch}) {
        if (r.lo > r.hi || r.lo < 1) {
            throw ConfigError("integer range must satisfy 1 <= lo <= hi");
        }
    }
    if (qubits.lo < 2 || qubits.hi > quantum::kMaxQubits) {
        throw ConfigError("qubit range must lie in [2, 10]");
    }
    if (sequence_length < 1 || epochs < 1) {
        throw ConfigError("sequence_length and epochs must be >= 1");
    }
}

namespace {

std::size_t round_range(double u, IntRange r) {
    const double v = static_cast<double>(r.lo) +
                     u * static_cast<double>(r.hi - r.lo);
    const auto k = static_cast<std::size_t>(std::floor(v + 0.5));
    return std::clamp(k, r.lo, r.hi);
}

double unit_of(std::size_t v, IntRange r) {
    if (r.hi == r.lo) {
        return 0.0;
    }
    return static_cast<double>(v - r.lo) / static_cast<double>(r.hi - r.lo);
}

} // namespace

HyperConfig SearchSpace::decode(std::span<const double> unit) const {
    if (unit.size() != kDims) {
        throw ShapeError(fmt::format("search point must have {} coordinates",
                                     kDims));
    }
    std::array<double, kDims> u{};
    for (std::size_t d = 0; d < kDims; ++d) {
        if (!std::isfinite(unit[d])) {
            throw NumericError("non-finite search coordinate");
        }
        u[d] = std::clamp(unit[d], 0.0, 1.0);
    }
    HyperConfig c;
    c.learning_rate =
        std::exp(std::log(lr_min) + u[0] * (std::log(lr_max) - std::log(lr_min)));
    c.learning_rate = std::clamp(c.learning_rate, lr_min, lr_max);
    c.n_layers = round_range(u[1], layers);
    c.n_qubits = round_range(u[2], qubits);
    c.hidden_units = round_range(u[3], hidden);
    c.batch_size = round_range(u[4], batch);
    c.sequence_length = sequence_length;
    c.epochs = epochs;
    return c;
}

std::vector<double> SearchSpace::encode(const HyperConfig &config) const {
    const double span = std::log(lr_max) - std::log(lr_min);
    const double ulr =
        span > 0.0 ? (std::log(config.learning_rate) - std::log(lr_min)) / span
                   : 0.0;
    return {std::clamp(ulr, 0.0, 1.0), unit_of(config.n_layers, layers),
            unit_of(config.n_qubits, qubits),
            unit_of(config.hidden_units, hidden),
            unit_of(config.batch_size, batch)};
}

std::vector<std::size_t> SearchSpace::bit_widths() const {
    auto width = [](IntRange r) -> std::size_t {
        const std::size_t count = r.hi - r.lo + 1;
        return std::max<std::size_t>(1, std::bit_width(count - 1));
    };
    return {10, width(layers), width(qubits), width(hidden), width(batch)};
}

} // namespace qens
