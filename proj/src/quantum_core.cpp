#include "qens/quantum_core.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "qens/error.hpp"

namespace qens::quantum {

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;

void check_qubit_count(std::size_t n) {
    if (n < 1 || n > kMaxQubits) {
        throw ConfigError("qubit count must be in [1, " +
                          std::to_string(kMaxQubits) + "], got " +
                          std::to_string(n));
    }
}

void validate(const StateVector &state, const Gate &gate) {
    const auto n = state.num_qubits();
    if (gate.target >= n) {
        throw InvalidGateError("gate target " + std::to_string(gate.target) +
                               " out of range for " + std::to_string(n) +
                               " qubits");
    }
    if (gate.kind == GateKind::CNOT) {
        if (!gate.control) {
            throw InvalidGateError("CNOT requires a control qubit");
        }
        if (*gate.control >= n) {
            throw InvalidGateError("CNOT control " +
                                   std::to_string(*gate.control) +
                                   " out of range");
        }
        if (*gate.control == gate.target) {
            throw InvalidGateError("CNOT control equals target");
        }
    } else if (gate.control) {
        throw InvalidGateError("only CNOT takes a control qubit");
    }
    if (gate.is_rotation() && !std::isfinite(gate.angle)) {
        throw NumericError("rotation angle is not finite");
    }
}

} // namespace

StateVector::StateVector(std::size_t n_qubits) : n_qubits_(n_qubits) {
    check_qubit_count(n_qubits);
    amps_.assign(std::size_t{1} << n_qubits, Complex{0.0, 0.0});
    amps_[0] = 1.0;
}

StateVector StateVector::from_amplitudes(std::vector<Complex> amplitudes) {
    const auto len = amplitudes.size();
    if (len < 2 || (len & (len - 1)) != 0) {
        throw ShapeError("amplitude count must be a power of two >= 2");
    }
    StateVector s;
    s.n_qubits_ = static_cast<std::size_t>(std::countr_zero(len));
    check_qubit_count(s.n_qubits_);
    s.amps_ = std::move(amplitudes);
    if (std::abs(s.norm_squared() - 1.0) > 1e-10) {
        throw NumericError("amplitudes are not normalised");
    }
    return s;
}

double StateVector::norm_squared() const {
    double acc = 0.0;
    for (const auto &a : amps_) {
        acc += std::norm(a);
    }
    return acc;
}

double StateVector::expectation_z(std::size_t qubit) const {
    if (qubit >= n_qubits_) {
        throw InvalidGateError("qubit index out of range");
    }
    const std::size_t mask = std::size_t{1} << qubit;
    double acc = 0.0;
    for (std::size_t i = 0; i < amps_.size(); ++i) {
        const double p = std::norm(amps_[i]);
        acc += (i & mask) ? -p : p;
    }
    return acc;
}

std::vector<double> StateVector::expectation_z_all() const {
    std::vector<double> out(n_qubits_, 0.0);
    for (std::size_t i = 0; i < amps_.size(); ++i) {
        const double p = std::norm(amps_[i]);
        for (std::size_t q = 0; q < n_qubits_; ++q) {
            out[q] += ((i >> q) & 1U) ? -p : p;
        }
    }
    return out;
}

void StateVector::apply_rx(std::size_t target, double angle) {
    const double c = std::cos(angle / 2.0);
    const double s = std::sin(angle / 2.0);
    const Complex mis{0.0, -s};
    const std::size_t mask = std::size_t{1} << target;
    for (std::size_t i = 0; i < amps_.size(); ++i) {
        if (i & mask) {
            continue;
        }
        const Complex a0 = amps_[i];
        const Complex a1 = amps_[i | mask];
        amps_[i] = c * a0 + mis * a1;
        amps_[i | mask] = mis * a0 + c * a1;
    }
}

void StateVector::apply_ry(std::size_t target, double angle) {
    const double c = std::cos(angle / 2.0);
    const double s = std::sin(angle / 2.0);
    const std::size_t mask = std::size_t{1} << target;
    for (std::size_t i = 0; i < amps_.size(); ++i) {
        if (i & mask) {
            continue;
        }
        const Complex a0 = amps_[i];
        const Complex a1 = amps_[i | mask];
        amps_[i] = c * a0 - s * a1;
        amps_[i | mask] = s * a0 + c * a1;
    }
}

void StateVector::apply_rz(std::size_t target, double angle) {
    const Complex lo = std::polar(1.0, -angle / 2.0);
    const Complex hi = std::polar(1.0, angle / 2.0);
    const std::size_t mask = std::size_t{1} << target;
    for (std::size_t i = 0; i < amps_.size(); ++i) {
        amps_[i] *= (i & mask) ? hi : lo;
    }
}

void StateVector::apply_h(std::size_t target) {
    const double r = std::numbers::sqrt2 / 2.0;
    const std::size_t mask = std::size_t{1} << target;
    for (std::size_t i = 0; i < amps_.size(); ++i) {
        if (i & mask) {
            continue;
        }
        const Complex a0 = amps_[i];
        const Complex a1 = amps_[i | mask];
        amps_[i] = r * (a0 + a1);
        amps_[i | mask] = r * (a0 - a1);
    }
}

void StateVector::apply_cnot(std::size_t control, std::size_t target) {
    const std::size_t cmask = std::size_t{1} << control;
    const std::size_t tmask = std::size_t{1} << target;
    for (std::size_t i = 0; i < amps_.size(); ++i) {
        if ((i & cmask) && !(i & tmask)) {
            std::swap(amps_[i], amps_[i | tmask]);
        }
    }
}

Gate Gate::inverse() const {
    Gate g = *this;
    if (is_rotation()) {
        g.angle = -angle;
    }
    return g;
}

void apply_gate_inplace(StateVector &state, const Gate &gate) {
    validate(state, gate);
    switch (gate.kind) {
    case GateKind::RX:
        state.apply_rx(gate.target, gate.angle);
        break;
    case GateKind::RY:
        state.apply_ry(gate.target, gate.angle);
        break;
    case GateKind::RZ:
        state.apply_rz(gate.target, gate.angle);
        break;
    case GateKind::H:
        state.apply_h(gate.target);
        break;
    case GateKind::CNOT:
        state.apply_cnot(*gate.control, gate.target);
        break;
    }
}

StateVector apply_gate(StateVector state, const Gate &gate) {
    apply_gate_inplace(state, gate);
    return state;
}

VQCBlock::VQCBlock(std::size_t n_qubits, std::size_t n_layers,
                   Encoding encoding)
    : n_qubits_(n_qubits), n_layers_(n_layers), encoding_(encoding) {
    check_qubit_count(n_qubits);
    if (n_layers < 1) {
        throw ConfigError("VQC block needs at least one layer");
    }
    thetas_.assign(n_layers * n_qubits * 3, 0.0);
}

VQCBlock VQCBlock::random(std::size_t n_qubits, std::size_t n_layers,
                          Rng &rng, Encoding encoding) {
    VQCBlock b(n_qubits, n_layers, encoding);
    for (auto &t : b.thetas_) {
        t = uniform(rng, -std::numbers::pi, std::numbers::pi);
    }
    return b;
}

std::size_t VQCBlock::input_dim() const {
    return encoding_ == Encoding::None ? 0 : n_qubits_;
}

double &VQCBlock::theta(std::size_t layer, std::size_t qubit,
                        std::size_t axis) {
    return thetas_[(layer * n_qubits_ + qubit) * 3 + axis];
}

double VQCBlock::theta(std::size_t layer, std::size_t qubit,
                       std::size_t axis) const {
    return thetas_[(layer * n_qubits_ + qubit) * 3 + axis];
}

std::vector<std::pair<double, double>>
VQCBlock::encoding_angles(std::span<const double> input) const {
    if (input.size() != input_dim()) {
        throw ShapeError("VQC input has " + std::to_string(input.size()) +
                         " entries, block expects " +
                         std::to_string(input_dim()));
    }
    std::vector<std::pair<double, double>> out;
    out.reserve(input.size());
    for (double x : input) {
        if (!std::isfinite(x)) {
            throw NumericError("non-finite VQC input");
        }
        out.emplace_back(std::atan(x), std::atan(x * x));
    }
    return out;
}

namespace {

/// Gate list plus, for every rotation gate, where its angle comes from:
/// slot >= 0 indexes the thetas; slot < 0 encodes the input feature
/// (-(2*i+1) for the RY encoding of x_i, -(2*i+2) for the RZ encoding).
struct Tape {
    std::vector<Gate> gates;
    std::vector<long> slots;
};

constexpr long kNoSlot = std::numeric_limits<long>::min();

Tape build_tape(const VQCBlock &block, std::span<const double> input) {
    const auto n = block.num_qubits();
    Tape tape;
    if (block.encoding() == Encoding::ArctanAngle) {
        const auto angles = block.encoding_angles(input);
        for (std::size_t q = 0; q < n; ++q) {
            tape.gates.push_back(Gate::ry(q, angles[q].first));
            tape.slots.push_back(-static_cast<long>(2 * q + 1));
            tape.gates.push_back(Gate::rz(q, angles[q].second));
            tape.slots.push_back(-static_cast<long>(2 * q + 2));
        }
    } else if (!input.empty()) {
        throw ShapeError("block without encoding takes no input");
    }
    for (std::size_t l = 0; l < block.num_layers(); ++l) {
        if (n == 2) {
            tape.gates.push_back(Gate::cnot(0, 1));
            tape.slots.push_back(kNoSlot);
        } else if (n >= 3) {
            for (std::size_t q = 0; q < n; ++q) {
                tape.gates.push_back(Gate::cnot(q, (q + 1) % n));
                tape.slots.push_back(kNoSlot);
            }
        }
        for (std::size_t q = 0; q < n; ++q) {
            const auto base = static_cast<long>((l * n + q) * 3);
            tape.gates.push_back(Gate::rx(q, block.theta(l, q, 0)));
            tape.slots.push_back(base);
            tape.gates.push_back(Gate::ry(q, block.theta(l, q, 1)));
            tape.slots.push_back(base + 1);
            tape.gates.push_back(Gate::rz(q, block.theta(l, q, 2)));
            tape.slots.push_back(base + 2);
        }
    }
    return tape;
}

void check_block_finite(const VQCBlock &block) {
    for (double t : block.thetas()) {
        if (!std::isfinite(t)) {
            throw NumericError("non-finite VQC theta");
        }
    }
}

} // namespace

std::vector<Gate> VQCBlock::circuit(std::span<const double> input) const {
    return build_tape(*this, input).gates;
}

std::vector<double> run_vqc(const VQCBlock &block,
                            std::span<const double> input) {
    check_block_finite(block);
    const auto tape = build_tape(block, input);
    StateVector state(block.num_qubits());
    for (const auto &g : tape.gates) {
        apply_gate_inplace(state, g);
    }
    return state.expectation_z_all();
}

VQCGradient vqc_backward(const VQCBlock &block, std::span<const double> input,
                         std::span<const double> upstream) {
    const auto n = block.num_qubits();
    if (upstream.size() != n) {
        throw ShapeError("upstream gradient must have one entry per qubit");
    }
    check_block_finite(block);
    const auto tape = build_tape(block, input);

    VQCGradient grad;
    grad.thetas.assign(block.num_thetas(), 0.0);
    grad.input.assign(block.input_dim(), 0.0);

    bool any = false;
    for (double u : upstream) {
        any = any || u != 0.0;
    }
    if (!any) {
        return grad;
    }

    // prefix[g] is the state just before gate g.
    std::vector<StateVector> prefix;
    prefix.reserve(tape.gates.size());
    StateVector state(n);
    for (const auto &g : tape.gates) {
        prefix.push_back(state);
        apply_gate_inplace(state, g);
    }

    auto shifted_objective = [&](std::size_t at, double shift) {
        StateVector s = prefix[at];
        Gate g = tape.gates[at];
        g.angle += shift;
        apply_gate_inplace(s, g);
        for (std::size_t k = at + 1; k < tape.gates.size(); ++k) {
            apply_gate_inplace(s, tape.gates[k]);
        }
        const auto z = s.expectation_z_all();
        double acc = 0.0;
        for (std::size_t q = 0; q < n; ++q) {
            acc += upstream[q] * z[q];
        }
        return acc;
    };

    std::vector<double> encoding_grad(2 * block.input_dim(), 0.0);
    for (std::size_t at = 0; at < tape.gates.size(); ++at) {
        const long slot = tape.slots[at];
        if (slot == kNoSlot) {
            continue;
        }
        const double d = 0.5 * (shifted_objective(at, kHalfPi) -
                                shifted_objective(at, -kHalfPi));
        if (slot >= 0) {
            grad.thetas[static_cast<std::size_t>(slot)] = d;
        } else {
            encoding_grad[static_cast<std::size_t>(-slot - 1)] = d;
        }
    }

    for (std::size_t i = 0; i < grad.input.size(); ++i) {
        const double x = input[i];
        const double x2 = x * x;
        grad.input[i] = encoding_grad[2 * i] / (1.0 + x2) +
                        encoding_grad[2 * i + 1] * 2.0 * x / (1.0 + x2 * x2);
    }
    return grad;
}

std::vector<double> vqc_gradient(const VQCBlock &block,
                                 std::span<const double> input,
                                 std::span<const double> upstream) {
    return vqc_backward(block, input, upstream).thetas;
}

} // namespace qens::quantum
