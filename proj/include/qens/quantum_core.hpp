#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "qens/rng.hpp"

namespace qens::quantum {

using Complex = std::complex<double>;

inline constexpr std::size_t kMaxQubits = 10;

/**
 * @brief Pure state of `n` qubits stored as 2^n complex amplitudes.
 *
 * Qubit 0 is the least-significant bit of the amplitude index, so basis
 * state |q_{n-1} ... q_1 q_0> lives at index sum_i q_i 2^i.
 */
class StateVector {
  public:
    /// |0...0> on `n_qubits` qubits.
    explicit StateVector(std::size_t n_qubits);

    /// Wraps explicit amplitudes; the length must be a power of two and the
    /// norm must be 1 within 1e-10.
    static StateVector from_amplitudes(std::vector<Complex> amplitudes);

    [[nodiscard]] std::size_t num_qubits() const { return n_qubits_; }
    [[nodiscard]] std::size_t size() const { return amps_.size(); }
    [[nodiscard]] std::span<const Complex> amplitudes() const { return amps_; }
    [[nodiscard]] const Complex &operator[](std::size_t i) const {
        return amps_[i];
    }

    [[nodiscard]] double norm_squared() const;

    /// <Z_q> = P(q = 0) - P(q = 1).
    [[nodiscard]] double expectation_z(std::size_t qubit) const;

    /// <Z_q> for every qubit in one sweep.
    [[nodiscard]] std::vector<double> expectation_z_all() const;

    // In-place kernels. Callers validate indices through apply_gate().
    void apply_rx(std::size_t target, double angle);
    void apply_ry(std::size_t target, double angle);
    void apply_rz(std::size_t target, double angle);
    void apply_h(std::size_t target);
    void apply_cnot(std::size_t control, std::size_t target);

  private:
    StateVector() = default;
    std::size_t n_qubits_{0};
    std::vector<Complex> amps_;
};

enum class GateKind { RX, RY, RZ, CNOT, H };

struct Gate {
    GateKind kind{GateKind::H};
    std::size_t target{0};
    std::optional<std::size_t> control;
    double angle{0.0};

    static Gate rx(std::size_t q, double a) { return {GateKind::RX, q, {}, a}; }
    static Gate ry(std::size_t q, double a) { return {GateKind::RY, q, {}, a}; }
    static Gate rz(std::size_t q, double a) { return {GateKind::RZ, q, {}, a}; }
    static Gate h(std::size_t q) { return {GateKind::H, q, {}, 0.0}; }
    static Gate cnot(std::size_t c, std::size_t t) {
        return {GateKind::CNOT, t, c, 0.0};
    }

    [[nodiscard]] bool is_rotation() const {
        return kind == GateKind::RX || kind == GateKind::RY ||
               kind == GateKind::RZ;
    }
    /// The gate that undoes this one.
    [[nodiscard]] Gate inverse() const;
};

/// Returns the evolved state; throws InvalidGateError for bad indices.
StateVector apply_gate(StateVector state, const Gate &gate);

/// In-place variant used on hot paths.
void apply_gate_inplace(StateVector &state, const Gate &gate);

enum class Encoding {
    /// RY(arctan(x_i)) then RZ(arctan(x_i^2)) on qubit i.
    ArctanAngle,
    /// No input; the circuit starts from |0...0>.
    None,
};

/**
 * @brief Parameterised circuit: angle encoding of an n-qubit input followed
 * by `n_layers` of [CNOT ring, RX RY RZ on every qubit], read out as <Z_i>.
 *
 * The ring is CNOT(i, i+1 mod n) for n >= 3, a single CNOT(0, 1) for n = 2
 * and absent for n = 1.
 */
class VQCBlock {
  public:
    VQCBlock(std::size_t n_qubits, std::size_t n_layers,
             Encoding encoding = Encoding::ArctanAngle);

    /// Thetas uniform in [-pi, pi].
    static VQCBlock random(std::size_t n_qubits, std::size_t n_layers,
                           Rng &rng, Encoding encoding = Encoding::ArctanAngle);

    [[nodiscard]] std::size_t num_qubits() const { return n_qubits_; }
    [[nodiscard]] std::size_t num_layers() const { return n_layers_; }
    [[nodiscard]] Encoding encoding() const { return encoding_; }
    /// 0 when the encoding is None.
    [[nodiscard]] std::size_t input_dim() const;

    /// Flat [n_layers][n_qubits][3] (RX, RY, RZ).
    [[nodiscard]] std::span<const double> thetas() const { return thetas_; }
    [[nodiscard]] std::span<double> thetas() { return thetas_; }
    [[nodiscard]] std::size_t num_thetas() const { return thetas_.size(); }

    double &theta(std::size_t layer, std::size_t qubit, std::size_t axis);
    [[nodiscard]] double theta(std::size_t layer, std::size_t qubit,
                               std::size_t axis) const;

    /// Per-qubit (RY angle, RZ angle) produced by the encoding.
    [[nodiscard]] std::vector<std::pair<double, double>>
    encoding_angles(std::span<const double> input) const;

    /// Full gate list for `input`, encoding first.
    [[nodiscard]] std::vector<Gate> circuit(std::span<const double> input) const;

    bool operator==(const VQCBlock &) const = default;

  private:
    std::size_t n_qubits_;
    std::size_t n_layers_;
    Encoding encoding_;
    std::vector<double> thetas_;
};

/// Per-qubit <Z_i> of the block's final state. Exact, no sampling.
std::vector<double> run_vqc(const VQCBlock &block,
                            std::span<const double> input);

struct VQCGradient {
    /// d(upstream . output)/d(thetas), same layout as VQCBlock::thetas().
    std::vector<double> thetas;
    /// d(upstream . output)/d(input); empty when the block has no encoding.
    std::vector<double> input;
};

/// Parameter-shift gradient of upstream . run_vqc(block, input), with respect
/// to every trainable angle and (through the encoding rotations) the input.
VQCGradient vqc_backward(const VQCBlock &block, std::span<const double> input,
                         std::span<const double> upstream);

/// Gradient with respect to the thetas only.
std::vector<double> vqc_gradient(const VQCBlock &block,
                                 std::span<const double> input,
                                 std::span<const double> upstream);

} // namespace qens::quantum
