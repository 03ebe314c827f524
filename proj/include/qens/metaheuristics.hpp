#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qens/rng.hpp"

namespace qens::tuning {

/// Axis-aligned search box.
struct Box {
    std::vector<double> lower;
    std::vector<double> upper;

    static Box unit(std::size_t dims);
    static Box uniform(std::size_t dims, double lo, double hi);

    [[nodiscard]] std::size_t dims() const { return lower.size(); }
    void validate() const;
    [[nodiscard]] bool contains(std::span<const double> x) const;
};

/// Minimised by every tuner.
using Objective = std::function<double(std::span<const double>)>;

/// One objective evaluation, as written to trace files.
struct EvalRecord {
    std::string phase; // "pso", "qga", "bo-init", "bo"
    std::size_t iteration{0};
    std::size_t evaluation{0}; // 0-based, counted across phases
    std::vector<double> point;
    double objective{0.0};
    bool non_finite{false}; // objective returned NaN/inf, recorded as +inf
};

using TraceSink = std::function<void(const EvalRecord &)>;

// ---------------------------------------------------------------- PSO

struct Particle {
    std::vector<double> position;
    std::vector<double> velocity;
    std::vector<double> pbest;
    double pbest_value;
};

struct PsoOptions {
    std::size_t particles{20};
    std::size_t iterations{50};
    double inertia{0.729};
    double cognitive{1.49445};
    double social{1.49445};
    /// Initial velocities are uniform in +-fraction * (upper - lower).
    double initial_velocity_fraction{0.1};
    /// Stops mid-iteration once this many evaluations have been made.
    std::optional<std::size_t> max_evaluations;
    std::size_t jobs{1};
    std::uint64_t seed{0};
};

struct Swarm {
    std::vector<Particle> particles;
    std::vector<double> gbest;
    double gbest_value;
    double inertia;
    double cognitive;
    double social;
    Box box;
    /// One stream per particle, derived from the seed and the index.
    std::vector<Rng> streams;
    std::size_t iteration{0};
    std::size_t evaluations{0};
    std::size_t non_finite{0};
    /// Added to evaluation indices written to the trace.
    std::size_t trace_offset{0};
};

/// Particles uniform in the box; `seeds` (if any) overwrite the first
/// positions. Nothing is evaluated yet, so pbest/gbest values are +inf.
Swarm make_swarm(const Box &box, const PsoOptions &options,
                 const std::vector<std::vector<double>> &seeds = {});

/**
 * @brief One iteration of the swarm loop.
 *
 * Evaluates every particle (at most `eval_limit` of them), updates personal
 * and global bests, then moves each particle with
 * V <- wV + c1 r1 (P - X) + c2 r2 (G - X), X <- X + V using fresh
 * r1, r2 ~ U(0,1) per particle and dimension. A coordinate leaving the box
 * is clamped and its velocity zeroed. A NaN objective counts as +inf.
 */
void pso_step(Swarm &swarm, const Objective &objective,
              const TraceSink &trace = {},
              std::optional<std::size_t> eval_limit = std::nullopt,
              std::size_t jobs = 1);

struct TuneResult {
    std::vector<double> best_point;
    double best_value;
    std::size_t evaluations{0};
    /// Best value after each iteration / generation.
    std::vector<double> history;
};

TuneResult pso_run(const Objective &objective, const Box &box,
                   const PsoOptions &options, const TraceSink &trace = {},
                   const std::vector<std::vector<double>> &seeds = {},
                   std::size_t evaluation_offset = 0);

// ---------------------------------------------------------------- QGA

/// Qubit-amplitude chromosome: bit j is measured as 1 with probability
/// beta_j^2. Amplitudes are real, as the rotation gate is real.
struct QuantumChromosome {
    std::vector<std::pair<double, double>> genome; // (alpha, beta)

    static QuantumChromosome uniform(std::size_t bits);
    [[nodiscard]] std::vector<bool> measure(Rng &rng) const;
    /// max_j | alpha_j^2 + beta_j^2 - 1 |.
    [[nodiscard]] double max_norm_error() const;
};

/// Applies U(theta) = [[cos, -sin], [sin, cos]] to qubit j.
void rotate(QuantumChromosome &c, std::size_t j, double theta);

/**
 * @brief Rotation-angle lookup table indexed by (bit of the individual,
 * bit of the best, whether the individual is strictly worse).
 *
 * Magnitudes only; the sign is chosen from the amplitude quadrant so the
 * rotation moves the measured bit toward the best individual's bit.
 */
struct RotationPolicy {
    struct Row {
        bool x;
        bool best;
        bool worse;
        double magnitude;
    };
    std::vector<Row> table;
    double cap;

    /// 0 where x == best; 0.05 pi when worse, 0.01 pi on a tie otherwise.
    static RotationPolicy classic();
    /// Every magnitude 0.
    static RotationPolicy zero();

    /// Throws ConfigError if the table is incomplete or exceeds the cap.
    void validate() const;
    [[nodiscard]] double magnitude(bool x, bool best, bool worse) const;
    /// Signed angle for a qubit with amplitudes (alpha, beta).
    [[nodiscard]] double angle(bool x, bool best, bool worse, double alpha,
                               double beta) const;
};

/// Minimised objective over measured bit strings.
using BitObjective = std::function<double(const std::vector<bool> &)>;

struct QgaOptions {
    std::size_t population{20};
    std::size_t genome_bits{16};
    std::size_t generations{50};
    /// Per-qubit probability of swapping alpha and beta after rotation.
    double mutation_probability{0.01};
    std::optional<std::size_t> max_evaluations;
    /// Number of distinct best bit strings remembered for seeding.
    std::size_t keep_top{5};
    std::size_t jobs{1};
    std::uint64_t seed{0};
};

struct QgaResult {
    std::vector<bool> best_bits;
    double best_value;
    std::size_t evaluations{0};
    std::vector<double> history; // all-time best after each generation
    /// Distinct bit strings with the lowest objective seen, ascending.
    std::vector<std::pair<std::vector<bool>, double>> top;
    std::vector<QuantumChromosome> population;
};

/// Throws ConfigError for an empty population or genome.
QgaResult qga_run(const RotationPolicy &policy, const QgaOptions &options,
                  const BitObjective &objective,
                  const std::function<void(std::size_t generation,
                                           const std::vector<bool> &bits,
                                           double value)> &on_eval = {});

/// Fixed-point decoding of a bit string into a box: each dimension reads
/// `widths[d]` bits (most significant first) as k in [0, 2^w - 1] and maps
/// it to lower + k / (2^w - 1) * (upper - lower).
struct BinaryCodec {
    std::vector<std::size_t> widths;

    [[nodiscard]] std::size_t total_bits() const;
    [[nodiscard]] std::vector<double> decode(const std::vector<bool> &bits,
                                             const Box &box) const;
};

// ------------------------------------------------------------- hybrid

struct HybridOptions {
    /// Total objective evaluations across both phases.
    std::size_t budget{50};
    /// Share of the budget given to the QGA phase.
    double qga_fraction{0.4};
    std::size_t qga_population{10};
    std::size_t particles{10};
    /// QGA's best distinct points injected as initial particle positions.
    std::size_t top_k{3};
    double mutation_probability{0.01};
    RotationPolicy policy{RotationPolicy::classic()};
    /// Constants for the PSO phase; its particle count, seed, budget and
    /// jobs come from the fields here.
    PsoOptions pso{};
    std::size_t jobs{1};
    std::uint64_t seed{0};
};

struct HybridResult {
    TuneResult qga;
    TuneResult pso;
    std::vector<double> best_point;
    double best_value;
    std::size_t evaluations{0};
};

/// QGA over the codec's bit strings, then PSO seeded with QGA's top-k
/// decoded points; returns the better phase. The PSO phase draws from the
/// same streams as a stand-alone pso_run with the same seed.
HybridResult hybrid_qga_pso(const Objective &objective, const Box &box,
                            const BinaryCodec &codec,
                            const HybridOptions &options,
                            const TraceSink &trace = {});

/// Stand-alone QGA over a box (decoded through the codec).
TuneResult qga_box_run(const Objective &objective, const Box &box,
                       const BinaryCodec &codec, const RotationPolicy &policy,
                       const QgaOptions &options, const TraceSink &trace = {},
                       std::vector<std::vector<double>> *top_points = nullptr,
                       std::size_t evaluation_offset = 0);

// ---------------------------------------------------- benchmark functions

double sphere(std::span<const double> x);
double rastrigin(std::span<const double> x);

} // namespace qens::tuning
