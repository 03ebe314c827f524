#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "qens/hyperconfig.hpp"
#include "qens/metaheuristics.hpp"

namespace qens::bo {

/// Matern-5/2 ARD kernel hyperparameters.
struct GPHyper {
    std::vector<double> lengthscales;
    double signal_variance{1.0};
    double noise_variance{1e-6};
};

inline constexpr double kNoiseFloor = 1e-6;

/// k(x, x') = s2 (1 + sqrt5 r + 5 r^2 / 3) exp(-sqrt5 r), r the
/// lengthscale-weighted distance.
double matern52(std::span<const double> a, std::span<const double> b,
                const GPHyper &hyper);

struct GPFitOptions {
    /// Random starts in addition to the fixed default start.
    std::size_t restarts{4};
    std::size_t max_iterations{400};
    /// Keep this noise variance instead of fitting it (still floored).
    std::optional<double> fixed_noise;
    std::uint64_t seed{0};
};

/**
 * @brief Gaussian-process surrogate with a constant prior mean (the sample
 * mean of the scores).
 *
 * Points live in [0,1]^d. The posterior is that of the latent function,
 * so the variance at an observed point is at most the noise variance.
 */
class GPSurrogate {
  public:
    /// Conditions on the data with the given hyperparameters. Throws
    /// ShapeError on ragged input and NumericError if Cholesky fails.
    GPSurrogate(std::vector<std::vector<double>> points, std::vector<double> scores,
                GPHyper hyper);

    [[nodiscard]] double mean(std::span<const double> x) const;
    /// Clamped at 0.
    [[nodiscard]] double variance(std::span<const double> x) const;
    [[nodiscard]] double log_marginal_likelihood() const { return lml_; }
    [[nodiscard]] const GPHyper &hyper() const { return hyper_; }
    [[nodiscard]] double prior_mean() const { return prior_mean_; }
    [[nodiscard]] const std::vector<std::vector<double>> &points() const { return points_; }
    [[nodiscard]] const std::vector<double> &scores() const { return scores_; }
    [[nodiscard]] std::size_t dims() const { return points_.front().size(); }

  private:
    [[nodiscard]] Eigen::VectorXd cross(std::span<const double> x) const;

    std::vector<std::vector<double>> points_;
    std::vector<double> scores_;
    GPHyper hyper_;
    double prior_mean_{0.0};
    Eigen::LLT<Eigen::MatrixXd> chol_;
    Eigen::VectorXd alpha_;
    double lml_{0.0};
};

/// Log marginal likelihood of the data under `hyper`; -inf when the kernel
/// matrix is not positive definite.
double log_marginal_likelihood(const std::vector<std::vector<double>> &points,
                               std::span<const double> scores, const GPHyper &hyper);

/// Maximises the log marginal likelihood over (lengthscales, signal
/// variance, noise variance) in log space with multi-start Nelder-Mead.
/// Requires at least 2 observations.
GPSurrogate gp_fit(std::vector<std::vector<double>> points, std::vector<double> scores,
                   const GPFitOptions &options = {});

/// E[max(best - f(x), 0)] for f(x) ~ N(mean, variance).
double expected_improvement(double mean, double variance, double best);
double expected_improvement(const GPSurrogate &gp, std::span<const double> x,
                            double best);

struct AcquireOptions {
    std::size_t candidates{1024};
    /// Best grid points polished by a bounded Nelder-Mead on EI.
    std::size_t refine{4};
    std::size_t refine_iterations{100};
};

/// Maximiser of EI over a Sobol grid in [0,1]^d followed by local
/// refinement of the best grid points.
std::vector<double> acquire_next(const GPSurrogate &gp, double best_so_far,
                                 const AcquireOptions &options = {});

/// n points in [0,1]^d, one per stratum in every dimension.
std::vector<std::vector<double>> latin_hypercube(std::size_t n, std::size_t dims,
                                                 std::uint64_t seed);

struct BoOptions {
    std::size_t n_init{5};
    std::size_t n_iter{15};
    GPFitOptions fit{};
    AcquireOptions acquire{};
    std::uint64_t seed{0};
};

struct BoResult {
    std::vector<std::vector<double>> points;
    std::vector<double> scores;
    std::size_t best_index{0};
};

/// LHS design of n_init points, then n_iter rounds of fit, acquire and
/// evaluate. Non-finite scores are recorded as +inf in the result and
/// replaced by the worst finite score when fitting. Trace phases are
/// "bo-init" and "bo".
BoResult bo_minimize(const tuning::Objective &objective, std::size_t dims,
                     const BoOptions &options, const tuning::TraceSink &trace = {});

/// Indices of the k lowest scores whose keys are distinct, ascending by
/// score (earlier index first on ties). Throws ConfigError when fewer than
/// k distinct keys exist.
std::vector<std::size_t> k_best(std::span<const double> scores,
                                const std::vector<std::string> &keys, std::size_t k);

/// The K lowest-scoring distinct configurations found for one base model.
struct KBestSet {
    std::size_t model{0};
    std::vector<HyperConfig> configs;
    std::vector<double> scores; // observed, non-decreasing
};

/// bo_minimize over the unit cube of `space`, keyed by decoded config.
/// Throws ConfigError when k exceeds the number of evaluations.
KBestSet bo_tune(const tuning::Objective &unit_objective, const SearchSpace &space,
                 std::size_t model, std::size_t k, const BoOptions &options,
                 const tuning::TraceSink &trace = {});

/// One tuple of per-model configurations and its evaluated ensemble.
struct EnsembleCandidate {
    std::vector<std::size_t> indices; // index into each KBestSet
    std::vector<HyperConfig> configs;
    double objective{0.0};
    std::vector<double> weights;
    std::string error; // set when evaluation failed (objective is +inf)
};

using CandidateEvaluator =
    std::function<EnsembleCandidate(const std::vector<HyperConfig> &configs)>;

struct Enumeration {
    std::vector<EnsembleCandidate> candidates; // lexicographic tuple order
    std::size_t best{0};
};

/// Evaluates all K^m tuples (first model's index varies slowest). A tuple
/// whose evaluation throws qens::Error gets objective +inf. The lowest
/// objective wins, the earliest tuple on ties. Throws ConfigError for an
/// empty list or unequal K.
Enumeration enumerate_ensembles(const std::vector<KBestSet> &ksets,
                                const CandidateEvaluator &evaluate, std::size_t jobs = 1);

} // namespace qens::bo
