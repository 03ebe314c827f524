#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace qens::ensemble {

/// Per-model prediction errors e_m^(t) >= 0; errors[m][t] with t 0-based.
struct ErrorSeries {
    std::vector<std::vector<double>> errors;

    [[nodiscard]] std::size_t models() const { return errors.size(); }
    [[nodiscard]] std::size_t steps() const {
        return errors.empty() ? 0 : errors.front().size();
    }
    /// Throws ShapeError for ragged series, NumericError for negative or
    /// non-finite entries.
    void validate() const;
};

/// |y_t - yhat_{m,t}| for every model.
ErrorSeries absolute_errors(std::span<const double> truth,
                            const std::vector<std::vector<double>> &predictions);

struct WeightOptions {
    double lambda{0.85};
    double gamma{0.85};
    /// Error window nu; the full history when unset.
    std::optional<std::size_t> window;
    /// Substituted for a zero smoothed error before inversion.
    double epsilon_floor{1e-12};
};

/**
 * @brief Combining weights evolved by w^(k+1) = w^(k) + lambda * dw^(k).
 *
 * dw^(k) is each model's share of the summed inverse smoothed errors at
 * step k, so every increment lies on the simplex. `history` holds w^(1)
 * followed by the weights after each update; `epsilons` holds the smoothed
 * errors used at each update.
 */
struct EnsembleWeights {
    std::vector<double> w;
    std::vector<std::vector<double>> history;
    std::vector<std::vector<double>> epsilons;
    WeightOptions options;
    std::size_t updates{0};
    /// Number of smoothed errors that had to be floored.
    std::size_t floored{0};

    /// w^(1) = 1/M for every model.
    static EnsembleWeights uniform(std::size_t models,
                                   const WeightOptions &options = {});

    [[nodiscard]] std::size_t models() const { return w.size(); }
};

/// eps_m^(k) = sum_{t=k-nu+1}^{k} gamma^(k-t) e_m^(t) with 1-based k.
/// Requires 1 <= nu <= k <= steps and 0 < gamma <= 1.
double exp_smoothed_error(const ErrorSeries &errors, std::size_t model,
                          std::size_t k, double gamma, std::size_t nu);

/// (1/eps_m) / sum_n (1/eps_n). Throws NumericError on non-finite or
/// non-positive input.
std::vector<double> inverse_error_shares(std::span<const double> epsilons);

/// One update at 1-based step k.
EnsembleWeights weight_update(EnsembleWeights weights,
                              const ErrorSeries &errors, std::size_t k);

/// Uniform start followed by updates at k = 1..T, T = errors.steps().
EnsembleWeights evolve_weights(const ErrorSeries &errors,
                               const WeightOptions &options = {});

/// w_m / sum_n w_n. Throws ConfigError before any update or when the
/// accumulated weights do not have a positive sum.
std::vector<double> finalize_weights(const EnsembleWeights &weights);

/// yhat_t = sum_m w_m yhat_{m,t}.
std::vector<double>
combine_predictions(std::span<const double> weights,
                    const std::vector<std::vector<double>> &predictions);

/// One JSON object per line: {"step", "weights", "epsilons"}.
void write_weight_history(std::ostream &out, const EnsembleWeights &weights);

} // namespace qens::ensemble
