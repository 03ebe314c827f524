#include "qens/ensemble.hpp"

#include <cmath>
#include <ostream>

#include <json.hpp>

#include "qens/error.hpp"

namespace qens::ensemble {

void ErrorSeries::validate() const {
    const auto T = steps();
    for (const auto &series : errors) {
        if (series.size() != T) {
            throw ShapeError("error series have different lengths");
        }
        for (double e : series) {
            if (!std::isfinite(e) || e < 0.0) {
                throw NumericError("errors must be finite and non-negative");
            }
        }
    }
}

ErrorSeries absolute_errors(std::span<const double> truth,
                            const std::vector<std::vector<double>> &predictions) {
    ErrorSeries out;
    for (const auto &p : predictions) {
        if (p.size() != truth.size()) {
            throw ShapeError("prediction series length differs from truth");
        }
        std::vector<double> e(truth.size());
        for (std::size_t t = 0; t < truth.size(); ++t) {
            e[t] = std::abs(truth[t] - p[t]);
        }
        out.errors.push_back(std::move(e));
    }
    out.validate();
    return out;
}

EnsembleWeights EnsembleWeights::uniform(std::size_t models,
                                         const WeightOptions &options) {
    if (models < 1) {
        throw ConfigError("an ensemble needs at least one model");
    }
    if (!(options.gamma > 0.0 && options.gamma <= 1.0)) {
        throw ConfigError("forgetting factor gamma must be in (0, 1]");
    }
    if (!std::isfinite(options.lambda) || options.lambda < 0.0) {
        throw ConfigError("lambda must be finite and >= 0");
    }
    if (options.window && *options.window < 1) {
        throw ConfigError("error window nu must be >= 1");
    }
    EnsembleWeights w;
    w.w.assign(models, 1.0 / static_cast<double>(models));
    w.history.push_back(w.w);
    w.options = options;
    return w;
}

double exp_smoothed_error(const ErrorSeries &errors, std::size_t model,
                          std::size_t k, double gamma, std::size_t nu) {
    if (model >= errors.models()) {
        throw ShapeError("model index out of range");
    }
    if (k < 1 || k > errors.steps()) {
        throw ConfigError("step k must lie in [1, T]");
    }
    if (nu < 1 || nu > k) {
        throw ConfigError("error window must satisfy 1 <= nu <= k");
    }
    if (!(gamma > 0.0 && gamma <= 1.0)) {
        throw ConfigError("forgetting factor gamma must be in (0, 1]");
    }
    const auto &e = errors.errors[model];
    double acc = 0.0;
    double discount = 1.0;
    // Newest first: t = k, k-1, ..., k-nu+1 (1-based).
    for (std::size_t back = 0; back < nu; ++back) {
        acc += discount * e[k - 1 - back];
        discount *= gamma;
    }
    return acc;
}

std::vector<double> inverse_error_shares(std::span<const double> epsilons) {
    double total = 0.0;
    std::vector<double> inv(epsilons.size());
    for (std::size_t m = 0; m < epsilons.size(); ++m) {
        if (!std::isfinite(epsilons[m]) || epsilons[m] <= 0.0) {
            throw NumericError("smoothed errors must be finite and positive");
        }
        inv[m] = 1.0 / epsilons[m];
        total += inv[m];
    }
    for (auto &x : inv) {
        x /= total;
    }
    return inv;
}

EnsembleWeights weight_update(EnsembleWeights weights,
                              const ErrorSeries &errors, std::size_t k) {
    if (errors.models() != weights.models()) {
        throw ShapeError("error series and weights disagree on model count");
    }
    const std::size_t nu =
        std::min(weights.options.window.value_or(k), k);
    std::vector<double> eps(weights.models());
    for (std::size_t m = 0; m < eps.size(); ++m) {
        eps[m] = exp_smoothed_error(errors, m, k, weights.options.gamma, nu);
        if (!std::isfinite(eps[m])) {
            throw NumericError("non-finite smoothed error");
        }
        if (eps[m] <= 0.0) {
            eps[m] = weights.options.epsilon_floor;
            ++weights.floored;
        }
    }
    const auto delta = inverse_error_shares(eps);
    for (std::size_t m = 0; m < delta.size(); ++m) {
        weights.w[m] += weights.options.lambda * delta[m];
    }
    weights.history.push_back(weights.w);
    weights.epsilons.push_back(std::move(eps));
    ++weights.updates;
    return weights;
}

EnsembleWeights evolve_weights(const ErrorSeries &errors,
                               const WeightOptions &options) {
    errors.validate();
    auto w = EnsembleWeights::uniform(errors.models(), options);
    for (std::size_t k = 1; k <= errors.steps(); ++k) {
        w = weight_update(std::move(w), errors, k);
    }
    return w;
}

std::vector<double> finalize_weights(const EnsembleWeights &weights) {
    if (weights.updates < 1) {
        throw ConfigError("finalize_weights needs at least one update step");
    }
    double total = 0.0;
    for (double x : weights.w) {
        if (!std::isfinite(x) || x < 0.0) {
            throw NumericError("accumulated weights must be finite and >= 0");
        }
        total += x;
    }
    if (!(total > 0.0)) {
        throw ConfigError("accumulated weights sum to zero");
    }
    std::vector<double> out(weights.w.size());
    for (std::size_t m = 0; m < out.size(); ++m) {
        out[m] = weights.w[m] / total;
    }
    return out;
}

std::vector<double>
combine_predictions(std::span<const double> weights,
                    const std::vector<std::vector<double>> &predictions) {
    if (weights.size() != predictions.size() || predictions.empty()) {
        throw ShapeError("one weight per prediction series is required");
    }
    const auto T = predictions.front().size();
    for (const auto &p : predictions) {
        if (p.size() != T) {
            throw ShapeError("prediction series have different lengths");
        }
    }
    std::vector<double> out(T, 0.0);
    for (std::size_t m = 0; m < predictions.size(); ++m) {
        for (std::size_t t = 0; t < T; ++t) {
            out[t] += weights[m] * predictions[m][t];
        }
    }
    return out;
}

void write_weight_history(std::ostream &out, const EnsembleWeights &weights) {
    for (std::size_t k = 0; k < weights.history.size(); ++k) {
        nlohmann::json rec;
        rec["step"] = k + 1;
        rec["weights"] = weights.history[k];
        rec["epsilons"] = k == 0 ? nlohmann::json(nullptr)
                                 : nlohmann::json(weights.epsilons[k - 1]);
        out << rec.dump() << '\n';
    }
}

} // namespace qens::ensemble
