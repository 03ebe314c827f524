#include "qens/bayes_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <fmt/format.h>
#include <gsl/gsl_cdf.h>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_qrng.h>
#include <gsl/gsl_randist.h>

#include "qens/error.hpp"
#include "qens/parallel.hpp"
#include "qens/rng.hpp"

namespace qens::bo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Thin RAII wrapper around GSL's derivative-free simplex minimiser.
class NelderMead {
  public:
    using Fn = std::function<double(std::span<const double>)>;

    NelderMead(std::size_t dims, Fn fn) : fn_(std::move(fn)), dims_(dims) {
        state_ = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, dims);
        x_ = gsl_vector_alloc(dims);
        step_ = gsl_vector_alloc(dims);
    }
    ~NelderMead() {
        gsl_multimin_fminimizer_free(state_);
        gsl_vector_free(x_);
        gsl_vector_free(step_);
    }
    NelderMead(const NelderMead &) = delete;
    NelderMead &operator=(const NelderMead &) = delete;

    /// Returns the minimiser; `value` receives fn at that point.
    std::vector<double> run(std::span<const double> start, double step,
                            std::size_t max_iterations, double &value) {
        for (std::size_t d = 0; d < dims_; ++d) {
            gsl_vector_set(x_, d, start[d]);
            gsl_vector_set(step_, d, step);
        }
        gsl_multimin_function f{&NelderMead::trampoline, dims_, this};
        gsl_multimin_fminimizer_set(state_, &f, x_, step_);
        for (std::size_t it = 0; it < max_iterations; ++it) {
            if (gsl_multimin_fminimizer_iterate(state_) != GSL_SUCCESS) {
                break;
            }
            const double size = gsl_multimin_fminimizer_size(state_);
            if (gsl_multimin_test_size(size, 1e-8) == GSL_SUCCESS) {
                break;
            }
        }
        std::vector<double> out(dims_);
        for (std::size_t d = 0; d < dims_; ++d) {
            out[d] = gsl_vector_get(state_->x, d);
        }
        value = state_->fval;
        return out;
    }

  private:
    static double trampoline(const gsl_vector *v, void *self) {
        auto *nm = static_cast<NelderMead *>(self);
        std::vector<double> x(nm->dims_);
        for (std::size_t d = 0; d < nm->dims_; ++d) {
            x[d] = gsl_vector_get(v, d);
        }
        const double y = nm->fn_(x);
        // GSL's simplex cannot handle non-finite values.
        return std::isfinite(y) ? y : 1e300;
    }

    Fn fn_;
    std::size_t dims_;
    gsl_multimin_fminimizer *state_;
    gsl_vector *x_;
    gsl_vector *step_;
};

void check_points(const std::vector<std::vector<double>> &points,
                  std::span<const double> scores) {
    if (points.empty() || points.size() != scores.size()) {
        throw ShapeError("one score per observed point is required");
    }
    const auto d = points.front().size();
    if (d == 0) {
        throw ShapeError("observed points must have at least one dimension");
    }
    for (const auto &p : points) {
        if (p.size() != d) {
            throw ShapeError("observed points have different dimensions");
        }
    }
    for (double s : scores) {
        if (!std::isfinite(s)) {
            throw NumericError("GP scores must be finite");
        }
    }
}

Eigen::MatrixXd kernel_matrix(const std::vector<std::vector<double>> &points,
                              const GPHyper &hyper) {
    const auto n = static_cast<Eigen::Index>(points.size());
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            K(i, j) = K(j, i) = matern52(points[static_cast<std::size_t>(i)],
                                         points[static_cast<std::size_t>(j)], hyper);
        }
        K(i, i) += hyper.noise_variance;
    }
    return K;
}

std::pair<double, double> mean_and_variance(std::span<const double> scores) {
    const double n = static_cast<double>(scores.size());
    const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
    double var = 0.0;
    for (double s : scores) {
        var += (s - mean) * (s - mean);
    }
    return {mean, var / n};
}

} // namespace

double matern52(std::span<const double> a, std::span<const double> b,
                const GPHyper &hyper) {
    double r2 = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) {
        const double z = (a[d] - b[d]) / hyper.lengthscales[d];
        r2 += z * z;
    }
    const double s5r = std::sqrt(5.0 * r2);
    return hyper.signal_variance * (1.0 + s5r + 5.0 * r2 / 3.0) * std::exp(-s5r);
}

GPSurrogate::GPSurrogate(std::vector<std::vector<double>> points,
                         std::vector<double> scores, GPHyper hyper)
    : points_(std::move(points)), scores_(std::move(scores)), hyper_(std::move(hyper)) {
    check_points(points_, scores_);
    if (hyper_.lengthscales.size() != points_.front().size()) {
        throw ShapeError("one lengthscale per dimension is required");
    }
    hyper_.noise_variance = std::max(hyper_.noise_variance, kNoiseFloor);
    prior_mean_ = mean_and_variance(scores_).first;
    chol_.compute(kernel_matrix(points_, hyper_));
    if (chol_.info() != Eigen::Success) {
        throw NumericError("GP kernel matrix is not positive definite");
    }
    const auto n = static_cast<Eigen::Index>(scores_.size());
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        r(i) = scores_[static_cast<std::size_t>(i)] - prior_mean_;
    }
    alpha_ = chol_.solve(r);
    const Eigen::MatrixXd L = chol_.matrixL();
    lml_ = -0.5 * r.dot(alpha_) - L.diagonal().array().log().sum() -
           0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

Eigen::VectorXd GPSurrogate::cross(std::span<const double> x) const {
    if (x.size() != dims()) {
        throw ShapeError("query point dimension differs from the GP");
    }
    Eigen::VectorXd k(static_cast<Eigen::Index>(points_.size()));
    for (std::size_t i = 0; i < points_.size(); ++i) {
        k(static_cast<Eigen::Index>(i)) = matern52(points_[i], x, hyper_);
    }
    return k;
}

double GPSurrogate::mean(std::span<const double> x) const {
    return prior_mean_ + cross(x).dot(alpha_);
}

double GPSurrogate::variance(std::span<const double> x) const {
    const Eigen::VectorXd k = cross(x);
    const Eigen::VectorXd v = chol_.matrixL().solve(k);
    return std::max(0.0, hyper_.signal_variance - v.squaredNorm());
}

double log_marginal_likelihood(const std::vector<std::vector<double>> &points,
                               std::span<const double> scores, const GPHyper &hyper) {
    try {
        return GPSurrogate(points, {scores.begin(), scores.end()}, hyper)
            .log_marginal_likelihood();
    } catch (const NumericError &) {
        return -kInf;
    }
}

GPSurrogate gp_fit(std::vector<std::vector<double>> points, std::vector<double> scores,
                   const GPFitOptions &options) {
    check_points(points, scores);
    if (points.size() < 2) {
        throw ConfigError("a GP fit needs at least 2 observations");
    }
    const auto d = points.front().size();
    double v = mean_and_variance(scores).second;
    if (!(v > 1e-12)) {
        v = 1.0;
    }

    // Search vector: log lengthscales, log signal variance and (unless
    // fixed) log of the noise above the floor, each clamped to a box.
    const bool fit_noise = !options.fixed_noise.has_value();
    const std::size_t P = d + 1 + (fit_noise ? 1 : 0);
    std::vector<double> lo(P), hi(P);
    for (std::size_t k = 0; k < d; ++k) {
        lo[k] = std::log(1e-2);
        hi[k] = std::log(1e2);
    }
    lo[d] = std::log(1e-4 * v);
    hi[d] = std::log(1e2 * v);
    if (fit_noise) {
        lo[d + 1] = std::log(1e-10 * v);
        hi[d + 1] = std::log(v);
    }
    auto to_hyper = [&](std::span<const double> p) {
        GPHyper h;
        for (std::size_t k = 0; k < d; ++k) {
            h.lengthscales.push_back(std::exp(std::clamp(p[k], lo[k], hi[k])));
        }
        h.signal_variance = std::exp(std::clamp(p[d], lo[d], hi[d]));
        h.noise_variance =
            fit_noise ? kNoiseFloor + std::exp(std::clamp(p[d + 1], lo[d + 1], hi[d + 1]))
                      : std::max(*options.fixed_noise, kNoiseFloor);
        return h;
    };

    std::vector<std::vector<double>> starts;
    std::vector<double> base(P);
    for (std::size_t k = 0; k < d; ++k) {
        base[k] = std::log(0.3);
    }
    base[d] = std::log(v);
    if (fit_noise) {
        base[d + 1] = std::log(1e-3 * v);
    }
    starts.push_back(base);
    auto rng = make_rng(options.seed, "gp-fit");
    for (std::size_t s = 0; s < options.restarts; ++s) {
        std::vector<double> p(P);
        for (std::size_t k = 0; k < P; ++k) {
            p[k] = uniform(rng, lo[k], hi[k]);
        }
        starts.push_back(std::move(p));
    }

    NelderMead nm(P, [&](std::span<const double> p) {
        return -log_marginal_likelihood(points, scores, to_hyper(p));
    });
    double best_value = kInf;
    std::vector<double> best = base;
    for (const auto &start : starts) {
        double value = 0.0;
        auto p = nm.run(start, 1.0, options.max_iterations, value);
        if (value < best_value) {
            best_value = value;
            best = std::move(p);
        }
    }
    return GPSurrogate(std::move(points), std::move(scores), to_hyper(best));
}

double expected_improvement(double mean, double variance, double best) {
    const double sigma = std::sqrt(std::max(variance, 0.0));
    const double gain = best - mean;
    if (sigma < 1e-12) {
        return std::max(gain, 0.0);
    }
    const double z = gain / sigma;
    return std::max(0.0, gain * gsl_cdf_ugaussian_P(z) + sigma * gsl_ran_ugaussian_pdf(z));
}

double expected_improvement(const GPSurrogate &gp, std::span<const double> x,
                            double best) {
    return expected_improvement(gp.mean(x), gp.variance(x), best);
}

std::vector<double> acquire_next(const GPSurrogate &gp, double best_so_far,
                                 const AcquireOptions &options) {
    const auto d = gp.dims();
    if (d > 40) {
        throw ConfigError("the Sobol candidate grid supports at most 40 dimensions");
    }
    const auto n = std::max<std::size_t>(1, options.candidates);
    std::vector<std::vector<double>> grid(n, std::vector<double>(d));
    std::vector<double> ei(n);
    gsl_qrng *q = gsl_qrng_alloc(gsl_qrng_sobol, static_cast<unsigned>(d));
    for (std::size_t i = 0; i < n; ++i) {
        gsl_qrng_get(q, grid[i].data());
        ei[i] = expected_improvement(gp, grid[i], best_so_far);
    }
    gsl_qrng_free(q);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ei[a] > ei[b]; });

    auto clamp01 = [](std::span<const double> x) {
        std::vector<double> y(x.begin(), x.end());
        for (auto &v : y) {
            v = std::clamp(v, 0.0, 1.0);
        }
        return y;
    };
    std::vector<double> best = grid[order.front()];
    double best_ei = ei[order.front()];
    NelderMead nm(d, [&](std::span<const double> x) {
        return -expected_improvement(gp, clamp01(x), best_so_far);
    });
    for (std::size_t r = 0; r < std::min(options.refine, n); ++r) {
        double value = 0.0;
        const auto x = clamp01(nm.run(grid[order[r]], 0.05, options.refine_iterations, value));
        const double e = expected_improvement(gp, x, best_so_far);
        if (e > best_ei) {
            best_ei = e;
            best = x;
        }
    }
    return best;
}

std::vector<std::vector<double>> latin_hypercube(std::size_t n, std::size_t dims,
                                                 std::uint64_t seed) {
    auto rng = make_rng(seed, "lhs");
    std::vector<std::vector<double>> pts(n, std::vector<double>(dims));
    std::vector<std::size_t> perm(n);
    for (std::size_t d = 0; d < dims; ++d) {
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = n; i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
            std::swap(perm[i - 1], perm[std::min(j, i - 1)]);
        }
        for (std::size_t i = 0; i < n; ++i) {
            pts[i][d] = (static_cast<double>(perm[i]) + uniform01(rng)) / static_cast<double>(n);
        }
    }
    return pts;
}

BoResult bo_minimize(const tuning::Objective &objective, std::size_t dims,
                     const BoOptions &options, const tuning::TraceSink &trace) {
    if (options.n_init < 2) {
        throw ConfigError("Bayesian optimisation needs n_init >= 2");
    }
    if (dims < 1) {
        throw ConfigError("Bayesian optimisation needs at least one dimension");
    }
    BoResult out;
    auto evaluate = [&](std::vector<double> x, const char *phase, std::size_t iteration) {
        double y = objective(x);
        const bool bad = !std::isfinite(y);
        if (bad) {
            y = kInf;
        }
        if (trace) {
            trace(tuning::EvalRecord{phase, iteration, out.points.size(), x, y, bad});
        }
        out.points.push_back(std::move(x));
        out.scores.push_back(y);
    };

    for (auto &x : latin_hypercube(options.n_init, dims, derive_seed(options.seed, "bo-init"))) {
        evaluate(std::move(x), "bo-init", 0);
    }
    auto rng = make_rng(options.seed, "bo-fallback");
    for (std::size_t it = 0; it < options.n_iter; ++it) {
        double worst = -kInf;
        double best = kInf;
        for (double s : out.scores) {
            if (std::isfinite(s)) {
                worst = std::max(worst, s);
                best = std::min(best, s);
            }
        }
        std::vector<double> next;
        if (!std::isfinite(best)) {
            next.resize(dims);
            for (auto &v : next) {
                v = uniform01(rng);
            }
        } else {
            std::vector<double> fit_scores = out.scores;
            for (auto &s : fit_scores) {
                if (!std::isfinite(s)) {
                    s = worst;
                }
            }
            auto fit = options.fit;
            fit.seed = derive_seed(options.seed, "bo-fit", it);
            const auto gp = gp_fit(out.points, std::move(fit_scores), fit);
            next = acquire_next(gp, best, options.acquire);
        }
        evaluate(std::move(next), "bo", it + 1);
    }
    out.best_index = static_cast<std::size_t>(
        std::min_element(out.scores.begin(), out.scores.end()) - out.scores.begin());
    return out;
}

std::vector<std::size_t> k_best(std::span<const double> scores,
                                const std::vector<std::string> &keys, std::size_t k) {
    if (keys.size() != scores.size()) {
        throw ShapeError("one key per score is required");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<std::size_t> out;
    for (auto i : order) {
        if (out.size() == k) {
            break;
        }
        const bool seen = std::any_of(out.begin(), out.end(),
                                      [&](std::size_t j) { return keys[j] == keys[i]; });
        if (!seen) {
            out.push_back(i);
        }
    }
    if (out.size() < k) {
        throw ConfigError(
            fmt::format("only {} distinct configurations for K = {}", out.size(), k));
    }
    return out;
}

KBestSet bo_tune(const tuning::Objective &unit_objective, const SearchSpace &space,
                 std::size_t model, std::size_t k, const BoOptions &options,
                 const tuning::TraceSink &trace) {
    space.validate();
    if (k < 1 || k > options.n_init + options.n_iter) {
        throw ConfigError(fmt::format("K = {} must lie in [1, {}] evaluations", k,
                                      options.n_init + options.n_iter));
    }
    const auto result = bo_minimize(unit_objective, SearchSpace::kDims, options, trace);
    std::vector<std::string> keys;
    for (const auto &p : result.points) {
        keys.push_back(space.decode(p).to_string());
    }
    KBestSet out;
    out.model = model;
    for (auto i : k_best(result.scores, keys, k)) {
        out.configs.push_back(space.decode(result.points[i]));
        out.scores.push_back(result.scores[i]);
    }
    return out;
}

Enumeration enumerate_ensembles(const std::vector<KBestSet> &ksets,
                                const CandidateEvaluator &evaluate, std::size_t jobs) {
    if (ksets.empty()) {
        throw ConfigError("enumeration needs at least one K-best set");
    }
    const auto K = ksets.front().configs.size();
    if (K < 1) {
        throw ConfigError("K-best sets must not be empty");
    }
    for (const auto &s : ksets) {
        if (s.configs.size() != K) {
            throw ConfigError("every K-best set must have the same K");
        }
    }
    const auto m = ksets.size();
    std::size_t total = 1;
    for (std::size_t i = 0; i < m; ++i) {
        total *= K;
    }

    Enumeration out;
    out.candidates.resize(total);
    parallel_for(total, jobs, [&](std::size_t t) {
        std::vector<std::size_t> idx(m);
        std::size_t rest = t;
        for (std::size_t j = m; j-- > 0;) {
            idx[j] = rest % K;
            rest /= K;
        }
        std::vector<HyperConfig> configs;
        for (std::size_t j = 0; j < m; ++j) {
            configs.push_back(ksets[j].configs[idx[j]]);
        }
        EnsembleCandidate c;
        try {
            c = evaluate(configs);
        } catch (const Error &e) {
            c = EnsembleCandidate{};
            c.objective = kInf;
            c.error = e.what();
        }
        if (!std::isfinite(c.objective)) {
            c.objective = kInf;
        }
        c.indices = std::move(idx);
        c.configs = std::move(configs);
        out.candidates[t] = std::move(c);
    });
    for (std::size_t t = 1; t < total; ++t) {
        if (out.candidates[t].objective < out.candidates[out.best].objective) {
            out.best = t;
        }
    }
    return out;
}

} // namespace qens::bo
