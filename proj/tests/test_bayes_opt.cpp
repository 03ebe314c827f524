#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "oracles.hpp"
#include "qens/bayes_opt.hpp"
#include "qens/error.hpp"

using namespace qens;
using namespace qens::bo;

namespace {

struct SinFixture {
    std::vector<std::vector<double>> xs{{0.05}, {0.3}, {0.45}, {0.7}, {0.95}};
    std::vector<double> ys;
    SinFixture() {
        for (const auto &x : xs) {
            ys.push_back(std::sin(6 * x[0]));
        }
    }
    [[nodiscard]] double mean() const {
        double s = 0;
        for (double y : ys) {
            s += y;
        }
        return s / static_cast<double>(ys.size());
    }
};

} // namespace

TEST_CASE("Matern 5/2 kernel matches its closed form") {
    const GPHyper h{{0.5, 2.0}, 1.7, 1e-6};
    const std::vector<double> a{0.1, 0.2}, b{0.4, 0.9};
    CHECK(matern52(a, b, h) == doctest::Approx(oracle::matern52(a, b, {0.5, 2.0}, 1.7)).epsilon(1e-14));
    CHECK(matern52(a, a, h) == doctest::Approx(1.7));
}

TEST_CASE("GP posterior matches the textbook formulas") {
    const SinFixture f;
    for (const GPHyper &h : {GPHyper{{0.3}, 0.5, 1e-6}, GPHyper{{0.1}, 2.0, 1e-3}}) {
        const GPSurrogate gp(f.xs, f.ys, h);
        CHECK(gp.prior_mean() == doctest::Approx(f.mean()).epsilon(1e-15));
        for (double x = 0.0; x <= 1.0; x += 0.0625) {
            const std::vector<double> p{x};
            const auto want = oracle::gp_posterior(f.xs, f.ys, p, h.lengthscales,
                                                   h.signal_variance, h.noise_variance, f.mean());
            CHECK(std::abs(gp.mean(p) - want.mean) < 1e-6);
            CHECK(std::abs(gp.variance(p) - std::max(want.variance, 0.0)) < 1e-6);
        }
        CHECK(gp.log_marginal_likelihood() ==
              doctest::Approx(oracle::gp_lml(f.xs, f.ys, h.lengthscales, h.signal_variance,
                                             h.noise_variance, f.mean()))
                  .epsilon(1e-9));
    }
}

TEST_CASE("fitted hyperparameters improve the likelihood and stay in bounds") {
    const SinFixture f;
    GPFitOptions o;
    o.seed = 3;
    const auto gp = gp_fit(f.xs, f.ys, o);
    const auto &h = gp.hyper();
    CHECK(h.lengthscales[0] >= 1e-2);
    CHECK(h.lengthscales[0] <= 1e2);
    CHECK(h.noise_variance >= kNoiseFloor);
    const double start = log_marginal_likelihood(f.xs, f.ys, GPHyper{{1.0}, 1.0, 1e-2});
    CHECK(gp.log_marginal_likelihood() >= start);
    // The posterior at a data point collapses to the observation.
    CHECK(gp.mean(f.xs[2]) == doctest::Approx(f.ys[2]).epsilon(1e-3));
    // The fitted surrogate still agrees with the oracle at its hyperparameters.
    const std::vector<double> p{0.6};
    const auto want = oracle::gp_posterior(f.xs, f.ys, p, h.lengthscales, h.signal_variance,
                                           h.noise_variance, f.mean());
    CHECK(std::abs(gp.mean(p) - want.mean) < 1e-6);
    CHECK(std::abs(gp.variance(p) - want.variance) < 1e-6);

    o.fixed_noise = 0.01;
    CHECK(gp_fit(f.xs, f.ys, o).hyper().noise_variance == doctest::Approx(0.01 + kNoiseFloor));
    CHECK_THROWS(gp_fit({{0.5}}, {1.0}, o));
}

TEST_CASE("expected improvement matches the closed form") {
    for (double mu : {-1.0, -0.1, 0.0, 0.3, 2.0}) {
        for (double var : {1e-6, 0.01, 0.5, 4.0}) {
            for (double best : {-0.5, 0.0, 0.4}) {
                CHECK(std::abs(expected_improvement(mu, var, best) -
                               oracle::expected_improvement(mu, var, best)) < 1e-8);
            }
        }
    }
    CHECK(expected_improvement(0.2, 0.0, 0.5) == doctest::Approx(0.3));
    CHECK(expected_improvement(0.7, 0.0, 0.5) == 0.0);

    const SinFixture f;
    const GPSurrogate gp(f.xs, f.ys, GPHyper{{0.3}, 0.5, 1e-6});
    const double best = *std::min_element(f.ys.begin(), f.ys.end());
    for (double x : {0.2, 0.55, 0.85}) {
        const std::vector<double> p{x};
        CHECK(std::abs(expected_improvement(gp, p, best) -
                       oracle::expected_improvement(gp.mean(p), gp.variance(p), best)) < 1e-8);
    }
}

TEST_CASE("BO finds the minimum of a 1-D quadratic in 20 evaluations") {
    BoOptions o;
    o.n_init = 5;
    o.n_iter = 15;
    o.seed = 3;
    std::size_t calls = 0;
    std::vector<std::string> phases;
    const auto r = bo_minimize(
        [&](std::span<const double> x) {
            ++calls;
            return (x[0] - 0.37) * (x[0] - 0.37);
        },
        1, o, [&](const tuning::EvalRecord &e) { phases.push_back(e.phase); });
    CHECK(calls == 20);
    CHECK(std::abs(r.points[r.best_index][0] - 0.37) < 0.05);
    CHECK(std::count(phases.begin(), phases.end(), "bo-init") == 5);
    CHECK(std::count(phases.begin(), phases.end(), "bo") == 15);
}

TEST_CASE("BO survives non-finite scores") {
    BoOptions o;
    o.n_init = 4;
    o.n_iter = 6;
    o.seed = 1;
    const auto r = bo_minimize(
        [](std::span<const double> x) { return x[0] > 0.8 ? std::nan("") : x[0]; }, 1, o);
    CHECK(std::isfinite(r.scores[r.best_index]));
    for (double s : r.scores) {
        CHECK((std::isfinite(s) || std::isinf(s)));
    }
}

TEST_CASE("Latin hypercube covers every stratum once") {
    const auto pts = latin_hypercube(10, 3, 42);
    REQUIRE(pts.size() == 10);
    for (std::size_t d = 0; d < 3; ++d) {
        std::set<int> strata;
        for (const auto &p : pts) {
            CHECK(p[d] >= 0.0);
            CHECK(p[d] < 1.0);
            strata.insert(static_cast<int>(p[d] * 10));
        }
        CHECK(strata.size() == 10);
    }
    CHECK(latin_hypercube(10, 3, 42) == pts);
}

TEST_CASE("k_best keeps the lowest distinct keys") {
    const std::vector<double> s{0.5, 0.1, 0.1, 0.3, 0.2};
    const std::vector<std::string> keys{"a", "b", "b", "c", "d"};
    CHECK(k_best(s, keys, 3) == std::vector<std::size_t>{1, 4, 3});
    const std::vector<std::string> same{"a", "a", "a", "a", "a"};
    CHECK_THROWS_AS(k_best(s, same, 2), ConfigError);
}

TEST_CASE("bo_tune returns K distinct configurations") {
    SearchSpace sp;
    sp.layers = {1, 1};
    sp.qubits = {2, 2};
    BoOptions o;
    o.n_init = 4;
    o.n_iter = 4;
    o.seed = 2;
    std::size_t rows = 0;
    const auto set = bo_tune(
        [](std::span<const double> u) { return std::abs(u[0] - 0.4) + 0.1 * u[3]; }, sp, 1, 3, o,
        [&](const tuning::EvalRecord &) { ++rows; });
    CHECK(rows == 8);
    CHECK(set.model == 1);
    REQUIRE(set.configs.size() == 3);
    CHECK(std::is_sorted(set.scores.begin(), set.scores.end()));
    CHECK(set.configs[0] != set.configs[1]);
    CHECK(set.configs[1] != set.configs[2]);
    CHECK_THROWS_AS(bo_tune([](std::span<const double>) { return 0.0; }, sp, 0, 20, o),
                    ConfigError);
}

TEST_CASE("ensemble enumeration agrees with brute force") {
    const std::size_t k = 3, m = 3;
    std::vector<KBestSet> sets;
    for (std::size_t j = 0; j < m; ++j) {
        KBestSet s;
        s.model = j;
        for (std::size_t i = 0; i < k; ++i) {
            HyperConfig c;
            c.hidden_units = 2 + i;
            c.batch_size = 16 + 8 * j;
            s.configs.push_back(c);
            s.scores.push_back(static_cast<double>(i));
        }
        sets.push_back(s);
    }
    auto score = [](const std::vector<HyperConfig> &cs) {
        double v = 0;
        for (std::size_t j = 0; j < cs.size(); ++j) {
            v += std::cos(static_cast<double>(cs[j].hidden_units * (j + 1)));
        }
        return v;
    };
    const CandidateEvaluator eval = [&](const std::vector<HyperConfig> &cs) {
        if (cs[0].hidden_units == 3 && cs[1].hidden_units == 3) {
            throw NumericError("diverged");
        }
        EnsembleCandidate c;
        c.objective = score(cs);
        return c;
    };
    const auto tuples = oracle::all_tuples(k, m);
    double best = INFINITY;
    std::size_t best_i = 0;
    for (std::size_t t = 0; t < tuples.size(); ++t) {
        std::vector<HyperConfig> cs;
        for (std::size_t j = 0; j < m; ++j) {
            cs.push_back(sets[j].configs[tuples[t][j]]);
        }
        const double v = (tuples[t][0] == 1 && tuples[t][1] == 1) ? INFINITY : score(cs);
        if (v < best) {
            best = v;
            best_i = t;
        }
    }
    for (std::size_t jobs : {1u, 4u}) {
        const auto e = enumerate_ensembles(sets, eval, jobs);
        REQUIRE(e.candidates.size() == 27);
        for (std::size_t t = 0; t < tuples.size(); ++t) {
            CHECK(e.candidates[t].indices == tuples[t]);
        }
        CHECK(e.best == best_i);
        CHECK(e.candidates[e.best].objective == best);
        CHECK(std::isinf(e.candidates[13].objective)); // (1, 1, 1)
        CHECK_FALSE(e.candidates[13].error.empty());
    }
    sets[1].configs.pop_back();
    CHECK_THROWS_AS(enumerate_ensembles(sets, eval), ConfigError);
}
