#include <doctest.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "oracles.hpp"
#include "qens/ensemble.hpp"
#include "qens/error.hpp"
#include "qens/rng.hpp"

using namespace qens;
using namespace qens::ensemble;

namespace {

ErrorSeries random_errors(std::size_t models, std::size_t steps, Rng &rng) {
    ErrorSeries e;
    e.errors.assign(models, std::vector<double>(steps));
    for (auto &row : e.errors) {
        const double scale = uniform(rng, 0.01, 5.0);
        for (auto &v : row) {
            v = scale * uniform01(rng);
        }
    }
    return e;
}

} // namespace

TEST_CASE("weight evolution matches the loop oracle") {
    Rng rng(31);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t m = 2 + rep % 4;
        const std::size_t steps = 1 + rep % 40;
        const auto e = random_errors(m, steps, rng);
        WeightOptions o;
        o.lambda = uniform(rng, 0.1, 1.0);
        o.gamma = uniform(rng, 0.5, 1.0);
        if (rep % 3 == 0) {
            o.window = 1 + rep % 7;
        }
        const auto got = evolve_weights(e, o);
        const auto want =
            oracle::weight_loop(e.errors, o.lambda, o.gamma, o.window.value_or(0));
        REQUIRE(got.history.size() == want.history.size());
        for (std::size_t k = 0; k < got.history.size(); ++k) {
            for (std::size_t j = 0; j < m; ++j) {
                CHECK(std::abs(got.history[k][j] - want.history[k][j]) < 1e-12);
            }
        }
        const auto fin = finalize_weights(got);
        for (std::size_t j = 0; j < m; ++j) {
            CHECK(std::abs(fin[j] - want.final_weights[j]) < 1e-12);
        }
    }
}

TEST_CASE("finalized weights lie on the simplex") {
    Rng rng(77);
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t m = 2 + rep % 5;
        const auto e = random_errors(m, 1 + rep % 60, rng);
        const auto w = finalize_weights(evolve_weights(e));
        double sum = 0;
        for (double v : w) {
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
            sum += v;
        }
        REQUIRE(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("symmetric errors give exactly equal weights") {
    ErrorSeries e;
    e.errors = {{0.3, 1.2, 0.7, 0.05}, {0.3, 1.2, 0.7, 0.05}};
    const auto w = finalize_weights(evolve_weights(e));
    CHECK(w[0] == 0.5);
    CHECK(w[1] == 0.5);
}

TEST_CASE("the more accurate model gains weight") {
    ErrorSeries e;
    e.errors = {std::vector<double>(20, 0.1), std::vector<double>(20, 0.4)};
    const auto w = evolve_weights(e);
    for (std::size_t k = 1; k < w.history.size(); ++k) {
        CHECK(w.history[k][0] > w.history[k - 1][0]);
    }
    const auto fin = finalize_weights(w);
    CHECK(fin[0] > fin[1]);
    // Each increment splits lambda in inverse-error proportion 0.8 / 0.2.
    CHECK(w.history[1][0] - w.history[0][0] == doctest::Approx(0.85 * 0.8));
}

TEST_CASE("a zero smoothed error is floored") {
    ErrorSeries e;
    e.errors = {{0.0, 0.0}, {1.0, 1.0}};
    const auto w = evolve_weights(e);
    CHECK(w.floored == 2);
    CHECK(w.epsilons[0][0] == 1e-12);
    const auto fin = finalize_weights(w);
    CHECK(fin[0] == doctest::Approx(2.2 / 2.7));
}

TEST_CASE("smoothed error sums the discounted window") {
    ErrorSeries e;
    e.errors = {{1.0, 2.0, 4.0}};
    CHECK(exp_smoothed_error(e, 0, 3, 0.5, 3) == doctest::Approx(4 + 0.5 * 2 + 0.25 * 1));
    CHECK(exp_smoothed_error(e, 0, 3, 0.5, 1) == doctest::Approx(4));
    CHECK_THROWS_AS(exp_smoothed_error(e, 0, 2, 0.5, 3), ConfigError);
}

TEST_CASE("invalid inputs are rejected") {
    ErrorSeries ragged;
    ragged.errors = {{1.0, 2.0}, {1.0}};
    CHECK_THROWS_AS(evolve_weights(ragged), ShapeError);
    ErrorSeries negative;
    negative.errors = {{1.0, -2.0}, {1.0, 1.0}};
    CHECK_THROWS_AS(evolve_weights(negative), NumericError);
    CHECK_THROWS_AS(finalize_weights(EnsembleWeights::uniform(3)), ConfigError);
    const std::vector<double> bad{1.0, 0.0};
    CHECK_THROWS_AS(inverse_error_shares(bad), NumericError);
}

TEST_CASE("predictions combine linearly") {
    const std::vector<double> w{0.25, 0.75};
    const auto y = combine_predictions(w, {{1.0, 2.0}, {3.0, 6.0}});
    CHECK(y[0] == doctest::Approx(2.5));
    CHECK(y[1] == doctest::Approx(5.0));
    const auto t = absolute_errors(std::vector<double>{1.0, 1.0}, {{0.5, 2.0}});
    CHECK(t.errors[0] == std::vector<double>{0.5, 1.0});
}

TEST_CASE("weight history is written one step per line") {
    ErrorSeries e;
    e.errors = {{0.1, 0.2}, {0.3, 0.1}};
    std::ostringstream out;
    write_weight_history(out, evolve_weights(e));
    std::istringstream in(out.str());
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.contains("step"));
        CHECK(j.at("weights").size() == 2);
        ++lines;
    }
    CHECK(lines >= 2);
}
