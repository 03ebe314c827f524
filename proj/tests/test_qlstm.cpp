#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "qens/error.hpp"
#include "qens/qlstm.hpp"

using namespace qens;
using namespace qens::qlstm;

namespace {

// Projections drawn from [-1, 1] so that every parameter has a visible
// effect on the loss.
QLSTMParams dense_random(std::size_t nq, std::size_t layers, std::size_t hidden,
                         std::size_t in, Rng &rng) {
    auto p = QLSTMParams::random(nq, layers, hidden, in, rng);
    auto tensors = p.tensors();
    for (std::size_t t = kNumBlocks; t < tensors.size(); ++t) {
        for (auto &v : tensors[t]) {
            v = uniform(rng, -1, 1);
        }
    }
    return p;
}

RowMatrix random_window(std::size_t rows, std::size_t cols, Rng &rng) {
    RowMatrix w(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        w.data()[i] = standard_normal(rng);
    }
    return w;
}

std::vector<double> flatten(const QLSTMParams &p) {
    std::vector<double> out;
    for (auto t : p.tensors()) {
        out.insert(out.end(), t.begin(), t.end());
    }
    return out;
}

void unflatten(QLSTMParams &p, const std::vector<double> &flat) {
    std::size_t k = 0;
    for (auto t : p.tensors()) {
        for (auto &v : t) {
            v = flat[k++];
        }
    }
}

} // namespace

TEST_CASE("BPTT gradient matches finite differences of the sequence loss") {
    Rng rng(17);
    for (std::size_t nq : {2u, 3u}) {
        for (std::size_t seq : {1u, 2u, 3u}) {
            const std::size_t hidden = 2, in = 3;
            const auto p = dense_random(nq, 1 + seq % 2, hidden, in, rng);
            const RowMatrix w = random_window(seq, in, rng);
            const double target = 0.3;
            auto grad = zeros_like(p);
            const double loss = loss_and_gradient(p, w, target, grad);
            const double pred = forward_sequence(p, w);
            CHECK(loss == doctest::Approx((pred - target) * (pred - target)).epsilon(1e-12));

            const auto g = flatten(grad);
            const auto fd = oracle::finite_difference(
                [&](const std::vector<double> &flat) {
                    auto q = p;
                    unflatten(q, flat);
                    const double y = forward_sequence(q, w);
                    return (y - target) * (y - target);
                },
                flatten(p));
            REQUIRE(g.size() == fd.size());
            for (std::size_t i = 0; i < g.size(); ++i) {
                CHECK(std::abs(g[i] - fd[i]) <= 1e-3 * std::max(std::abs(fd[i]), 1e-3));
            }
        }
    }
}

TEST_CASE("gradients accumulate into the output") {
    Rng rng(2);
    const auto p = dense_random(2, 1, 2, 3, rng);
    const RowMatrix w = random_window(2, 3, rng);
    auto once = zeros_like(p);
    loss_and_gradient(p, w, 0.1, once);
    auto twice = zeros_like(p);
    loss_and_gradient(p, w, 0.1, twice);
    loss_and_gradient(p, w, 0.1, twice);
    const auto a = flatten(once), b = flatten(twice);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(b[i] == doctest::Approx(2 * a[i]));
    }
}

TEST_CASE("the cell state has one entry per qubit") {
    Rng rng(4);
    const auto p = QLSTMParams::random(3, 1, 5, 7, rng);
    const std::vector<double> x(7, 0.2), h(5, 0.0), c(3, 0.0);
    const auto out = qlstm_step(p, x, h, c);
    CHECK(out.c.size() == 3);
    CHECK(out.h.size() == 5);
    CHECK(out.y.size() == 1);
    const std::vector<double> bad_c(5, 0.0);
    CHECK_THROWS_AS(qlstm_step(p, x, h, bad_c), ShapeError);
    const std::vector<double> bad_x(6, 0.0);
    CHECK_THROWS_AS(qlstm_step(p, bad_x, h, c), ShapeError);
}

TEST_CASE("zero parameters predict the output bias") {
    auto p = QLSTMParams::zeros(2, 1, 2, 7);
    p.out_bias_y(0) = 0.25;
    const RowMatrix w = RowMatrix::Constant(3, 7, 0.5);
    CHECK(forward_sequence(p, w) == doctest::Approx(0.25));
}

TEST_CASE("inconsistent shapes are rejected") {
    auto p = QLSTMParams::zeros(2, 1, 2, 7);
    p.in_proj.resize(3, 9);
    CHECK_THROWS_AS(p.check_shapes(), ShapeError);
    auto q = QLSTMParams::zeros(2, 1, 2, 7);
    q.vqc.pop_back();
    CHECK_THROWS_AS(q.check_shapes(), ShapeError);
}

TEST_CASE("training lowers the loss and is reproducible") {
    Rng rng(8);
    WindowedDataset train_set, test_set;
    for (auto *set : {&train_set, &test_set}) {
        set->sequence_length = 3;
        set->n_features = 2;
        for (int i = 0; i < 48; ++i) {
            double last = 0;
            for (int t = 0; t < 3; ++t) {
                last = std::sin(0.3 * (i + t));
                set->inputs.push_back(last);
                set->inputs.push_back(uniform(rng, -0.1, 0.1));
            }
            set->targets.push_back(0.8 * last);
            set->target_rows.push_back(static_cast<std::size_t>(i));
        }
    }
    HyperConfig cfg;
    cfg.n_qubits = 2;
    cfg.hidden_units = 2;
    cfg.sequence_length = 3;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.05;
    cfg.epochs = 15;
    auto a = init_params(cfg, 2, 99);
    auto b = init_params(cfg, 2, 99);
    CHECK(a == b);
    const auto ra = train(a, cfg, train_set, test_set, 5);
    const auto rb = train(b, cfg, train_set, test_set, 5);
    CHECK(ra.train_loss.size() == 15);
    CHECK(ra.train_loss.back() < ra.initial_train_loss);
    CHECK(ra.final_validation_loss == ra.test_loss.back());
    CHECK(ra.train_loss == rb.train_loss);
    CHECK(a == b);
    CHECK(predict(a, test_set).size() == test_set.size());
}

TEST_CASE("training rejects an empty set and a mismatched model") {
    HyperConfig cfg;
    auto p = init_params(cfg, 2, 1);
    WindowedDataset empty;
    empty.sequence_length = 3;
    empty.n_features = 2;
    CHECK_THROWS_AS(train(p, cfg, empty, empty, 1), ConfigError);
    HyperConfig other = cfg;
    other.n_qubits = 3;
    WindowedDataset one = empty;
    one.inputs.assign(6, 0.0);
    one.targets = {0.0};
    one.target_rows = {3};
    CHECK_THROWS_AS(train(p, other, one, one, 1), ConfigError);
}
