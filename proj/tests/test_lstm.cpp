#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "qens/lstm.hpp"

using namespace qens;
using namespace qens::lstm;

namespace {

std::vector<double> flatten(const LSTMParams &p) {
    std::vector<double> out;
    for (auto t : p.tensors()) {
        out.insert(out.end(), t.begin(), t.end());
    }
    return out;
}

void unflatten(LSTMParams &p, const std::vector<double> &flat) {
    std::size_t k = 0;
    for (auto t : p.tensors()) {
        for (auto &v : t) {
            v = flat[k++];
        }
    }
}

} // namespace

TEST_CASE("LSTM gradient matches finite differences") {
    Rng rng(13);
    for (std::size_t seq : {1u, 3u, 5u}) {
        const auto p = LSTMParams::random(4, 3, rng);
        RowMatrix w(static_cast<Eigen::Index>(seq), 3);
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            w.data()[i] = standard_normal(rng);
        }
        auto grad = zeros_like(p);
        loss_and_gradient(p, w, -0.4, grad);
        const auto fd = oracle::finite_difference(
            [&](const std::vector<double> &flat) {
                auto q = p;
                unflatten(q, flat);
                const double y = forward_sequence(q, w);
                return (y + 0.4) * (y + 0.4);
            },
            flatten(p));
        const auto g = flatten(grad);
        REQUIRE(g.size() == fd.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            CHECK(std::abs(g[i] - fd[i]) <= 1e-4 * std::max(std::abs(fd[i]), 1e-3));
        }
    }
}

TEST_CASE("LSTM training lowers the loss") {
    WindowedDataset set;
    set.sequence_length = 4;
    set.n_features = 1;
    for (int i = 0; i < 64; ++i) {
        for (int t = 0; t < 4; ++t) {
            set.inputs.push_back(std::sin(0.2 * (i + t)));
        }
        set.targets.push_back(std::sin(0.2 * (i + 4)));
        set.target_rows.push_back(static_cast<std::size_t>(i));
    }
    HyperConfig cfg;
    cfg.hidden_units = 4;
    cfg.sequence_length = 4;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.05;
    cfg.epochs = 20;
    auto p = init_params(cfg, 1, 3);
    const auto r = classical_lstm_train(p, cfg, set, set, 3);
    CHECK(r.train_loss.back() < 0.5 * r.initial_train_loss);
    CHECK(predict(p, set).size() == set.size());
}
