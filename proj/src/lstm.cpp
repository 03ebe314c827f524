#include "qens/lstm.hpp"

#include <cmath>
#include <string>

#include "qens/error.hpp"
#include "train_loop.hpp"

namespace qens::lstm {

namespace {

template <class M> std::span<double> span_of(M &m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}
template <class M> std::span<const double> cspan_of(const M &m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct Step {
    Eigen::VectorXd u;
    Eigen::VectorXd i, f, g, o;
    Eigen::VectorXd c_prev, c, h;
};

std::vector<Step> unroll(const LSTMParams &p, WindowRef window) {
    if (window.rows() < 1 ||
        static_cast<std::size_t>(window.cols()) != p.input_dim) {
        throw ShapeError("window shape does not match the LSTM input size");
    }
    const auto H = static_cast<Eigen::Index>(p.hidden_units);
    Eigen::VectorXd h = Eigen::VectorXd::Zero(H);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(H);
    std::vector<Step> steps;
    for (Eigen::Index t = 0; t < window.rows(); ++t) {
        Step s;
        s.u.resize(H + window.cols());
        s.u << h, window.row(t).transpose();
        if (!s.u.allFinite()) {
            throw NumericError("non-finite LSTM input");
        }
        const Eigen::VectorXd a = p.weights * s.u + p.bias;
        s.i = a.segment(0, H).unaryExpr(&sigmoid);
        s.f = a.segment(H, H).unaryExpr(&sigmoid);
        s.g = a.segment(2 * H, H).array().tanh();
        s.o = a.segment(3 * H, H).unaryExpr(&sigmoid);
        s.c_prev = c;
        s.c = s.f.cwiseProduct(c) + s.i.cwiseProduct(s.g);
        s.h = s.o.cwiseProduct(Eigen::VectorXd(s.c.array().tanh()));
        h = s.h;
        c = s.c;
        steps.push_back(std::move(s));
    }
    return steps;
}

} // namespace

LSTMParams LSTMParams::zeros(std::size_t hidden_units, std::size_t input_dim) {
    if (hidden_units < 1 || input_dim < 1) {
        throw ConfigError("hidden_units and input_dim must be >= 1");
    }
    LSTMParams p;
    const auto H = static_cast<Eigen::Index>(hidden_units);
    const auto D = static_cast<Eigen::Index>(input_dim);
    p.weights = Eigen::MatrixXd::Zero(4 * H, H + D);
    p.bias = Eigen::VectorXd::Zero(4 * H);
    p.head = Eigen::MatrixXd::Zero(1, H);
    p.head_bias = Eigen::VectorXd::Zero(1);
    p.hidden_units = hidden_units;
    p.input_dim = input_dim;
    return p;
}

LSTMParams LSTMParams::random(std::size_t hidden_units, std::size_t input_dim,
                              Rng &rng) {
    auto p = zeros(hidden_units, input_dim);
    const double k = 1.0 / std::sqrt(static_cast<double>(hidden_units));
    for (auto t : p.tensors()) {
        for (auto &w : t) {
            w = uniform(rng, -k, k);
        }
    }
    return p;
}

std::vector<std::span<double>> LSTMParams::tensors() {
    return {span_of(weights), span_of(bias), span_of(head), span_of(head_bias)};
}

std::vector<std::span<const double>> LSTMParams::tensors() const {
    return {cspan_of(weights), cspan_of(bias), cspan_of(head),
            cspan_of(head_bias)};
}

bool LSTMParams::operator==(const LSTMParams &other) const {
    return hidden_units == other.hidden_units &&
           input_dim == other.input_dim && weights == other.weights &&
           bias == other.bias && head == other.head &&
           head_bias == other.head_bias;
}

LSTMParams zeros_like(const LSTMParams &params) {
    return LSTMParams::zeros(params.hidden_units, params.input_dim);
}

double forward_sequence(const LSTMParams &params, WindowRef window) {
    const auto steps = unroll(params, window);
    return (params.head * steps.back().h)(0) + params.head_bias(0);
}

double loss_and_gradient(const LSTMParams &params, WindowRef window,
                         double target, LSTMParams &grad) {
    const auto steps = unroll(params, window);
    const auto H = static_cast<Eigen::Index>(params.hidden_units);
    const double residual =
        (params.head * steps.back().h)(0) + params.head_bias(0) - target;
    const double dy = 2.0 * residual;

    grad.head += dy * steps.back().h.transpose();
    grad.head_bias(0) += dy;
    Eigen::VectorXd dh = params.head.transpose() * dy;
    Eigen::VectorXd dc = Eigen::VectorXd::Zero(H);

    Eigen::VectorXd da(4 * H);
    for (std::size_t t = steps.size(); t-- > 0;) {
        const Step &s = steps[t];
        const Eigen::ArrayXd tanh_c = s.c.array().tanh();
        const Eigen::ArrayXd d_o = dh.array() * tanh_c;
        const Eigen::ArrayXd dct =
            dc.array() + dh.array() * s.o.array() * (1.0 - tanh_c.square());
        da.segment(0, H) = (dct * s.g.array() * s.i.array() * (1.0 - s.i.array())).matrix();
        da.segment(H, H) =
            (dct * s.c_prev.array() * s.f.array() * (1.0 - s.f.array())).matrix();
        da.segment(2 * H, H) =
            (dct * s.i.array() * (1.0 - s.g.array().square())).matrix();
        da.segment(3 * H, H) =
            (d_o * s.o.array() * (1.0 - s.o.array())).matrix();
        dc = (dct * s.f.array()).matrix();

        grad.weights += da * s.u.transpose();
        grad.bias += da;
        dh = (params.weights.transpose() * da).head(H);
    }
    return residual * residual;
}

LSTMParams init_params(const HyperConfig &config, std::size_t input_dim,
                       std::uint64_t seed) {
    Rng rng(seed);
    return LSTMParams::random(config.hidden_units, input_dim, rng);
}

TrainReport classical_lstm_train(LSTMParams &params, const HyperConfig &config,
                                 const WindowedDataset &train_set,
                                 const WindowedDataset &test_set,
                                 std::uint64_t seed, const AdamOptions &adam) {
    if (params.hidden_units != config.hidden_units) {
        throw ConfigError("model hidden size does not match the hyperparameters");
    }
    return detail::run_training(
        params, config, train_set, test_set, seed, adam,
        [](const LSTMParams &p, WindowRef w) { return forward_sequence(p, w); },
        [](const LSTMParams &p, WindowRef w, double y, LSTMParams &g) {
            return loss_and_gradient(p, w, y, g);
        },
        [](const LSTMParams &p) { return zeros_like(p); });
}

std::vector<double> predict(const LSTMParams &params,
                            const WindowedDataset &set) {
    std::vector<double> out;
    out.reserve(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        out.push_back(forward_sequence(params, set.window(i)));
    }
    return out;
}

} // namespace qens::lstm
