#include "qens/qlstm.hpp"

#include <cmath>
#include <string>

#include "qens/error.hpp"
#include "train_loop.hpp"

namespace qens::qlstm {

namespace {

Eigen::VectorXd sigmoid(const Eigen::VectorXd &a) {
    return a.unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
}

Eigen::VectorXd as_vector(std::span<const double> s) {
    return Eigen::Map<const Eigen::VectorXd>(s.data(),
                                             static_cast<Eigen::Index>(s.size()));
}

std::span<const double> as_span(const Eigen::VectorXd &v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

Eigen::VectorXd run_block(const quantum::VQCBlock &block,
                          const Eigen::VectorXd &input) {
    const auto out = quantum::run_vqc(block, as_span(input));
    return as_vector(out);
}

void check_finite(std::span<const double> s, const char *what) {
    for (double x : s) {
        if (!std::isfinite(x)) {
            throw NumericError(std::string("non-finite value in ") + what);
        }
    }
}

template <class M> std::span<double> span_of(M &m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}
template <class M> std::span<const double> cspan_of(const M &m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

} // namespace

QLSTMParams QLSTMParams::zeros(std::size_t n_qubits, std::size_t n_layers,
                               std::size_t hidden_units, std::size_t input_dim,
                               std::size_t output_dim) {
    if (hidden_units < 1 || input_dim < 1 || output_dim < 1) {
        throw ConfigError("hidden_units, input_dim and output_dim must be >= 1");
    }
    QLSTMParams p;
    for (std::size_t k = 0; k < kNumBlocks; ++k) {
        p.vqc.emplace_back(n_qubits, n_layers);
    }
    const auto nq = static_cast<Eigen::Index>(n_qubits);
    const auto nh = static_cast<Eigen::Index>(hidden_units);
    const auto ni = static_cast<Eigen::Index>(input_dim);
    const auto no = static_cast<Eigen::Index>(output_dim);
    p.in_proj = Eigen::MatrixXd::Zero(nq, nh + ni);
    p.in_bias = Eigen::VectorXd::Zero(nq);
    p.out_proj_h = Eigen::MatrixXd::Zero(nh, nq);
    p.out_bias_h = Eigen::VectorXd::Zero(nh);
    p.out_proj_y = Eigen::MatrixXd::Zero(no, nq);
    p.out_bias_y = Eigen::VectorXd::Zero(no);
    p.hidden_units = hidden_units;
    p.input_dim = input_dim;
    return p;
}

QLSTMParams QLSTMParams::random(std::size_t n_qubits, std::size_t n_layers,
                                std::size_t hidden_units, std::size_t input_dim,
                                Rng &rng, std::size_t output_dim) {
    QLSTMParams p = zeros(n_qubits, n_layers, hidden_units, input_dim,
                          output_dim);
    for (auto &block : p.vqc) {
        block = quantum::VQCBlock::random(n_qubits, n_layers, rng);
    }
    for (auto *m : {&p.in_proj, &p.out_proj_h, &p.out_proj_y}) {
        for (auto &w : span_of(*m)) {
            w = uniform(rng, -0.1, 0.1);
        }
    }
    return p;
}

std::size_t QLSTMParams::n_qubits() const { return vqc.at(0).num_qubits(); }
std::size_t QLSTMParams::n_layers() const { return vqc.at(0).num_layers(); }
std::size_t QLSTMParams::output_dim() const {
    return static_cast<std::size_t>(out_proj_y.rows());
}

void QLSTMParams::check_shapes() const {
    if (vqc.size() != kNumBlocks) {
        throw ShapeError("a QLSTM cell holds exactly six VQC blocks");
    }
    const auto nq = vqc[0].num_qubits();
    const auto nl = vqc[0].num_layers();
    for (const auto &b : vqc) {
        if (b.num_qubits() != nq || b.num_layers() != nl ||
            b.encoding() != quantum::Encoding::ArctanAngle) {
            throw ShapeError("all VQC blocks must share qubits, layers and "
                             "the angle encoding");
        }
    }
    const auto q = static_cast<Eigen::Index>(nq);
    const auto h = static_cast<Eigen::Index>(hidden_units);
    const auto d = static_cast<Eigen::Index>(input_dim);
    if (in_proj.rows() != q || in_proj.cols() != h + d || in_bias.size() != q ||
        out_proj_h.rows() != h || out_proj_h.cols() != q ||
        out_bias_h.size() != h || out_proj_y.cols() != q ||
        out_proj_y.rows() < 1 || out_bias_y.size() != out_proj_y.rows()) {
        throw ShapeError("projection shapes inconsistent with hidden_units=" +
                         std::to_string(hidden_units) + ", input_dim=" +
                         std::to_string(input_dim) + ", n_qubits=" +
                         std::to_string(nq));
    }
}

std::vector<std::span<double>> QLSTMParams::tensors() {
    std::vector<std::span<double>> out;
    for (auto &b : vqc) {
        out.push_back(b.thetas());
    }
    out.push_back(span_of(in_proj));
    out.push_back(span_of(in_bias));
    out.push_back(span_of(out_proj_h));
    out.push_back(span_of(out_bias_h));
    out.push_back(span_of(out_proj_y));
    out.push_back(span_of(out_bias_y));
    return out;
}

std::vector<std::span<const double>> QLSTMParams::tensors() const {
    std::vector<std::span<const double>> out;
    for (const auto &b : vqc) {
        out.push_back(b.thetas());
    }
    out.push_back(cspan_of(in_proj));
    out.push_back(cspan_of(in_bias));
    out.push_back(cspan_of(out_proj_h));
    out.push_back(cspan_of(out_bias_h));
    out.push_back(cspan_of(out_proj_y));
    out.push_back(cspan_of(out_bias_y));
    return out;
}

bool QLSTMParams::operator==(const QLSTMParams &other) const {
    return vqc == other.vqc && hidden_units == other.hidden_units &&
           input_dim == other.input_dim && in_proj == other.in_proj &&
           in_bias == other.in_bias && out_proj_h == other.out_proj_h &&
           out_bias_h == other.out_bias_h && out_proj_y == other.out_proj_y &&
           out_bias_y == other.out_bias_y;
}

QLSTMParams zeros_like(const QLSTMParams &params) {
    return QLSTMParams::zeros(params.n_qubits(), params.n_layers(),
                              params.hidden_units, params.input_dim,
                              params.output_dim());
}

StepTrace qlstm_step_traced(const QLSTMParams &params,
                            std::span<const double> x,
                            std::span<const double> h_prev,
                            std::span<const double> c_prev) {
    params.check_shapes();
    const auto nq = params.n_qubits();
    if (x.size() != params.input_dim) {
        throw ShapeError("x_t has " + std::to_string(x.size()) +
                         " entries, expected " +
                         std::to_string(params.input_dim));
    }
    if (h_prev.size() != params.hidden_units) {
        throw ShapeError("h_prev must have hidden_units entries");
    }
    if (c_prev.size() != nq) {
        throw ShapeError("c_prev must have n_qubits entries");
    }
    check_finite(x, "x_t");
    check_finite(h_prev, "h_prev");
    check_finite(c_prev, "c_prev");

    StepTrace tr;
    tr.u.resize(static_cast<Eigen::Index>(params.hidden_units + params.input_dim));
    tr.u << as_vector(h_prev), as_vector(x);
    tr.v = params.in_proj * tr.u + params.in_bias;
    tr.f = sigmoid(run_block(params.vqc[kForget], tr.v));
    tr.i = sigmoid(run_block(params.vqc[kInput], tr.v));
    tr.g = run_block(params.vqc[kUpdate], tr.v).array().tanh();
    tr.o = sigmoid(run_block(params.vqc[kOutput], tr.v));
    tr.c_prev = as_vector(c_prev);
    tr.c = tr.f.cwiseProduct(tr.c_prev) + tr.i.cwiseProduct(tr.g);
    tr.s = tr.o.cwiseProduct(Eigen::VectorXd(tr.c.array().tanh()));
    tr.q_hidden = run_block(params.vqc[kHidden], tr.s);
    tr.q_head = run_block(params.vqc[kHead], tr.s);
    tr.h = params.out_proj_h * tr.q_hidden + params.out_bias_h;
    tr.y = params.out_proj_y * tr.q_head + params.out_bias_y;
    return tr;
}

StepOutput qlstm_step(const QLSTMParams &params, std::span<const double> x,
                      std::span<const double> h_prev,
                      std::span<const double> c_prev) {
    auto tr = qlstm_step_traced(params, x, h_prev, c_prev);
    return {std::move(tr.h), std::move(tr.c), std::move(tr.y)};
}

namespace {

std::vector<StepTrace> unroll(const QLSTMParams &params, WindowRef window) {
    if (window.rows() < 1) {
        throw ShapeError("window must have at least one row");
    }
    if (static_cast<std::size_t>(window.cols()) != params.input_dim) {
        throw ShapeError("window has " + std::to_string(window.cols()) +
                         " features, model expects " +
                         std::to_string(params.input_dim));
    }
    Eigen::VectorXd h = Eigen::VectorXd::Zero(
        static_cast<Eigen::Index>(params.hidden_units));
    Eigen::VectorXd c =
        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.n_qubits()));
    std::vector<StepTrace> traces;
    traces.reserve(static_cast<std::size_t>(window.rows()));
    Eigen::VectorXd x(window.cols());
    for (Eigen::Index t = 0; t < window.rows(); ++t) {
        x = window.row(t).transpose();
        traces.push_back(
            qlstm_step_traced(params, as_span(x), as_span(h), as_span(c)));
        h = traces.back().h;
        c = traces.back().c;
    }
    return traces;
}

void accumulate_block(const quantum::VQCBlock &block,
                      const Eigen::VectorXd &input,
                      const Eigen::VectorXd &upstream,
                      quantum::VQCBlock &grad_block, Eigen::VectorXd &dinput) {
    if (upstream.isZero(0.0)) {
        return;
    }
    const auto g = quantum::vqc_backward(block, as_span(input), as_span(upstream));
    auto th = grad_block.thetas();
    for (std::size_t k = 0; k < th.size(); ++k) {
        th[k] += g.thetas[k];
    }
    dinput += as_vector(g.input);
}

} // namespace

double forward_sequence(const QLSTMParams &params, WindowRef window) {
    const auto traces = unroll(params, window);
    return traces.back().y(0);
}

double loss_and_gradient(const QLSTMParams &params, WindowRef window,
                         double target, QLSTMParams &grad) {
    const auto traces = unroll(params, window);
    const double residual = traces.back().y(0) - target;
    const auto nq = static_cast<Eigen::Index>(params.n_qubits());
    const auto nh = static_cast<Eigen::Index>(params.hidden_units);

    Eigen::VectorXd dh = Eigen::VectorXd::Zero(nh);
    Eigen::VectorXd dc = Eigen::VectorXd::Zero(nq);
    Eigen::VectorXd dy = Eigen::VectorXd::Zero(params.out_proj_y.rows());

    for (std::size_t step = traces.size(); step-- > 0;) {
        const StepTrace &tr = traces[step];
        dy.setZero();
        if (step + 1 == traces.size()) {
            dy(0) = 2.0 * residual;
        }

        grad.out_proj_y += dy * tr.q_head.transpose();
        grad.out_bias_y += dy;
        grad.out_proj_h += dh * tr.q_hidden.transpose();
        grad.out_bias_h += dh;
        const Eigen::VectorXd dq_head = params.out_proj_y.transpose() * dy;
        const Eigen::VectorXd dq_hidden = params.out_proj_h.transpose() * dh;

        Eigen::VectorXd ds = Eigen::VectorXd::Zero(nq);
        accumulate_block(params.vqc[kHidden], tr.s, dq_hidden,
                         grad.vqc[kHidden], ds);
        accumulate_block(params.vqc[kHead], tr.s, dq_head, grad.vqc[kHead], ds);

        const Eigen::ArrayXd tanh_c = tr.c.array().tanh();
        const Eigen::ArrayXd d_o = ds.array() * tanh_c;
        const Eigen::ArrayXd dc_total =
            dc.array() + ds.array() * tr.o.array() * (1.0 - tanh_c.square());
        const Eigen::ArrayXd d_f = dc_total * tr.c_prev.array();
        const Eigen::ArrayXd d_i = dc_total * tr.g.array();
        const Eigen::ArrayXd d_g = dc_total * tr.i.array();
        dc = (dc_total * tr.f.array()).matrix();

        const Eigen::VectorXd da_f =
            (d_f * tr.f.array() * (1.0 - tr.f.array())).matrix();
        const Eigen::VectorXd da_i =
            (d_i * tr.i.array() * (1.0 - tr.i.array())).matrix();
        const Eigen::VectorXd da_g = (d_g * (1.0 - tr.g.array().square())).matrix();
        const Eigen::VectorXd da_o =
            (d_o * tr.o.array() * (1.0 - tr.o.array())).matrix();

        Eigen::VectorXd dv = Eigen::VectorXd::Zero(nq);
        accumulate_block(params.vqc[kForget], tr.v, da_f, grad.vqc[kForget], dv);
        accumulate_block(params.vqc[kInput], tr.v, da_i, grad.vqc[kInput], dv);
        accumulate_block(params.vqc[kUpdate], tr.v, da_g, grad.vqc[kUpdate], dv);
        accumulate_block(params.vqc[kOutput], tr.v, da_o, grad.vqc[kOutput], dv);

        grad.in_proj += dv * tr.u.transpose();
        grad.in_bias += dv;
        const Eigen::VectorXd du = params.in_proj.transpose() * dv;
        dh = du.head(nh);
    }
    return residual * residual;
}

QLSTMParams init_params(const HyperConfig &config, std::size_t input_dim,
                        std::uint64_t seed) {
    Rng rng(seed);
    return QLSTMParams::random(config.n_qubits, config.n_layers,
                               config.hidden_units, input_dim, rng);
}

TrainReport train(QLSTMParams &params, const HyperConfig &config,
                  const WindowedDataset &train_set,
                  const WindowedDataset &test_set, std::uint64_t seed,
                  const AdamOptions &adam) {
    params.check_shapes();
    if (params.n_qubits() != config.n_qubits ||
        params.n_layers() != config.n_layers ||
        params.hidden_units != config.hidden_units) {
        throw ConfigError("model shape does not match the hyperparameters");
    }
    return detail::run_training(
        params, config, train_set, test_set, seed, adam,
        [](const QLSTMParams &p, WindowRef w) { return forward_sequence(p, w); },
        [](const QLSTMParams &p, WindowRef w, double y, QLSTMParams &g) {
            return loss_and_gradient(p, w, y, g);
        },
        [](const QLSTMParams &p) { return zeros_like(p); });
}

std::vector<double> predict(const QLSTMParams &params,
                            const WindowedDataset &set) {
    std::vector<double> out;
    out.reserve(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        out.push_back(forward_sequence(params, set.window(i)));
    }
    return out;
}

} // namespace qens::qlstm
