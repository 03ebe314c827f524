#include "qens/metaheuristics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "qens/error.hpp"
#include "qens/parallel.hpp"

namespace qens::tuning {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sanitize(double v, bool &flag) {
    flag = !std::isfinite(v);
    return flag ? kInf : v;
}

} // namespace

Box Box::unit(std::size_t dims) { return uniform(dims, 0.0, 1.0); }

Box Box::uniform(std::size_t dims, double lo, double hi) {
    return Box{std::vector<double>(dims, lo), std::vector<double>(dims, hi)};
}

void Box::validate() const {
    if (lower.empty() || lower.size() != upper.size()) {
        throw ConfigError("search box needs matching, non-empty bounds");
    }
    for (std::size_t d = 0; d < lower.size(); ++d) {
        if (!std::isfinite(lower[d]) || !std::isfinite(upper[d]) ||
            lower[d] > upper[d]) {
            throw ConfigError("search box bounds must be finite with lo <= hi");
        }
    }
}

bool Box::contains(std::span<const double> x) const {
    if (x.size() != dims()) {
        return false;
    }
    for (std::size_t d = 0; d < x.size(); ++d) {
        if (!(x[d] >= lower[d] && x[d] <= upper[d])) {
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------- PSO

Swarm make_swarm(const Box &box, const PsoOptions &options,
                 const std::vector<std::vector<double>> &seeds) {
    box.validate();
    const auto D = box.dims();
    Swarm s;
    s.inertia = options.inertia;
    s.cognitive = options.cognitive;
    s.social = options.social;
    s.box = box;
    s.gbest_value = kInf;
    for (std::size_t i = 0; i < options.particles; ++i) {
        s.streams.emplace_back(derive_seed(options.seed, "pso", i));
        auto &rng = s.streams.back();
        Particle p;
        p.position.resize(D);
        p.velocity.resize(D);
        for (std::size_t d = 0; d < D; ++d) {
            p.position[d] = uniform(rng, box.lower[d], box.upper[d]);
        }
        for (std::size_t d = 0; d < D; ++d) {
            const double span =
                options.initial_velocity_fraction * (box.upper[d] - box.lower[d]);
            p.velocity[d] = uniform(rng, -span, span);
        }
        if (i < seeds.size()) {
            if (seeds[i].size() != D) {
                throw ShapeError("seed point dimension differs from the box");
            }
            for (std::size_t d = 0; d < D; ++d) {
                p.position[d] = std::clamp(seeds[i][d], box.lower[d], box.upper[d]);
            }
        }
        p.pbest = p.position;
        p.pbest_value = kInf;
        s.particles.push_back(std::move(p));
    }
    if (!s.particles.empty()) {
        s.gbest = s.particles.front().position;
    }
    return s;
}

void pso_step(Swarm &swarm, const Objective &objective, const TraceSink &trace,
              std::optional<std::size_t> eval_limit, std::size_t jobs) {
    const auto n = std::min(swarm.particles.size(),
                            eval_limit.value_or(swarm.particles.size()));
    const auto D = swarm.box.dims();

    std::vector<double> values(n);
    parallel_for(n, jobs, [&](std::size_t i) {
        values[i] = objective(swarm.particles[i].position);
    });

    for (std::size_t i = 0; i < n; ++i) {
        auto &p = swarm.particles[i];
        bool flagged = false;
        const double v = sanitize(values[i], flagged);
        swarm.non_finite += flagged ? 1 : 0;
        if (trace) {
            trace(EvalRecord{"pso", swarm.iteration,
                             swarm.trace_offset + swarm.evaluations, p.position, v,
                             flagged});
        }
        ++swarm.evaluations;
        if (v < p.pbest_value) {
            p.pbest_value = v;
            p.pbest = p.position;
        }
        if (v < swarm.gbest_value) {
            swarm.gbest_value = v;
            swarm.gbest = p.position;
        }
    }

    for (std::size_t i = 0; i < swarm.particles.size(); ++i) {
        auto &p = swarm.particles[i];
        auto &rng = swarm.streams[i];
        for (std::size_t d = 0; d < D; ++d) {
            const double r1 = uniform01(rng);
            const double r2 = uniform01(rng);
            double &v = p.velocity[d];
            double &x = p.position[d];
            v = swarm.inertia * v + swarm.cognitive * r1 * (p.pbest[d] - x) +
                swarm.social * r2 * (swarm.gbest[d] - x);
            x += v;
            if (x < swarm.box.lower[d]) {
                x = swarm.box.lower[d];
                v = 0.0;
            } else if (x > swarm.box.upper[d]) {
                x = swarm.box.upper[d];
                v = 0.0;
            }
        }
    }
    ++swarm.iteration;
}

TuneResult pso_run(const Objective &objective, const Box &box,
                   const PsoOptions &options, const TraceSink &trace,
                   const std::vector<std::vector<double>> &seeds,
                   std::size_t evaluation_offset) {
    if (options.particles < 1) {
        throw ConfigError("PSO needs at least one particle");
    }
    auto swarm = make_swarm(box, options, seeds);
    swarm.trace_offset = evaluation_offset;
    TuneResult out;
    for (std::size_t it = 0; it < options.iterations; ++it) {
        std::optional<std::size_t> limit;
        if (options.max_evaluations) {
            if (swarm.evaluations >= *options.max_evaluations) {
                break;
            }
            limit = *options.max_evaluations - swarm.evaluations;
        }
        pso_step(swarm, objective, trace, limit, options.jobs);
        out.history.push_back(swarm.gbest_value);
    }
    out.best_point = swarm.gbest;
    out.best_value = swarm.gbest_value;
    out.evaluations = swarm.evaluations;
    return out;
}

// ---------------------------------------------------------------- QGA

QuantumChromosome QuantumChromosome::uniform(std::size_t bits) {
    const double a = 1.0 / std::numbers::sqrt2;
    return QuantumChromosome{std::vector<std::pair<double, double>>(bits, {a, a})};
}

std::vector<bool> QuantumChromosome::measure(Rng &rng) const {
    std::vector<bool> bits(genome.size());
    for (std::size_t j = 0; j < genome.size(); ++j) {
        const double beta = genome[j].second;
        bits[j] = uniform01(rng) < beta * beta;
    }
    return bits;
}

double QuantumChromosome::max_norm_error() const {
    double worst = 0.0;
    for (const auto &[a, b] : genome) {
        worst = std::max(worst, std::abs(a * a + b * b - 1.0));
    }
    return worst;
}

void rotate(QuantumChromosome &c, std::size_t j, double theta) {
    if (j >= c.genome.size()) {
        throw ShapeError("qubit index outside the genome");
    }
    auto &[a, b] = c.genome[j];
    const double ct = std::cos(theta);
    const double st = std::sin(theta);
    const double na = ct * a - st * b;
    const double nb = st * a + ct * b;
    // Renormalise so rounding cannot accumulate over many generations.
    const double r = std::hypot(na, nb);
    a = na / r;
    b = nb / r;
}

RotationPolicy RotationPolicy::classic() {
    constexpr double pi = std::numbers::pi;
    RotationPolicy p;
    p.cap = 0.05 * pi;
    for (int x = 0; x < 2; ++x) {
        for (int b = 0; b < 2; ++b) {
            for (int worse = 0; worse < 2; ++worse) {
                double mag = 0.0;
                if (x != b) {
                    mag = worse ? 0.05 * pi : 0.01 * pi;
                }
                p.table.push_back({x == 1, b == 1, worse == 1, mag});
            }
        }
    }
    return p;
}

RotationPolicy RotationPolicy::zero() {
    auto p = classic();
    for (auto &row : p.table) {
        row.magnitude = 0.0;
    }
    return p;
}

void RotationPolicy::validate() const {
    for (int x = 0; x < 2; ++x) {
        for (int b = 0; b < 2; ++b) {
            for (int worse = 0; worse < 2; ++worse) {
                const auto it = std::find_if(table.begin(), table.end(), [&](const Row &r) {
                    return r.x == (x == 1) && r.best == (b == 1) && r.worse == (worse == 1);
                });
                if (it == table.end()) {
                    throw ConfigError("rotation table is missing a row");
                }
                if (!(it->magnitude >= 0.0 && it->magnitude <= cap)) {
                    throw ConfigError("rotation magnitude outside [0, cap]");
                }
            }
        }
    }
}

double RotationPolicy::magnitude(bool x, bool best, bool worse) const {
    for (const auto &r : table) {
        if (r.x == x && r.best == best && r.worse == worse) {
            return r.magnitude;
        }
    }
    throw ConfigError("rotation table is missing a row");
}

double RotationPolicy::angle(bool x, bool best, bool worse, double alpha,
                             double beta) const {
    const double mag = magnitude(x, best, worse);
    if (mag == 0.0) {
        return 0.0;
    }
    // U(theta) turns the amplitude angle phi = atan2(beta, alpha) by +theta;
    // |beta| grows with theta when alpha*beta > 0.
    const double ab = alpha * beta;
    if (ab == 0.0) {
        const bool settled = best ? alpha == 0.0 : beta == 0.0;
        return settled ? 0.0 : mag;
    }
    const double toward_one = ab > 0.0 ? mag : -mag;
    return best ? toward_one : -toward_one;
}

QgaResult qga_run(const RotationPolicy &policy, const QgaOptions &options,
                  const BitObjective &objective,
                  const std::function<void(std::size_t, const std::vector<bool> &,
                                           double)> &on_eval) {
    if (options.population < 1) {
        throw ConfigError("QGA population must not be empty");
    }
    if (options.genome_bits < 1) {
        throw ConfigError("QGA genome must have at least one bit");
    }
    if (!(options.mutation_probability >= 0.0 && options.mutation_probability <= 1.0)) {
        throw ConfigError("mutation probability must lie in [0, 1]");
    }
    policy.validate();

    const auto P = options.population;
    const auto L = options.genome_bits;
    QgaResult out;
    out.best_value = kInf;
    out.population.assign(P, QuantumChromosome::uniform(L));
    std::vector<Rng> streams;
    for (std::size_t i = 0; i < P; ++i) {
        streams.emplace_back(derive_seed(options.seed, "qga", i));
    }

    auto remember = [&](const std::vector<bool> &bits, double value) {
        if (options.keep_top == 0) {
            return;
        }
        for (const auto &entry : out.top) {
            if (entry.first == bits) {
                return;
            }
        }
        if (out.top.size() == options.keep_top && !(value < out.top.back().second)) {
            return;
        }
        auto pos = std::upper_bound(
            out.top.begin(), out.top.end(), value,
            [](double v, const auto &entry) { return v < entry.second; });
        out.top.insert(pos, {bits, value});
        if (out.top.size() > options.keep_top) {
            out.top.pop_back();
        }
    };

    for (std::size_t gen = 0; gen < options.generations; ++gen) {
        std::size_t n = P;
        if (options.max_evaluations) {
            if (out.evaluations >= *options.max_evaluations) {
                break;
            }
            n = std::min(n, *options.max_evaluations - out.evaluations);
        }
        std::vector<std::vector<bool>> bits(n);
        for (std::size_t i = 0; i < n; ++i) {
            bits[i] = out.population[i].measure(streams[i]);
        }
        std::vector<double> values(n);
        parallel_for(n, options.jobs,
                     [&](std::size_t i) { values[i] = objective(bits[i]); });

        std::size_t best = 0;
        for (std::size_t i = 0; i < n; ++i) {
            bool flagged = false;
            values[i] = sanitize(values[i], flagged);
            if (on_eval) {
                on_eval(gen, bits[i], values[i]);
            }
            ++out.evaluations;
            remember(bits[i], values[i]);
            if (values[i] < values[best]) {
                best = i;
            }
            if (values[i] < out.best_value || out.best_bits.empty()) {
                out.best_value = values[i];
                out.best_bits = bits[i];
            }
        }

        for (std::size_t i = 0; i < n; ++i) {
            auto &c = out.population[i];
            const bool worse = values[i] > values[best];
            for (std::size_t j = 0; j < L; ++j) {
                const auto [a, b] = c.genome[j];
                const double theta = policy.angle(bits[i][j], bits[best][j], worse, a, b);
                if (theta != 0.0) {
                    rotate(c, j, theta);
                }
            }
            if (options.mutation_probability > 0.0) {
                for (std::size_t j = 0; j < L; ++j) {
                    if (uniform01(streams[i]) < options.mutation_probability) {
                        std::swap(c.genome[j].first, c.genome[j].second);
                    }
                }
            }
        }
        out.history.push_back(out.best_value);
    }
    return out;
}

std::size_t BinaryCodec::total_bits() const {
    std::size_t total = 0;
    for (auto w : widths) {
        total += w;
    }
    return total;
}

std::vector<double> BinaryCodec::decode(const std::vector<bool> &bits,
                                        const Box &box) const {
    if (bits.size() != total_bits()) {
        throw ShapeError("bit string length differs from the codec");
    }
    if (box.dims() != widths.size()) {
        throw ShapeError("codec and box disagree on dimension");
    }
    std::vector<double> x(widths.size());
    std::size_t pos = 0;
    for (std::size_t d = 0; d < widths.size(); ++d) {
        const auto w = widths[d];
        if (w == 0) {
            x[d] = box.lower[d];
            continue;
        }
        if (w > 52) {
            throw ConfigError("bit width above 52 is not representable");
        }
        std::uint64_t k = 0;
        for (std::size_t b = 0; b < w; ++b) {
            k = (k << 1) | (bits[pos++] ? 1u : 0u);
        }
        const double denom = std::ldexp(1.0, static_cast<int>(w)) - 1.0;
        const double frac = static_cast<double>(k) / denom;
        x[d] = box.lower[d] + frac * (box.upper[d] - box.lower[d]);
    }
    return x;
}

TuneResult qga_box_run(const Objective &objective, const Box &box,
                       const BinaryCodec &codec, const RotationPolicy &policy,
                       const QgaOptions &options, const TraceSink &trace,
                       std::vector<std::vector<double>> *top_points,
                       std::size_t evaluation_offset) {
    box.validate();
    auto opts = options;
    opts.genome_bits = codec.total_bits();
    std::size_t count = 0;
    auto result = qga_run(
        policy, opts,
        [&](const std::vector<bool> &bits) { return objective(codec.decode(bits, box)); },
        [&](std::size_t gen, const std::vector<bool> &bits, double value) {
            if (trace) {
                trace(EvalRecord{"qga", gen, evaluation_offset + count,
                                 codec.decode(bits, box), value, std::isinf(value)});
            }
            ++count;
        });
    TuneResult out;
    out.best_value = result.best_value;
    out.evaluations = result.evaluations;
    out.history = result.history;
    if (!result.best_bits.empty()) {
        out.best_point = codec.decode(result.best_bits, box);
    }
    if (top_points) {
        top_points->clear();
        for (const auto &entry : result.top) {
            top_points->push_back(codec.decode(entry.first, box));
        }
    }
    return out;
}

// ------------------------------------------------------------- hybrid

HybridResult hybrid_qga_pso(const Objective &objective, const Box &box,
                            const BinaryCodec &codec, const HybridOptions &options,
                            const TraceSink &trace) {
    if (!(options.qga_fraction >= 0.0 && options.qga_fraction <= 1.0)) {
        throw ConfigError("QGA budget share must lie in [0, 1]");
    }
    const auto qga_evals = static_cast<std::size_t>(
        std::llround(options.qga_fraction * static_cast<double>(options.budget)));
    const auto pso_evals = options.budget - qga_evals;

    HybridResult out;
    out.qga.best_value = kInf;
    std::vector<std::vector<double>> seeds;
    if (qga_evals > 0) {
        if (options.qga_population < 1) {
            throw ConfigError("QGA population must not be empty");
        }
        QgaOptions q;
        q.population = options.qga_population;
        q.generations = (qga_evals + q.population - 1) / q.population;
        q.max_evaluations = qga_evals;
        q.mutation_probability = options.mutation_probability;
        q.keep_top = options.top_k;
        q.jobs = options.jobs;
        q.seed = derive_seed(options.seed, "hybrid-qga");
        out.qga = qga_box_run(objective, box, codec, options.policy, q, trace, &seeds);
    }

    out.pso.best_value = kInf;
    if (pso_evals > 0) {
        if (options.particles < 1) {
            throw ConfigError("PSO needs at least one particle");
        }
        auto p = options.pso;
        p.particles = options.particles;
        p.iterations = (pso_evals + p.particles - 1) / p.particles;
        p.max_evaluations = pso_evals;
        p.jobs = options.jobs;
        p.seed = options.seed;
        if (seeds.size() > p.particles) {
            seeds.resize(p.particles);
        }
        out.pso = pso_run(objective, box, p, trace, seeds, out.qga.evaluations);
    }

    out.evaluations = out.qga.evaluations + out.pso.evaluations;
    const bool pso_wins = out.pso.evaluations > 0 &&
                          (out.qga.evaluations == 0 || out.pso.best_value < out.qga.best_value);
    const auto &winner = pso_wins ? out.pso : out.qga;
    out.best_point = winner.best_point;
    out.best_value = winner.best_value;
    return out;
}

// ---------------------------------------------------- benchmark functions

double sphere(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) {
        s += v * v;
    }
    return s;
}

double rastrigin(std::span<const double> x) {
    double s = 10.0 * static_cast<double>(x.size());
    for (double v : x) {
        s += v * v - 10.0 * std::cos(2.0 * std::numbers::pi * v);
    }
    return s;
}

} // namespace qens::tuning
