#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qens/error.hpp"
#include "qens/metaheuristics.hpp"

using namespace qens;
using namespace qens::tuning;

namespace {

double sphere_obj(std::span<const double> x) { return sphere(x); }
double rastrigin_obj(std::span<const double> x) { return rastrigin(x); }

double onemax_deficit(const std::vector<bool> &b) {
    return static_cast<double>(std::count(b.begin(), b.end(), false));
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

TEST_CASE("benchmark functions vanish at the origin") {
    const std::vector<double> zero(4, 0.0), one{1.0, 0.0};
    CHECK(sphere(zero) == 0.0);
    CHECK(rastrigin(zero) == doctest::Approx(0.0));
    CHECK(sphere(one) == 1.0);
    CHECK(rastrigin(one) == doctest::Approx(1.0));
}

TEST_CASE("PSO minimises the 4-D sphere") {
    PsoOptions o;
    o.particles = 20;
    o.iterations = 200;
    o.seed = 42;
    const auto r = pso_run(sphere_obj, Box::uniform(4, -5.12, 5.12), o);
    CHECK(r.best_value < 1e-3);
    CHECK(r.evaluations == 4000);
    CHECK(r.history.size() == 200);
    CHECK(std::is_sorted(r.history.rbegin(), r.history.rend()));
}

TEST_CASE("PSO results do not depend on the number of workers") {
    PsoOptions o;
    o.particles = 8;
    o.iterations = 20;
    o.seed = 3;
    const auto box = Box::uniform(3, -2, 2);
    const auto a = pso_run(rastrigin_obj, box, o);
    o.jobs = 4;
    const auto b = pso_run(rastrigin_obj, box, o);
    CHECK(a.best_point == b.best_point);
    CHECK(a.history == b.history);
}

TEST_CASE("PSO respects the evaluation budget and the box") {
    PsoOptions o;
    o.particles = 7;
    o.iterations = 100;
    o.max_evaluations = 50;
    o.seed = 1;
    const auto box = Box::uniform(2, 0.0, 1.0);
    std::size_t calls = 0;
    std::vector<EvalRecord> trace;
    const auto r = pso_run(
        [&](std::span<const double> x) {
            ++calls;
            return -x[0] - x[1]; // optimum sits on the upper corner
        },
        box, o, [&](const EvalRecord &e) { trace.push_back(e); });
    CHECK(calls == 50);
    CHECK(r.evaluations == 50);
    REQUIRE(trace.size() == 50);
    for (std::size_t i = 0; i < trace.size(); ++i) {
        CHECK(trace[i].evaluation == i);
        CHECK(trace[i].phase == "pso");
        CHECK(box.contains(trace[i].point));
    }
    CHECK(r.best_value == doctest::Approx(-2.0).epsilon(0.05));
}

TEST_CASE("clamped coordinates lose their velocity") {
    PsoOptions o;
    o.particles = 4;
    o.cognitive = 0.0;
    o.social = 0.0;
    o.inertia = 1.0;
    o.initial_velocity_fraction = 1.0;
    o.seed = 5;
    const auto box = Box::uniform(2, -1, 1);
    auto s = make_swarm(box, o);
    const auto before = s.particles;
    pso_step(s, sphere_obj);
    for (std::size_t p = 0; p < s.particles.size(); ++p) {
        for (std::size_t d = 0; d < 2; ++d) {
            const double free = before[p].position[d] + before[p].velocity[d];
            if (free > 1.0 || free < -1.0) {
                CHECK(s.particles[p].position[d] == std::clamp(free, -1.0, 1.0));
                CHECK(s.particles[p].velocity[d] == 0.0);
            } else {
                CHECK(s.particles[p].position[d] == doctest::Approx(free));
                CHECK(s.particles[p].velocity[d] == before[p].velocity[d]);
            }
        }
    }
}

TEST_CASE("a NaN objective counts as +inf and is flagged") {
    PsoOptions o;
    o.particles = 6;
    o.iterations = 5;
    o.seed = 2;
    std::size_t flagged = 0;
    const auto r = pso_run(
        [](std::span<const double> x) { return x[0] > 0 ? std::nan("") : sphere(x); },
        Box::uniform(2, -1, 1), o, [&](const EvalRecord &e) {
            if (e.non_finite) {
                CHECK(std::isinf(e.objective));
                ++flagged;
            }
        });
    CHECK(flagged > 0);
    CHECK(std::isfinite(r.best_value));
    CHECK(r.best_point[0] <= 0);
}

TEST_CASE("seeds replace the first initial positions") {
    PsoOptions o;
    o.particles = 5;
    o.seed = 9;
    const auto box = Box::uniform(2, -1, 1);
    const auto plain = make_swarm(box, o);
    const auto seeded = make_swarm(box, o, {{0.5, 0.5}});
    CHECK(seeded.particles[0].position == std::vector<double>{0.5, 0.5});
    CHECK(seeded.particles[1].position == plain.particles[1].position);
    CHECK(seeded.particles[0].velocity == plain.particles[0].velocity);
}

TEST_CASE("QGA solves 16-bit OneMax") {
    QgaOptions o;
    o.population = 20;
    o.genome_bits = 16;
    o.generations = 50;
    o.seed = 7;
    const auto r = qga_run(RotationPolicy::classic(), o, onemax_deficit);
    CHECK(r.best_value == 0.0);
    CHECK(std::all_of(r.best_bits.begin(), r.best_bits.end(), [](bool b) { return b; }));
    CHECK(r.evaluations == 1000);
    for (const auto &c : r.population) {
        CHECK(c.max_norm_error() < 1e-12);
    }
    for (std::size_t i = 1; i < r.top.size(); ++i) {
        CHECK(r.top[i - 1].second <= r.top[i].second);
        CHECK(r.top[i - 1].first != r.top[i].first);
    }
}

TEST_CASE("rotation preserves amplitudes and moves toward the best bit") {
    auto c = QuantumChromosome::uniform(3);
    CHECK(c.genome[0].first == doctest::Approx(1 / std::numbers::sqrt2));
    const auto p = RotationPolicy::classic();
    CHECK(p.magnitude(false, true, true) == doctest::Approx(0.05 * std::numbers::pi));
    CHECK(p.magnitude(false, true, false) == doctest::Approx(0.01 * std::numbers::pi));
    CHECK(p.magnitude(true, true, true) == 0.0);
    CHECK(p.magnitude(false, false, true) == 0.0);

    for (bool best : {false, true}) {
        for (const auto &[a, b] : std::vector<std::pair<double, double>>{
                 {0.6, 0.8}, {-0.6, 0.8}, {0.6, -0.8}, {-0.6, -0.8}}) {
            QuantumChromosome q{{{a, b}}};
            const double before = b * b;
            rotate(q, 0, p.angle(!best, best, true, a, b));
            const double after = q.genome[0].second * q.genome[0].second;
            CHECK(q.max_norm_error() < 1e-12);
            if (best) {
                CHECK(after > before);
            } else {
                CHECK(after < before);
            }
        }
    }
    // On an axis: a qubit already at the best bit stays, one at the other
    // pole starts to turn.
    CHECK(p.angle(false, true, true, 0.0, 1.0) == 0.0);
    QuantumChromosome pole{{{1.0, 0.0}}};
    rotate(pole, 0, p.angle(false, true, true, 1.0, 0.0));
    CHECK(pole.genome[0].second > 0.0);
    RotationPolicy bad = p;
    bad.table[0].magnitude = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("without rotation or mutation the population stays uniform") {
    QgaOptions o;
    o.population = 4;
    o.genome_bits = 6;
    o.generations = 5;
    o.mutation_probability = 0.0;
    o.seed = 1;
    const auto r = qga_run(RotationPolicy::zero(), o, onemax_deficit);
    for (const auto &c : r.population) {
        for (const auto &[a, b] : c.genome) {
            CHECK(a == doctest::Approx(1 / std::numbers::sqrt2));
            CHECK(b == doctest::Approx(1 / std::numbers::sqrt2));
        }
    }
    o.population = 0;
    CHECK_THROWS_AS(qga_run(RotationPolicy::zero(), o, onemax_deficit), ConfigError);
}

TEST_CASE("binary codec reads most significant bit first") {
    const BinaryCodec codec{{2, 3}};
    const Box box{{0.0, -1.0}, {3.0, 1.0}};
    CHECK(codec.total_bits() == 5);
    CHECK(codec.decode({false, false, false, false, false}, box) == std::vector<double>{0.0, -1.0});
    CHECK(codec.decode({true, true, true, true, true}, box) == std::vector<double>{3.0, 1.0});
    const auto mid = codec.decode({true, false, false, true, true}, box);
    CHECK(mid[0] == doctest::Approx(2.0));
    CHECK(mid[1] == doctest::Approx(-1.0 + 2.0 * 3.0 / 7.0));
}

TEST_CASE("hybrid splits the budget and reduces to PSO without a QGA share") {
    const auto box = Box::uniform(2, -3, 3);
    const BinaryCodec codec{{8, 8}};
    HybridOptions o;
    o.budget = 53;
    o.seed = 4;
    std::size_t qga = 0, pso = 0;
    const auto r = hybrid_qga_pso(sphere_obj, box, codec, o, [&](const EvalRecord &e) {
        (e.phase == "qga" ? qga : pso) += 1;
    });
    CHECK(qga == 21); // llround(0.4 * 53)
    CHECK(pso == 32);
    CHECK(r.evaluations == 53);
    CHECK(r.best_value == std::min(r.qga.best_value, r.pso.best_value));

    o.qga_fraction = 0.0;
    const auto h = hybrid_qga_pso(sphere_obj, box, codec, o);
    PsoOptions p = o.pso;
    p.particles = o.particles;
    p.seed = o.seed;
    p.max_evaluations = o.budget;
    p.iterations = (o.budget + o.particles - 1) / o.particles;
    const auto plain = pso_run(sphere_obj, box, p);
    CHECK(h.best_point == plain.best_point);
    CHECK(h.best_value == plain.best_value);
}

TEST_CASE("hybrid beats plain PSO on Rastrigin at equal budget") {
    const std::size_t budget = 2000;
    const auto box = Box::uniform(4, -5.12, 5.12);
    const BinaryCodec codec{{10, 10, 10, 10}};
    std::vector<double> hybrid, plain;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        HybridOptions o;
        o.budget = budget;
        o.seed = seed;
        o.qga_population = 20;
        o.particles = 20;
        o.top_k = 5;
        hybrid.push_back(hybrid_qga_pso(rastrigin_obj, box, codec, o).best_value);
        PsoOptions p;
        p.particles = 20;
        p.seed = seed;
        p.iterations = budget / 20;
        p.max_evaluations = budget;
        plain.push_back(pso_run(rastrigin_obj, box, p).best_value);
    }
    CHECK(median(hybrid) <= median(plain));
}
