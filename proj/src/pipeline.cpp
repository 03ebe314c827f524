#include "qens/pipeline.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "qens/error.hpp"
#include "qens/forecast.hpp"
#include "qens/lstm.hpp"
#include "qens/parallel.hpp"
#include "qens/qlstm.hpp"
#include "qens/rng.hpp"

namespace qens::pipeline {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string config_key(std::size_t model, const HyperConfig &c) {
    return fmt::format("{}/{}", model, c.to_string());
}

void check_config(const Workspace &ws, std::size_t model, const HyperConfig &config) {
    if (model >= ws.models()) {
        throw ConfigError(fmt::format("base model {} does not exist", model));
    }
    if (config.sequence_length != ws.sequence_lengths[model]) {
        throw ConfigError(fmt::format("base model {} uses sequence length {}, config has {}",
                                      model, ws.sequence_lengths[model],
                                      config.sequence_length));
    }
}

} // namespace

Workspace Workspace::build(data::PreparedData data, std::vector<std::size_t> sequence_lengths,
                           double validation_fraction) {
    if (sequence_lengths.empty()) {
        throw ConfigError("at least one base model is required");
    }
    Workspace ws;
    ws.rows = data::split_rows(data, validation_fraction);
    for (auto m : sequence_lengths) {
        ws.windows.push_back(data::make_split_windows(data, m, validation_fraction));
        const auto &w = ws.windows.back();
        const auto &first = ws.windows.front();
        if (w.validation.target_rows != first.validation.target_rows ||
            w.test.target_rows != first.test.target_rows) {
            throw ConfigError("base models do not share validation/test target rows");
        }
    }
    if (ws.windows.front().validation.empty() || ws.windows.front().test.empty()) {
        throw ConfigError("validation and test segments must not be empty");
    }
    ws.sequence_lengths = std::move(sequence_lengths);
    ws.data = std::move(data);
    return ws;
}

std::uint64_t member_seed(std::uint64_t master, std::size_t model,
                          const HyperConfig &config) {
    return derive_seed(master, "member/" + config_key(model, config));
}

std::string member_name(std::size_t sequence_length) {
    return fmt::format("qlstm-seq{}", sequence_length);
}

Member train_member(const Workspace &ws, std::size_t model, const HyperConfig &config,
                    std::uint64_t master_seed) {
    check_config(ws, model, config);
    const auto &w = ws.windows[model];
    const auto seed = member_seed(master_seed, model, config);
    auto params = qlstm::init_params(config, w.train.n_features, derive_seed(seed, "init"));
    Member m;
    m.report = qlstm::train(params, config, w.train, w.validation, derive_seed(seed, "batches"));
    m.model = model::TrainedModel{member_name(config.sequence_length), config, std::move(params)};
    m.validation_pred = m.model.predict(w.validation);
    m.test_pred = m.model.predict(w.test);
    return m;
}

Member train_lstm_baseline(const Workspace &ws, std::size_t model, const HyperConfig &config,
                           std::uint64_t master_seed) {
    check_config(ws, model, config);
    const auto &w = ws.windows[model];
    const auto seed = derive_seed(master_seed, "lstm/" + config_key(model, config));
    auto params = lstm::init_params(config, w.train.n_features, derive_seed(seed, "init"));
    Member m;
    m.report = lstm::classical_lstm_train(params, config, w.train, w.validation,
                                          derive_seed(seed, "batches"));
    m.model = model::TrainedModel{fmt::format("lstm-seq{}", config.sequence_length), config,
                                  std::move(params)};
    m.validation_pred = m.model.predict(w.validation);
    m.test_pred = m.model.predict(w.test);
    return m;
}

std::shared_ptr<const Member> MemberCache::get(std::size_t model, const HyperConfig &config) {
    const auto key = config_key(model, config);
    std::promise<std::shared_ptr<const Member>> promise;
    std::shared_future<std::shared_ptr<const Member>> future;
    bool owner = false;
    {
        std::lock_guard lock(mutex_);
        auto it = entries_.find(key);
        if (it == entries_.end()) {
            future = promise.get_future().share();
            entries_.emplace(key, future);
            owner = true;
        } else {
            future = it->second;
        }
    }
    if (owner) {
        try {
            promise.set_value(
                std::make_shared<const Member>(train_member(ws_, model, config, seed_)));
        } catch (...) {
            promise.set_exception(std::current_exception());
        }
    }
    return future.get();
}

std::size_t MemberCache::trainings() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

Combination combine(const std::vector<std::shared_ptr<const Member>> &members,
                    const std::vector<double> &validation_truth,
                    const ensemble::WeightOptions &options) {
    std::vector<std::vector<double>> preds;
    for (const auto &m : members) {
        preds.push_back(m->validation_pred);
    }
    Combination c;
    c.evolution = ensemble::evolve_weights(ensemble::absolute_errors(validation_truth, preds),
                                           options);
    c.weights = ensemble::finalize_weights(c.evolution);
    const auto combined = ensemble::combine_predictions(c.weights, preds);
    c.validation_mse = metrics::mse(validation_truth, combined);
    return c;
}

// ------------------------------------------------------------ tuning

Tuner parse_tuner(const std::string &name) {
    if (name == "pso") {
        return Tuner::Pso;
    }
    if (name == "qga") {
        return Tuner::Qga;
    }
    if (name == "hybrid") {
        return Tuner::Hybrid;
    }
    if (name == "bayes") {
        return Tuner::Bayes;
    }
    throw ConfigError(fmt::format("unknown tuner '{}' (pso, qga, hybrid, bayes)", name));
}

std::string tuner_name(Tuner t) {
    switch (t) {
    case Tuner::Pso:
        return "pso";
    case Tuner::Qga:
        return "qga";
    case Tuner::Hybrid:
        return "hybrid";
    case Tuner::Bayes:
        return "bayes";
    }
    return "?";
}

std::size_t TuneOptions::effective_budget() const {
    if (budget) {
        return *budget;
    }
    switch (tuner) {
    case Tuner::Pso:
        return pso_particles * pso_iterations;
    case Tuner::Qga:
        return qga_population * qga_generations;
    case Tuner::Hybrid:
        return 50;
    case Tuner::Bayes:
        return bo_evaluations;
    }
    return 0;
}

ProbeObjective::ProbeObjective(const Workspace &ws, std::size_t model,
                               const SearchSpace &space, std::size_t probe_epochs,
                               std::uint64_t seed)
    : ws_(ws), model_(model), space_(space), probe_epochs_(probe_epochs), seed_(seed) {
    if (model >= ws.models()) {
        throw ConfigError(fmt::format("base model {} does not exist", model));
    }
    if (probe_epochs < 1) {
        throw ConfigError("probe runs need at least one epoch");
    }
    space_.sequence_length = ws.sequence_lengths[model];
    space_.validate();
}

double ProbeObjective::operator()(std::span<const double> unit) {
    return evaluate(space_.decode(unit));
}

double ProbeObjective::evaluate(const HyperConfig &config) {
    auto probe = config;
    probe.epochs = probe_epochs_;
    probe.sequence_length = space_.sequence_length;
    const auto key = probe.to_string();
    {
        std::lock_guard lock(mutex_);
        if (auto it = memo_.find(key); it != memo_.end()) {
            return it->second;
        }
    }
    double score = kInf;
    try {
        const auto &w = ws_.windows[model_];
        const auto seed = derive_seed(seed_, "probe/" + config_key(model_, probe));
        auto params = qlstm::init_params(probe, w.train.n_features, derive_seed(seed, "init"));
        const auto report =
            qlstm::train(params, probe, w.train, w.validation, derive_seed(seed, "batches"));
        score = report.test_loss.back();
    } catch (const NumericError &) {
        score = kInf;
    }
    std::lock_guard lock(mutex_);
    memo_.emplace(key, score);
    return score;
}

std::size_t ProbeObjective::trainings() const {
    std::lock_guard lock(mutex_);
    return memo_.size();
}

TuneOutcome tune(const Workspace &ws, const TuneOptions &options) {
    options.space.validate();
    const auto budget = options.effective_budget();
    if (budget < 1) {
        throw ConfigError("tuning budget must be >= 1");
    }
    const auto M = ws.models();
    std::vector<bo::KBestSet> sets(M);
    std::vector<std::vector<TraceRow>> traces(M);

    parallel_for(M, options.jobs, [&](std::size_t m) {
        auto space = options.space;
        space.sequence_length = ws.sequence_lengths[m];
        ProbeObjective probe(ws, m, space, options.probe_epochs,
                             derive_seed(options.seed, "probe"));
        const auto objective = [&](std::span<const double> u) { return probe(u); };
        const auto sink = [&](const tuning::EvalRecord &r) {
            traces[m].push_back({m, r, space.decode(r.point)});
        };
        const auto seed = derive_seed(options.seed, "tune/" + tuner_name(options.tuner), m);
        const auto box = tuning::Box::unit(SearchSpace::kDims);
        const tuning::BinaryCodec codec{space.bit_widths()};

        std::vector<double> best;
        double best_value = kInf;
        switch (options.tuner) {
        case Tuner::Pso: {
            tuning::PsoOptions p;
            p.particles = std::min(options.pso_particles, budget);
            p.iterations = (budget + p.particles - 1) / p.particles;
            p.max_evaluations = budget;
            p.seed = seed;
            const auto r = tuning::pso_run(objective, box, p, sink);
            best = r.best_point;
            best_value = r.best_value;
            break;
        }
        case Tuner::Qga: {
            tuning::QgaOptions q;
            q.population = std::min(options.qga_population, budget);
            q.generations = (budget + q.population - 1) / q.population;
            q.max_evaluations = budget;
            q.seed = seed;
            const auto r = tuning::qga_box_run(objective, box, codec,
                                               tuning::RotationPolicy::classic(), q, sink);
            best = r.best_point;
            best_value = r.best_value;
            break;
        }
        case Tuner::Hybrid: {
            tuning::HybridOptions h;
            h.budget = budget;
            h.qga_population = options.qga_population;
            h.particles = options.pso_particles;
            h.top_k = std::min<std::size_t>(3, options.pso_particles);
            h.seed = seed;
            const auto r = tuning::hybrid_qga_pso(objective, box, codec, h, sink);
            best = r.best_point;
            best_value = r.best_value;
            break;
        }
        case Tuner::Bayes: {
            bo::BoOptions b;
            b.n_init = std::min(options.bo_init, budget);
            b.n_iter = budget - b.n_init;
            b.seed = seed;
            sets[m] = bo::bo_tune(objective, space, m, options.k, b, sink);
            return;
        }
        }
        sets[m] = bo::KBestSet{m, {space.decode(best)}, {best_value}};
    });

    TuneOutcome out;
    out.sets = std::move(sets);
    for (auto &t : traces) {
        out.trace.insert(out.trace.end(), t.begin(), t.end());
    }
    return out;
}

// ---------------------------------------------------------- ensembles

EnsembleRun build_ensemble(const std::string &architecture, const Workspace &ws,
                           const std::vector<HyperConfig> &configs, MemberCache &cache,
                           const ensemble::WeightOptions &options, std::size_t jobs) {
    if (configs.size() != ws.models()) {
        throw ConfigError(fmt::format("{} configurations for {} base models", configs.size(),
                                      ws.models()));
    }
    EnsembleRun run;
    run.architecture = architecture;
    run.members.resize(configs.size());
    parallel_for(configs.size(), jobs,
                 [&](std::size_t m) { run.members[m] = cache.get(m, configs[m]); });
    run.combination = combine(run.members, ws.validation_truth(), options);
    run.checkpoint.architecture = architecture;
    run.checkpoint.weights = run.combination.weights;
    for (const auto &m : run.members) {
        run.checkpoint.members.push_back(m->model);
    }
    return run;
}

EnsembleRun bo_q_ensemble(const Workspace &ws, const std::vector<bo::KBestSet> &sets,
                          MemberCache &cache, const ensemble::WeightOptions &options,
                          std::size_t jobs) {
    if (sets.size() != ws.models()) {
        throw ConfigError(fmt::format("{} K-best sets for {} base models", sets.size(),
                                      ws.models()));
    }
    auto enumeration = bo::enumerate_ensembles(
        sets,
        [&](const std::vector<HyperConfig> &configs) {
            std::vector<std::shared_ptr<const Member>> members;
            for (std::size_t m = 0; m < configs.size(); ++m) {
                members.push_back(cache.get(m, configs[m]));
            }
            const auto c = combine(members, ws.validation_truth(), options);
            bo::EnsembleCandidate cand;
            cand.objective = c.validation_mse;
            cand.weights = c.weights;
            return cand;
        },
        jobs);
    const auto &best = enumeration.candidates[enumeration.best];
    if (!std::isfinite(best.objective)) {
        throw NumericError("numeric divergence: every ensemble tuple failed");
    }
    auto run = build_ensemble("bo-q", ws, best.configs, cache, options);
    run.enumeration = std::move(enumeration);
    return run;
}

// --------------------------------------------------------- evaluation

MetricRow evaluate(const model::Ensemble &ensemble, const data::PreparedData &data,
                   std::size_t row_begin, std::size_t row_end, const std::string &name) {
    const auto f = forecast::one_step(ensemble, data, row_begin, row_end, name);
    return MetricRow{name, metrics::mape(f.y_true, f.y_pred), metrics::mse(f.y_true, f.y_pred)};
}

} // namespace qens::pipeline
