#include "cli.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "qens/error.hpp"
#include "qens/forecast.hpp"
#include "qens/pipeline.hpp"
#include "qens/rng.hpp"
#include "run_store.hpp"

namespace qens::cli {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// ------------------------------------------------------------ settings

struct Global {
    std::string output_root;
    std::string run{"default"};
    std::uint64_t seed{1};
    std::size_t jobs{1};
    bool force{false};
};

struct SynthSettings {
    std::size_t hours{2000};
    double noise{0.5};
    double annual{8.0};
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SynthSettings, hours, noise, annual)

struct PreprocessSettings {
    std::string input;
    double train_fraction{0.87};
    double validation_fraction{0.1};
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PreprocessSettings, input, train_fraction,
                                                validation_fraction)

struct TuneSettings {
    std::string tuner{"hybrid"};
    std::size_t budget{0}; // 0: tuner default
    std::size_t k{2};
    std::size_t probe_epochs{5};
    std::vector<std::size_t> seq_lengths{3, 5};
    double lr_min{1e-4};
    double lr_max{0.2};
    std::vector<std::size_t> layers{1, 3};
    std::vector<std::size_t> qubits{2, 6};
    std::vector<std::size_t> hidden{2, 8};
    std::vector<std::size_t> batch{16, 256};
    std::size_t epochs{30};
    std::size_t pso_particles{5};
    std::size_t pso_iterations{50};
    std::size_t qga_population{5};
    std::size_t qga_generations{20};
    std::size_t bo_evaluations{20};
    std::size_t bo_init{5};
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TuneSettings, tuner, budget, k, probe_epochs,
                                                seq_lengths, lr_min, lr_max, layers, qubits,
                                                hidden, batch, epochs, pso_particles,
                                                pso_iterations, qga_population,
                                                qga_generations, bo_evaluations, bo_init)

struct TrainSettings {
    std::string model{"qlstm"};
    std::string from_tune;
    std::size_t model_index{0};
    double lr{0.01};
    std::size_t layers{1};
    std::size_t qubits{2};
    std::size_t hidden{2};
    std::size_t seq{3};
    std::size_t batch{32};
    std::size_t epochs{30};
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainSettings, model, from_tune, model_index, lr,
                                                layers, qubits, hidden, seq, batch, epochs)

struct EnsembleSettings {
    std::string arch{"genhyb"};
    std::string from_tune; // default: hybrid for genhyb, bayes for bo-q
    double lambda{0.85};
    double gamma{0.85};
    std::size_t window{0}; // 0: full history
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EnsembleSettings, arch, from_tune, lambda, gamma,
                                                window)

struct ForecastSettings {
    std::string source;
    std::size_t horizon{24};
    bool teacher_forced{false};
    long long origin{-1}; // -1: the last `horizon` rows of the data
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ForecastSettings, source, horizon,
                                                teacher_forced, origin)

struct EvaluateSettings {
    std::vector<std::string> sources;
    std::size_t horizon{24};
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EvaluateSettings, sources, horizon)

struct Ctx {
    Global global;
    std::ostream &out;
    std::optional<fs::path> stage_dir; // replay target

    [[nodiscard]] fs::path run_dir() const {
        return resolve_output_root(global.output_root) / global.run;
    }
    [[nodiscard]] fs::path stage(const std::string &name) const {
        return stage_dir ? *stage_dir : run_dir() / name;
    }
};

json settings_doc(const Ctx &ctx, const json &command_settings) {
    return {{"run", ctx.global.run}, {"seed", ctx.global.seed}, {"command", command_settings}};
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_inf(const json &j) { return j.is_null() ? kInf : j.get<double>(); }

// ------------------------------------------------------------- inputs

struct LoadedData {
    data::PreparedData data;
    double validation_fraction;
};

LoadedData load_data(const Ctx &ctx, Stage &stage) {
    const auto dir = ctx.run_dir() / "data";
    const auto cache = dir / "dataset.bin";
    const auto summary = dir / "summary.json";
    if (!fs::exists(cache) || !fs::exists(summary)) {
        throw ConfigError(fmt::format(
            "no prepared dataset in {}; run `qens preprocess --run {}` first", dir.string(),
            ctx.global.run));
    }
    stage.input(cache);
    stage.input(summary);
    return {data::read_cache(cache), read_json(summary).at("validation_fraction").get<double>()};
}

struct KBestFile {
    std::vector<std::size_t> seq_lengths;
    std::vector<bo::KBestSet> sets;
};

json kbest_to_json(const std::string &tuner, const KBestFile &k) {
    json sets = json::array();
    for (const auto &s : k.sets) {
        json configs = json::array();
        json scores = json::array();
        for (std::size_t i = 0; i < s.configs.size(); ++i) {
            configs.push_back(model::to_json(s.configs[i]));
            scores.push_back(finite_or_null(s.scores[i]));
        }
        sets.push_back({{"model", s.model}, {"configs", configs}, {"scores", scores}});
    }
    return {{"tuner", tuner}, {"seq_lengths", k.seq_lengths}, {"sets", sets}};
}

fs::path kbest_path(const Ctx &ctx, const std::string &tuner) {
    const auto path = ctx.run_dir() / ("tune-" + tuner) / "kbest.json";
    if (!fs::exists(path)) {
        throw ConfigError(fmt::format("missing {}; run `qens tune --run {} --tuner {}` first",
                                      path.string(), ctx.global.run, tuner));
    }
    return path;
}

KBestFile load_kbest(const fs::path &path) {
    const auto j = read_json(path);
    KBestFile k;
    k.seq_lengths = j.at("seq_lengths").get<std::vector<std::size_t>>();
    for (const auto &s : j.at("sets")) {
        bo::KBestSet set;
        set.model = s.at("model").get<std::size_t>();
        for (const auto &c : s.at("configs")) {
            set.configs.push_back(model::config_from_json(c));
        }
        for (const auto &v : s.at("scores")) {
            set.scores.push_back(number_or_inf(v));
        }
        k.sets.push_back(std::move(set));
    }
    return k;
}

fs::path checkpoint_path(const Ctx &ctx, const std::string &source) {
    if (fs::is_regular_file(source)) {
        return source;
    }
    const auto p = ctx.run_dir() / source / "checkpoint.json";
    if (!fs::exists(p)) {
        throw ConfigError(fmt::format(
            "no checkpoint at {}; run `qens train` or `qens ensemble` first", p.string()));
    }
    return p;
}

std::string source_label(const std::string &source) {
    const fs::path p(source);
    if (fs::is_regular_file(p)) {
        return p.parent_path().filename().string();
    }
    return p.filename().string();
}

// ------------------------------------------------------------ outputs

json metric_json(const pipeline::MetricRow &r) {
    return {{"model", r.model},
            {"mape_percent", r.mape.percent},
            {"mape_excluded", r.mape.excluded},
            {"mse", r.mse}};
}

json report_json(const TrainReport &r) {
    return {{"initial_train_loss", r.initial_train_loss},
            {"initial_validation_loss", r.initial_test_loss},
            {"train_loss", r.train_loss},
            {"validation_loss", r.test_loss},
            {"final_validation_loss", r.final_validation_loss}};
}

std::string metric_table(const std::vector<pipeline::MetricRow> &rows) {
    std::string s = fmt::format("{:<24} {:>10} {:>10} {:>9}\n", "model", "MAPE(%)", "MSE",
                                "excluded");
    for (const auto &r : rows) {
        s += fmt::format("{:<24} {:>10.4f} {:>10.4f} {:>9}\n", r.model, r.mape.percent, r.mse,
                         r.mape.excluded);
    }
    return s;
}

void write_forecasts(Stage &stage, const std::string &name,
                     const std::vector<metrics::ForecastResult> &series) {
    std::ostringstream csv;
    metrics::write_forecast_csv(csv, series);
    write_text(stage.path(name), csv.str());
    stage.artifact(name);
}

// ------------------------------------------------------------ commands

void cmd_synth(const Ctx &ctx, const SynthSettings &s) {
    Stage stage(ctx.stage("synth"), "synth", settings_doc(ctx, s), ctx.global.force);
    Stopwatch sw;
    data::SynthOptions o;
    o.n_hours = s.hours;
    o.seed = derive_seed(ctx.global.seed, "synth");
    o.noise_sigma = s.noise;
    o.annual_amplitude = s.annual;
    data::write_csv(stage.path("series.csv"), data::synth_series(o));
    stage.artifact("series.csv");
    stage.seed("synth", o.seed);
    stage.timing("synth", sw.seconds());
    stage.commit();
    ctx.out << fmt::format("wrote {} hours to {}\n", s.hours, stage.path("series.csv").string());
}

void cmd_preprocess(const Ctx &ctx, PreprocessSettings s) {
    if (s.input.empty()) {
        const auto synth = ctx.run_dir() / "synth" / "series.csv";
        if (!fs::exists(synth)) {
            throw ConfigError("--input is required (or run `qens synth` first)");
        }
        s.input = synth.string();
    }
    Stage stage(ctx.stage("data"), "preprocess", settings_doc(ctx, s), ctx.global.force);
    Stopwatch sw;
    stage.input(s.input);
    const auto records = data::ingest_csv(s.input);
    const auto prepared = data::prepare(records, s.train_fraction);
    const auto rows = data::split_rows(prepared, s.validation_fraction);
    data::write_cache(stage.path("dataset.bin"), prepared);
    stage.artifact("dataset.bin");

    json features = json::array();
    for (std::size_t f = 0; f < data::kNumFeatures; ++f) {
        const auto &fs_ = prepared.scaler.features[f];
        features.push_back({{"name", data::kFeatureNames[f]},
                            {"impute_median", prepared.scaler.impute_medians[f]},
                            {"missing", prepared.missing_counts[f]},
                            {"median", fs_.median},
                            {"q1", fs_.q1},
                            {"q3", fs_.q3},
                            {"robust_active", fs_.robust_active},
                            {"mean", fs_.mean},
                            {"stddev", fs_.stddev},
                            {"z_active", fs_.z_active}});
    }
    write_json(stage.path("summary.json"),
               {{"rows", prepared.rows()},
                {"train_rows", prepared.n_train},
                {"test_rows", prepared.rows() - prepared.n_train},
                {"fit_end", rows.fit_end},
                {"validation_fraction", s.validation_fraction},
                {"first_timestamp", data::format_timestamp(prepared.hours.front())},
                {"last_train_timestamp",
                 data::format_timestamp(prepared.hours[prepared.n_train - 1])},
                {"first_test_timestamp",
                 prepared.n_train < prepared.rows()
                     ? json(data::format_timestamp(prepared.hours[prepared.n_train]))
                     : json(nullptr)},
                {"scaler_fitted_rows", prepared.scaler.fitted_rows},
                {"warnings", prepared.scaler.warnings},
                {"features", features}});
    stage.artifact("summary.json");
    stage.timing("preprocess", sw.seconds());
    stage.commit();
    ctx.out << fmt::format("{} rows: {} train / {} test -> {}\n", prepared.rows(),
                           prepared.n_train, prepared.rows() - prepared.n_train,
                           stage.dir().string());
}

SearchSpace space_from(const TuneSettings &s) {
    auto range = [](const std::vector<std::size_t> &v, const char *name) {
        if (v.size() != 2) {
            throw ConfigError(fmt::format("--{} expects lo,hi", name));
        }
        return IntRange{v[0], v[1]};
    };
    SearchSpace sp;
    sp.lr_min = s.lr_min;
    sp.lr_max = s.lr_max;
    sp.layers = range(s.layers, "layers");
    sp.qubits = range(s.qubits, "qubits");
    sp.hidden = range(s.hidden, "hidden");
    sp.batch = range(s.batch, "batch");
    sp.epochs = s.epochs;
    sp.validate();
    return sp;
}

void cmd_tune(const Ctx &ctx, const TuneSettings &s) {
    pipeline::TuneOptions o;
    o.tuner = pipeline::parse_tuner(s.tuner);
    o.space = space_from(s);
    Stage stage(ctx.stage("tune-" + s.tuner), "tune", settings_doc(ctx, s), ctx.global.force);
    Stopwatch sw;
    auto loaded = load_data(ctx, stage);
    const auto ws =
        pipeline::Workspace::build(std::move(loaded.data), s.seq_lengths, loaded.validation_fraction);
    o.probe_epochs = s.probe_epochs;
    if (s.budget > 0) {
        o.budget = s.budget;
    }
    o.pso_particles = s.pso_particles;
    o.pso_iterations = s.pso_iterations;
    o.qga_population = s.qga_population;
    o.qga_generations = s.qga_generations;
    o.bo_evaluations = s.bo_evaluations;
    o.bo_init = s.bo_init;
    o.k = s.k;
    o.jobs = ctx.global.jobs;
    o.seed = derive_seed(ctx.global.seed, "tune");
    stage.seed("tune", o.seed);

    const auto outcome = pipeline::tune(ws, o);
    for (std::size_t m = 0; m < ws.models(); ++m) {
        std::string lines;
        for (const auto &row : outcome.trace) {
            if (row.model != m) {
                continue;
            }
            lines += json{{"model", row.model},
                          {"seq", ws.sequence_lengths[m]},
                          {"phase", row.record.phase},
                          {"iteration", row.record.iteration},
                          {"evaluation", row.record.evaluation},
                          {"point", row.record.point},
                          {"config", model::to_json(row.config)},
                          {"objective", finite_or_null(row.record.objective)},
                          {"non_finite", row.record.non_finite}}
                         .dump() +
                     "\n";
        }
        const auto name = fmt::format("trace-seq{}.jsonl", ws.sequence_lengths[m]);
        write_text(stage.path(name), lines);
        stage.artifact(name);
    }
    write_json(stage.path("kbest.json"), kbest_to_json(s.tuner, {s.seq_lengths, outcome.sets}));
    stage.artifact("kbest.json");
    stage.timing("tune", sw.seconds());
    stage.commit();
    for (const auto &set : outcome.sets) {
        ctx.out << fmt::format("model {} (seq {}): best {} -> {:.6g}\n", set.model,
                               ws.sequence_lengths[set.model], set.configs.front().to_string(),
                               set.scores.front());
    }
}

void cmd_train(const Ctx &ctx, const TrainSettings &s) {
    if (s.model != "qlstm" && s.model != "lstm") {
        throw ConfigError(fmt::format("unknown model '{}' (qlstm, lstm)", s.model));
    }
    HyperConfig config;
    std::vector<std::size_t> seqs;
    std::size_t index = 0;
    // The stage name depends on the configuration, so resolve it first.
    std::optional<KBestFile> kbest;
    fs::path kpath;
    if (!s.from_tune.empty()) {
        kpath = kbest_path(ctx, s.from_tune);
        kbest = load_kbest(kpath);
        if (s.model_index >= kbest->sets.size()) {
            throw ConfigError(fmt::format("tune results have {} base models",
                                          kbest->sets.size()));
        }
        config = kbest->sets[s.model_index].configs.front();
        seqs = kbest->seq_lengths;
        index = s.model_index;
    } else {
        config.learning_rate = s.lr;
        config.n_layers = s.layers;
        config.n_qubits = s.qubits;
        config.hidden_units = s.hidden;
        config.sequence_length = s.seq;
        config.batch_size = s.batch;
        config.epochs = s.epochs;
        seqs = {s.seq};
    }
    config.validate();
    const auto name = fmt::format("train-{}-seq{}", s.model, config.sequence_length);
    Stage stage(ctx.stage(name), "train", settings_doc(ctx, s), ctx.global.force);
    if (kbest) {
        stage.input(kpath);
    }
    Stopwatch sw;
    auto loaded = load_data(ctx, stage);
    const auto ws =
        pipeline::Workspace::build(std::move(loaded.data), seqs, loaded.validation_fraction);
    const auto master = derive_seed(ctx.global.seed, "members");
    stage.seed("members", master);
    const auto member = s.model == "qlstm" ? pipeline::train_member(ws, index, config, master)
                                           : pipeline::train_lstm_baseline(ws, index, config, master);
    const auto ens = forecast::single(member.model);
    model::save_checkpoint(stage.path("checkpoint.json"), ens);
    stage.artifact("checkpoint.json");
    write_json(stage.path("report.json"),
               {{"config", model::to_json(config)}, {"report", report_json(member.report)}});
    stage.artifact("report.json");
    const auto row =
        pipeline::evaluate(ens, ws.data, ws.rows.train_end, ws.rows.rows, member.model.name);
    write_json(stage.path("metrics.json"), {{"split", "test"}, {"rows", {metric_json(row)}}});
    stage.artifact("metrics.json");
    write_forecasts(stage, "forecast.csv",
                    {forecast::one_step(ens, ws.data, ws.rows.train_end, ws.rows.rows,
                                        member.model.name)});
    stage.timing("train", sw.seconds());
    stage.commit();
    ctx.out << metric_table({row});
}

void cmd_ensemble(const Ctx &ctx, const EnsembleSettings &s) {
    if (s.arch != "genhyb" && s.arch != "bo-q") {
        throw ConfigError(fmt::format("unknown architecture '{}' (genhyb, bo-q)", s.arch));
    }
    const auto from = !s.from_tune.empty() ? s.from_tune : (s.arch == "genhyb" ? "hybrid" : "bayes");
    Stage stage(ctx.stage("ensemble-" + s.arch), "ensemble", settings_doc(ctx, s),
                ctx.global.force);
    Stopwatch sw;
    const auto kpath = kbest_path(ctx, from);
    stage.input(kpath);
    const auto kbest = load_kbest(kpath);
    auto loaded = load_data(ctx, stage);
    const auto ws = pipeline::Workspace::build(std::move(loaded.data), kbest.seq_lengths,
                                               loaded.validation_fraction);
    ensemble::WeightOptions wo;
    wo.lambda = s.lambda;
    wo.gamma = s.gamma;
    if (s.window > 0) {
        wo.window = s.window;
    }
    const auto master = derive_seed(ctx.global.seed, "members");
    stage.seed("members", master);
    pipeline::MemberCache cache(ws, master);

    pipeline::EnsembleRun run;
    if (s.arch == "genhyb") {
        std::vector<HyperConfig> configs;
        for (const auto &set : kbest.sets) {
            configs.push_back(set.configs.front());
        }
        run = pipeline::build_ensemble("genhyb", ws, configs, cache, wo, ctx.global.jobs);
    } else {
        run = pipeline::bo_q_ensemble(ws, kbest.sets, cache, wo, ctx.global.jobs);
    }

    model::save_checkpoint(stage.path("checkpoint.json"), run.checkpoint);
    stage.artifact("checkpoint.json");
    {
        std::ostringstream w;
        ensemble::write_weight_history(w, run.combination.evolution);
        write_text(stage.path("weights.jsonl"), w.str());
        stage.artifact("weights.jsonl");
    }
    json members = json::array();
    for (const auto &m : run.members) {
        members.push_back({{"name", m->model.name},
                           {"config", model::to_json(m->model.config)},
                           {"report", report_json(m->report)}});
    }
    write_json(stage.path("members.json"), members);
    stage.artifact("members.json");
    if (run.enumeration) {
        json cands = json::array();
        for (const auto &c : run.enumeration->candidates) {
            json configs = json::array();
            for (const auto &cfg : c.configs) {
                configs.push_back(model::to_json(cfg));
            }
            cands.push_back({{"indices", c.indices},
                             {"configs", configs},
                             {"objective", finite_or_null(c.objective)},
                             {"weights", c.weights},
                             {"error", c.error}});
        }
        write_json(stage.path("enumeration.json"),
                   {{"tuples", cands.size()}, {"best", run.enumeration->best}, {"candidates", cands}});
        stage.artifact("enumeration.json");
    }

    std::vector<pipeline::MetricRow> rows;
    std::vector<metrics::ForecastResult> series;
    const auto b = ws.rows.train_end;
    const auto e = ws.rows.rows;
    for (const auto &m : run.members) {
        const auto single = forecast::single(m->model);
        rows.push_back(pipeline::evaluate(single, ws.data, b, e, m->model.name));
        series.push_back(forecast::one_step(single, ws.data, b, e, m->model.name));
    }
    rows.push_back(pipeline::evaluate(run.checkpoint, ws.data, b, e, s.arch));
    series.push_back(forecast::one_step(run.checkpoint, ws.data, b, e, s.arch));
    json mrows = json::array();
    for (const auto &r : rows) {
        mrows.push_back(metric_json(r));
    }
    write_json(stage.path("metrics.json"), {{"split", "test"},
                                            {"architecture", s.arch},
                                            {"weights", run.combination.weights},
                                            {"validation_mse", run.combination.validation_mse},
                                            {"rows", mrows}});
    stage.artifact("metrics.json");
    write_forecasts(stage, "forecast.csv", series);
    stage.timing("ensemble", sw.seconds());
    stage.commit();
    ctx.out << metric_table(rows);
    ctx.out << fmt::format("weights: [{:.6f}]\n", fmt::join(run.combination.weights, ", "));
}

void cmd_forecast(const Ctx &ctx, const ForecastSettings &s) {
    if (s.source.empty()) {
        throw ConfigError("--source is required (a stage such as ensemble-genhyb or a checkpoint)");
    }
    if (s.horizon < 1) {
        throw ConfigError("forecast horizon must be >= 1");
    }
    const auto ckpt = checkpoint_path(ctx, s.source);
    const auto label = source_label(s.source);
    Stage stage(ctx.stage("forecast-" + label), "forecast", settings_doc(ctx, s),
                ctx.global.force);
    Stopwatch sw;
    stage.input(ckpt);
    const auto ens = model::load_checkpoint(ckpt);
    auto loaded = load_data(ctx, stage);
    const auto &data = loaded.data;
    const auto rows = data::split_rows(data, loaded.validation_fraction);
    std::size_t origin = 0;
    if (s.origin < 0) {
        if (s.horizon > data.rows() - rows.train_end) {
            throw ConfigError("horizon exceeds the test segment; pass --origin");
        }
        origin = data.rows() - s.horizon;
    } else {
        origin = static_cast<std::size_t>(s.origin);
    }
    forecast::ForecastOptions fo;
    fo.horizon = s.horizon;
    fo.feedback = s.teacher_forced ? forecast::Feedback::TeacherForced
                                   : forecast::Feedback::Predicted;
    const auto multi = forecast::multi_step(ens, data, origin, fo, label);
    const auto one = forecast::one_step(ens, data, rows.train_end, rows.rows, label);
    write_forecasts(stage, "forecast.csv", {one, multi});
    json summary{{"origin", origin}, {"horizon", s.horizon}, {"teacher_forced", s.teacher_forced}};
    if (origin + s.horizon <= data.rows()) {
        const auto mp = metrics::mape(multi.y_true, multi.y_pred);
        summary["multi_step"] = {{"mape_percent", mp.percent},
                                 {"mape_excluded", mp.excluded},
                                 {"mse", metrics::mse(multi.y_true, multi.y_pred)}};
    }
    write_json(stage.path("summary.json"), summary);
    stage.artifact("summary.json");
    stage.timing("forecast", sw.seconds());
    stage.commit();
    for (std::size_t h = 0; h < multi.y_pred.size(); ++h) {
        ctx.out << fmt::format("{} {:>8.3f} {:>8.3f}\n", multi.timestamps[h], multi.y_true[h],
                               multi.y_pred[h]);
    }
}

void cmd_evaluate(const Ctx &ctx, EvaluateSettings s) {
    if (s.sources.empty()) {
        std::vector<std::string> found;
        if (fs::exists(ctx.run_dir())) {
            for (const auto &entry : fs::directory_iterator(ctx.run_dir())) {
                if (fs::exists(entry.path() / "checkpoint.json") &&
                    entry.path().extension() != ".replay") {
                    found.push_back(entry.path().filename().string());
                }
            }
        }
        std::sort(found.begin(), found.end());
        if (found.empty()) {
            throw ConfigError("no checkpoints in the run; run `qens train` or `qens ensemble` first");
        }
        s.sources = found;
    }
    Stage stage(ctx.stage("evaluate"), "evaluate", settings_doc(ctx, s), ctx.global.force);
    Stopwatch sw;
    auto loaded = load_data(ctx, stage);
    const auto &data = loaded.data;
    const auto rows = data::split_rows(data, loaded.validation_fraction);
    std::vector<pipeline::MetricRow> table;
    json mrows = json::array();
    std::vector<metrics::ForecastResult> series;
    for (const auto &src : s.sources) {
        const auto ckpt = checkpoint_path(ctx, src);
        stage.input(ckpt);
        const auto ens = model::load_checkpoint(ckpt);
        const auto label = source_label(src);
        auto row = pipeline::evaluate(ens, data, rows.train_end, rows.rows, label);
        auto j = metric_json(row);
        if (s.horizon >= 1 && s.horizon <= rows.rows - rows.train_end) {
            forecast::ForecastOptions fo;
            fo.horizon = s.horizon;
            const auto multi = forecast::multi_step(ens, data, data.rows() - s.horizon, fo, label);
            const auto mp = metrics::mape(multi.y_true, multi.y_pred);
            j["multi_step"] = {{"horizon", s.horizon},
                               {"mape_percent", mp.percent},
                               {"mse", metrics::mse(multi.y_true, multi.y_pred)}};
            series.push_back(multi);
        }
        series.insert(series.begin() + static_cast<long>(table.size()),
                      forecast::one_step(ens, data, rows.train_end, rows.rows, label));
        table.push_back(std::move(row));
        mrows.push_back(std::move(j));
    }
    write_json(stage.path("metrics.json"), {{"split", "test"}, {"rows", mrows}});
    stage.artifact("metrics.json");
    write_text(stage.path("metrics.txt"), metric_table(table));
    stage.artifact("metrics.txt");
    write_forecasts(stage, "forecast.csv", series);
    stage.timing("evaluate", sw.seconds());
    stage.commit();
    ctx.out << metric_table(table);
}

// ---------------------------------------------------------- dispatch

void dispatch(const std::string &command, const Ctx &ctx, const json &settings) {
    if (command == "synth") {
        cmd_synth(ctx, settings.get<SynthSettings>());
    } else if (command == "preprocess") {
        cmd_preprocess(ctx, settings.get<PreprocessSettings>());
    } else if (command == "tune") {
        cmd_tune(ctx, settings.get<TuneSettings>());
    } else if (command == "train") {
        cmd_train(ctx, settings.get<TrainSettings>());
    } else if (command == "ensemble") {
        cmd_ensemble(ctx, settings.get<EnsembleSettings>());
    } else if (command == "forecast") {
        cmd_forecast(ctx, settings.get<ForecastSettings>());
    } else if (command == "evaluate") {
        cmd_evaluate(ctx, settings.get<EvaluateSettings>());
    } else {
        throw ConfigError(fmt::format("unknown command '{}'", command));
    }
}

/// Re-runs the stage recorded in a manifest next to the original (suffix
/// ".replay") and compares artifact hashes.
void cmd_replay(const Global &g, std::ostream &out, const std::string &manifest_path) {
    const auto manifest = read_json(manifest_path);
    if (manifest.value("format", "") != "qens-manifest") {
        throw DataError(fmt::format("{} is not a run manifest", manifest_path));
    }
    if (manifest.value("version", -1) != kManifestVersion) {
        throw VersionError(fmt::format("manifest version {} is not supported",
                                       manifest.value("version", -1)));
    }
    const auto stage_dir = fs::absolute(manifest_path).parent_path();
    const auto &settings = manifest.at("settings");
    Global rg = g;
    rg.output_root = stage_dir.parent_path().parent_path().string();
    rg.run = settings.at("run").get<std::string>();
    rg.seed = settings.at("seed").get<std::uint64_t>();
    rg.force = true;
    auto target = stage_dir;
    target += ".replay";
    std::ostringstream sink;
    dispatch(manifest.at("command").get<std::string>(), Ctx{rg, sink, target},
             settings.at("command"));

    bool all = true;
    for (const auto &a : manifest.at("artifacts")) {
        const auto name = a.at("path").get<std::string>();
        const auto p = target / name;
        const bool same = fs::exists(p) && sha256_file(p) == a.at("sha256").get<std::string>();
        all = all && same;
        out << fmt::format("{:<20} {}\n", name, same ? "identical" : "DIFFERS");
    }
    if (!all) {
        throw DataError("replayed artifacts differ from the manifest");
    }
    out << "replay reproduced every artifact\n";
}

// JSON config files: nested objects address subcommands, arrays become
// multi-value options.
class JsonConfig : public CLI::Config {
  public:
    std::string to_config(const CLI::App *, bool, bool, std::string) const override {
        return {};
    }

    std::vector<CLI::ConfigItem> from_config(std::istream &in) const override {
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception &e) {
            throw CLI::ConversionError(std::string("config file: ") + e.what());
        }
        std::vector<CLI::ConfigItem> items;
        walk(j, {}, items);
        return items;
    }

  private:
    static std::string scalar(const json &v) {
        if (v.is_string()) {
            return v.get<std::string>();
        }
        if (v.is_boolean()) {
            return v.get<bool>() ? "true" : "false";
        }
        return v.dump();
    }

    static void walk(const json &j, std::vector<std::string> parents,
                     std::vector<CLI::ConfigItem> &items) {
        for (const auto &[key, value] : j.items()) {
            if (value.is_object()) {
                auto p = parents;
                p.push_back(key);
                walk(value, p, items);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (value.is_array()) {
                for (const auto &v : value) {
                    item.inputs.push_back(scalar(v));
                }
            } else {
                item.inputs.push_back(scalar(value));
            }
            items.push_back(std::move(item));
        }
    }
};

} // namespace

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"Quantum LSTM ensemble forecasting toolkit", "qens"};
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON file with option values (sections per subcommand)");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1);

    Global g;
    app.add_option("--output-root", g.output_root,
                   "Directory holding runs (default: $QENS_OUTPUT_ROOT or ./runs)");
    app.add_option("--run", g.run, "Run name (subdirectory of the output root)");
    app.add_option("--seed", g.seed, "Master seed");
    app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--force", g.force, "Replace an existing stage directory");

    SynthSettings synth;
    auto *c_synth = app.add_subcommand("synth", "Generate a synthetic hourly series");
    c_synth->add_option("--hours", synth.hours, "Number of hours")->capture_default_str();
    c_synth->add_option("--noise", synth.noise, "Temperature noise sigma")->capture_default_str();
    c_synth->add_option("--annual", synth.annual, "Annual amplitude")->capture_default_str();

    PreprocessSettings pre;
    auto *c_pre = app.add_subcommand("preprocess", "Ingest, impute, scale and split a CSV");
    c_pre->add_option("--input", pre.input, "Hourly weather CSV");
    c_pre->add_option("--train-fraction", pre.train_fraction)->capture_default_str();
    c_pre->add_option("--validation-fraction", pre.validation_fraction,
                      "Share of training rows used for weight evolution")
        ->capture_default_str();

    TuneSettings tune;
    auto *c_tune = app.add_subcommand("tune", "Tune base-model hyperparameters");
    c_tune->add_option("--tuner", tune.tuner, "pso, qga, hybrid or bayes")->capture_default_str();
    c_tune->add_option("--budget", tune.budget, "Objective evaluations per base model");
    c_tune->add_option("--k", tune.k, "Configurations kept per model (bayes)")
        ->capture_default_str();
    c_tune->add_option("--probe-epochs", tune.probe_epochs)->capture_default_str();
    c_tune->add_option("--seq-lengths", tune.seq_lengths)->delimiter(',')->capture_default_str();
    c_tune->add_option("--lr-min", tune.lr_min)->capture_default_str();
    c_tune->add_option("--lr-max", tune.lr_max)->capture_default_str();
    c_tune->add_option("--layers", tune.layers, "lo,hi")->delimiter(',')->expected(2);
    c_tune->add_option("--qubits", tune.qubits, "lo,hi")->delimiter(',')->expected(2);
    c_tune->add_option("--hidden", tune.hidden, "lo,hi")->delimiter(',')->expected(2);
    c_tune->add_option("--batch", tune.batch, "lo,hi")->delimiter(',')->expected(2);
    c_tune->add_option("--epochs", tune.epochs, "Epochs of the final training")
        ->capture_default_str();
    c_tune->add_option("--pso-particles", tune.pso_particles)->capture_default_str();
    c_tune->add_option("--pso-iterations", tune.pso_iterations)->capture_default_str();
    c_tune->add_option("--qga-population", tune.qga_population)->capture_default_str();
    c_tune->add_option("--qga-generations", tune.qga_generations)->capture_default_str();
    c_tune->add_option("--bo-evaluations", tune.bo_evaluations)->capture_default_str();
    c_tune->add_option("--bo-init", tune.bo_init)->capture_default_str();

    TrainSettings train;
    auto *c_train = app.add_subcommand("train", "Train one base model");
    c_train->add_option("--model", train.model, "qlstm or lstm")->capture_default_str();
    c_train->add_option("--from-tune", train.from_tune, "Use the best config of this tuner");
    c_train->add_option("--model-index", train.model_index)->capture_default_str();
    c_train->add_option("--lr", train.lr)->capture_default_str();
    c_train->add_option("--layers", train.layers)->capture_default_str();
    c_train->add_option("--qubits", train.qubits)->capture_default_str();
    c_train->add_option("--hidden", train.hidden)->capture_default_str();
    c_train->add_option("--seq", train.seq)->capture_default_str();
    c_train->add_option("--batch", train.batch)->capture_default_str();
    c_train->add_option("--epochs", train.epochs)->capture_default_str();

    EnsembleSettings ens;
    auto *c_ens = app.add_subcommand("ensemble", "Train and combine an ensemble");
    c_ens->add_option("--arch", ens.arch, "genhyb or bo-q")->capture_default_str();
    c_ens->add_option("--from-tune", ens.from_tune, "Tuner whose results to use");
    c_ens->add_option("--lambda", ens.lambda)->capture_default_str();
    c_ens->add_option("--gamma", ens.gamma)->capture_default_str();
    c_ens->add_option("--window", ens.window, "Error window (0: full history)")
        ->capture_default_str();

    ForecastSettings fc;
    auto *c_fc = app.add_subcommand("forecast", "Multi-step forecast from a checkpoint");
    c_fc->add_option("--source", fc.source, "Stage name or checkpoint path");
    c_fc->add_option("--horizon", fc.horizon)->capture_default_str();
    c_fc->add_flag("--teacher-forced", fc.teacher_forced, "Feed back observed temperatures");
    c_fc->add_option("--origin", fc.origin, "First forecast row");

    EvaluateSettings ev;
    auto *c_ev = app.add_subcommand("evaluate", "Test-set metrics for checkpoints");
    c_ev->add_option("--sources", ev.sources, "Stage names or checkpoint paths, in table order");
    c_ev->add_option("--horizon", ev.horizon)->capture_default_str();

    std::string manifest;
    auto *c_replay = app.add_subcommand("replay", "Re-run a stage from its manifest and compare");
    c_replay->add_option("manifest", manifest)->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        const Ctx ctx{g, out, std::nullopt};
        if (c_synth->parsed()) {
            cmd_synth(ctx, synth);
        } else if (c_pre->parsed()) {
            cmd_preprocess(ctx, pre);
        } else if (c_tune->parsed()) {
            cmd_tune(ctx, tune);
        } else if (c_train->parsed()) {
            cmd_train(ctx, train);
        } else if (c_ens->parsed()) {
            cmd_ensemble(ctx, ens);
        } else if (c_fc->parsed()) {
            cmd_forecast(ctx, fc);
        } else if (c_ev->parsed()) {
            cmd_evaluate(ctx, ev);
        } else if (c_replay->parsed()) {
            cmd_replay(g, out, manifest);
        }
    } catch (const NumericError &e) {
        err << "error: " << e.what() << '\n';
        return kNumericDivergence;
    } catch (const ConfigError &e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const DataError &e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    } catch (const VersionError &e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kOk;
}

} // namespace qens::cli
