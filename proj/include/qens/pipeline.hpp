#pragma once

#include <cstddef>
#include <cstdint>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "qens/bayes_opt.hpp"
#include "qens/data_pipeline.hpp"
#include "qens/ensemble.hpp"
#include "qens/hyperconfig.hpp"
#include "qens/metaheuristics.hpp"
#include "qens/metrics.hpp"
#include "qens/model.hpp"
#include "qens/training.hpp"

namespace qens::pipeline {

/// Prepared data plus split windows for every base-model sequence length.
/// All members share the validation and test target rows.
struct Workspace {
    data::PreparedData data;
    data::SplitRows rows;
    std::vector<std::size_t> sequence_lengths; // one per base model
    std::vector<data::SplitWindows> windows;   // parallel to sequence_lengths

    static Workspace build(data::PreparedData data,
                           std::vector<std::size_t> sequence_lengths,
                           double validation_fraction = 0.1);

    [[nodiscard]] std::size_t models() const { return sequence_lengths.size(); }
    /// Standardized temperatures at the validation / test target rows.
    [[nodiscard]] const std::vector<double> &validation_truth() const {
        return windows.front().validation.targets;
    }
    [[nodiscard]] const std::vector<double> &test_truth() const {
        return windows.front().test.targets;
    }
};

/// Training seed of base model `model` with `config`; tuple-independent so
/// that a configuration trains to the same model wherever it appears.
std::uint64_t member_seed(std::uint64_t master, std::size_t model,
                          const HyperConfig &config);

std::string member_name(std::size_t sequence_length);

/// A trained base model with its standardized validation/test predictions.
struct Member {
    model::TrainedModel model;
    TrainReport report;
    std::vector<double> validation_pred;
    std::vector<double> test_pred;
};

Member train_member(const Workspace &ws, std::size_t model, const HyperConfig &config,
                    std::uint64_t master_seed);

/// Classical LSTM trained on the windows of base model `model`.
Member train_lstm_baseline(const Workspace &ws, std::size_t model,
                           const HyperConfig &config, std::uint64_t master_seed);

/// Thread-safe memo of trained members keyed by (model, config). The first
/// caller for a key trains; concurrent callers wait for that result.
class MemberCache {
  public:
    MemberCache(const Workspace &ws, std::uint64_t master_seed)
        : ws_(ws), seed_(master_seed) {}

    std::shared_ptr<const Member> get(std::size_t model, const HyperConfig &config);
    [[nodiscard]] std::size_t trainings() const;

  private:
    const Workspace &ws_;
    std::uint64_t seed_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_future<std::shared_ptr<const Member>>> entries_;
};

/// Weight evolution over the validation segment and the resulting
/// standardized validation MSE of the combined prediction.
struct Combination {
    ensemble::EnsembleWeights evolution;
    std::vector<double> weights;
    double validation_mse{0.0};
};

Combination combine(const std::vector<std::shared_ptr<const Member>> &members,
                    const std::vector<double> &validation_truth,
                    const ensemble::WeightOptions &options);

// ------------------------------------------------------------ tuning

enum class Tuner { Pso, Qga, Hybrid, Bayes };

Tuner parse_tuner(const std::string &name); // ConfigError on unknown names
std::string tuner_name(Tuner t);

struct TuneOptions {
    Tuner tuner{Tuner::Hybrid};
    SearchSpace space{};
    /// Epochs of the probe training run behind each objective evaluation.
    std::size_t probe_epochs{5};
    /// Total objective evaluations; per-tuner default when unset.
    std::optional<std::size_t> budget;
    std::size_t pso_particles{5};
    std::size_t pso_iterations{50};
    std::size_t qga_population{5};
    std::size_t qga_generations{20};
    std::size_t bo_evaluations{20};
    std::size_t bo_init{5};
    /// Configurations kept per model (Bayes); metaheuristics keep 1.
    std::size_t k{2};
    std::size_t jobs{1};
    std::uint64_t seed{0};

    /// Evaluations the chosen tuner will spend.
    [[nodiscard]] std::size_t effective_budget() const;
};

/// Validation MSE (standardized) of a probe run of the decoded unit point.
/// Failing runs score +inf. Results are memoised per decoded config.
class ProbeObjective {
  public:
    ProbeObjective(const Workspace &ws, std::size_t model, const SearchSpace &space,
                   std::size_t probe_epochs, std::uint64_t seed);

    double operator()(std::span<const double> unit);
    double evaluate(const HyperConfig &config);
    [[nodiscard]] std::size_t trainings() const;

  private:
    const Workspace &ws_;
    std::size_t model_;
    SearchSpace space_;
    std::size_t probe_epochs_;
    std::uint64_t seed_;
    mutable std::mutex mutex_;
    std::map<std::string, double> memo_;
};

struct TraceRow {
    std::size_t model;
    tuning::EvalRecord record;
    HyperConfig config;
};

struct TuneOutcome {
    std::vector<bo::KBestSet> sets; // one per base model
    std::vector<TraceRow> trace;
};

/// Tunes every base model (concurrently with jobs > 1). Metaheuristic
/// tuners produce K = 1 sets.
TuneOutcome tune(const Workspace &ws, const TuneOptions &options);

// ---------------------------------------------------------- ensembles

struct EnsembleRun {
    std::string architecture; // "genhyb" or "bo-q"
    std::vector<std::shared_ptr<const Member>> members;
    Combination combination;
    std::optional<bo::Enumeration> enumeration;
    model::Ensemble checkpoint;
};

/// Trains one member per configuration and combines them.
EnsembleRun build_ensemble(const std::string &architecture, const Workspace &ws,
                           const std::vector<HyperConfig> &configs, MemberCache &cache,
                           const ensemble::WeightOptions &options, std::size_t jobs = 1);

/// Enumerates all K^m tuples of the K-best sets, scores each by the
/// validation MSE of its combination, and keeps the best.
EnsembleRun bo_q_ensemble(const Workspace &ws, const std::vector<bo::KBestSet> &sets,
                          MemberCache &cache, const ensemble::WeightOptions &options,
                          std::size_t jobs = 1);

// --------------------------------------------------------- evaluation

struct MetricRow {
    std::string model;
    metrics::MapeResult mape;
    double mse{0.0};
};

/// Test-set one-step metrics in physical units.
MetricRow evaluate(const model::Ensemble &ensemble, const data::PreparedData &data,
                   std::size_t row_begin, std::size_t row_end, const std::string &name);

} // namespace qens::pipeline
