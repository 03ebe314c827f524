#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "qens/dataset.hpp"
#include "qens/hyperconfig.hpp"
#include "qens/lstm.hpp"
#include "qens/qlstm.hpp"
#include "qens/types.hpp"

namespace qens::model {

inline constexpr int kCheckpointVersion = 1;

/// Fixed predictions keyed by target row, in standardized units. Used for
/// stub checkpoints and replaying recorded forecasts.
struct TableParams {
    std::map<std::size_t, double> by_row;

    bool operator==(const TableParams &) const = default;
};

/// A trained one-step forecaster over standardized windows.
struct TrainedModel {
    std::string name;
    HyperConfig config;
    std::variant<qlstm::QLSTMParams, lstm::LSTMParams, TableParams> params;

    [[nodiscard]] std::string kind() const; // "qlstm", "lstm" or "table"
    [[nodiscard]] std::size_t sequence_length() const {
        return config.sequence_length;
    }

    /// Prediction for the window ending just before `target_row`.
    [[nodiscard]] double predict(WindowRef window, std::size_t target_row) const;
    [[nodiscard]] std::vector<double> predict(const WindowedDataset &set) const;

    bool operator==(const TrainedModel &) const = default;
};

/// A weighted combination of trained models.
struct Ensemble {
    std::string architecture; // "genhyb", "bo-q" or "single"
    std::vector<TrainedModel> members;
    std::vector<double> weights; // on the simplex

    [[nodiscard]] std::size_t max_sequence_length() const;

    bool operator==(const Ensemble &) const = default;
};

nlohmann::json to_json(const HyperConfig &config);
HyperConfig config_from_json(const nlohmann::json &j);

nlohmann::json to_json(const TrainedModel &model);
TrainedModel model_from_json(const nlohmann::json &j);

/// {"format": "qens-ensemble", "version": N, ...}. Doubles are written in
/// shortest round-trip form, so save followed by load is exact.
nlohmann::json to_json(const Ensemble &ensemble);
/// Throws VersionError on a different version and DataError on a document
/// that is not a checkpoint.
Ensemble ensemble_from_json(const nlohmann::json &j);

void save_checkpoint(const std::filesystem::path &path, const Ensemble &ensemble);
Ensemble load_checkpoint(const std::filesystem::path &path);

} // namespace qens::model
