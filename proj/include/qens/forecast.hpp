#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "qens/data_pipeline.hpp"
#include "qens/metrics.hpp"
#include "qens/model.hpp"

namespace qens::forecast {

/// What is written back as the next temperature input during a
/// multi-step forecast.
enum class Feedback {
    Predicted,     // the forecast itself (autoregressive)
    TeacherForced, // the observed temperature
};

struct ForecastOptions {
    std::size_t horizon{24};
    Feedback feedback{Feedback::Predicted};
};

/// Standardized ensemble prediction for `target_row` from the windows that
/// end just before it. Needs target_row >= max member sequence length.
double predict_row(const model::Ensemble &ensemble, const RowMatrix &standardized,
                   std::size_t target_row);

/// One-step forecasts for every target row in [row_begin, row_end), in
/// physical units, tagged "test-1step".
metrics::ForecastResult one_step(const model::Ensemble &ensemble,
                                 const data::PreparedData &data,
                                 std::size_t row_begin, std::size_t row_end,
                                 const std::string &tag);

/**
 * @brief Iterated one-step forecast of rows origin, origin+1, ...
 *
 * Each step predicts from the last sequence_length rows of a working copy
 * of the standardized series, then appends a row whose temperature is the
 * prediction (or the observation, when teacher forced) and whose other
 * features repeat row origin-1. Outputs are in physical units; y_true is
 * NaN for rows past the end of the data. Throws ConfigError when
 * horizon < 1, and DataError when teacher forcing runs past the data.
 */
metrics::ForecastResult multi_step(const model::Ensemble &ensemble,
                                   const data::PreparedData &data,
                                   std::size_t origin,
                                   const ForecastOptions &options,
                                   const std::string &tag);

/// Wraps one model as a single-member ensemble with weight 1.
model::Ensemble single(const model::TrainedModel &model);

} // namespace qens::forecast
