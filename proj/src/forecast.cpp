#include "qens/forecast.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "qens/error.hpp"

namespace qens::forecast {

namespace {

void check_ensemble(const model::Ensemble &ensemble) {
    if (ensemble.members.empty() || ensemble.weights.size() != ensemble.members.size()) {
        throw ConfigError("ensemble needs one weight per member");
    }
}

// `local` indexes `series`; `row` is the target's row in the full data.
double predict_at(const model::Ensemble &ensemble, const RowMatrix &series,
                  std::size_t local, std::size_t row) {
    if (local < ensemble.max_sequence_length() ||
        local > static_cast<std::size_t>(series.rows())) {
        throw ConfigError(fmt::format("row {} has no complete input window", row));
    }
    double y = 0.0;
    for (std::size_t m = 0; m < ensemble.members.size(); ++m) {
        const auto &member = ensemble.members[m];
        const auto L = static_cast<Eigen::Index>(member.sequence_length());
        const auto begin = static_cast<Eigen::Index>(local) - L;
        y += ensemble.weights[m] * member.predict(series.middleRows(begin, L), row);
    }
    return y;
}

} // namespace

double predict_row(const model::Ensemble &ensemble, const RowMatrix &standardized,
                   std::size_t target_row) {
    check_ensemble(ensemble);
    return predict_at(ensemble, standardized, target_row, target_row);
}

metrics::ForecastResult one_step(const model::Ensemble &ensemble,
                                 const data::PreparedData &data, std::size_t row_begin,
                                 std::size_t row_end, const std::string &tag) {
    if (row_end > data.rows() || row_begin > row_end) {
        throw ConfigError("forecast rows outside the data");
    }
    metrics::ForecastResult out;
    out.model = tag;
    out.horizon = "test-1step";
    for (std::size_t r = row_begin; r < row_end; ++r) {
        const double z = predict_row(ensemble, data.standardized, r);
        out.timestamps.push_back(data::format_timestamp(data.hours[r]));
        out.y_true.push_back(data.raw(static_cast<Eigen::Index>(r), data::kTemperature));
        out.y_pred.push_back(data::inverse_feature(z, data::kTemperature, data.scaler));
    }
    return out;
}

metrics::ForecastResult multi_step(const model::Ensemble &ensemble,
                                   const data::PreparedData &data, std::size_t origin,
                                   const ForecastOptions &options, const std::string &tag) {
    check_ensemble(ensemble);
    if (options.horizon < 1) {
        throw ConfigError("forecast horizon must be >= 1");
    }
    const auto L = ensemble.max_sequence_length();
    if (origin < L || origin > data.rows()) {
        throw ConfigError(fmt::format("forecast origin {} needs {} prior rows inside the data",
                                      origin, L));
    }
    if (options.feedback == Feedback::TeacherForced && origin + options.horizon > data.rows()) {
        throw DataError("teacher forcing needs observations for every forecast step");
    }

    const auto H = options.horizon;
    const auto F = data.standardized.cols();
    RowMatrix work(static_cast<Eigen::Index>(L + H), F);
    work.topRows(static_cast<Eigen::Index>(L)) =
        data.standardized.middleRows(static_cast<Eigen::Index>(origin - L),
                                     static_cast<Eigen::Index>(L));
    const Eigen::RowVectorXd persisted =
        data.standardized.row(static_cast<Eigen::Index>(origin - 1));

    metrics::ForecastResult out;
    out.model = tag;
    out.horizon = fmt::format("{}h", H);
    for (std::size_t h = 0; h < H; ++h) {
        const auto row = origin + h;
        const double z = predict_at(ensemble, work, L + h, row);
        const bool observed = row < data.rows();
        auto next = work.row(static_cast<Eigen::Index>(L + h));
        next = persisted;
        next(data::kTemperature) =
            options.feedback == Feedback::TeacherForced
                ? data.standardized(static_cast<Eigen::Index>(row), data::kTemperature)
                : z;
        out.timestamps.push_back(
            data::format_timestamp(data.hours[origin - 1] + static_cast<std::int64_t>(h + 1)));
        out.y_true.push_back(observed
                                 ? data.raw(static_cast<Eigen::Index>(row), data::kTemperature)
                                 : std::numeric_limits<double>::quiet_NaN());
        out.y_pred.push_back(data::inverse_feature(z, data::kTemperature, data.scaler));
    }
    return out;
}

model::Ensemble single(const model::TrainedModel &m) {
    return model::Ensemble{"single", {m}, {1.0}};
}

} // namespace qens::forecast
