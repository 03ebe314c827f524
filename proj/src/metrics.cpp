#include "qens/metrics.hpp"

#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "qens/error.hpp"

namespace qens::metrics {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError(fmt::format("series lengths differ ({} vs {})",
                                     a.size(), b.size()));
    }
    if (a.empty()) {
        throw ShapeError("metrics need at least one pair");
    }
}

} // namespace

MapeResult mape(std::span<const double> y_true, std::span<const double> y_pred,
                double zero_tolerance) {
    check_pair(y_true, y_pred);
    MapeResult r;
    double acc = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (std::abs(y_true[i]) < zero_tolerance) {
            ++r.excluded;
            continue;
        }
        acc += std::abs(y_true[i] - y_pred[i]) / std::abs(y_true[i]);
        ++r.used;
    }
    if (r.used == 0) {
        throw ConfigError("MAPE is undefined: every true value is zero");
    }
    r.percent = 100.0 * acc / static_cast<double>(r.used);
    return r;
}

double mse(std::span<const double> y_true, std::span<const double> y_pred) {
    check_pair(y_true, y_pred);
    double acc = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const double r = y_true[i] - y_pred[i];
        acc += r * r;
    }
    return acc / static_cast<double>(y_true.size());
}

void write_forecast_csv(std::ostream &out,
                        const std::vector<ForecastResult> &series) {
    out << "timestamp,y_true,y_pred,model,horizon\n";
    for (const auto &s : series) {
        if (s.timestamps.size() != s.y_true.size() ||
            s.y_true.size() != s.y_pred.size()) {
            throw ShapeError("forecast series columns differ in length");
        }
        for (std::size_t i = 0; i < s.y_true.size(); ++i) {
            out << fmt::format("{},{:.17g},{:.17g},{},{}\n", s.timestamps[i],
                               s.y_true[i], s.y_pred[i], s.model, s.horizon);
        }
    }
}

} // namespace qens::metrics
