#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace qens::metrics {

struct MapeResult {
    double percent{0.0};
    /// Pairs skipped because |y_true| < zero_tolerance.
    std::size_t excluded{0};
    std::size_t used{0};
};

/// (100 / N) * sum |y - yhat| / |y| over pairs with |y| >= zero_tolerance.
/// Throws ShapeError on length mismatch or empty input, ConfigError when
/// every pair is excluded.
MapeResult mape(std::span<const double> y_true, std::span<const double> y_pred,
                double zero_tolerance = 1e-8);

/// Mean squared residual. Throws ShapeError on length mismatch or empty input.
double mse(std::span<const double> y_true, std::span<const double> y_pred);

/// Physical-unit forecast series for one model or ensemble.
struct ForecastResult {
    std::vector<std::string> timestamps;
    std::vector<double> y_true;
    std::vector<double> y_pred;
    std::string model;
    std::string horizon; // "test-1step" or "24h"
};

/// Plot-ready CSV: timestamp,y_true,y_pred,model,horizon.
void write_forecast_csv(std::ostream &out,
                        const std::vector<ForecastResult> &series);

} // namespace qens::metrics
