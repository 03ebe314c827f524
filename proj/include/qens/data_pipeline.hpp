#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qens/dataset.hpp"
#include "qens/types.hpp"

namespace qens::data {

inline constexpr std::size_t kNumFeatures = 7;
inline constexpr std::size_t kTemperature = 0;
inline constexpr std::array<const char *, kNumFeatures> kFeatureNames = {
    "temperature", "dew_point_temp", "rel_humidity", "wind_speed",
    "visibility",  "pressure",       "precipitation"};
inline constexpr const char *kCsvHeader =
    "date,time,temperature,dew_point_temp,rel_humidity,wind_speed,visibility,"
    "pressure,precipitation";

/// One hour of station data. Any measurement may be missing.
struct WeatherRecord {
    std::chrono::year_month_day date{};
    int hour{0};
    std::array<std::optional<double>, kNumFeatures> values{};

    /// Hours since 1970-01-01T00:00 on the station clock.
    [[nodiscard]] std::int64_t hour_index() const;
    /// "YYYY-MM-DDTHH:00".
    [[nodiscard]] std::string timestamp() const;
};

WeatherRecord record_at(std::int64_t hour_index);

/// Formats an hour index as "YYYY-MM-DDTHH:00".
std::string format_timestamp(std::int64_t hour_index);

/**
 * @brief Parses the hourly station CSV.
 *
 * Header must be exactly kCsvHeader. Dates are ISO (YYYY-MM-DD), times are
 * "HH:MM" with MM == 00. Empty cells are missing values. Rows must be
 * strictly consecutive hours: a timestamp that does not advance throws an
 * ordering DataError, a jump of more than one hour throws a gap DataError.
 * Malformed rows throw DataError naming the 1-based line number.
 */
std::vector<WeatherRecord> parse_csv(std::istream &in);
std::vector<WeatherRecord> ingest_csv(const std::filesystem::path &path);

void write_csv(std::ostream &out, const std::vector<WeatherRecord> &records);
void write_csv(const std::filesystem::path &path,
               const std::vector<WeatherRecord> &records);

/// floor(fraction * rows).
std::size_t train_row_count(std::size_t rows, double fraction = 0.87);

/// Linear interpolation between order statistics (position p * (n - 1)).
double quantile(std::vector<double> values, double p);

/// Per-feature medians of the present values among the first `n_train`
/// records. Throws ConfigError if a feature has no present value there.
std::array<double, kNumFeatures>
fit_medians(const std::vector<WeatherRecord> &records, std::size_t n_train);

/// Replaces every missing cell by its feature median.
std::vector<WeatherRecord>
impute_median(std::vector<WeatherRecord> records,
              const std::array<double, kNumFeatures> &medians);

/// Dense [rows x kNumFeatures] matrix; throws DataError on a missing cell.
RowMatrix to_matrix(const std::vector<WeatherRecord> &records);

struct FeatureScaling {
    double median{0.0};
    double q1{0.0};
    double q3{0.0};
    bool robust_active{true}; // false when IQR == 0 (feature passed through)
    double mean{0.0};
    double stddev{1.0};
    bool z_active{true}; // false when stddev == 0

    bool operator==(const FeatureScaling &) const = default;
};

/// Robust (median / IQR) then Z-score statistics, fitted on training rows.
struct ScalerState {
    std::array<FeatureScaling, kNumFeatures> features{};
    std::array<double, kNumFeatures> impute_medians{};
    /// Statistics were computed on rows [0, fitted_rows).
    std::size_t fitted_rows{0};
    std::vector<std::string> warnings;

    bool operator==(const ScalerState &) const = default;
};

/// Fits both stages on rows [0, n_train) of `raw`.
ScalerState fit_scaler(const RowMatrix &raw, std::size_t n_train);

/// Stage 1: (x - median) / IQR on active features.
RowMatrix robust_scale(const RowMatrix &raw, const ScalerState &scaler);
/// Stage 2: (x - mean) / std on the stage-1 output.
RowMatrix zscore(const RowMatrix &robust, const ScalerState &scaler);
/// robust_scale followed by zscore.
RowMatrix transform(const RowMatrix &raw, const ScalerState &scaler);
RowMatrix inverse_transform(const RowMatrix &standardized,
                            const ScalerState &scaler);

/// Maps standardized values of one feature back to physical units.
double inverse_feature(double value, std::size_t feature,
                       const ScalerState &scaler);
double forward_feature(double value, std::size_t feature,
                       const ScalerState &scaler);

/// Window i covers rows [i, i + m); its target is the temperature at row
/// i + m. Throws ConfigError when rows <= m or m < 1.
WindowedDataset make_windows(const RowMatrix &matrix,
                             std::size_t sequence_length);

struct SynthOptions {
    std::size_t n_hours{2000};
    std::uint64_t seed{1};
    double noise_sigma{0.5};
    double base_temperature{16.0};
    double daily_amplitude{5.0};
    double annual_amplitude{8.0};
};

/**
 * @brief Seeded synthetic station series starting 2010-01-01T00:00.
 *
 * Temperature is a daily sinusoid (peak mid-afternoon) plus an annual
 * sinusoid plus Gaussian noise; the other six features are correlates.
 * With noise_sigma = 0 and annual_amplitude = 0 the temperature is exactly
 * 24-periodic. Throws ConfigError for fewer than 48 hours.
 */
std::vector<WeatherRecord> synth_series(const SynthOptions &options);

/// Imputed, scaled and split dataset ready for windowing.
struct PreparedData {
    std::vector<std::int64_t> hours;
    RowMatrix raw;          // imputed physical units
    RowMatrix standardized; // transform(raw, scaler)
    ScalerState scaler;
    std::size_t n_train{0};
    std::vector<std::size_t> missing_counts; // per feature, before imputation

    [[nodiscard]] std::size_t rows() const { return hours.size(); }
};

/// Chronological split at floor(train_fraction * rows), median imputation
/// and scaling, all statistics from the training rows only.
PreparedData prepare(const std::vector<WeatherRecord> &records,
                     double train_fraction = 0.87);

/// Index sets used for model fitting and weight evolution.
struct SplitRows {
    std::size_t fit_end;   // training targets: [0, fit_end)
    std::size_t train_end; // validation targets: [fit_end, train_end)
    std::size_t rows;      // test targets: [train_end, rows)
};

/// The last `validation_fraction` of the training rows form the validation
/// segment.
SplitRows split_rows(const PreparedData &data,
                     double validation_fraction = 0.1);

struct SplitWindows {
    WindowedDataset train;
    WindowedDataset validation;
    WindowedDataset test;
};

SplitWindows make_split_windows(const PreparedData &data,
                                std::size_t sequence_length,
                                double validation_fraction = 0.1);

inline constexpr std::uint32_t kCacheVersion = 1;

/// Versioned binary cache of a PreparedData (raw matrix, timestamps and
/// the fitted ScalerState). Standardized values are recomputed on load.
void write_cache(const std::filesystem::path &path, const PreparedData &data);
PreparedData read_cache(const std::filesystem::path &path);

} // namespace qens::data
