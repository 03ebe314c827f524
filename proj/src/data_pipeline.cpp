#include "qens/data_pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "qens/error.hpp"
#include "qens/rng.hpp"

namespace qens::data {

using namespace std::chrono;

std::int64_t WeatherRecord::hour_index() const {
    return static_cast<std::int64_t>(sys_days(date).time_since_epoch().count()) *
               24 +
           hour;
}

std::string format_timestamp(std::int64_t hour_index) {
    const auto day = static_cast<int>(
        hour_index >= 0 ? hour_index / 24 : (hour_index - 23) / 24);
    const int hour = static_cast<int>(hour_index - std::int64_t{day} * 24);
    const year_month_day ymd{sys_days{days{day}}};
    return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:00",
                       static_cast<int>(ymd.year()),
                       static_cast<unsigned>(ymd.month()),
                       static_cast<unsigned>(ymd.day()), hour);
}

std::string WeatherRecord::timestamp() const {
    return format_timestamp(hour_index());
}

WeatherRecord record_at(std::int64_t hour_index) {
    WeatherRecord r;
    const auto day = static_cast<int>(
        hour_index >= 0 ? hour_index / 24 : (hour_index - 23) / 24);
    r.date = year_month_day{sys_days{days{day}}};
    r.hour = static_cast<int>(hour_index - std::int64_t{day} * 24);
    return r;
}

namespace {

std::string trim(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) {
        s.pop_back();
    }
    std::size_t b = 0;
    while (b < s.size() && s[b] == ' ') {
        ++b;
    }
    return s.substr(b);
}

std::vector<std::string> split_commas(const std::string &line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        out.push_back(trim(cell));
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

template <class T> bool parse_number(const std::string &s, T &out) {
    const auto *first = s.data();
    const auto *last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

[[noreturn]] void malformed(std::size_t line, const std::string &why) {
    throw DataError(fmt::format("line {}: {}", line, why));
}

year_month_day parse_date(const std::string &s, std::size_t line) {
    int y = 0;
    unsigned m = 0;
    unsigned d = 0;
    if (s.size() != 10 || s[4] != '-' || s[7] != '-' ||
        !parse_number(s.substr(0, 4), y) || !parse_number(s.substr(5, 2), m) ||
        !parse_number(s.substr(8, 2), d)) {
        malformed(line, "date '" + s + "' is not YYYY-MM-DD");
    }
    const year_month_day ymd{year{y}, month{m}, day{d}};
    if (!ymd.ok()) {
        malformed(line, "invalid calendar date '" + s + "'");
    }
    return ymd;
}

int parse_hour(const std::string &s, std::size_t line) {
    int h = -1;
    int mm = -1;
    const auto colon = s.find(':');
    if (colon == std::string::npos) {
        if (!parse_number(s, h)) {
            malformed(line, "time '" + s + "' is not HH:MM");
        }
        mm = 0;
    } else if (!parse_number(s.substr(0, colon), h) ||
               !parse_number(s.substr(colon + 1), mm)) {
        malformed(line, "time '" + s + "' is not HH:MM");
    }
    if (h < 0 || h > 23 || mm != 0) {
        malformed(line, "time '" + s + "' is not a whole hour in [00:00, 23:00]");
    }
    return h;
}

} // namespace

std::vector<WeatherRecord> parse_csv(std::istream &in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("empty CSV input");
    }
    if (trim(line) != kCsvHeader) {
        throw DataError(fmt::format("line 1: header must be '{}'", kCsvHeader));
    }
    std::vector<WeatherRecord> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) {
            continue;
        }
        const auto cells = split_commas(line);
        if (cells.size() != 2 + kNumFeatures) {
            malformed(lineno, fmt::format("expected {} columns, found {}",
                                          2 + kNumFeatures, cells.size()));
        }
        WeatherRecord r;
        r.date = parse_date(cells[0], lineno);
        r.hour = parse_hour(cells[1], lineno);
        for (std::size_t f = 0; f < kNumFeatures; ++f) {
            const auto &cell = cells[2 + f];
            if (cell.empty()) {
                continue;
            }
            double v = 0.0;
            if (!parse_number(cell, v) || !std::isfinite(v)) {
                malformed(lineno, fmt::format("column {} value '{}' is not a "
                                              "number",
                                              kFeatureNames[f], cell));
            }
            r.values[f] = v;
        }
        if (!out.empty()) {
            const auto prev = out.back().hour_index();
            const auto cur = r.hour_index();
            if (cur <= prev) {
                throw DataError(fmt::format(
                    "line {}: timestamp {} does not advance past {} "
                    "(rows must be in chronological order)",
                    lineno, r.timestamp(), out.back().timestamp()));
            }
            if (cur - prev > 1) {
                throw DataError(fmt::format(
                    "line {}: gap of {} hours after {} (hourly rows required)",
                    lineno, cur - prev, out.back().timestamp()));
            }
        }
        out.push_back(r);
    }
    return out;
}

std::vector<WeatherRecord> ingest_csv(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    return parse_csv(in);
}

void write_csv(std::ostream &out, const std::vector<WeatherRecord> &records) {
    out << kCsvHeader << '\n';
    for (const auto &r : records) {
        out << fmt::format("{:04d}-{:02d}-{:02d},{:02d}:00",
                           static_cast<int>(r.date.year()),
                           static_cast<unsigned>(r.date.month()),
                           static_cast<unsigned>(r.date.day()), r.hour);
        for (const auto &v : r.values) {
            out << ',';
            if (v) {
                out << fmt::format("{}", *v);
            }
        }
        out << '\n';
    }
}

void write_csv(const std::filesystem::path &path,
               const std::vector<WeatherRecord> &records) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    write_csv(out, records);
}

std::size_t train_row_count(std::size_t rows, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw ConfigError("train fraction must be in (0, 1)");
    }
    // floor(fraction * rows) computed in integer arithmetic where the
    // fraction is a whole number of basis points, so 0.87 * 96432 is exact.
    const double bp = fraction * 10000.0;
    if (std::abs(bp - std::round(bp)) < 1e-9) {
        return rows * static_cast<std::size_t>(std::llround(bp)) / 10000;
    }
    return static_cast<std::size_t>(std::floor(fraction *
                                               static_cast<double>(rows)));
}

double quantile(std::vector<double> values, double p) {
    if (values.empty()) {
        throw ConfigError("quantile of an empty sample");
    }
    std::sort(values.begin(), values.end());
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

std::array<double, kNumFeatures>
fit_medians(const std::vector<WeatherRecord> &records, std::size_t n_train) {
    if (n_train > records.size()) {
        throw ConfigError("training row count exceeds the record count");
    }
    std::array<double, kNumFeatures> medians{};
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
        std::vector<double> present;
        present.reserve(n_train);
        for (std::size_t r = 0; r < n_train; ++r) {
            if (records[r].values[f]) {
                present.push_back(*records[r].values[f]);
            }
        }
        if (present.empty()) {
            throw ConfigError(fmt::format(
                "feature '{}' is missing on every training row",
                kFeatureNames[f]));
        }
        medians[f] = quantile(std::move(present), 0.5);
    }
    return medians;
}

std::vector<WeatherRecord>
impute_median(std::vector<WeatherRecord> records,
              const std::array<double, kNumFeatures> &medians) {
    for (auto &r : records) {
        for (std::size_t f = 0; f < kNumFeatures; ++f) {
            if (!r.values[f]) {
                r.values[f] = medians[f];
            }
        }
    }
    return records;
}

RowMatrix to_matrix(const std::vector<WeatherRecord> &records) {
    RowMatrix m(static_cast<Eigen::Index>(records.size()),
                static_cast<Eigen::Index>(kNumFeatures));
    for (std::size_t r = 0; r < records.size(); ++r) {
        for (std::size_t f = 0; f < kNumFeatures; ++f) {
            if (!records[r].values[f]) {
                throw DataError(fmt::format("row {} has a missing '{}' value",
                                            r, kFeatureNames[f]));
            }
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f)) =
                *records[r].values[f];
        }
    }
    return m;
}

ScalerState fit_scaler(const RowMatrix &raw, std::size_t n_train) {
    if (n_train < 2 || n_train > static_cast<std::size_t>(raw.rows())) {
        throw ConfigError("scaler needs at least two training rows");
    }
    if (raw.cols() != static_cast<Eigen::Index>(kNumFeatures)) {
        throw ShapeError("feature matrix must have 7 columns");
    }
    ScalerState s;
    s.fitted_rows = n_train;
    const auto n = static_cast<Eigen::Index>(n_train);
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
        const auto col = static_cast<Eigen::Index>(f);
        std::vector<double> v(n_train);
        for (Eigen::Index r = 0; r < n; ++r) {
            v[static_cast<std::size_t>(r)] = raw(r, col);
        }
        auto &fs = s.features[f];
        fs.median = quantile(v, 0.5);
        fs.q1 = quantile(v, 0.25);
        fs.q3 = quantile(v, 0.75);
        fs.robust_active = (fs.q3 - fs.q1) > 0.0;
        if (!fs.robust_active) {
            s.warnings.push_back(fmt::format(
                "feature '{}' has zero IQR; robust stage passes it through",
                kFeatureNames[f]));
        }
        double mean = 0.0;
        for (auto &x : v) {
            x = fs.robust_active ? (x - fs.median) / (fs.q3 - fs.q1) : x;
            mean += x;
        }
        mean /= static_cast<double>(n_train);
        double var = 0.0;
        for (double x : v) {
            var += (x - mean) * (x - mean);
        }
        var /= static_cast<double>(n_train);
        fs.mean = mean;
        fs.stddev = std::sqrt(var);
        fs.z_active = fs.stddev > 0.0;
        if (!fs.z_active) {
            fs.stddev = 1.0;
            s.warnings.push_back(fmt::format(
                "feature '{}' is constant on the training rows",
                kFeatureNames[f]));
        }
    }
    return s;
}

double forward_feature(double value, std::size_t feature,
                       const ScalerState &scaler) {
    const auto &fs = scaler.features.at(feature);
    double x = value;
    if (fs.robust_active) {
        x = (x - fs.median) / (fs.q3 - fs.q1);
    }
    if (fs.z_active) {
        x = (x - fs.mean) / fs.stddev;
    } else {
        x = x - fs.mean;
    }
    return x;
}

double inverse_feature(double value, std::size_t feature,
                       const ScalerState &scaler) {
    const auto &fs = scaler.features.at(feature);
    double x = fs.z_active ? value * fs.stddev + fs.mean : value + fs.mean;
    if (fs.robust_active) {
        x = x * (fs.q3 - fs.q1) + fs.median;
    }
    return x;
}

RowMatrix robust_scale(const RowMatrix &raw, const ScalerState &scaler) {
    RowMatrix out = raw;
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
        const auto &fs = scaler.features[f];
        if (fs.robust_active) {
            out.col(static_cast<Eigen::Index>(f)).array() =
                (out.col(static_cast<Eigen::Index>(f)).array() - fs.median) /
                (fs.q3 - fs.q1);
        }
    }
    return out;
}

RowMatrix zscore(const RowMatrix &robust, const ScalerState &scaler) {
    RowMatrix out = robust;
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
        const auto &fs = scaler.features[f];
        auto col = out.col(static_cast<Eigen::Index>(f)).array();
        col -= fs.mean;
        if (fs.z_active) {
            col /= fs.stddev;
        }
    }
    return out;
}

RowMatrix transform(const RowMatrix &raw, const ScalerState &scaler) {
    return zscore(robust_scale(raw, scaler), scaler);
}

RowMatrix inverse_transform(const RowMatrix &standardized,
                            const ScalerState &scaler) {
    RowMatrix out = standardized;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        for (std::size_t f = 0; f < kNumFeatures; ++f) {
            auto &x = out(r, static_cast<Eigen::Index>(f));
            x = inverse_feature(x, f, scaler);
        }
    }
    return out;
}

WindowedDataset make_windows(const RowMatrix &matrix,
                             std::size_t sequence_length) {
    const auto rows = static_cast<std::size_t>(matrix.rows());
    if (sequence_length < 1) {
        throw ConfigError("sequence length must be >= 1");
    }
    if (rows <= sequence_length) {
        throw ConfigError(fmt::format(
            "{} rows cannot form a window of length {} plus a target", rows,
            sequence_length));
    }
    WindowedDataset ds;
    ds.sequence_length = sequence_length;
    ds.n_features = static_cast<std::size_t>(matrix.cols());
    const std::size_t n = rows - sequence_length;
    ds.inputs.reserve(n * sequence_length * ds.n_features);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t r = i; r < i + sequence_length; ++r) {
            for (std::size_t f = 0; f < ds.n_features; ++f) {
                ds.inputs.push_back(matrix(static_cast<Eigen::Index>(r),
                                           static_cast<Eigen::Index>(f)));
            }
        }
        ds.targets.push_back(
            matrix(static_cast<Eigen::Index>(i + sequence_length),
                   static_cast<Eigen::Index>(kTemperature)));
        ds.target_rows.push_back(i + sequence_length);
    }
    return ds;
}

std::vector<WeatherRecord> synth_series(const SynthOptions &o) {
    if (o.n_hours < 48) {
        throw ConfigError("synthetic series needs at least 48 hours");
    }
    if (!(o.noise_sigma >= 0.0)) {
        throw ConfigError("noise sigma must be >= 0");
    }
    constexpr double two_pi = 2.0 * std::numbers::pi;
    constexpr double year_hours = 8766.0;
    const std::int64_t start =
        WeatherRecord{year_month_day{year{2010}, January, day{1}}, 0, {}}
            .hour_index();
    Rng rng = make_rng(o.seed, "synth");

    std::vector<WeatherRecord> out;
    out.reserve(o.n_hours);
    for (std::size_t h = 0; h < o.n_hours; ++h) {
        const double t = static_cast<double>(h);
        // Daily peak at 15:00, annual minimum at the start of January.
        const double daily = std::sin(two_pi * (t - 9.0) / 24.0);
        const double annual = -std::cos(two_pi * t / year_hours);
        const double e0 = standard_normal(rng);
        const double e1 = standard_normal(rng);
        const double e2 = standard_normal(rng);
        const double e3 = standard_normal(rng);
        const double u = uniform01(rng);
        const double e4 = uniform01(rng);

        const double temp = o.base_temperature + o.daily_amplitude * daily +
                            o.annual_amplitude * annual + o.noise_sigma * e0;
        const double dew = temp - 4.0 - 1.5 * daily + 0.5 * o.noise_sigma * e1;
        const double rh = std::clamp(
            75.0 - 1.5 * (temp - o.base_temperature) + 2.0 * o.noise_sigma * e2,
            5.0, 100.0);
        const double wind = std::max(
            0.0, 12.0 + 4.0 * std::sin(two_pi * t / 24.0 + 1.0) +
                     2.0 * o.noise_sigma * e3);
        const double vis = std::max(0.5, 40.0 - 0.3 * rh);
        const double pressure = 101.3 + 0.6 * std::sin(two_pi * t / 120.0) +
                                0.05 * o.noise_sigma * e1;
        const double precip =
            (o.noise_sigma > 0.0 && u < 0.05) ? -o.noise_sigma * std::log(1.0 - e4)
                                              : 0.0;

        auto rec = record_at(start + static_cast<std::int64_t>(h));
        rec.values = {temp, dew, rh, wind, vis, pressure, precip};
        out.push_back(rec);
    }
    return out;
}

PreparedData prepare(const std::vector<WeatherRecord> &records,
                     double train_fraction) {
    PreparedData d;
    d.n_train = train_row_count(records.size(), train_fraction);
    if (d.n_train < 2 || d.n_train >= records.size()) {
        throw ConfigError("split leaves an empty training or test set");
    }
    d.missing_counts.assign(kNumFeatures, 0);
    for (const auto &r : records) {
        for (std::size_t f = 0; f < kNumFeatures; ++f) {
            d.missing_counts[f] += r.values[f] ? 0 : 1;
        }
        d.hours.push_back(r.hour_index());
    }
    const auto medians = fit_medians(records, d.n_train);
    d.raw = to_matrix(impute_median(records, medians));
    d.scaler = fit_scaler(d.raw, d.n_train);
    d.scaler.impute_medians = medians;
    d.standardized = transform(d.raw, d.scaler);
    return d;
}

SplitRows split_rows(const PreparedData &data, double validation_fraction) {
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
        throw ConfigError("validation fraction must be in (0, 1)");
    }
    const auto n_val = static_cast<std::size_t>(
        std::floor(validation_fraction * static_cast<double>(data.n_train)));
    if (n_val < 1) {
        throw ConfigError("validation segment is empty");
    }
    return {data.n_train - n_val, data.n_train, data.rows()};
}

SplitWindows make_split_windows(const PreparedData &data,
                                std::size_t sequence_length,
                                double validation_fraction) {
    const auto rows = split_rows(data, validation_fraction);
    if (rows.fit_end <= sequence_length) {
        throw ConfigError("training segment shorter than the sequence length");
    }
    const auto all = make_windows(data.standardized, sequence_length);
    return {all.select_rows(0, rows.fit_end, Split::Train),
            all.select_rows(rows.fit_end, rows.train_end, Split::Validation),
            all.select_rows(rows.train_end, rows.rows, Split::Test)};
}

namespace {

constexpr char kMagic[8] = {'Q', 'E', 'N', 'S', 'D', 'A', 'T', 'A'};

template <class T> void put(std::ostream &out, const T &v) {
    out.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <class T> T get(std::istream &in) {
    T v{};
    in.read(reinterpret_cast<char *>(&v), sizeof(T));
    if (!in) {
        throw DataError("dataset cache is truncated");
    }
    return v;
}

} // namespace

void write_cache(const std::filesystem::path &path, const PreparedData &data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out.write(kMagic, sizeof kMagic);
    put(out, kCacheVersion);
    put<std::uint64_t>(out, data.rows());
    put<std::uint64_t>(out, kNumFeatures);
    put<std::uint64_t>(out, data.n_train);
    for (auto h : data.hours) {
        put(out, h);
    }
    for (Eigen::Index r = 0; r < data.raw.rows(); ++r) {
        for (Eigen::Index c = 0; c < data.raw.cols(); ++c) {
            put(out, data.raw(r, c));
        }
    }
    for (auto m : data.missing_counts) {
        put<std::uint64_t>(out, m);
    }
    put<std::uint64_t>(out, data.scaler.fitted_rows);
    for (const auto &fs : data.scaler.features) {
        put(out, fs.median);
        put(out, fs.q1);
        put(out, fs.q3);
        put<std::uint8_t>(out, fs.robust_active ? 1 : 0);
        put(out, fs.mean);
        put(out, fs.stddev);
        put<std::uint8_t>(out, fs.z_active ? 1 : 0);
    }
    for (double m : data.scaler.impute_medians) {
        put(out, m);
    }
    put<std::uint64_t>(out, data.scaler.warnings.size());
    for (const auto &w : data.scaler.warnings) {
        put<std::uint64_t>(out, w.size());
        out.write(w.data(), static_cast<std::streamsize>(w.size()));
    }
}

PreparedData read_cache(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw DataError(path.string() + " is not a dataset cache");
    }
    const auto version = get<std::uint32_t>(in);
    if (version != kCacheVersion) {
        throw VersionError(fmt::format(
            "dataset cache version {} is not supported (expected {})", version,
            kCacheVersion));
    }
    PreparedData d;
    const auto rows = get<std::uint64_t>(in);
    const auto cols = get<std::uint64_t>(in);
    if (cols != kNumFeatures) {
        throw DataError("dataset cache has the wrong feature count");
    }
    d.n_train = get<std::uint64_t>(in);
    d.hours.resize(rows);
    for (auto &h : d.hours) {
        h = get<std::int64_t>(in);
    }
    d.raw.resize(static_cast<Eigen::Index>(rows),
                 static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < d.raw.rows(); ++r) {
        for (Eigen::Index c = 0; c < d.raw.cols(); ++c) {
            d.raw(r, c) = get<double>(in);
        }
    }
    d.missing_counts.resize(kNumFeatures);
    for (auto &m : d.missing_counts) {
        m = get<std::uint64_t>(in);
    }
    d.scaler.fitted_rows = get<std::uint64_t>(in);
    for (auto &fs : d.scaler.features) {
        fs.median = get<double>(in);
        fs.q1 = get<double>(in);
        fs.q3 = get<double>(in);
        fs.robust_active = get<std::uint8_t>(in) != 0;
        fs.mean = get<double>(in);
        fs.stddev = get<double>(in);
        fs.z_active = get<std::uint8_t>(in) != 0;
    }
    for (auto &m : d.scaler.impute_medians) {
        m = get<double>(in);
    }
    const auto nw = get<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < nw; ++i) {
        const auto len = get<std::uint64_t>(in);
        std::string w(len, '\0');
        in.read(w.data(), static_cast<std::streamsize>(len));
        d.scaler.warnings.push_back(std::move(w));
    }
    if (!in) {
        throw DataError("dataset cache is truncated");
    }
    d.standardized = transform(d.raw, d.scaler);
    return d;
}

} // namespace qens::data
