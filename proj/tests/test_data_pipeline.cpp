#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "qens/data_pipeline.hpp"
#include "qens/error.hpp"

using namespace qens;
using namespace qens::data;

namespace {

std::vector<WeatherRecord> small_series(std::size_t hours, std::uint64_t seed = 1) {
    SynthOptions o;
    o.n_hours = hours;
    o.seed = seed;
    return synth_series(o);
}

double sorted_quantile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= v.size()) {
        return v.back();
    }
    return v[lo] + (pos - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

} // namespace

TEST_CASE("train rows are floor(0.87 N)") {
    for (std::size_t n = 2; n < 3000; n += 7) {
        CHECK(train_row_count(n) == (87 * n) / 100);
    }
    CHECK(train_row_count(96432) == 83895);
    CHECK_THROWS_AS(train_row_count(10, 1.0), ConfigError);
}

TEST_CASE("a 96,432-row series splits 83,895 / 12,537") {
    const auto d = prepare(small_series(96432));
    CHECK(d.rows() == 96432);
    CHECK(d.n_train == 83895);
    CHECK(d.rows() - d.n_train == 12537);
}

TEST_CASE("scaling round-trips within 1e-9") {
    const auto d = prepare(small_series(3000));
    const RowMatrix back = inverse_transform(d.standardized, d.scaler);
    CHECK((back - d.raw).cwiseAbs().maxCoeff() < 1e-9);
    for (Eigen::Index r = 0; r < 50; ++r) {
        for (std::size_t f = 0; f < kNumFeatures; ++f) {
            const double x = d.raw(r, static_cast<Eigen::Index>(f));
            CHECK(inverse_feature(forward_feature(x, f, d.scaler), f, d.scaler) ==
                  doctest::Approx(x).epsilon(1e-12));
        }
    }
}

TEST_CASE("scaler statistics come from the training rows only") {
    auto records = small_series(1500);
    const auto base = prepare(records);
    CHECK(base.scaler.fitted_rows == base.n_train);

    // Wild values and holes in the test segment must not move any statistic.
    auto tampered = records;
    for (std::size_t r = base.n_train; r < tampered.size(); ++r) {
        tampered[r].values[0] = 1e6;
        tampered[r].values[3].reset();
    }
    const auto other = prepare(tampered);
    CHECK(other.scaler == base.scaler);
    CHECK(other.standardized.topRows(static_cast<Eigen::Index>(base.n_train)) ==
          base.standardized.topRows(static_cast<Eigen::Index>(base.n_train)));
    // Test holes are filled with the training median.
    CHECK(other.raw(static_cast<Eigen::Index>(base.n_train), 3) ==
          base.scaler.impute_medians[3]);
    CHECK(other.missing_counts[3] == records.size() - base.n_train);

    // Independent recomputation of the fitted statistics.
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
        std::vector<double> col;
        for (std::size_t r = 0; r < base.n_train; ++r) {
            col.push_back(base.raw(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f)));
        }
        const auto &fs = base.scaler.features[f];
        CHECK(fs.median == doctest::Approx(sorted_quantile(col, 0.5)).epsilon(1e-14));
        CHECK(fs.q1 == doctest::Approx(sorted_quantile(col, 0.25)).epsilon(1e-14));
        CHECK(fs.q3 == doctest::Approx(sorted_quantile(col, 0.75)).epsilon(1e-14));
        if (fs.z_active) {
            double mean = 0;
            for (std::size_t r = 0; r < base.n_train; ++r) {
                mean += base.standardized(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f));
            }
            CHECK(std::abs(mean / static_cast<double>(base.n_train)) < 1e-9);
        }
    }
}

TEST_CASE("a feature with zero IQR is passed through with a warning") {
    auto records = small_series(400);
    for (auto &r : records) {
        r.values[6] = 0.0;
    }
    const auto d = prepare(records);
    CHECK_FALSE(d.scaler.features[6].robust_active);
    CHECK_FALSE(d.scaler.features[6].z_active);
    CHECK(d.scaler.warnings.size() >= 1);
    CHECK(d.standardized.col(6).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("missing medians are computed on training rows") {
    auto records = small_series(300);
    records[5].values[1].reset();
    records[6].values[1].reset();
    const auto d = prepare(records);
    CHECK(d.missing_counts[1] == 2);
    CHECK(d.raw(5, 1) == d.scaler.impute_medians[1]);
    std::vector<double> present;
    for (std::size_t r = 0; r < d.n_train; ++r) {
        if (records[r].values[1]) {
            present.push_back(*records[r].values[1]);
        }
    }
    CHECK(d.scaler.impute_medians[1] == doctest::Approx(sorted_quantile(present, 0.5)));
}

TEST_CASE("CSV round trip and parse errors") {
    const auto records = small_series(60);
    std::stringstream ss;
    write_csv(ss, records);
    const auto back = parse_csv(ss);
    REQUIRE(back.size() == records.size());
    CHECK(back[7].timestamp() == records[7].timestamp());
    CHECK(*back[7].values[0] == doctest::Approx(*records[7].values[0]).epsilon(1e-12));

    std::stringstream bad_header("date,time,temp\n");
    CHECK_THROWS_AS(parse_csv(bad_header), DataError);

    const std::string header = std::string(kCsvHeader) + "\n";
    std::stringstream gap(header + "2020-01-01,00:00,1,1,1,1,1,1,1\n"
                                   "2020-01-01,02:00,1,1,1,1,1,1,1\n");
    CHECK_THROWS_WITH_AS(parse_csv(gap), doctest::Contains("gap"), DataError);
    std::stringstream order(header + "2020-01-01,01:00,1,1,1,1,1,1,1\n"
                                     "2020-01-01,00:00,1,1,1,1,1,1,1\n");
    CHECK_THROWS_AS(parse_csv(order), DataError);
    std::stringstream garbage(header + "2020-01-01,00:00,1,1,1,1,1,1,1\n"
                                       "2020-01-01,01:00,x,1,1,1,1,1,1\n");
    CHECK_THROWS_WITH_AS(parse_csv(garbage), doctest::Contains("line 3"), DataError);
    std::stringstream holes(header + "2020-01-01,00:00,,1,1,1,1,1,1\n");
    CHECK_FALSE(parse_csv(holes)[0].values[0].has_value());
}

TEST_CASE("the dataset cache round-trips exactly") {
    const auto d = prepare(small_series(500));
    const auto path = std::filesystem::temp_directory_path() / "qens_test_cache.bin";
    write_cache(path, d);
    const auto e = read_cache(path);
    CHECK(e.hours == d.hours);
    CHECK(e.raw == d.raw);
    CHECK(e.standardized == d.standardized);
    CHECK(e.scaler == d.scaler);
    CHECK(e.n_train == d.n_train);
    std::filesystem::resize_file(path, 40);
    CHECK_THROWS_AS(read_cache(path), DataError);
    std::filesystem::remove(path);
}

TEST_CASE("validation rows are the tail of the training segment") {
    const auto d = prepare(small_series(1000));
    const auto rows = split_rows(d, 0.1);
    CHECK(rows.train_end == d.n_train);
    CHECK(rows.train_end - rows.fit_end == d.n_train / 10);
    CHECK(rows.rows == d.rows());

    const auto w = make_split_windows(d, 4, 0.1);
    CHECK(w.train.target_rows.back() == rows.fit_end - 1);
    CHECK(w.validation.target_rows.front() == rows.fit_end);
    CHECK(w.test.target_rows.front() == rows.train_end);
    CHECK(w.test.target_rows.back() == d.rows() - 1);
    for (std::size_t i : {0ul, 5ul, w.test.size() - 1}) {
        const auto row = w.test.target_rows[i];
        CHECK(w.test.targets[i] == d.standardized(static_cast<Eigen::Index>(row), 0));
        const auto win = w.test.window(i);
        CHECK(win.row(3) == d.standardized.row(static_cast<Eigen::Index>(row - 1)));
    }
    CHECK_THROWS_AS(split_rows(d, 0.0), ConfigError);
}

TEST_CASE("the synthetic series is seeded and periodic without noise") {
    CHECK(small_series(100, 4)[50].values == small_series(100, 4)[50].values);
    SynthOptions o;
    o.n_hours = 96;
    o.noise_sigma = 0.0;
    o.annual_amplitude = 0.0;
    const auto s = synth_series(o);
    CHECK(*s[10].values[0] == doctest::Approx(*s[34].values[0]).epsilon(1e-12));
    o.n_hours = 10;
    CHECK_THROWS_AS(synth_series(o), ConfigError);
}
