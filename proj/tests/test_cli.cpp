#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "qens/data_pipeline.hpp"
#include "qens/model.hpp"
#include "run_store.hpp"

using namespace qens;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

struct Sandbox {
    fs::path root;

    Sandbox() {
        root = fs::temp_directory_path() /
               ("qens_cli_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(root);
    }
    ~Sandbox() { fs::remove_all(root); }

    Result run(std::vector<std::string> args) const {
        args.insert(args.begin(), {"--output-root", root.string()});
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        return {code, out.str(), err.str()};
    }

    [[nodiscard]] fs::path stage(const std::string &run, const std::string &name) const {
        return root / run / name;
    }
};

const std::vector<std::string> kTinySpace{"--layers", "1,1", "--qubits", "2,2", "--hidden",
                                          "2,2", "--batch", "64,64", "--epochs", "2",
                                          "--probe-epochs", "1"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string> &b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

void prepare(const Sandbox &s, const std::string &run, const std::string &hours = "400") {
    REQUIRE(s.run({"--run", run, "synth", "--hours", hours}).code == 0);
    REQUIRE(s.run({"--run", run, "preprocess"}).code == 0);
}

std::size_t count_lines(const fs::path &p) {
    std::ifstream in(p);
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) {
        n += line.empty() ? 0 : 1;
    }
    return n;
}

void write_stub(const Sandbox &s, const std::string &run, const std::string &name,
                double offset = 0.0, int version = model::kCheckpointVersion) {
    const auto d = data::read_cache(s.stage(run, "data") / "dataset.bin");
    model::TableParams t;
    for (std::size_t r = 0; r < d.rows(); ++r) {
        t.by_row[r] = d.standardized(static_cast<Eigen::Index>(r), 0) + offset;
    }
    for (std::size_t r = d.rows(); r < d.rows() + 48; ++r) {
        t.by_row[r] = 0.0;
    }
    HyperConfig c;
    c.sequence_length = 3;
    auto j = model::to_json(model::Ensemble{"single", {{name, c, t}}, {1.0}});
    j["version"] = version;
    fs::create_directories(s.stage(run, name));
    std::ofstream(s.stage(run, name) / "checkpoint.json") << j.dump();
}

} // namespace

TEST_CASE("a hybrid budget of 50 writes 50 trace rows per model") {
    Sandbox s;
    prepare(s, "r");
    const auto r = s.run(with({"--run", "r", "--jobs", "2", "tune", "--tuner", "hybrid", "--budget",
                               "50", "--hidden", "2,3", "--batch", "32,64"},
                              {"--layers", "1,1", "--qubits", "2,2", "--probe-epochs", "1"}));
    REQUIRE(r.code == 0);
    for (const char *name : {"trace-seq3.jsonl", "trace-seq5.jsonl"}) {
        const auto p = s.stage("r", "tune-hybrid") / name;
        CHECK(count_lines(p) == 50);
        std::ifstream in(p);
        std::string line;
        std::getline(in, line);
        const auto j = json::parse(line);
        CHECK(j.at("evaluation") == 0);
        CHECK(j.contains("config"));
    }
    const auto m = cli::read_json(s.stage("r", "tune-hybrid") / "manifest.json");
    CHECK(m.at("artifacts").size() == 3);
}

TEST_CASE("bayes tuning persists K configurations per model") {
    Sandbox s;
    prepare(s, "r");
    const auto r = s.run(with({"--run", "r", "tune", "--tuner", "bayes", "--k", "2", "--budget",
                               "5", "--bo-init", "3", "--hidden", "2,4"},
                              {"--layers", "1,1", "--qubits", "2,2", "--probe-epochs", "1",
                               "--batch", "64,64"}));
    REQUIRE(r.code == 0);
    const auto k = cli::read_json(s.stage("r", "tune-bayes") / "kbest.json");
    CHECK(k.at("seq_lengths") == json::array({3, 5}));
    REQUIRE(k.at("sets").size() == 2);
    for (const auto &set : k.at("sets")) {
        CHECK(set.at("configs").size() == 2);
        CHECK(set.at("configs")[0] != set.at("configs")[1]);
    }
}

TEST_CASE("stages are never overwritten without --force") {
    Sandbox s;
    REQUIRE(s.run({"--run", "r", "synth", "--hours", "100"}).code == 0);
    const auto csv = s.stage("r", "synth") / "series.csv";
    const auto before = cli::sha256_file(csv);
    const auto again = s.run({"--run", "r", "synth", "--hours", "200"});
    CHECK(again.code == cli::kUsage);
    CHECK(again.err.find("--force") != std::string::npos);
    CHECK(cli::sha256_file(csv) == before);
    CHECK(s.run({"--run", "r", "--force", "synth", "--hours", "200"}).code == 0);
    CHECK(cli::sha256_file(csv) != before);
}

TEST_CASE("a stub checkpoint that returns the truth scores zero") {
    Sandbox s;
    prepare(s, "r");
    write_stub(s, "r", "stub");
    write_stub(s, "r", "off", 0.5);
    const auto r = s.run({"--run", "r", "evaluate", "--sources", "stub", "off"});
    REQUIRE(r.code == 0);
    const auto m = cli::read_json(s.stage("r", "evaluate") / "metrics.json");
    const auto &rows = m.at("rows");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].at("model") == "stub");
    CHECK(rows[1].at("model") == "off");
    CHECK(rows[0].at("mape_percent").get<double>() < 1e-9);
    CHECK(rows[0].at("mse").get<double>() < 1e-18);
    CHECK(rows[1].at("mse").get<double>() > 0.0);

    // Row order follows the requested order, not the directory order.
    const auto flipped =
        s.run({"--run", "r", "--force", "evaluate", "--sources", "off", "stub"});
    REQUIRE(flipped.code == 0);
    const auto m2 = cli::read_json(s.stage("r", "evaluate") / "metrics.json");
    CHECK(m2.at("rows")[0].at("model") == "off");
    CHECK(flipped.out.find("off") < flipped.out.find("stub"));
}

TEST_CASE("a checkpoint from another version is a data error") {
    Sandbox s;
    prepare(s, "r");
    write_stub(s, "r", "future", 0.0, model::kCheckpointVersion + 1);
    const auto r = s.run({"--run", "r", "evaluate", "--sources", "future"});
    CHECK(r.code == cli::kDataError);
    CHECK(r.err.find("version") != std::string::npos);
}

TEST_CASE("forecast defaults to a 24-hour horizon") {
    Sandbox s;
    prepare(s, "r");
    write_stub(s, "r", "stub");
    const auto r = s.run({"--run", "r", "forecast", "--source", "stub"});
    REQUIRE(r.code == 0);
    const auto sum = cli::read_json(s.stage("r", "forecast-stub") / "summary.json");
    CHECK(sum.at("horizon") == 24);
    std::ifstream in(s.stage("r", "forecast-stub") / "forecast.csv");
    std::string line;
    std::size_t multi = 0;
    while (std::getline(in, line)) {
        multi += line.ends_with(",24h") ? 1 : 0;
    }
    CHECK(multi == 24);
    CHECK(s.run({"--run", "r", "forecast"}).code == cli::kUsage);
}

TEST_CASE("missing prerequisites name the command to run") {
    Sandbox s;
    prepare(s, "r");
    const auto r = s.run({"--run", "r", "ensemble", "--arch", "bo-q"});
    CHECK(r.code == cli::kUsage);
    CHECK(r.err.find("qens tune") != std::string::npos);
    CHECK(r.err.find("--tuner bayes") != std::string::npos);
    const auto bare = s.run({"--run", "empty", "tune"});
    CHECK(bare.code == cli::kUsage);
    CHECK(bare.err.find("qens preprocess") != std::string::npos);
}

TEST_CASE("usage errors exit with code 2") {
    Sandbox s;
    prepare(s, "r");
    CHECK(s.run({"--run", "r", "tune", "--tuner", "annealing"}).code == cli::kUsage);
    CHECK(s.run({"--bogus-flag"}).code == cli::kUsage);
    CHECK(s.run({}).code == cli::kUsage);
    CHECK(s.run({"--run", "r", "ensemble", "--arch", "stacked"}).code == cli::kUsage);
}

TEST_CASE("a CSV with a gap is a data error") {
    Sandbox s;
    const auto csv = s.root / "gap.csv";
    std::ofstream(csv) << data::kCsvHeader << "\n2020-01-01,00:00,1,1,1,1,1,1,1\n"
                       << "2020-01-01,05:00,1,1,1,1,1,1,1\n";
    const auto r = s.run({"--run", "g", "preprocess", "--input", csv.string()});
    CHECK(r.code == cli::kDataError);
    CHECK(r.err.find("line") != std::string::npos);
}

TEST_CASE("the output root can come from the environment") {
    Sandbox s;
    ::setenv("QENS_OUTPUT_ROOT", s.root.c_str(), 1);
    std::ostringstream out, err;
    CHECK(cli::run({"--run", "env", "synth", "--hours", "60"}, out, err) == 0);
    ::unsetenv("QENS_OUTPUT_ROOT");
    CHECK(fs::exists(s.stage("env", "synth") / "series.csv"));
}

TEST_CASE("JSON config files supply options per subcommand") {
    Sandbox s;
    const auto cfg = s.root / "cfg.json";
    std::ofstream(cfg) << R"({"run": "fromcfg", "seed": 9, "synth": {"hours": 72, "noise": 0.0}})";
    REQUIRE(s.run({"--config", cfg.string(), "synth"}).code == 0);
    const auto m = cli::read_json(s.stage("fromcfg", "synth") / "manifest.json");
    CHECK(m.at("settings").at("seed") == 9);
    CHECK(m.at("settings").at("command").at("hours") == 72);
    CHECK(count_lines(s.stage("fromcfg", "synth") / "series.csv") == 73);

    std::ofstream(cfg) << R"({"synth": {"hourz": 72}})";
    CHECK(s.run({"--config", cfg.string(), "--run", "bad", "synth"}).code == cli::kUsage);
}

TEST_CASE("replaying a manifest reproduces every artifact") {
    Sandbox s;
    prepare(s, "r");
    REQUIRE(s.run(with({"--run", "r", "tune", "--tuner", "bayes", "--budget", "3", "--bo-init",
                        "2", "--k", "1"},
                       kTinySpace))
                .code == 0);
    REQUIRE(s.run({"--run", "r", "--jobs", "2", "ensemble", "--arch", "bo-q"}).code == 0);

    for (const char *stage : {"data", "tune-bayes", "ensemble-bo-q"}) {
        const auto manifest = s.stage("r", stage) / "manifest.json";
        const auto r = s.run({"replay", manifest.string()});
        CAPTURE(stage);
        CHECK(r.code == 0);
        CHECK(r.out.find("DIFFERS") == std::string::npos);
    }
    const auto m = cli::read_json(s.stage("r", "ensemble-bo-q") / "manifest.json");
    CHECK(m.at("seeds").contains("members"));
    CHECK(m.at("wall_seconds").contains("ensemble"));

    // A tampered hash is reported and fails the replay.
    auto tampered = m;
    tampered["artifacts"][0]["sha256"] = std::string(64, '0');
    cli::write_json(s.stage("r", "ensemble-bo-q") / "manifest.json", tampered);
    const auto r = s.run({"replay", (s.stage("r", "ensemble-bo-q") / "manifest.json").string()});
    CHECK(r.code == cli::kDataError);
    CHECK(r.out.find("DIFFERS") != std::string::npos);

    const auto path = s.root / "old" / "x" / "manifest.json";
    fs::create_directories(path.parent_path());
    auto old = m;
    old["version"] = 99;
    cli::write_json(path, old);
    CHECK(s.run({"replay", path.string()}).code == cli::kDataError);
}

TEST_CASE("train writes a single-member checkpoint") {
    Sandbox s;
    prepare(s, "r");
    const auto r = s.run({"--run", "r", "train", "--model", "lstm", "--hidden", "3", "--epochs",
                          "2", "--seq", "3"});
    REQUIRE(r.code == 0);
    const auto dir = s.stage("r", "train-lstm-seq3");
    const auto ens = model::load_checkpoint(dir / "checkpoint.json");
    CHECK(ens.members.size() == 1);
    CHECK(ens.members[0].kind() == "lstm");
    const auto rep = cli::read_json(dir / "report.json");
    CHECK(rep.at("report").at("train_loss").size() == 2);
    CHECK(s.run({"--run", "r", "train", "--model", "gru"}).code == cli::kUsage);
}
