#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace qens::cli {

namespace fs = std::filesystem;

inline constexpr int kManifestVersion = 1;
inline constexpr const char *kToolVersion = "0.1.0";

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const fs::path &path);

/// Output root from the flag, else $QENS_OUTPUT_ROOT, else "runs".
fs::path resolve_output_root(const std::string &flag);

void write_json(const fs::path &path, const nlohmann::json &j);
nlohmann::json read_json(const fs::path &path);
void write_text(const fs::path &path, const std::string &text);

/**
 * @brief One stage directory of a run, e.g. runs/demo/tune-hybrid.
 *
 * Creating a stage refuses to touch an existing directory unless `force`
 * is set, in which case the old directory is removed first. Artifacts are
 * registered as they are written and hashed into manifest.json on commit.
 */
class Stage {
  public:
    Stage(fs::path dir, std::string command, nlohmann::json settings, bool force);

    [[nodiscard]] const fs::path &dir() const { return dir_; }
    [[nodiscard]] fs::path path(const std::string &name) const { return dir_ / name; }

    /// Records a file written inside the stage directory.
    void artifact(const std::string &name);
    /// Records a file this stage read.
    void input(const fs::path &path);
    void timing(const std::string &what, double seconds);
    void seed(const std::string &stream, std::uint64_t value);

    /// Writes manifest.json.
    void commit();

  private:
    fs::path dir_;
    std::string command_;
    nlohmann::json settings_;
    std::vector<std::string> artifacts_;
    std::vector<fs::path> inputs_;
    std::map<std::string, double> timings_;
    std::map<std::string, std::uint64_t> seeds_;
};

/// Wall-clock stopwatch for manifest timings.
class Stopwatch {
  public:
    Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
    [[nodiscard]] double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }

  private:
    std::chrono::steady_clock::time_point t0_;
};

} // namespace qens::cli
