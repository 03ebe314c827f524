#include "run_store.hpp"

#include <cstdlib>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "qens/error.hpp"

namespace qens::cli {

std::string sha256_file(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError(fmt::format("cannot read {}", path.string()));
    }
    EVP_MD_CTX *ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 15];
    while (in) {
        in.read(buf, sizeof buf);
        EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) {
        hex += fmt::format("{:02x}", digest[i]);
    }
    return hex;
}

fs::path resolve_output_root(const std::string &flag) {
    if (!flag.empty()) {
        return flag;
    }
    if (const char *env = std::getenv("QENS_OUTPUT_ROOT"); env && *env) {
        return env;
    }
    return "runs";
}

void write_json(const fs::path &path, const nlohmann::json &j) {
    write_text(path, j.dump(1) + "\n");
}

nlohmann::json read_json(const fs::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError(fmt::format("cannot read {}", path.string()));
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &e) {
        throw DataError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

void write_text(const fs::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError(fmt::format("cannot write {}", path.string()));
    }
    out << text;
}

Stage::Stage(fs::path dir, std::string command, nlohmann::json settings, bool force)
    : dir_(std::move(dir)), command_(std::move(command)), settings_(std::move(settings)) {
    if (fs::exists(dir_)) {
        if (!force) {
            throw ConfigError(fmt::format(
                "{} already exists; pass --force to replace it", dir_.string()));
        }
        fs::remove_all(dir_);
    }
    fs::create_directories(dir_);
}

void Stage::artifact(const std::string &name) { artifacts_.push_back(name); }

void Stage::input(const fs::path &path) { inputs_.push_back(path); }

void Stage::timing(const std::string &what, double seconds) { timings_[what] = seconds; }

void Stage::seed(const std::string &stream, std::uint64_t value) { seeds_[stream] = value; }

void Stage::commit() {
    nlohmann::json artifacts = nlohmann::json::array();
    for (const auto &name : artifacts_) {
        artifacts.push_back({{"path", name}, {"sha256", sha256_file(path(name))}});
    }
    nlohmann::json inputs = nlohmann::json::array();
    for (const auto &p : inputs_) {
        inputs.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    }
    write_json(path("manifest.json"), {{"format", "qens-manifest"},
                                       {"version", kManifestVersion},
                                       {"tool_version", kToolVersion},
                                       {"command", command_},
                                       {"settings", settings_},
                                       {"seeds", seeds_},
                                       {"wall_seconds", timings_},
                                       {"inputs", std::move(inputs)},
                                       {"artifacts", std::move(artifacts)}});
}

} // namespace qens::cli
