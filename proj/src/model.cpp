#include "qens/model.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>

#include "qens/error.hpp"

namespace qens::model {

using nlohmann::json;

namespace {

template <class Params>
json tensors_to_json(const Params &p) {
    json out = json::array();
    for (auto t : p.tensors()) {
        out.push_back(std::vector<double>(t.begin(), t.end()));
    }
    return out;
}

template <class Params>
void tensors_from_json(Params &p, const json &j) {
    auto slots = p.tensors();
    if (!j.is_array() || j.size() != slots.size()) {
        throw DataError("checkpoint tensor count does not match the model shape");
    }
    for (std::size_t k = 0; k < slots.size(); ++k) {
        const auto values = j[k].get<std::vector<double>>();
        if (values.size() != slots[k].size()) {
            throw DataError(fmt::format("checkpoint tensor {} has {} values, expected {}",
                                        k, values.size(), slots[k].size()));
        }
        std::copy(values.begin(), values.end(), slots[k].begin());
    }
}

void check_format(const json &j, const char *format) {
    if (!j.is_object() || !j.contains("format") || j["format"] != format) {
        throw DataError(fmt::format("not a {} document", format));
    }
    const int version = j.value("version", -1);
    if (version != kCheckpointVersion) {
        throw VersionError(fmt::format("{} version {} is not supported (expected {})",
                                       format, version, kCheckpointVersion));
    }
}

} // namespace

std::string TrainedModel::kind() const {
    switch (params.index()) {
    case 0:
        return "qlstm";
    case 1:
        return "lstm";
    default:
        return "table";
    }
}

double TrainedModel::predict(WindowRef window, std::size_t target_row) const {
    if (const auto *q = std::get_if<qlstm::QLSTMParams>(&params)) {
        return qlstm::forward_sequence(*q, window);
    }
    if (const auto *l = std::get_if<lstm::LSTMParams>(&params)) {
        return lstm::forward_sequence(*l, window);
    }
    const auto &table = std::get<TableParams>(params).by_row;
    const auto it = table.find(target_row);
    if (it == table.end()) {
        throw DataError(fmt::format("table model has no prediction for row {}", target_row));
    }
    return it->second;
}

std::vector<double> TrainedModel::predict(const WindowedDataset &set) const {
    if (set.sequence_length != sequence_length()) {
        throw ShapeError("window length differs from the model's sequence length");
    }
    std::vector<double> out(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        out[i] = predict(set.window(i), set.target_rows[i]);
    }
    return out;
}

std::size_t Ensemble::max_sequence_length() const {
    std::size_t m = 0;
    for (const auto &member : members) {
        m = std::max(m, member.sequence_length());
    }
    return m;
}

json to_json(const HyperConfig &c) {
    return json{{"learning_rate", c.learning_rate}, {"n_layers", c.n_layers},
                {"n_qubits", c.n_qubits},           {"hidden_units", c.hidden_units},
                {"sequence_length", c.sequence_length},
                {"batch_size", c.batch_size},       {"epochs", c.epochs}};
}

HyperConfig config_from_json(const json &j) {
    HyperConfig c;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.n_qubits = j.at("n_qubits").get<std::size_t>();
    c.hidden_units = j.at("hidden_units").get<std::size_t>();
    c.sequence_length = j.at("sequence_length").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    return c;
}

json to_json(const TrainedModel &m) {
    json j{{"name", m.name}, {"kind", m.kind()}, {"config", to_json(m.config)}};
    if (const auto *q = std::get_if<qlstm::QLSTMParams>(&m.params)) {
        j["shape"] = {{"n_qubits", q->n_qubits()},
                      {"n_layers", q->n_layers()},
                      {"hidden_units", q->hidden_units},
                      {"input_dim", q->input_dim},
                      {"output_dim", q->output_dim()}};
        j["tensors"] = tensors_to_json(*q);
    } else if (const auto *l = std::get_if<lstm::LSTMParams>(&m.params)) {
        j["shape"] = {{"hidden_units", l->hidden_units}, {"input_dim", l->input_dim}};
        j["tensors"] = tensors_to_json(*l);
    } else {
        json rows = json::array();
        for (const auto &[row, value] : std::get<TableParams>(m.params).by_row) {
            rows.push_back({row, value});
        }
        j["rows"] = std::move(rows);
    }
    return j;
}

TrainedModel model_from_json(const json &j) {
    try {
        TrainedModel m;
        m.name = j.at("name").get<std::string>();
        m.config = config_from_json(j.at("config"));
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "qlstm") {
            const auto &s = j.at("shape");
            auto p = qlstm::QLSTMParams::zeros(
                s.at("n_qubits").get<std::size_t>(), s.at("n_layers").get<std::size_t>(),
                s.at("hidden_units").get<std::size_t>(), s.at("input_dim").get<std::size_t>(),
                s.at("output_dim").get<std::size_t>());
            tensors_from_json(p, j.at("tensors"));
            m.params = std::move(p);
        } else if (kind == "lstm") {
            const auto &s = j.at("shape");
            auto p = lstm::LSTMParams::zeros(s.at("hidden_units").get<std::size_t>(),
                                             s.at("input_dim").get<std::size_t>());
            tensors_from_json(p, j.at("tensors"));
            m.params = std::move(p);
        } else if (kind == "table") {
            TableParams t;
            for (const auto &entry : j.at("rows")) {
                t.by_row[entry.at(0).get<std::size_t>()] = entry.at(1).get<double>();
            }
            m.params = std::move(t);
        } else {
            throw DataError(fmt::format("unknown model kind '{}'", kind));
        }
        return m;
    } catch (const json::exception &e) {
        throw DataError(fmt::format("malformed model entry: {}", e.what()));
    }
}

json to_json(const Ensemble &e) {
    json members = json::array();
    for (const auto &m : e.members) {
        members.push_back(to_json(m));
    }
    return json{{"format", "qens-ensemble"},
                {"version", kCheckpointVersion},
                {"architecture", e.architecture},
                {"weights", e.weights},
                {"members", std::move(members)}};
}

Ensemble ensemble_from_json(const json &j) {
    check_format(j, "qens-ensemble");
    try {
        Ensemble e;
        e.architecture = j.at("architecture").get<std::string>();
        e.weights = j.at("weights").get<std::vector<double>>();
        for (const auto &m : j.at("members")) {
            e.members.push_back(model_from_json(m));
        }
        if (e.weights.size() != e.members.size() || e.members.empty()) {
            throw DataError("checkpoint needs one weight per member");
        }
        return e;
    } catch (const json::exception &ex) {
        throw DataError(fmt::format("malformed checkpoint: {}", ex.what()));
    }
}

void save_checkpoint(const std::filesystem::path &path, const Ensemble &ensemble) {
    std::ofstream out(path);
    if (!out) {
        throw DataError(fmt::format("cannot write {}", path.string()));
    }
    out << to_json(ensemble).dump(1) << '\n';
}

Ensemble load_checkpoint(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError(fmt::format("cannot read checkpoint {}", path.string()));
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception &e) {
        throw DataError(fmt::format("{}: {}", path.string(), e.what()));
    }
    return ensemble_from_json(j);
}

} // namespace qens::model
