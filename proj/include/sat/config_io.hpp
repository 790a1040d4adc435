#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sat/model.hpp"
#include "sat/train.hpp"

namespace sat {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// enum <-> string
// ---------------------------------------------------------------------------

inline ExtractorStrategy strategy_from_name(const std::string& s) {
    if (s == "subtree") return ExtractorStrategy::subtree;
    if (s == "subgraph") return ExtractorStrategy::subgraph;
    throw std::invalid_argument("unknown extractor strategy \"" + s + "\"");
}

inline GnnKind gnn_from_name(const std::string& s) {
    if (s == "gcn") return GnnKind::gcn;
    if (s == "gin") return GnnKind::gin;
    throw std::invalid_argument("unknown gnn kind \"" + s + "\"");
}

inline PeKind pe_from_name(const std::string& s) {
    if (s == "none") return PeKind::none;
    if (s == "rwpe") return PeKind::rwpe;
    if (s == "lappe") return PeKind::lappe;
    throw std::invalid_argument("unknown positional encoding \"" + s + "\"");
}

inline Readout readout_from_name(const std::string& s) {
    if (s == "mean") return Readout::mean;
    if (s == "sum") return Readout::sum;
    if (s == "cls") return Readout::cls;
    if (s == "none") return Readout::none;
    throw std::invalid_argument("unknown readout \"" + s + "\"");
}

inline TaskKind task_from_name(const std::string& s) {
    if (s == "regression") return TaskKind::regression;
    if (s == "graph-class") return TaskKind::graph_class;
    if (s == "node-class") return TaskKind::node_class;
    throw std::invalid_argument("unknown task \"" + s + "\"");
}

inline LossKind loss_from_name(const std::string& s) {
    if (s == "l1") return LossKind::l1;
    if (s == "cross-entropy") return LossKind::cross_entropy;
    throw std::invalid_argument("unknown loss \"" + s + "\"");
}

inline Schedule schedule_from_name(const std::string& s) {
    if (s == "transformer-inv-sqrt") return Schedule::transformer_inv_sqrt;
    if (s == "cosine") return Schedule::cosine;
    throw std::invalid_argument("unknown schedule \"" + s + "\"");
}

// ---------------------------------------------------------------------------
// SatConfig / TrainConfig <-> JSON
// ---------------------------------------------------------------------------

inline json model_config_to_json(const SatConfig& cfg) {
    return json{{"num_layers", cfg.num_layers},
                {"hidden_dim", cfg.hidden_dim},
                {"num_heads", cfg.num_heads},
                {"k", cfg.k},
                {"extractor", strategy_name(cfg.extractor)},
                {"gnn", gnn_kind_name(cfg.gnn)},
                {"concat_original", cfg.concat_original},
                {"pe", pe_kind_name(cfg.pe)},
                {"pe_dim", cfg.pe_dim},
                {"readout", readout_name(cfg.readout)},
                {"dropout", cfg.dropout},
                {"task", task_name(cfg.task)},
                {"output_dim", cfg.output_dim}};
}

inline SatConfig model_config_from_json(const json& j) {
    SatConfig cfg;
    cfg.num_layers = j.value("num_layers", cfg.num_layers);
    cfg.hidden_dim = j.value("hidden_dim", cfg.hidden_dim);
    cfg.num_heads = j.value("num_heads", cfg.num_heads);
    cfg.k = j.value("k", cfg.k);
    if (j.contains("extractor")) cfg.extractor = strategy_from_name(j.at("extractor"));
    if (j.contains("gnn")) cfg.gnn = gnn_from_name(j.at("gnn"));
    cfg.concat_original = j.value("concat_original", cfg.concat_original);
    if (j.contains("pe")) cfg.pe = pe_from_name(j.at("pe"));
    cfg.pe_dim = j.value("pe_dim", cfg.pe_dim);
    if (j.contains("readout")) cfg.readout = readout_from_name(j.at("readout"));
    cfg.dropout = j.value("dropout", cfg.dropout);
    if (j.contains("task")) cfg.task = task_from_name(j.at("task"));
    cfg.output_dim = j.value("output_dim", cfg.output_dim);
    return cfg;
}

inline json train_config_to_json(const TrainConfig& cfg) {
    return json{{"base_lr", cfg.base_lr},
                {"batch_size", cfg.batch_size},
                {"epochs", cfg.epochs},
                {"warmup_steps", cfg.warmup_steps},
                {"weight_decay", cfg.weight_decay},
                {"schedule", schedule_name(cfg.schedule)},
                {"seed", cfg.seed},
                {"loss", loss_kind_name(cfg.loss)},
                {"total_steps", cfg.total_steps}};
}

inline TrainConfig train_config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.base_lr = j.value("base_lr", cfg.base_lr);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.warmup_steps = j.value("warmup_steps", cfg.warmup_steps);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    if (j.contains("schedule")) cfg.schedule = schedule_from_name(j.at("schedule"));
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("loss")) cfg.loss = loss_from_name(j.at("loss"));
    cfg.total_steps = j.value("total_steps", cfg.total_steps);
    return cfg;
}

// Run configuration file: {"model": {...}, "train": {...}, "split": [...]}.
struct RunConfig {
    SatConfig model;
    TrainConfig train;
    std::vector<double> split_fractions{0.8, 0.1, 0.1};
    bool stratify = false;

    json to_json() const {
        return json{{"model", model_config_to_json(model)},
                    {"train", train_config_to_json(train)},
                    {"split", split_fractions},
                    {"stratify", stratify}};
    }

    static RunConfig from_json(const json& j) {
        RunConfig rc;
        if (j.contains("model")) rc.model = model_config_from_json(j.at("model"));
        if (j.contains("train")) rc.train = train_config_from_json(j.at("train"));
        if (j.contains("split")) rc.split_fractions = j.at("split").get<std::vector<double>>();
        rc.stratify = j.value("stratify", false);
        return rc;
    }
};

inline json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("invalid JSON in " + path + ": " + e.what());
    }
    return j;
}

// ---------------------------------------------------------------------------
// --set overrides
// ---------------------------------------------------------------------------

namespace detail {

// Parses the value string with the type of the existing field as the schema.
inline json coerce_override_value(const json& current, const std::string& value,
                                  const std::string& key) {
    try {
        if (current.is_string()) return value;
        if (current.is_boolean()) {
            if (value == "true" || value == "1") return true;
            if (value == "false" || value == "0") return false;
            throw std::invalid_argument("expected a boolean");
        }
        if (current.is_number_unsigned()) return json(std::stoull(value));
        if (current.is_number_integer()) return json(std::stoll(value));
        if (current.is_number_float()) return json(std::stod(value));
        if (current.is_array()) return json::parse(value);
    } catch (const std::exception&) {
        throw std::invalid_argument("override " + key + "=" + value +
                                    " does not type-check against the config schema");
    }
    throw std::invalid_argument("override " + key + ": unsupported field type");
}

}  // namespace detail

// Applies "path=value" overrides. Paths may be dotted ("model.k") or bare
// ("k"), in which case the key is resolved against the model and train
// sections; unknown or ambiguous keys are rejected.
inline void apply_overrides(json& config, const std::vector<std::string>& overrides) {
    for (const std::string& ov : overrides) {
        size_t eq = ov.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("override \"" + ov + "\" is not of the form key=value");
        std::string path = ov.substr(0, eq);
        std::string value = ov.substr(eq + 1);

        json* target = &config;
        std::string key = path;
        size_t dot = path.find('.');
        if (dot != std::string::npos) {
            std::string section = path.substr(0, dot);
            key = path.substr(dot + 1);
            if (!config.contains(section))
                throw std::invalid_argument("override section \"" + section + "\" not in config");
            target = &config.at(section);
        } else {
            int hits = 0;
            for (const char* section : {"model", "train"}) {
                if (config.contains(section) && config.at(section).contains(key)) {
                    target = &config.at(section);
                    ++hits;
                }
            }
            if (hits == 0 && config.contains(key)) {
                target = &config;
                hits = 1;
            }
            if (hits == 0)
                throw std::invalid_argument("override key \"" + key + "\" not in config schema");
            if (hits > 1)
                throw std::invalid_argument("override key \"" + key +
                                            "\" is ambiguous; qualify with a section");
        }
        if (!target->contains(key))
            throw std::invalid_argument("override key \"" + key + "\" not in config schema");
        (*target)[key] = detail::coerce_override_value(target->at(key), value, key);
    }
}

// ---------------------------------------------------------------------------
// history / metrics / trace serialization
// ---------------------------------------------------------------------------

inline json history_to_json(const TrainHistory& hist, const RunConfig& resolved) {
    json epochs = json::array();
    for (size_t i = 0; i < hist.epochs.size(); ++i) {
        const EpochStats& e = hist.epochs[i];
        epochs.push_back(json{{"epoch", i},
                              {"train_loss", e.train_loss},
                              {"val_metric", e.val_metric},
                              {"lr", e.lr},
                              {"wall_seconds", e.wall_seconds}});
    }
    return json{{"config", resolved.to_json()},
                {"epochs", epochs},
                {"best_epoch", hist.best_epoch},
                {"best_val_metric", hist.best_val_metric}};
}

inline json metrics_to_json(const Metrics& m) {
    json j{{"task", task_name(m.task)}, {"count", m.count}};
    if (m.task == TaskKind::regression) {
        j["mae"] = m.mae;
    } else {
        j["accuracy"] = m.accuracy;
        j["per_class_accuracy"] = m.per_class_accuracy;
    }
    return j;
}

// One record per (layer, head) with the row-stochastic matrix and node
// labels; the CLS row is called out when present.
inline json trace_to_json(const AttentionTrace& trace) {
    json labels = json::array();
    for (size_t v = 0; v < trace.num_nodes; ++v) {
        if (trace.has_cls && v == trace.cls_index)
            labels.push_back("CLS");
        else
            labels.push_back(std::to_string(v));
    }
    json records = json::array();
    const size_t n = trace.num_nodes;
    for (size_t l = 0; l < trace.weights.size(); ++l) {
        for (size_t h = 0; h < trace.weights[l].size(); ++h) {
            const auto& flat = trace.weights[l][h];
            json matrix = json::array();
            for (size_t i = 0; i < n; ++i) {
                json row = json::array();
                for (size_t j = 0; j < n; ++j) row.push_back(flat[i * n + j]);
                matrix.push_back(std::move(row));
            }
            json rec{{"layer", l}, {"head", h}, {"labels", labels}, {"weights", matrix}};
            if (trace.has_cls) rec["cls_row"] = trace.cls_index;
            records.push_back(std::move(rec));
        }
    }
    json out{{"num_nodes", trace.num_nodes}, {"records", records}};
    out["cls_index"] = trace.has_cls ? json(trace.cls_index) : json(nullptr);
    return out;
}

}  // namespace sat
