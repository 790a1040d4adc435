#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <zlib.h>

#include <nlohmann/json.hpp>

#include "sat/graph.hpp"
#include "sat/model.hpp"
#include "sat/rng.hpp"

namespace sat {

// scalar target (regression), class index (graph classification) or
// per-node class vector (node classification)
using Target = std::variant<double, int, std::vector<int>>;

struct GraphSample {
    Graph graph;
    Target target;
};

struct Dataset {
    TaskKind task = TaskKind::regression;
    std::vector<GraphSample> samples;
    size_t feat_dim = 0;
    size_t edge_feat_dim = 0;
    size_t num_classes = 0;  // classification tasks
    std::vector<size_t> train_idx, val_idx, test_idx;

    size_t size() const { return samples.size(); }
    bool has_splits() const { return !train_idx.empty() || !val_idx.empty() || !test_idx.empty(); }
};

// ---------------------------------------------------------------------------
// synthetic generators
// ---------------------------------------------------------------------------

inline Graph cycle_graph(size_t n, const std::vector<double>& feat) {
    std::vector<std::pair<size_t, size_t>> edges;
    for (size_t i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
    return build_graph(n, edges, std::vector<std::vector<double>>(n, feat));
}

inline Graph two_triangles_graph(const std::vector<double>& feat) {
    std::vector<std::pair<size_t, size_t>> edges = {{0, 1}, {1, 2}, {0, 2},
                                                    {3, 4}, {4, 5}, {3, 5}};
    return build_graph(6, edges, std::vector<std::vector<double>>(6, feat));
}

// Balanced binary task {C6} vs {2xC3}: constant node features, node order
// randomly permuted per sample. The two classes are 1-WL indistinguishable.
inline Dataset gen_cycle_vs_triangles(size_t n_graphs, uint64_t seed) {
    if (n_graphs % 2 != 0)
        throw std::invalid_argument("gen_cycle_vs_triangles: n_graphs must be even");
    Rng rng(mix64(seed, 0xc6c3));
    Dataset ds;
    ds.task = TaskKind::graph_class;
    ds.feat_dim = 1;
    ds.num_classes = 2;
    for (size_t i = 0; i < n_graphs; ++i) {
        int cls = static_cast<int>(i % 2);
        Graph g = cls == 0 ? cycle_graph(6, {1.0}) : two_triangles_graph({1.0});
        g = permute_graph(g, rng.permutation(6));
        ds.samples.push_back({std::move(g), cls});
    }
    return ds;
}

inline size_t count_triangles(const Graph& g) {
    size_t count = 0;
    for (size_t u = 0; u < g.num_nodes; ++u)
        for (size_t v : g.adj[u]) {
            if (v <= u) continue;
            for (size_t w : g.adj[v]) {
                if (w <= v) continue;
                if (std::binary_search(g.adj[u].begin(), g.adj[u].end(), w)) ++count;
            }
        }
    return count;
}

// Erdos-Renyi graphs with the exact triangle count as regression target and
// constant node features: the label is purely structure-determined.
inline Dataset gen_triangle_count_regression(size_t n_graphs, size_t n_nodes, double edge_prob,
                                             uint64_t seed) {
    if (n_nodes > 30)
        throw std::invalid_argument("gen_triangle_count_regression: n_nodes must be <= 30");
    Rng rng(mix64(seed, 0x7714));
    Dataset ds;
    ds.task = TaskKind::regression;
    ds.feat_dim = 1;
    for (size_t i = 0; i < n_graphs; ++i) {
        std::vector<std::pair<size_t, size_t>> edges;
        for (size_t u = 0; u < n_nodes; ++u)
            for (size_t v = u + 1; v < n_nodes; ++v)
                if (rng.bernoulli(edge_prob)) edges.emplace_back(u, v);
        Graph g = build_graph(n_nodes, edges,
                              std::vector<std::vector<double>>(n_nodes, {1.0}));
        double y = static_cast<double>(count_triangles(g));
        ds.samples.push_back({std::move(g), y});
    }
    return ds;
}

// Stochastic-block-model graphs with per-node block labels. One randomly
// chosen seed node per block carries a noisy one-hot block indicator; all
// nodes share a constant last feature.
inline Dataset gen_sbm_node_classification(size_t n_graphs, const std::vector<size_t>& blocks,
                                           double p_in, double p_out, uint64_t seed) {
    if (p_in <= p_out)
        throw std::invalid_argument("gen_sbm_node_classification: need p_in > p_out");
    for (size_t b : blocks)
        if (b == 0) throw std::invalid_argument("gen_sbm_node_classification: empty block");
    if (blocks.empty())
        throw std::invalid_argument("gen_sbm_node_classification: no blocks given");
    Rng rng(mix64(seed, 0x5b3a));
    const size_t num_blocks = blocks.size();
    const size_t n = std::accumulate(blocks.begin(), blocks.end(), size_t{0});
    Dataset ds;
    ds.task = TaskKind::node_class;
    ds.feat_dim = num_blocks + 1;
    ds.num_classes = num_blocks;
    for (size_t gi = 0; gi < n_graphs; ++gi) {
        std::vector<int> label(n);
        {
            size_t v = 0;
            for (size_t b = 0; b < num_blocks; ++b)
                for (size_t j = 0; j < blocks[b]; ++j) label[v++] = static_cast<int>(b);
        }
        std::vector<std::pair<size_t, size_t>> edges;
        for (size_t u = 0; u < n; ++u)
            for (size_t v = u + 1; v < n; ++v)
                if (rng.bernoulli(label[u] == label[v] ? p_in : p_out)) edges.emplace_back(u, v);
        std::vector<std::vector<double>> feats(n, std::vector<double>(num_blocks + 1, 0.0));
        for (size_t v = 0; v < n; ++v) feats[v][num_blocks] = 1.0;
        size_t offset = 0;
        for (size_t b = 0; b < num_blocks; ++b) {
            size_t seed_node = offset + rng.below(blocks[b]);
            feats[seed_node][b] = 1.0 + 0.05 * rng.normal();
            offset += blocks[b];
        }
        // shuffle node identities so block membership is not positional
        std::vector<size_t> pi = rng.permutation(n);
        Graph g = permute_graph(build_graph(n, edges, feats), pi);
        std::vector<int> plabel(n);
        for (size_t v = 0; v < n; ++v) plabel[pi[v]] = label[v];
        ds.samples.push_back({std::move(g), std::move(plabel)});
    }
    return ds;
}

// ---------------------------------------------------------------------------
// JSONL corpus format
// ---------------------------------------------------------------------------

namespace detail {

// Shortest decimal form that still round-trips doubles exactly; integers get
// a trailing ".0" so a regression target cannot be misread as a class index.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    std::string s = buf;
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline std::string read_text_file(const std::string& path) {
    if (ends_with(path, ".gz")) {
        gzFile f = gzopen(path.c_str(), "rb");
        if (!f) throw std::runtime_error("cannot open " + path);
        std::string out;
        char buf[1 << 16];
        int got;
        while ((got = gzread(f, buf, sizeof(buf))) > 0) out.append(buf, static_cast<size_t>(got));
        bool bad = got < 0;
        gzclose(f);
        if (bad) throw std::runtime_error("gzip read error in " + path);
        return out;
    }
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
    if (ends_with(path, ".gz")) {
        gzFile f = gzopen(path.c_str(), "wb");
        if (!f) throw std::runtime_error("cannot open " + path + " for writing");
        if (gzwrite(f, text.data(), static_cast<unsigned>(text.size())) !=
            static_cast<int>(text.size())) {
            gzclose(f);
            throw std::runtime_error("gzip write error in " + path);
        }
        gzclose(f);
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << text;
    if (!f) throw std::runtime_error("write error in " + path);
}

}  // namespace detail

inline std::string sample_to_jsonl_line(const GraphSample& s) {
    const Graph& g = s.graph;
    std::string line = "{\"num_nodes\": " + std::to_string(g.num_nodes) + ", \"edges\": [";
    for (size_t e = 0; e < g.edges.size(); ++e) {
        if (e) line += ", ";
        line += "[" + std::to_string(g.edges[e].first) + ", " +
                std::to_string(g.edges[e].second) + "]";
    }
    line += "], \"node_feat\": [";
    for (size_t v = 0; v < g.num_nodes; ++v) {
        if (v) line += ", ";
        line += "[";
        for (size_t j = 0; j < g.feat_dim; ++j) {
            if (j) line += ", ";
            line += detail::fmt_double(g.node_feats[v * g.feat_dim + j]);
        }
        line += "]";
    }
    line += "]";
    if (g.has_edge_feats()) {
        line += ", \"edge_feat\": [";
        for (size_t e = 0; e < g.edges.size(); ++e) {
            if (e) line += ", ";
            line += "[";
            for (size_t j = 0; j < g.edge_feat_dim; ++j) {
                if (j) line += ", ";
                line += detail::fmt_double(g.edge_feats[e * g.edge_feat_dim + j]);
            }
            line += "]";
        }
        line += "]";
    }
    line += ", \"y\": ";
    if (std::holds_alternative<double>(s.target)) {
        line += detail::fmt_double(std::get<double>(s.target));
    } else if (std::holds_alternative<int>(s.target)) {
        line += std::to_string(std::get<int>(s.target));
    } else {
        const auto& ys = std::get<std::vector<int>>(s.target);
        line += "[";
        for (size_t i = 0; i < ys.size(); ++i) {
            if (i) line += ", ";
            line += std::to_string(ys[i]);
        }
        line += "]";
    }
    line += "}";
    return line;
}

// One JSON object per line:
//   {"num_nodes": n, "edges": [[u,v],...], "node_feat": [[...],...],
//    "edge_feat": [[...],...] (optional), "y": scalar | int | [int,...]}
// A ".gz" suffix selects the gzip-compressed variant.
inline void save_jsonl(const Dataset& ds, const std::string& path) {
    std::string text;
    for (const GraphSample& s : ds.samples) {
        text += sample_to_jsonl_line(s);
        text += "\n";
    }
    detail::write_text_file(path, text);
}

inline Dataset load_jsonl(const std::string& path) {
    std::string text = detail::read_text_file(path);
    Dataset ds;
    bool first = true;
    size_t line_no = 0;
    size_t pos = 0;
    int max_class = -1;
    while (pos < text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

        auto fail = [&](const std::string& what) -> std::runtime_error {
            return std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what);
        };
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw fail(std::string("invalid JSON: ") + e.what());
        }
        for (const char* key : {"num_nodes", "edges", "node_feat", "y"})
            if (!j.contains(key)) throw fail(std::string("missing \"") + key + "\"");

        try {
            size_t n = j.at("num_nodes").get<size_t>();
            std::vector<std::pair<size_t, size_t>> edges;
            for (const auto& e : j.at("edges"))
                edges.emplace_back(e.at(0).get<size_t>(), e.at(1).get<size_t>());
            auto node_feat = j.at("node_feat").get<std::vector<std::vector<double>>>();
            std::vector<std::vector<double>> edge_feat;
            if (j.contains("edge_feat"))
                edge_feat = j.at("edge_feat").get<std::vector<std::vector<double>>>();

            GraphSample s;
            s.graph = build_graph(n, edges, node_feat, edge_feat);

            const auto& y = j.at("y");
            TaskKind task;
            if (y.is_array()) {
                task = TaskKind::node_class;
                auto labels = y.get<std::vector<int>>();
                if (labels.size() != n) throw fail("per-node label count != num_nodes");
                for (int c : labels) max_class = std::max(max_class, c);
                s.target = std::move(labels);
            } else if (y.is_number_integer()) {
                task = TaskKind::graph_class;
                int c = y.get<int>();
                max_class = std::max(max_class, c);
                s.target = c;
            } else if (y.is_number_float()) {
                task = TaskKind::regression;
                s.target = y.get<double>();
            } else {
                throw fail("\"y\" must be a number or an integer array");
            }

            if (first) {
                ds.task = task;
                ds.feat_dim = s.graph.feat_dim;
                first = false;
            } else {
                if (task != ds.task) throw fail("inconsistent target kind across lines");
                if (s.graph.feat_dim != ds.feat_dim)
                    throw fail("inconsistent node feature width");
            }
            // edgeless graphs carry no width marker; enforce consistency only
            // across lines that do have edges
            if (s.graph.num_edges() > 0) {
                if (ds.edge_feat_dim == 0)
                    ds.edge_feat_dim = s.graph.edge_feat_dim;
                else if (s.graph.edge_feat_dim != ds.edge_feat_dim &&
                         s.graph.edge_feat_dim != 0)
                    throw fail("inconsistent edge feature width");
                else if (s.graph.edge_feat_dim == 0 && ds.edge_feat_dim != 0)
                    throw fail("inconsistent edge feature width");
            }
            ds.samples.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw fail(std::string("schema violation: ") + e.what());
        } catch (const std::invalid_argument& e) {
            throw fail(std::string("invalid graph: ") + e.what());
        }
    }
    if (ds.task != TaskKind::regression) ds.num_classes = static_cast<size_t>(max_class + 1);
    return ds;
}

// ---------------------------------------------------------------------------
// splits
// ---------------------------------------------------------------------------

// Seeded, optionally class-stratified train/val/test split. Fractions must
// sum to 1; sizes are assigned by rounding down with the remainder going to
// train.
inline Dataset split(Dataset ds, const std::vector<double>& fractions, uint64_t seed,
                     bool stratify = false) {
    if (fractions.size() != 3)
        throw std::invalid_argument("split: need exactly three fractions");
    double total = fractions[0] + fractions[1] + fractions[2];
    if (std::fabs(total - 1.0) > 1e-9)
        throw std::invalid_argument("split: fractions must sum to 1");
    if (stratify && ds.task == TaskKind::regression)
        throw std::invalid_argument("split: cannot stratify a regression dataset");

    ds.train_idx.clear();
    ds.val_idx.clear();
    ds.test_idx.clear();
    Rng rng(mix64(seed, 0x59117));

    auto assign = [&](std::vector<size_t>& group) {
        rng.shuffle(group);
        size_t n = group.size();
        size_t n_val = static_cast<size_t>(std::floor(fractions[1] * static_cast<double>(n)));
        size_t n_test = static_cast<size_t>(std::floor(fractions[2] * static_cast<double>(n)));
        size_t n_train = n - n_val - n_test;
        for (size_t i = 0; i < n; ++i) {
            if (i < n_train)
                ds.train_idx.push_back(group[i]);
            else if (i < n_train + n_val)
                ds.val_idx.push_back(group[i]);
            else
                ds.test_idx.push_back(group[i]);
        }
    };

    if (stratify) {
        std::map<int, std::vector<size_t>> by_class;
        for (size_t i = 0; i < ds.samples.size(); ++i) {
            int c = std::holds_alternative<int>(ds.samples[i].target)
                        ? std::get<int>(ds.samples[i].target)
                        : 0;
            by_class[c].push_back(i);
        }
        for (auto& [c, group] : by_class) assign(group);
    } else {
        std::vector<size_t> all(ds.samples.size());
        std::iota(all.begin(), all.end(), 0);
        assign(all);
    }
    std::sort(ds.train_idx.begin(), ds.train_idx.end());
    std::sort(ds.val_idx.begin(), ds.val_idx.end());
    std::sort(ds.test_idx.begin(), ds.test_idx.end());
    return ds;
}

// Attaches the configured absolute encoding to every sample (pure; the
// returned dataset is what the model consumes).
inline Dataset with_encoding(Dataset ds, PeKind kind, size_t dim) {
    if (kind == PeKind::none) return ds;
    for (GraphSample& s : ds.samples)
        s.graph = attach_encoding(s.graph, compute_encoding(s.graph, kind, dim));
    ds.feat_dim += dim;
    return ds;
}

}  // namespace sat
