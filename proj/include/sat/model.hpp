#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "sat/extractors.hpp"
#include "sat/graph.hpp"
#include "sat/posenc.hpp"
#include "sat/rng.hpp"
#include "sat/tensor.hpp"

namespace sat {

enum class Readout { mean, sum, cls, none };
enum class TaskKind { regression, graph_class, node_class };

inline const char* readout_name(Readout r) {
    switch (r) {
        case Readout::mean: return "mean";
        case Readout::sum: return "sum";
        case Readout::cls: return "cls";
        case Readout::none: return "none";
    }
    return "?";
}

inline const char* task_name(TaskKind t) {
    switch (t) {
        case TaskKind::regression: return "regression";
        case TaskKind::graph_class: return "graph-class";
        case TaskKind::node_class: return "node-class";
    }
    return "?";
}

struct SatConfig {
    size_t num_layers = 2;
    size_t hidden_dim = 16;
    size_t num_heads = 4;
    size_t k = 1;
    ExtractorStrategy extractor = ExtractorStrategy::subtree;
    GnnKind gnn = GnnKind::gin;
    bool concat_original = true;  // subgraph extractor only
    PeKind pe = PeKind::none;
    size_t pe_dim = 0;
    Readout readout = Readout::mean;
    double dropout = 0.0;
    TaskKind task = TaskKind::regression;
    size_t output_dim = 1;

    size_t head_dim() const { return hidden_dim / num_heads; }
    size_t ffn_dim() const { return 2 * hidden_dim; }

    // Width of the extractor output feeding the query/key projections.
    size_t phi_dim() const {
        if (extractor == ExtractorStrategy::subgraph && concat_original) return 2 * hidden_dim;
        return hidden_dim;
    }

    void validate() const {
        if (num_heads == 0 || hidden_dim % num_heads != 0)
            throw std::invalid_argument("SatConfig: hidden_dim must be divisible by num_heads");
        if (task == TaskKind::node_class && readout != Readout::none)
            throw std::invalid_argument("SatConfig: node-level tasks require readout=none");
        if (task != TaskKind::node_class && readout == Readout::none)
            throw std::invalid_argument("SatConfig: graph-level tasks require a readout");
        if (extractor == ExtractorStrategy::subgraph && k == 0)
            throw std::invalid_argument("SatConfig: subgraph extractor requires k >= 1");
        if (pe != PeKind::none && pe_dim == 0)
            throw std::invalid_argument("SatConfig: positional encoding needs pe_dim >= 1");
        if (output_dim == 0) throw std::invalid_argument("SatConfig: output_dim must be >= 1");
    }
};

// Per-layer, per-head attention weights retained for inspection. Rows are
// stochastic; includes the CLS row when that readout is active.
struct AttentionTrace {
    size_t num_nodes = 0;   // includes CLS when present
    bool has_cls = false;
    size_t cls_index = 0;
    // weights[layer][head] is an n x n row-major matrix
    std::vector<std::vector<std::vector<double>>> weights;
};

namespace detail {

inline Tensor new_weight(std::vector<size_t> shape, size_t fan_in, Rng& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    size_t n = shape_size(shape);
    std::vector<double> data(n);
    for (double& v : data) v = rng.uniform(-bound, bound);
    return Tensor(std::move(shape), std::move(data), true);
}

}  // namespace detail

// Creates the named trainable tensors for the given architecture.
// `in_dim` is the node-feature width after any encoding is attached;
// `edge_dim` 0 means no edge features.
inline ModelParams init_params(const SatConfig& cfg, size_t in_dim, size_t edge_dim,
                               uint64_t seed) {
    cfg.validate();
    Rng rng(mix64(seed, 0x5a7c0de));
    ModelParams params;
    const size_t h = cfg.hidden_dim;

    auto weight = [&](const std::string& name, size_t r, size_t c) {
        params.emplace(name, detail::new_weight({r, c}, r, rng));
    };
    auto bias = [&](const std::string& name, size_t n) {
        params.emplace(name, Tensor::zeros({n}, true));
    };

    weight("input.w", in_dim, h);
    bias("input.b", h);
    if (cfg.readout == Readout::cls)
        params.emplace("cls.embed", detail::new_weight({1, h}, h, rng));

    for (size_t l = 0; l < cfg.num_layers; ++l) {
        std::string lp = "layer" + std::to_string(l) + ".";
        for (size_t i = 0; i < cfg.k; ++i) {
            std::string gp = lp + "gnn" + std::to_string(i) + ".";
            if (cfg.gnn == GnnKind::gcn) {
                weight(gp + "w", h, h);
                bias(gp + "b", h);
            } else {
                params.emplace(gp + "eps", Tensor::zeros({1}, true));
                weight(gp + "w1", h, h);
                bias(gp + "b1", h);
                weight(gp + "w2", h, h);
                bias(gp + "b2", h);
                if (edge_dim > 0) weight(gp + "edge_w", edge_dim, h);
            }
        }
        const size_t dq = cfg.head_dim();
        const size_t dphi = cfg.phi_dim();
        for (size_t hd = 0; hd < cfg.num_heads; ++hd) {
            std::string hp = lp + "head" + std::to_string(hd) + ".";
            weight(hp + "wq", dphi, dq);
            bias(hp + "bq", dq);
            weight(hp + "wk", dphi, dq);
            bias(hp + "bk", dq);
            weight(hp + "wv", h, dq);
        }
        weight(lp + "wo", h, h);
        bias(lp + "bo", h);
        weight(lp + "ffn.w1", h, cfg.ffn_dim());
        bias(lp + "ffn.b1", cfg.ffn_dim());
        weight(lp + "ffn.w2", cfg.ffn_dim(), h);
        bias(lp + "ffn.b2", h);
        params.emplace(lp + "norm1.g", Tensor::full({h}, 1.0, true));
        bias(lp + "norm1.b", h);
        params.emplace(lp + "norm2.g", Tensor::full({h}, 1.0, true));
        bias(lp + "norm2.b", h);
    }
    weight("head.w", h, cfg.output_dim);
    bias("head.b", cfg.output_dim);
    return params;
}

// View over one layer's tensors inside a ModelParams map.
struct SatLayerParams {
    struct Head {
        Tensor wq, bq, wk, bk, wv;
    };
    std::vector<Head> heads;
    Tensor wo, bo;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    Tensor norm1_g, norm1_b, norm2_g, norm2_b;
    GnnStack extractor;
};

inline SatLayerParams bind_layer_params(const ModelParams& params, const SatConfig& cfg,
                                        size_t layer, bool edge_feats) {
    auto get = [&](const std::string& name) -> Tensor {
        auto it = params.find(name);
        if (it == params.end())
            throw std::invalid_argument("model: missing parameter \"" + name + "\"");
        return it->second;
    };
    std::string lp = "layer" + std::to_string(layer) + ".";
    SatLayerParams out;
    out.extractor.kind = cfg.gnn;
    for (size_t i = 0; i < cfg.k; ++i) {
        std::string gp = lp + "gnn" + std::to_string(i) + ".";
        if (cfg.gnn == GnnKind::gcn) {
            out.extractor.gcn_layers.push_back({get(gp + "w"), get(gp + "b")});
        } else {
            GinLayerParams gin;
            gin.eps = get(gp + "eps");
            gin.w1 = get(gp + "w1");
            gin.b1 = get(gp + "b1");
            gin.w2 = get(gp + "w2");
            gin.b2 = get(gp + "b2");
            if (edge_feats) gin.edge_w = get(gp + "edge_w");
            out.extractor.gin_layers.push_back(std::move(gin));
        }
    }
    for (size_t hd = 0; hd < cfg.num_heads; ++hd) {
        std::string hp = lp + "head" + std::to_string(hd) + ".";
        out.heads.push_back({get(hp + "wq"), get(hp + "bq"), get(hp + "wk"), get(hp + "bk"),
                             get(hp + "wv")});
    }
    out.wo = get(lp + "wo");
    out.bo = get(lp + "bo");
    out.ffn_w1 = get(lp + "ffn.w1");
    out.ffn_b1 = get(lp + "ffn.b1");
    out.ffn_w2 = get(lp + "ffn.w2");
    out.ffn_b2 = get(lp + "ffn.b2");
    out.norm1_g = get(lp + "norm1.g");
    out.norm1_b = get(lp + "norm1.b");
    out.norm2_g = get(lp + "norm2.g");
    out.norm2_b = get(lp + "norm2.b");
    return out;
}

namespace detail {

inline Tensor extractor_output(const Graph& g, const Tensor& x, const GnnStack& stack,
                               const SatConfig& cfg, const SubgraphBatch* batch) {
    if (cfg.extractor == ExtractorStrategy::subtree) return extract_subtree(g, x, stack, cfg.k);
    return extract_subgraph_with_batch(*batch, x, stack, cfg.concat_original);
}

}  // namespace detail

// Structure-aware multi-head attention. Queries and keys are projections of
// the extractor output; values are projections of the current node features.
// Attention is dense over all nodes regardless of edges; edge attributes only
// influence the extractor. Returns the projected output and appends one
// weight matrix per head to `trace_slice`.
inline Tensor sa_attention(const Graph& g, const Tensor& x, const SatLayerParams& lp,
                           const SatConfig& cfg, std::vector<std::vector<double>>* trace_slice,
                           const SubgraphBatch* batch = nullptr) {
    if (x.rows() != g.num_nodes)
        throw std::invalid_argument("sa_attention: feature rows != num_nodes");
    SubgraphBatch local_batch;
    if (cfg.extractor == ExtractorStrategy::subgraph && batch == nullptr) {
        local_batch = build_subgraph_batch(g, cfg.k);
        batch = &local_batch;
    }
    Tensor h_phi = detail::extractor_output(g, x, lp.extractor, cfg, batch);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));

    std::vector<Tensor> head_outputs;
    head_outputs.reserve(lp.heads.size());
    for (const auto& head : lp.heads) {
        Tensor q = add(matmul(h_phi, head.wq), head.bq);
        Tensor k = add(matmul(h_phi, head.wk), head.bk);
        Tensor v = matmul(x, head.wv);
        Tensor weights = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_d));
        if (trace_slice) trace_slice->push_back(weights.values());
        head_outputs.push_back(matmul(weights, v));
    }
    Tensor cat = head_outputs.size() == 1 ? head_outputs[0] : concat(head_outputs, 1);
    return add(matmul(cat, lp.wo), lp.bo);
}

// One Transformer layer: degree-scaled attention skip, then FFN skip, each
// followed by layer normalization.
inline Tensor sat_layer(const Graph& g, const Tensor& x, const SatLayerParams& lp,
                        const SatConfig& cfg, bool train, uint64_t drop_seed,
                        std::vector<std::vector<double>>* trace_slice,
                        const SubgraphBatch* batch = nullptr) {
    Tensor attn = sa_attention(g, x, lp, cfg, trace_slice, batch);
    attn = dropout(attn, cfg.dropout, train, mix64(drop_seed, 1));
    std::vector<double> deg_scale(g.num_nodes);
    for (size_t v = 0; v < g.num_nodes; ++v)
        deg_scale[v] = 1.0 / std::sqrt(static_cast<double>(std::max<size_t>(g.degrees[v], 1)));
    Tensor x1 = layer_norm(add(x, row_scale(attn, deg_scale)), lp.norm1_g, lp.norm1_b);
    Tensor ff = add(matmul(relu(add(matmul(x1, lp.ffn_w1), lp.ffn_b1)), lp.ffn_w2), lp.ffn_b2);
    ff = dropout(ff, cfg.dropout, train, mix64(drop_seed, 2));
    return layer_norm(add(x1, ff), lp.norm2_g, lp.norm2_b);
}

// Pools node representations into one row: mean or sum over the non-CLS
// rows, or the CLS row itself.
inline Tensor readout(const Tensor& x, Readout method, size_t cls_index = SIZE_MAX) {
    if (method == Readout::cls) {
        if (cls_index == SIZE_MAX || cls_index >= x.rows())
            throw std::invalid_argument("readout: cls readout without a CLS row");
        return row_gather(x, {cls_index});
    }
    if (method == Readout::none)
        throw std::invalid_argument("readout: method none has nothing to pool");
    std::vector<size_t> rows;
    for (size_t i = 0; i < x.rows(); ++i)
        if (i != cls_index) rows.push_back(i);
    if (rows.empty()) throw std::invalid_argument("readout: no rows to pool");
    Tensor pooled = segment_sum(row_gather(x, rows), std::vector<size_t>(rows.size(), 0), 1);
    if (method == Readout::mean)
        pooled = scale(pooled, 1.0 / static_cast<double>(rows.size()));
    return pooled;
}

struct ForwardResult {
    Tensor prediction;        // [1 x output_dim] graph tasks, [n x output_dim] node tasks
    Tensor node_states;       // final per-node representations (includes CLS row if present)
    AttentionTrace trace;
};

// Full model pass. Node features must already carry the configured encoding
// (attach_encoding); an input projection maps them to hidden width, a CLS row
// is appended for that readout, then the layer stack and the task head run.
inline ForwardResult forward(const Graph& g, const SatConfig& cfg, const ModelParams& params,
                             bool train = false, uint64_t dropout_seed = 0) {
    cfg.validate();
    auto get = [&](const std::string& name) -> const Tensor& {
        auto it = params.find(name);
        if (it == params.end())
            throw std::invalid_argument("forward: missing parameter \"" + name + "\"");
        return it->second;
    };
    const Tensor& in_w = get("input.w");
    if (g.feat_dim != in_w.rows())
        throw std::invalid_argument(
            "forward: graph feature width " + std::to_string(g.feat_dim) +
            " != input projection width " + std::to_string(in_w.rows()) +
            " (is the configured positional encoding attached?)");

    Tensor x0(std::vector<size_t>{g.num_nodes, g.feat_dim}, g.node_feats);
    Tensor h = add(matmul(x0, in_w), get("input.b"));

    const bool use_cls = cfg.readout == Readout::cls;
    Graph augmented;
    const Graph* gp = &g;
    size_t cls_index = SIZE_MAX;
    if (use_cls) {
        augmented = g;
        augmented.num_nodes += 1;
        augmented.adj.emplace_back();
        augmented.degrees.push_back(0);
        // feature rows of `augmented` are never read below; node state is h
        augmented.node_feats.resize(augmented.num_nodes * augmented.feat_dim, 0.0);
        gp = &augmented;
        cls_index = g.num_nodes;
        h = concat({h, get("cls.embed")}, 0);
    }

    SubgraphBatch batch;
    const SubgraphBatch* batch_ptr = nullptr;
    if (cfg.extractor == ExtractorStrategy::subgraph) {
        batch = build_subgraph_batch(*gp, cfg.k);
        batch_ptr = &batch;
    }

    ForwardResult out;
    out.trace.num_nodes = gp->num_nodes;
    out.trace.has_cls = use_cls;
    out.trace.cls_index = cls_index;
    const bool edge_feats = gp->has_edge_feats();
    for (size_t l = 0; l < cfg.num_layers; ++l) {
        SatLayerParams lp = bind_layer_params(params, cfg, l, edge_feats);
        out.trace.weights.emplace_back();
        h = sat_layer(*gp, h, lp, cfg, train, mix64(dropout_seed, l + 1),
                      &out.trace.weights.back(), batch_ptr);
    }
    out.node_states = h;

    if (cfg.task == TaskKind::node_class) {
        out.prediction = add(matmul(h, get("head.w")), get("head.b"));
    } else {
        Tensor pooled = readout(h, cfg.readout, cls_index);
        out.prediction = add(matmul(pooled, get("head.w")), get("head.b"));
    }
    return out;
}

}  // namespace sat
