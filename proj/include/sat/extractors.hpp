#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "sat/graph.hpp"
#include "sat/tensor.hpp"

namespace sat {

enum class GnnKind { gcn, gin };
enum class ExtractorStrategy { subtree, subgraph };

inline const char* gnn_kind_name(GnnKind k) { return k == GnnKind::gcn ? "gcn" : "gin"; }
inline const char* strategy_name(ExtractorStrategy s) {
    return s == ExtractorStrategy::subtree ? "subtree" : "subgraph";
}

struct ExtractorConfig {
    ExtractorStrategy strategy = ExtractorStrategy::subtree;
    size_t k = 1;  // k = 0 only as the plain-Transformer degenerate case (subtree)
    bool concat_original = true;  // subgraph only
};

struct GcnLayerParams {
    Tensor w;  // d_in x d_out
    Tensor b;  // d_out
};

struct GinLayerParams {
    Tensor eps;     // 1 (scalar, trainable)
    Tensor w1, b1;  // MLP: d_in x d_hidden, d_hidden
    Tensor w2, b2;  //      d_hidden x d_out, d_out
    Tensor edge_w;  // d_edge x d_in; undefined when the graph has no edge features
};

// k-layer message passing stack used as the structure extractor.
struct GnnStack {
    GnnKind kind = GnnKind::gin;
    std::vector<GcnLayerParams> gcn_layers;
    std::vector<GinLayerParams> gin_layers;

    size_t num_layers() const {
        return kind == GnnKind::gcn ? gcn_layers.size() : gin_layers.size();
    }
};

namespace detail {

// Directed message lists for one graph: dst[i] aggregates from src[i].
// edge_row maps each message to its row in the parent edge-feature matrix
// (SIZE_MAX for GCN self-loops).
struct MessagePlan {
    std::vector<size_t> src, dst;
    std::vector<size_t> edge_row;
    std::vector<double> gcn_coeff;  // 1/sqrt(d^_dst * d^_src), self-loops included
    size_t num_nodes = 0;
};

inline MessagePlan gin_plan(const Graph& g) {
    MessagePlan p;
    p.num_nodes = g.num_nodes;
    p.src.reserve(2 * g.edges.size());
    for (size_t e = 0; e < g.edges.size(); ++e) {
        auto [u, v] = g.edges[e];
        p.src.push_back(v);
        p.dst.push_back(u);
        p.edge_row.push_back(e);
        p.src.push_back(u);
        p.dst.push_back(v);
        p.edge_row.push_back(e);
    }
    return p;
}

inline MessagePlan gcn_plan(const Graph& g) {
    MessagePlan p;
    p.num_nodes = g.num_nodes;
    std::vector<double> inv_sqrt(g.num_nodes);
    for (size_t v = 0; v < g.num_nodes; ++v)
        inv_sqrt[v] = 1.0 / std::sqrt(static_cast<double>(g.degrees[v] + 1));
    for (size_t v = 0; v < g.num_nodes; ++v) {
        p.src.push_back(v);
        p.dst.push_back(v);
        p.edge_row.push_back(SIZE_MAX);
        p.gcn_coeff.push_back(inv_sqrt[v] * inv_sqrt[v]);
    }
    for (size_t e = 0; e < g.edges.size(); ++e) {
        auto [u, v] = g.edges[e];
        double c = inv_sqrt[u] * inv_sqrt[v];
        p.src.push_back(v);
        p.dst.push_back(u);
        p.edge_row.push_back(e);
        p.gcn_coeff.push_back(c);
        p.src.push_back(u);
        p.dst.push_back(v);
        p.edge_row.push_back(e);
        p.gcn_coeff.push_back(c);
    }
    return p;
}

// Edge-feature rows aligned with the plan's messages, as a constant tensor.
inline Tensor plan_edge_feats(const MessagePlan& plan, const std::vector<double>& edge_feats,
                              size_t edge_feat_dim) {
    std::vector<double> rows(plan.src.size() * edge_feat_dim, 0.0);
    for (size_t i = 0; i < plan.src.size(); ++i) {
        if (plan.edge_row[i] == SIZE_MAX) continue;
        std::copy(edge_feats.begin() + plan.edge_row[i] * edge_feat_dim,
                  edge_feats.begin() + (plan.edge_row[i] + 1) * edge_feat_dim,
                  rows.begin() + i * edge_feat_dim);
    }
    return Tensor({plan.src.size(), edge_feat_dim}, std::move(rows));
}

inline Tensor gcn_layer_on_plan(const MessagePlan& plan, const Tensor& h,
                                const GcnLayerParams& p) {
    Tensor msgs = row_scale(row_gather(h, plan.src), plan.gcn_coeff);
    Tensor agg = segment_sum(msgs, plan.dst, plan.num_nodes);
    return relu(add(matmul(agg, p.w), p.b));
}

inline Tensor gin_layer_on_plan(const MessagePlan& plan, const Tensor& h,
                                const GinLayerParams& p, const Tensor& edge_feat_rows) {
    Tensor msgs = row_gather(h, plan.src);
    if (edge_feat_rows.defined())
        msgs = relu(add(msgs, matmul(edge_feat_rows, p.edge_w)));
    Tensor agg = segment_sum(msgs, plan.dst, plan.num_nodes);
    Tensor one_plus_eps = add(p.eps, Tensor::scalar(1.0));
    Tensor combined = add(mul_scalar(h, one_plus_eps), agg);
    Tensor hidden = relu(add(matmul(combined, p.w1), p.b1));
    return add(matmul(hidden, p.w2), p.b2);
}

inline void check_gin_edge_setup(const GinLayerParams& p, bool graph_has_edge_feats) {
    if (graph_has_edge_feats && !p.edge_w.defined())
        throw std::invalid_argument(
            "gin_layer: graph has edge features but no edge-embedding weights");
    if (!graph_has_edge_feats && p.edge_w.defined())
        throw std::invalid_argument(
            "gin_layer: edge-embedding weights given but graph has no edge features");
}

}  // namespace detail

// H' = ReLU(D^{-1/2} (A + I) D^{-1/2} H W + b). Edge features are ignored
// (this convolution cannot consume them).
inline Tensor gcn_layer(const Graph& g, const Tensor& h, const GcnLayerParams& p) {
    if (h.rows() != g.num_nodes)
        throw std::invalid_argument("gcn_layer: feature rows != num_nodes");
    return detail::gcn_layer_on_plan(detail::gcn_plan(g), h, p);
}

// h'_u = MLP((1 + eps) h_u + sum_{v in adj(u)} m(h_v, e_uv)) with message
// m(h, e) = ReLU(h + e W_e) when edge features are present, else m = h.
inline Tensor gin_layer(const Graph& g, const Tensor& h, const GinLayerParams& p) {
    if (h.rows() != g.num_nodes)
        throw std::invalid_argument("gin_layer: feature rows != num_nodes");
    detail::check_gin_edge_setup(p, g.has_edge_feats());
    detail::MessagePlan plan = detail::gin_plan(g);
    Tensor efeat;
    if (g.has_edge_feats()) efeat = detail::plan_edge_feats(plan, g.edge_feats, g.edge_feat_dim);
    return detail::gin_layer_on_plan(plan, h, p, efeat);
}

namespace detail {

inline Tensor run_stack_on_plans(const MessagePlan& gcn_p, const MessagePlan& gin_p,
                                 const Tensor& x, const GnnStack& stack,
                                 const Tensor& edge_feat_rows) {
    Tensor h = x;
    if (stack.kind == GnnKind::gcn) {
        for (const auto& layer : stack.gcn_layers) h = gcn_layer_on_plan(gcn_p, h, layer);
    } else {
        for (const auto& layer : stack.gin_layers) {
            check_gin_edge_setup(layer, edge_feat_rows.defined());
            h = gin_layer_on_plan(gin_p, h, layer, edge_feat_rows);
        }
    }
    return h;
}

}  // namespace detail

// Runs the k-layer stack on the whole graph and returns every node's output;
// node u's row summarizes the depth-k unfolding tree rooted at u. k = 0 is
// the identity (plain Transformer).
inline Tensor extract_subtree(const Graph& g, const Tensor& x, const GnnStack& stack, size_t k) {
    if (stack.num_layers() != k)
        throw std::invalid_argument("extract_subtree: stack has " +
                                    std::to_string(stack.num_layers()) + " layers, expected " +
                                    std::to_string(k));
    if (k == 0) return x;
    detail::MessagePlan gcn_p, gin_p;
    Tensor efeat;
    if (stack.kind == GnnKind::gcn) {
        gcn_p = detail::gcn_plan(g);
    } else {
        gin_p = detail::gin_plan(g);
        if (g.has_edge_feats()) efeat = detail::plan_edge_feats(gin_p, g.edge_feats, g.edge_feat_dim);
    }
    return detail::run_stack_on_plans(gcn_p, gin_p, x, stack, efeat);
}

// Disjoint union of the induced k-hop subgraphs of every node; built once per
// graph and reused across layers (the topology never changes).
struct SubgraphBatch {
    size_t k = 0;
    size_t num_centers = 0;
    std::vector<size_t> union_to_parent;  // union node -> parent node
    std::vector<size_t> union_segment;    // union node -> center index
    detail::MessagePlan gcn_plan;
    detail::MessagePlan gin_plan;
    std::vector<double> edge_feats;  // union edge features (gin messages)
    size_t edge_feat_dim = 0;
};

inline SubgraphBatch build_subgraph_batch(const Graph& g, size_t k) {
    if (k == 0) throw std::invalid_argument("build_subgraph_batch: k must be >= 1");
    SubgraphBatch batch;
    batch.k = k;
    batch.num_centers = g.num_nodes;
    batch.edge_feat_dim = g.edge_feat_dim;
    batch.gcn_plan.num_nodes = 0;
    batch.gin_plan.num_nodes = 0;

    std::vector<std::pair<size_t, size_t>> union_edges;  // local-in-union endpoints
    std::vector<size_t> union_edge_parent;               // parent edge row
    for (size_t center = 0; center < g.num_nodes; ++center) {
        NodeSet ball = k_hop_neighborhood(g, center, k);
        size_t base = batch.union_to_parent.size();
        std::vector<size_t> local(g.num_nodes, SIZE_MAX);
        for (size_t i = 0; i < ball.nodes.size(); ++i) {
            local[ball.nodes[i]] = base + i;
            batch.union_to_parent.push_back(ball.nodes[i]);
            batch.union_segment.push_back(center);
        }
        for (size_t e = 0; e < g.edges.size(); ++e) {
            size_t lu = local[g.edges[e].first], lv = local[g.edges[e].second];
            if (lu == SIZE_MAX || lv == SIZE_MAX) continue;
            union_edges.emplace_back(lu, lv);
            union_edge_parent.push_back(e);
        }
    }

    const size_t un = batch.union_to_parent.size();
    std::vector<size_t> degrees(un, 0);
    for (const auto& [u, v] : union_edges) {
        ++degrees[u];
        ++degrees[v];
    }

    auto& gin = batch.gin_plan;
    gin.num_nodes = un;
    for (size_t e = 0; e < union_edges.size(); ++e) {
        auto [u, v] = union_edges[e];
        gin.src.push_back(v);
        gin.dst.push_back(u);
        gin.edge_row.push_back(union_edge_parent[e]);
        gin.src.push_back(u);
        gin.dst.push_back(v);
        gin.edge_row.push_back(union_edge_parent[e]);
    }
    if (g.has_edge_feats()) {
        batch.edge_feats.assign(gin.src.size() * g.edge_feat_dim, 0.0);
        for (size_t i = 0; i < gin.src.size(); ++i)
            std::copy(g.edge_feats.begin() + gin.edge_row[i] * g.edge_feat_dim,
                      g.edge_feats.begin() + (gin.edge_row[i] + 1) * g.edge_feat_dim,
                      batch.edge_feats.begin() + i * g.edge_feat_dim);
    }

    auto& gcn = batch.gcn_plan;
    gcn.num_nodes = un;
    std::vector<double> inv_sqrt(un);
    for (size_t v = 0; v < un; ++v)
        inv_sqrt[v] = 1.0 / std::sqrt(static_cast<double>(degrees[v] + 1));
    for (size_t v = 0; v < un; ++v) {
        gcn.src.push_back(v);
        gcn.dst.push_back(v);
        gcn.edge_row.push_back(SIZE_MAX);
        gcn.gcn_coeff.push_back(inv_sqrt[v] * inv_sqrt[v]);
    }
    for (const auto& [u, v] : union_edges) {
        double c = inv_sqrt[u] * inv_sqrt[v];
        gcn.src.push_back(v);
        gcn.dst.push_back(u);
        gcn.edge_row.push_back(SIZE_MAX);
        gcn.gcn_coeff.push_back(c);
        gcn.src.push_back(u);
        gcn.dst.push_back(v);
        gcn.edge_row.push_back(SIZE_MAX);
        gcn.gcn_coeff.push_back(c);
    }
    return batch;
}

// Runs the stack inside each node's induced k-hop subgraph and sum-pools its
// node outputs; optionally concatenates the node's current features.
inline Tensor extract_subgraph_with_batch(const SubgraphBatch& batch, const Tensor& x,
                                          const GnnStack& stack, bool concat_original) {
    if (stack.num_layers() != batch.k)
        throw std::invalid_argument("extract_subgraph: stack has " +
                                    std::to_string(stack.num_layers()) + " layers, expected " +
                                    std::to_string(batch.k));
    Tensor h = row_gather(x, batch.union_to_parent);
    Tensor efeat;
    if (stack.kind == GnnKind::gin && batch.edge_feat_dim > 0)
        efeat = Tensor({batch.gin_plan.src.size(), batch.edge_feat_dim}, batch.edge_feats);
    h = detail::run_stack_on_plans(batch.gcn_plan, batch.gin_plan, h, stack, efeat);
    Tensor pooled = segment_sum(h, batch.union_segment, batch.num_centers);
    if (concat_original) return concat({pooled, x}, 1);
    return pooled;
}

inline Tensor extract_subgraph(const Graph& g, const Tensor& x, const GnnStack& stack, size_t k,
                               bool concat_original) {
    if (k == 0)
        throw std::invalid_argument("extract_subgraph: k = 0 is undefined for this strategy");
    return extract_subgraph_with_batch(build_subgraph_batch(g, k), x, stack, concat_original);
}

}  // namespace sat
