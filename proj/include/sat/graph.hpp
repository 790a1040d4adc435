#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sat {

// Immutable undirected graph with dense node features and optional edge
// features. Edges are stored canonically (u < v, lexicographically sorted)
// and neighbor lists ascending, so every iteration order is deterministic.
struct Graph {
    size_t num_nodes = 0;
    std::vector<std::pair<size_t, size_t>> edges;  // canonical u < v, sorted
    std::vector<double> node_feats;                // num_nodes x feat_dim, row-major
    size_t feat_dim = 0;
    std::vector<double> edge_feats;                // edges.size() x edge_feat_dim
    size_t edge_feat_dim = 0;
    std::vector<size_t> degrees;
    std::vector<std::vector<size_t>> adj;          // sorted ascending

    bool has_edge_feats() const { return edge_feat_dim > 0; }
    size_t num_edges() const { return edges.size(); }

    const double* feat_row(size_t v) const { return node_feats.data() + v * feat_dim; }

    friend bool operator==(const Graph& a, const Graph& b) {
        return a.num_nodes == b.num_nodes && a.edges == b.edges &&
               a.node_feats == b.node_feats && a.feat_dim == b.feat_dim &&
               a.edge_feats == b.edge_feats && a.edge_feat_dim == b.edge_feat_dim;
    }
};

// Sorted set of node indices; result type of k-hop neighborhood queries.
struct NodeSet {
    std::vector<size_t> nodes;  // strictly increasing

    size_t size() const { return nodes.size(); }
    bool contains(size_t v) const {
        return std::binary_search(nodes.begin(), nodes.end(), v);
    }
};

// Subgraph induced on a node set, remembering the extraction center and the
// local -> global index mapping.
struct InducedSubgraph {
    Graph graph;
    size_t root_local = 0;
    std::vector<size_t> mapping;  // local index -> parent index
};

inline Graph build_graph(size_t num_nodes,
                         const std::vector<std::pair<size_t, size_t>>& edges,
                         const std::vector<std::vector<double>>& node_feats,
                         const std::vector<std::vector<double>>& edge_feats = {}) {
    if (node_feats.size() != num_nodes)
        throw std::invalid_argument("build_graph: node feature rows (" +
                                    std::to_string(node_feats.size()) +
                                    ") != num_nodes (" + std::to_string(num_nodes) + ")");
    if (!edge_feats.empty() && edge_feats.size() != edges.size())
        throw std::invalid_argument("build_graph: edge feature rows (" +
                                    std::to_string(edge_feats.size()) + ") != edge count (" +
                                    std::to_string(edges.size()) + ")");

    Graph g;
    g.num_nodes = num_nodes;
    g.feat_dim = num_nodes > 0 ? node_feats[0].size() : 0;
    g.node_feats.reserve(num_nodes * g.feat_dim);
    for (size_t v = 0; v < num_nodes; ++v) {
        if (node_feats[v].size() != g.feat_dim)
            throw std::invalid_argument("build_graph: ragged node feature row at node " +
                                        std::to_string(v));
        g.node_feats.insert(g.node_feats.end(), node_feats[v].begin(), node_feats[v].end());
    }

    // Canonicalize, then sort edges (carrying their features) and reject
    // self-loops, duplicates and out-of-range endpoints.
    struct Rec {
        std::pair<size_t, size_t> e;
        size_t orig;
    };
    std::vector<Rec> recs;
    recs.reserve(edges.size());
    for (size_t i = 0; i < edges.size(); ++i) {
        size_t u = edges[i].first, v = edges[i].second;
        if (u >= num_nodes || v >= num_nodes)
            throw std::invalid_argument("build_graph: edge index out of range: (" +
                                        std::to_string(u) + "," + std::to_string(v) + ")");
        if (u == v)
            throw std::invalid_argument("build_graph: self-loop at node " + std::to_string(u));
        if (u > v) std::swap(u, v);
        recs.push_back({{u, v}, i});
    }
    std::sort(recs.begin(), recs.end(),
              [](const Rec& a, const Rec& b) { return a.e < b.e; });
    for (size_t i = 1; i < recs.size(); ++i)
        if (recs[i].e == recs[i - 1].e)
            throw std::invalid_argument("build_graph: duplicate edge (" +
                                        std::to_string(recs[i].e.first) + "," +
                                        std::to_string(recs[i].e.second) + ")");

    if (!edge_feats.empty()) {
        g.edge_feat_dim = edge_feats.empty() ? 0 : edge_feats[0].size();
        g.edge_feats.reserve(recs.size() * g.edge_feat_dim);
    }
    g.edges.reserve(recs.size());
    for (const Rec& r : recs) {
        g.edges.push_back(r.e);
        if (!edge_feats.empty()) {
            if (edge_feats[r.orig].size() != g.edge_feat_dim)
                throw std::invalid_argument("build_graph: ragged edge feature row at edge " +
                                            std::to_string(r.orig));
            g.edge_feats.insert(g.edge_feats.end(), edge_feats[r.orig].begin(),
                                edge_feats[r.orig].end());
        }
    }

    g.adj.assign(num_nodes, {});
    for (const auto& [u, v] : g.edges) {
        g.adj[u].push_back(v);
        g.adj[v].push_back(u);
    }
    for (auto& nbrs : g.adj) std::sort(nbrs.begin(), nbrs.end());
    g.degrees.resize(num_nodes);
    for (size_t v = 0; v < num_nodes; ++v) g.degrees[v] = g.adj[v].size();
    return g;
}

// BFS ball of radius k around u, including u itself; sorted ascending.
inline NodeSet k_hop_neighborhood(const Graph& g, size_t u, size_t k) {
    if (u >= g.num_nodes)
        throw std::invalid_argument("k_hop_neighborhood: node index " + std::to_string(u) +
                                    " out of range");
    std::vector<size_t> dist(g.num_nodes, SIZE_MAX);
    std::deque<size_t> queue{u};
    dist[u] = 0;
    std::vector<size_t> found{u};
    while (!queue.empty()) {
        size_t w = queue.front();
        queue.pop_front();
        if (dist[w] == k) continue;
        for (size_t nb : g.adj[w]) {
            if (dist[nb] == SIZE_MAX) {
                dist[nb] = dist[w] + 1;
                found.push_back(nb);
                queue.push_back(nb);
            }
        }
    }
    std::sort(found.begin(), found.end());
    return NodeSet{std::move(found)};
}

inline InducedSubgraph induced_subgraph(const Graph& g, const NodeSet& nodes, size_t root) {
    if (!nodes.contains(root))
        throw std::invalid_argument("induced_subgraph: root " + std::to_string(root) +
                                    " not in node set");
    std::vector<size_t> local(g.num_nodes, SIZE_MAX);
    for (size_t i = 0; i < nodes.nodes.size(); ++i) local[nodes.nodes[i]] = i;

    std::vector<std::vector<double>> feats(nodes.size());
    for (size_t i = 0; i < nodes.size(); ++i) {
        const double* row = g.feat_row(nodes.nodes[i]);
        feats[i].assign(row, row + g.feat_dim);
    }
    std::vector<std::pair<size_t, size_t>> sub_edges;
    std::vector<std::vector<double>> sub_efeats;
    for (size_t e = 0; e < g.edges.size(); ++e) {
        size_t lu = local[g.edges[e].first], lv = local[g.edges[e].second];
        if (lu == SIZE_MAX || lv == SIZE_MAX) continue;
        sub_edges.emplace_back(lu, lv);
        if (g.has_edge_feats()) {
            const double* row = g.edge_feats.data() + e * g.edge_feat_dim;
            sub_efeats.emplace_back(row, row + g.edge_feat_dim);
        }
    }
    InducedSubgraph out;
    out.graph = build_graph(nodes.size(), sub_edges, feats, sub_efeats);
    out.mapping = nodes.nodes;
    out.root_local = local[root];
    return out;
}

// Relabels nodes: node v of the output carries the data of node pi^-1(v).
inline Graph permute_graph(const Graph& g, const std::vector<size_t>& pi) {
    if (pi.size() != g.num_nodes)
        throw std::invalid_argument("permute_graph: permutation size mismatch");
    std::vector<bool> seen(g.num_nodes, false);
    for (size_t t : pi) {
        if (t >= g.num_nodes || seen[t])
            throw std::invalid_argument("permute_graph: not a bijection");
        seen[t] = true;
    }
    std::vector<std::vector<double>> feats(g.num_nodes);
    for (size_t v = 0; v < g.num_nodes; ++v) {
        const double* row = g.feat_row(v);
        feats[pi[v]].assign(row, row + g.feat_dim);
    }
    std::vector<std::pair<size_t, size_t>> edges;
    std::vector<std::vector<double>> efeats;
    edges.reserve(g.edges.size());
    for (size_t e = 0; e < g.edges.size(); ++e) {
        edges.emplace_back(pi[g.edges[e].first], pi[g.edges[e].second]);
        if (g.has_edge_feats()) {
            const double* row = g.edge_feats.data() + e * g.edge_feat_dim;
            efeats.emplace_back(row, row + g.edge_feat_dim);
        }
    }
    return build_graph(g.num_nodes, edges, feats, efeats);
}

inline std::vector<size_t> inverse_permutation(const std::vector<size_t>& pi) {
    std::vector<size_t> inv(pi.size());
    for (size_t i = 0; i < pi.size(); ++i) inv[pi[i]] = i;
    return inv;
}

}  // namespace sat
