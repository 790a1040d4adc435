#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "sat/extractors.hpp"
#include "sat/graph.hpp"
#include "sat/model.hpp"
#include "sat/posenc.hpp"
#include "sat/rng.hpp"
#include "sat/tensor.hpp"

namespace sat {

namespace vdetail {

// Minimal plain-double matrix helpers, independent of the tensor/tape path.
struct Mat {
    size_t r = 0, c = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(size_t r_, size_t c_) : r(r_), c(c_), a(r_ * c_, 0.0) {}
    double& at(size_t i, size_t j) { return a[i * c + j]; }
    double at(size_t i, size_t j) const { return a[i * c + j]; }
    std::vector<double> row(size_t i) const {
        return std::vector<double>(a.begin() + i * c, a.begin() + (i + 1) * c);
    }
};

inline Mat random_mat(Rng& rng, size_t r, size_t c, double scale) {
    Mat m(r, c);
    for (double& v : m.a) v = scale * rng.normal();
    return m;
}

inline std::vector<double> vec_mat(const std::vector<double>& x, const Mat& w) {
    std::vector<double> out(w.c, 0.0);
    for (size_t i = 0; i < w.r; ++i)
        for (size_t j = 0; j < w.c; ++j) out[j] += x[i] * w.at(i, j);
    return out;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline double l2_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

// Largest singular value by power iteration on W^T W, to a 1e-10 residual.
inline double spectral_norm(const Mat& w) {
    if (w.r == 0 || w.c == 0) return 0.0;
    std::vector<double> v(w.c);
    for (size_t j = 0; j < w.c; ++j) v[j] = 1.0 + 1e-3 * static_cast<double>(j + 1);
    double nv = l2_norm(v);
    for (double& x : v) x /= nv;
    double sigma = 0.0;
    for (int it = 0; it < 100000; ++it) {
        std::vector<double> u(w.r, 0.0);
        for (size_t i = 0; i < w.r; ++i)
            for (size_t j = 0; j < w.c; ++j) u[i] += w.at(i, j) * v[j];
        std::vector<double> next(w.c, 0.0);
        for (size_t i = 0; i < w.r; ++i)
            for (size_t j = 0; j < w.c; ++j) next[j] += w.at(i, j) * u[i];
        double norm_next = l2_norm(next);
        if (norm_next == 0.0) return 0.0;
        double sigma_new = std::sqrt(norm_next);
        for (double& x : next) x /= norm_next;
        v = std::move(next);
        if (std::fabs(sigma_new - sigma) < 1e-10 * std::max(1.0, sigma_new)) return sigma_new;
        sigma = sigma_new;
    }
    return sigma;
}

// Structure-aware attention rows computed directly from the definition:
// single head, no output projection, f(x) = x Wv. Optional query/key offsets.
// Softmax evaluated with max subtraction (exact same ratios).
inline std::vector<std::vector<double>> sa_attn_rows(const Mat& h_phi, const Mat& x,
                                                     const Mat& wq, const Mat& wk, const Mat& wv,
                                                     const std::vector<double>* bq = nullptr,
                                                     const std::vector<double>* bk = nullptr) {
    const size_t n = h_phi.r;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(wq.c));
    std::vector<std::vector<double>> q(n), k(n), f(n);
    for (size_t i = 0; i < n; ++i) {
        q[i] = vec_mat(h_phi.row(i), wq);
        if (bq)
            for (size_t j = 0; j < q[i].size(); ++j) q[i][j] += (*bq)[j];
        k[i] = vec_mat(h_phi.row(i), wk);
        if (bk)
            for (size_t j = 0; j < k[i].size(); ++j) k[i][j] += (*bk)[j];
        f[i] = vec_mat(x.row(i), wv);
    }
    std::vector<std::vector<double>> out(n);
    for (size_t v = 0; v < n; ++v) {
        std::vector<double> scores(n);
        double mx = -std::numeric_limits<double>::infinity();
        for (size_t w = 0; w < n; ++w) {
            scores[w] = dot(q[v], k[w]) * inv_sqrt_d;
            mx = std::max(mx, scores[w]);
        }
        double denom = 0.0;
        for (size_t w = 0; w < n; ++w) {
            scores[w] = std::exp(scores[w] - mx);
            denom += scores[w];
        }
        out[v].assign(wv.c, 0.0);
        for (size_t w = 0; w < n; ++w) {
            double p = scores[w] / denom;
            for (size_t j = 0; j < wv.c; ++j) out[v][j] += p * f[w][j];
        }
    }
    return out;
}

// Runs the configured extractor with plain (non-recording) tensors and
// returns the output as a Mat.
inline Mat extractor_mat(const Graph& g, const GnnStack& stack, const ExtractorConfig& ecfg) {
    Tensor x(std::vector<size_t>{g.num_nodes, g.feat_dim}, g.node_feats);
    Tensor phi = ecfg.strategy == ExtractorStrategy::subtree
                     ? extract_subtree(g, x, stack, ecfg.k)
                     : extract_subgraph(g, x, stack, ecfg.k, ecfg.concat_original);
    Mat out(phi.rows(), phi.cols());
    out.a = phi.values();
    return out;
}

}  // namespace vdetail

// ---------------------------------------------------------------------------
// bottleneck matching metric
// ---------------------------------------------------------------------------

// D(A, B) = min over permutations pi of max_i ||A_i - B_pi(i)||. Exact brute
// force, |A| = |B| <= 8.
inline double matching_metric_D(const std::vector<std::vector<double>>& a,
                                const std::vector<std::vector<double>>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("matching_metric_D: multiset sizes differ");
    if (a.size() > 8)
        throw std::invalid_argument("matching_metric_D: brute force capped at size 8");
    if (a.empty()) return 0.0;
    const size_t n = a.size();
    std::vector<std::vector<double>> dist(n, std::vector<double>(n));
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) dist[i][j] = vdetail::l2_dist(a[i], b[j]);
    std::vector<size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double worst = 0.0;
        for (size_t i = 0; i < n && worst < best; ++i)
            worst = std::max(worst, dist[i][perm[i]]);
        best = std::min(best, worst);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// ---------------------------------------------------------------------------
// attention stability bound
// ---------------------------------------------------------------------------

struct Theorem1Setup {
    GnnStack stack;
    ExtractorConfig ecfg;
    vdetail::Mat wq, wk;  // d_phi x d_out
    vdetail::Mat wv;      // d_in x d_out
};

struct Theorem1Report {
    double lhs = 0.0;
    double rhs = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    double lip_f = 0.0;
    double c_phi = 0.0;
    double d_xx = 0.0;
    double d_hh = 0.0;
    bool holds = false;
};

// Evaluates both sides of the attention stability bound
//   ||SA(v) - SA(v')|| <= C1 (||h_v - h'_v'|| + D(H, H')) + C2 D(X, X')
// with C1 = sqrt(2/d_out) n Lip(f) C_phi ||Wq|| ||Wk|| and C2 = Lip(f),
// operator norms throughout. Graphs must have equal node counts (<= 8, for
// the exact matching metric).
inline Theorem1Report check_theorem1(const Graph& g, const Graph& g2, size_t v, size_t v2,
                                     const Theorem1Setup& setup, double tol = 1e-9) {
    if (g.num_nodes != g2.num_nodes)
        throw std::invalid_argument("check_theorem1: node counts must match");
    if (g.num_nodes > 8) throw std::invalid_argument("check_theorem1: capped at 8 nodes");
    if (v >= g.num_nodes || v2 >= g2.num_nodes)
        throw std::invalid_argument("check_theorem1: node index out of range");

    using namespace vdetail;
    Mat h1 = extractor_mat(g, setup.stack, setup.ecfg);
    Mat h2 = extractor_mat(g2, setup.stack, setup.ecfg);
    Mat x1(g.num_nodes, g.feat_dim);
    x1.a = g.node_feats;
    Mat x2(g2.num_nodes, g2.feat_dim);
    x2.a = g2.node_feats;

    auto rows1 = sa_attn_rows(h1, x1, setup.wq, setup.wk, setup.wv);
    auto rows2 = sa_attn_rows(h2, x2, setup.wq, setup.wk, setup.wv);

    Theorem1Report rep;
    rep.lhs = l2_dist(rows1[v], rows2[v2]);
    rep.lip_f = spectral_norm(setup.wv);
    double c_phi = 0.0;
    std::vector<std::vector<double>> hs1, hs2, xs1, xs2;
    for (size_t i = 0; i < g.num_nodes; ++i) {
        hs1.push_back(h1.row(i));
        hs2.push_back(h2.row(i));
        xs1.push_back(x1.row(i));
        xs2.push_back(x2.row(i));
        c_phi = std::max({c_phi, l2_norm(hs1.back()), l2_norm(hs2.back())});
    }
    rep.c_phi = c_phi;
    rep.d_hh = matching_metric_D(hs1, hs2);
    rep.d_xx = matching_metric_D(xs1, xs2);
    const double d_out = static_cast<double>(setup.wq.c);
    rep.c1 = std::sqrt(2.0 / d_out) * static_cast<double>(g.num_nodes) * rep.lip_f * c_phi *
             spectral_norm(setup.wq) * spectral_norm(setup.wk);
    rep.c2 = rep.lip_f;
    rep.rhs = rep.c1 * (l2_dist(hs1[v], hs2[v2]) + rep.d_hh) + rep.c2 * rep.d_xx;
    if (!std::isfinite(rep.lhs) || !std::isfinite(rep.rhs))
        throw std::runtime_error("check_theorem1: non-finite value");
    rep.holds = rep.lhs <= rep.rhs + tol;
    return rep;
}

// ---------------------------------------------------------------------------
// separation existence
// ---------------------------------------------------------------------------

struct Theorem2Result {
    bool found = false;
    size_t draws_used = 0;
    vdetail::Mat wq, wk, wv;        // witness parameters (valid when found)
    std::vector<double> bq, bk;
    double separation = 0.0;
};

// Searches random parameter draws for one that separates the attention
// outputs of two nodes whose extractor representations differ. Node features
// get tiny per-node noise first so the attribute-distinctness hypothesis
// holds.
inline Theorem2Result check_theorem2_existence(const Graph& g, const Graph& g2, size_t v,
                                               size_t v2, const GnnStack& stack,
                                               const ExtractorConfig& ecfg, size_t n_samples,
                                               uint64_t seed) {
    using namespace vdetail;
    {
        Mat h1 = extractor_mat(g, stack, ecfg);
        Mat h2 = extractor_mat(g2, stack, ecfg);
        if (l2_dist(h1.row(v), h2.row(v2)) <= 1e-12)
            throw std::invalid_argument(
                "check_theorem2_existence: subgraph representations are equal");
    }
    Rng rng(mix64(seed, 0x7e02));
    Graph ga = g, gb = g2;
    for (double& f : ga.node_feats) f += 1e-3 * rng.normal();
    for (double& f : gb.node_feats) f += 1e-3 * rng.normal();

    Mat h1 = extractor_mat(ga, stack, ecfg);
    Mat h2 = extractor_mat(gb, stack, ecfg);
    Mat x1(ga.num_nodes, ga.feat_dim);
    x1.a = ga.node_feats;
    Mat x2(gb.num_nodes, gb.feat_dim);
    x2.a = gb.node_feats;

    const size_t d_phi = h1.c, d_in = ga.feat_dim, d_out = 4;
    Theorem2Result res;
    for (size_t draw = 1; draw <= n_samples; ++draw) {
        Mat wq = random_mat(rng, d_phi, d_out, 0.5);
        Mat wk = random_mat(rng, d_phi, d_out, 0.5);
        Mat wv = random_mat(rng, d_in, d_out, 0.5);
        std::vector<double> bq(d_out), bk(d_out);
        for (double& b : bq) b = 0.5 * rng.normal();
        for (double& b : bk) b = 0.5 * rng.normal();
        auto rows1 = sa_attn_rows(h1, x1, wq, wk, wv, &bq, &bk);
        auto rows2 = sa_attn_rows(h2, x2, wq, wk, wv, &bq, &bk);
        double sep = l2_dist(rows1[v], rows2[v2]);
        if (sep > 1e-6) {
            res.found = true;
            res.draws_used = draw;
            res.wq = std::move(wq);
            res.wk = std::move(wk);
            res.wv = std::move(wv);
            res.bq = std::move(bq);
            res.bk = std::move(bk);
            res.separation = sep;
            return res;
        }
    }
    res.draws_used = n_samples;
    return res;
}

// ---------------------------------------------------------------------------
// kernel smoother identity
// ---------------------------------------------------------------------------

// Computes dense attention twice with the identity extractor: once as the
// matrix form softmax((XWq+bq)(XWk+bk)^T / sqrt(d)) XWv, once as the
// per-node exponential-kernel smoother, and returns the max deviation.
inline double check_kernel_smoother_identity(const vdetail::Mat& x, const vdetail::Mat& wq,
                                             const std::vector<double>& bq,
                                             const vdetail::Mat& wk,
                                             const std::vector<double>& bk,
                                             const vdetail::Mat& wv) {
    using namespace vdetail;
    const size_t n = x.r, dq = wq.c, dv = wv.c;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dq));

    // route one: dense matrix form with a numerically stabilized softmax
    Mat q(n, dq), k(n, dq), f(n, dv);
    for (size_t i = 0; i < n; ++i) {
        auto qi = vec_mat(x.row(i), wq);
        auto ki = vec_mat(x.row(i), wk);
        auto fi = vec_mat(x.row(i), wv);
        for (size_t j = 0; j < dq; ++j) {
            q.at(i, j) = qi[j] + bq[j];
            k.at(i, j) = ki[j] + bk[j];
        }
        for (size_t j = 0; j < dv; ++j) f.at(i, j) = fi[j];
    }
    Mat out_matrix(n, dv);
    for (size_t i = 0; i < n; ++i) {
        std::vector<double> s(n);
        double mx = -std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < n; ++j) {
            s[j] = dot(q.row(i), k.row(j)) * inv_sqrt_d;
            mx = std::max(mx, s[j]);
        }
        double denom = 0.0;
        for (size_t j = 0; j < n; ++j) {
            s[j] = std::exp(s[j] - mx);
            denom += s[j];
        }
        for (size_t j = 0; j < n; ++j)
            for (size_t c = 0; c < dv; ++c) out_matrix.at(i, c) += (s[j] / denom) * f.at(j, c);
    }

    // route two: literal kernel smoother, recomputed per node pair
    auto kappa = [&](const std::vector<double>& xv, const std::vector<double>& xu) {
        auto qv = vec_mat(xv, wq);
        auto ku = vec_mat(xu, wk);
        for (size_t j = 0; j < dq; ++j) {
            qv[j] += bq[j];
            ku[j] += bk[j];
        }
        return std::exp(dot(qv, ku) * inv_sqrt_d);
    };
    double max_dev = 0.0;
    for (size_t v = 0; v < n; ++v) {
        double denom = 0.0;
        std::vector<double> weights(n);
        for (size_t w = 0; w < n; ++w) {
            weights[w] = kappa(x.row(v), x.row(w));
            denom += weights[w];
        }
        std::vector<double> acc(dv, 0.0);
        for (size_t u = 0; u < n; ++u) {
            auto fu = vec_mat(x.row(u), wv);
            for (size_t c = 0; c < dv; ++c) acc[c] += (weights[u] / denom) * fu[c];
        }
        for (size_t c = 0; c < dv; ++c)
            max_dev = std::max(max_dev, std::fabs(acc[c] - out_matrix.at(v, c)));
    }
    return max_dev;
}

// ---------------------------------------------------------------------------
// 1-WL color refinement
// ---------------------------------------------------------------------------

// Iterative neighbor-multiset refinement from a uniform start. New colors are
// dense ids assigned in sorted-signature order, which makes them a pure
// function of the isomorphism class (color multisets are comparable across
// relabelings and across graphs). Stops at the stable partition or after
// `rounds`, whichever is first.
inline std::vector<int> wl_refinement(const Graph& g, size_t rounds) {
    std::vector<int> colors(g.num_nodes, 0);
    for (size_t round = 0; round < rounds; ++round) {
        std::vector<std::pair<int, std::vector<int>>> sig(g.num_nodes);
        for (size_t u = 0; u < g.num_nodes; ++u) {
            std::vector<int> nbr;
            nbr.reserve(g.adj[u].size());
            for (size_t w : g.adj[u]) nbr.push_back(colors[w]);
            std::sort(nbr.begin(), nbr.end());
            sig[u] = {colors[u], std::move(nbr)};
        }
        std::map<std::pair<int, std::vector<int>>, int> table;
        for (const auto& s : sig) table.emplace(s, 0);
        int next_id = 0;
        for (auto& [key, id] : table) id = next_id++;
        std::vector<int> next(g.num_nodes);
        for (size_t u = 0; u < g.num_nodes; ++u) next[u] = table.at(sig[u]);
        if (next == colors) break;
        colors = std::move(next);
    }
    return colors;
}

// ---------------------------------------------------------------------------
// whole-model equivariance
// ---------------------------------------------------------------------------

// Runs the full pipeline (encoding + forward) on g and on its relabeling and
// returns the max absolute deviation between matched outputs.
inline double check_equivariance(const Graph& g, const std::vector<size_t>& pi,
                                 const SatConfig& cfg, const ModelParams& params) {
    Graph ga = attach_encoding(g, compute_encoding(g, cfg.pe, cfg.pe_dim));
    Graph permuted = permute_graph(g, pi);
    Graph gb = attach_encoding(permuted, compute_encoding(permuted, cfg.pe, cfg.pe_dim));

    ForwardResult ra = forward(ga, cfg, params, false);
    ForwardResult rb = forward(gb, cfg, params, false);

    double dev = 0.0;
    const size_t n = g.num_nodes;
    const size_t d = ra.node_states.cols();
    for (size_t v = 0; v < ra.node_states.rows(); ++v) {
        size_t mapped = v < n ? pi[v] : v;  // a CLS row stays last
        for (size_t j = 0; j < d; ++j)
            dev = std::max(dev, std::fabs(ra.node_states.at(v, j) -
                                          rb.node_states.at(mapped, j)));
    }
    if (cfg.task == TaskKind::node_class) {
        for (size_t v = 0; v < n; ++v)
            for (size_t j = 0; j < ra.prediction.cols(); ++j)
                dev = std::max(dev, std::fabs(ra.prediction.at(v, j) -
                                              rb.prediction.at(pi[v], j)));
    } else {
        for (size_t j = 0; j < ra.prediction.size(); ++j)
            dev = std::max(dev, std::fabs(ra.prediction.values()[j] -
                                          rb.prediction.values()[j]));
    }
    return dev;
}

// ---------------------------------------------------------------------------
// randomized harnesses (shared by the CLI and the acceptance suite)
// ---------------------------------------------------------------------------

struct SuiteResult {
    std::string name;
    size_t trials = 0;
    size_t failures = 0;
    double worst = 0.0;
    std::string note;

    bool passed() const { return failures == 0; }
};

inline Graph random_er_graph(Rng& rng, size_t n, double p, size_t feat_dim,
                             size_t edge_feat_dim = 0) {
    std::vector<std::pair<size_t, size_t>> edges;
    for (size_t u = 0; u < n; ++u)
        for (size_t v = u + 1; v < n; ++v)
            if (rng.bernoulli(p)) edges.emplace_back(u, v);
    std::vector<std::vector<double>> feats(n, std::vector<double>(feat_dim));
    for (auto& row : feats)
        for (double& f : row) f = rng.normal();
    std::vector<std::vector<double>> efeats;
    if (edge_feat_dim > 0) {
        efeats.assign(edges.size(), std::vector<double>(edge_feat_dim));
        for (auto& row : efeats)
            for (double& f : row) f = rng.normal();
    }
    return build_graph(n, edges, feats, efeats);
}

// Random square stack (every layer d -> d) for the verification harnesses.
inline GnnStack random_gnn_stack(Rng& rng, GnnKind kind, size_t k, size_t d, double scale) {
    GnnStack stack;
    stack.kind = kind;
    for (size_t i = 0; i < k; ++i) {
        if (kind == GnnKind::gcn) {
            GcnLayerParams p;
            std::vector<double> w(d * d), b(d);
            for (double& x : w) x = scale * rng.normal();
            for (double& x : b) x = scale * rng.normal();
            p.w = Tensor({d, d}, std::move(w));
            p.b = Tensor({d}, std::move(b));
            stack.gcn_layers.push_back(std::move(p));
        } else {
            GinLayerParams p;
            p.eps = Tensor::scalar(0.1 * rng.normal());
            auto mk = [&](size_t r, size_t c) {
                std::vector<double> w(r * c);
                for (double& x : w) x = scale * rng.normal();
                return Tensor({r, c}, std::move(w));
            };
            p.w1 = mk(d, d);
            p.b1 = Tensor::zeros({d});
            p.w2 = mk(d, d);
            p.b2 = Tensor::zeros({d});
            stack.gin_layers.push_back(std::move(p));
        }
    }
    return stack;
}

// Stability bound over random graph pairs, parameters and extractors; every
// fifth trial re-checks the same-graph case where both matching terms must
// vanish exactly.
inline SuiteResult run_theorem1_suite(uint64_t seed, size_t trials) {
    SuiteResult res;
    res.name = "theorem1";
    res.trials = trials;
    Rng rng(mix64(seed, 0x7401));
    for (size_t t = 0; t < trials; ++t) {
        const size_t n = 3 + rng.below(5);  // 3..7
        const double p = rng.uniform(0.3, 0.8);
        const size_t d = 2 + rng.below(3);  // 2..4
        Graph g = random_er_graph(rng, n, p, d);
        Graph g2 = random_er_graph(rng, n, p, d);

        Theorem1Setup setup;
        setup.ecfg.strategy =
            rng.bernoulli(0.5) ? ExtractorStrategy::subtree : ExtractorStrategy::subgraph;
        setup.ecfg.k = 1 + rng.below(2);
        setup.ecfg.concat_original = rng.bernoulli(0.5);
        GnnKind kind = rng.bernoulli(0.5) ? GnnKind::gcn : GnnKind::gin;
        setup.stack = random_gnn_stack(rng, kind, setup.ecfg.k, d, 0.5);
        const size_t d_phi =
            setup.ecfg.strategy == ExtractorStrategy::subgraph && setup.ecfg.concat_original
                ? 2 * d
                : d;
        const size_t d_out = 4;
        setup.wq = vdetail::random_mat(rng, d_phi, d_out, 0.5);
        setup.wk = vdetail::random_mat(rng, d_phi, d_out, 0.5);
        setup.wv = vdetail::random_mat(rng, d, d_out, 0.5);

        size_t v = rng.below(n), v2 = rng.below(n);
        Theorem1Report rep = check_theorem1(g, g2, v, v2, setup);
        double slack = rep.lhs - rep.rhs;
        res.worst = std::max(res.worst, slack);
        if (!rep.holds) ++res.failures;

        if (t % 5 == 0) {
            size_t w2 = (v + 1 + rng.below(n - 1)) % n;
            Theorem1Report same = check_theorem1(g, g, v, w2, setup);
            if (!(same.d_hh == 0.0 && same.d_xx == 0.0 && same.holds)) ++res.failures;
        }
    }
    res.note = "worst lhs-rhs slack " + std::to_string(res.worst);
    return res;
}

// Fixture stack for the separation harness: one GIN layer with eps = 0 and a
// pass-through MLP, so constant-1 features give scalar outputs 9 inside a
// triangle component and 7 inside a 6-cycle.
inline GnnStack identity_gin_stack(size_t k = 1) {
    GnnStack stack;
    stack.kind = GnnKind::gin;
    for (size_t i = 0; i < k; ++i) {
        GinLayerParams p;
        p.eps = Tensor::scalar(0.0);
        p.w1 = Tensor({1, 1}, {1.0});
        p.b1 = Tensor::zeros({1});
        p.w2 = Tensor({1, 1}, {1.0});
        p.b2 = Tensor::zeros({1});
        stack.gin_layers.push_back(std::move(p));
    }
    return stack;
}

inline SuiteResult run_theorem2_suite(uint64_t seed, size_t runs, size_t samples_per_run = 50) {
    SuiteResult res;
    res.name = "theorem2";
    res.trials = runs;
    std::vector<std::pair<size_t, size_t>> c6_edges, tri_edges = {{0, 1}, {1, 2}, {0, 2},
                                                                  {3, 4}, {4, 5}, {3, 5}};
    for (size_t i = 0; i < 6; ++i) c6_edges.emplace_back(i, (i + 1) % 6);
    std::vector<std::vector<double>> ones(6, {1.0});
    Graph c6 = build_graph(6, c6_edges, ones);
    Graph tri = build_graph(6, tri_edges, ones);

    ExtractorConfig ecfg{ExtractorStrategy::subgraph, 1, false};
    GnnStack stack = identity_gin_stack(1);
    size_t max_draws = 0;
    for (size_t r = 0; r < runs; ++r) {
        Theorem2Result t2 = check_theorem2_existence(c6, tri, 0, 0, stack, ecfg,
                                                     samples_per_run, mix64(seed, r));
        if (!t2.found) ++res.failures;
        max_draws = std::max(max_draws, t2.draws_used);
    }
    res.worst = static_cast<double>(max_draws);
    res.note = "max draws needed " + std::to_string(max_draws);
    return res;
}

inline SuiteResult run_smoother_suite(uint64_t seed, size_t trials) {
    SuiteResult res;
    res.name = "smoother";
    res.trials = trials;
    Rng rng(mix64(seed, 0x503));
    for (size_t t = 0; t < trials; ++t) {
        const size_t n = 1 + rng.below(8);
        const size_t d = 2 + rng.below(5);
        const size_t dq = 1 + rng.below(5);
        vdetail::Mat x = vdetail::random_mat(rng, n, d, 1.0);
        vdetail::Mat wq = vdetail::random_mat(rng, d, dq, 1.0);
        vdetail::Mat wk = vdetail::random_mat(rng, d, dq, 1.0);
        vdetail::Mat wv = vdetail::random_mat(rng, d, d, 1.0);
        std::vector<double> bq(dq), bk(dq);
        for (double& b : bq) b = rng.normal();
        for (double& b : bk) b = rng.normal();
        if (t % 7 == 0) {  // degenerate weights: both routes give the value mean
            wq = vdetail::Mat(d, dq);
            bq.assign(dq, 0.0);
        }
        double dev = check_kernel_smoother_identity(x, wq, bq, wk, bk, wv);
        res.worst = std::max(res.worst, dev);
        if (dev >= 1e-12) ++res.failures;
    }
    res.note = "max deviation " + std::to_string(res.worst);
    return res;
}

// Laplacian-encoding eigenvectors are only well defined up to basis choice
// inside a degenerate eigenspace, and the sign convention needs a clearly
// asymmetric value multiset; harness instances are filtered accordingly.
inline bool lappe_spectrum_ok(const Graph& g, size_t m, double min_gap = 0.05) {
    EigDecomposition eig = sym_eig(normalized_laplacian(g), g.num_nodes);
    for (size_t i = 0; i + 1 < g.num_nodes && i <= m + 1; ++i)
        if (eig.eigenvalues[i + 1] - eig.eigenvalues[i] < min_gap) return false;
    PosEncoding pe = lap_pe(g, m);
    for (size_t j = 0; j < m; ++j) {
        double mx = -std::numeric_limits<double>::infinity(), mn = -mx;
        for (size_t i = 0; i < g.num_nodes; ++i) {
            mx = std::max(mx, pe.values[i * m + j]);
            mn = std::min(mn, pe.values[i * m + j]);
        }
        if (std::fabs(mx + mn) < 1e-6) return false;
    }
    return true;
}

inline SuiteResult run_equivariance_suite(uint64_t seed, size_t trials) {
    SuiteResult res;
    res.name = "equivariance";
    res.trials = trials;
    Rng rng(mix64(seed, 0xe9a1));
    const Readout readouts[] = {Readout::mean, Readout::sum, Readout::cls};
    for (size_t t = 0; t < trials; ++t) {
        SatConfig cfg;
        cfg.num_layers = 1 + rng.below(2);
        cfg.hidden_dim = 8;
        cfg.num_heads = 2;
        cfg.extractor = t % 2 == 0 ? ExtractorStrategy::subtree : ExtractorStrategy::subgraph;
        cfg.k = cfg.extractor == ExtractorStrategy::subtree ? rng.below(3) : 1 + rng.below(2);
        cfg.gnn = rng.bernoulli(0.5) ? GnnKind::gcn : GnnKind::gin;
        cfg.concat_original = rng.bernoulli(0.5);
        cfg.readout = readouts[t % 3];
        cfg.task = TaskKind::graph_class;
        cfg.output_dim = 2;
        switch (t % 3) {
            case 0: cfg.pe = PeKind::none; cfg.pe_dim = 0; break;
            case 1: cfg.pe = PeKind::rwpe; cfg.pe_dim = 4; break;
            default: cfg.pe = PeKind::lappe; cfg.pe_dim = 2; break;
        }

        // very small graphs are too symmetric to pass the spectrum filter
        const size_t n = cfg.pe == PeKind::lappe ? 6 + rng.below(4) : 4 + rng.below(6);
        const size_t edim = (cfg.gnn == GnnKind::gin && rng.bernoulli(0.5)) ? 2 : 0;
        Graph g = random_er_graph(rng, n, rng.uniform(0.4, 0.7), 2, edim);
        if (cfg.pe == PeKind::lappe) {
            int guard = 0;
            while (!lappe_spectrum_ok(g, cfg.pe_dim) && guard++ < 2000)
                g = random_er_graph(rng, n, rng.uniform(0.4, 0.7), 2, edim);
        }

        ModelParams params = init_params(cfg, 2 + cfg.pe_dim, edim, mix64(seed, t, 77));
        std::vector<size_t> pi = rng.permutation(n);
        double dev = check_equivariance(g, pi, cfg, params);
        res.worst = std::max(res.worst, dev);
        if (!(dev < 1e-9)) ++res.failures;
    }
    res.note = "max deviation " + std::to_string(res.worst);
    return res;
}

// Full-model gradient check across extractor strategies, base convolutions
// and edge-feature handling, with the CLS readout.
inline SuiteResult run_gradcheck_suite(uint64_t seed, size_t graphs_per_config = 5,
                                       double eps = 1e-6) {
    SuiteResult res;
    res.name = "gradcheck";
    Rng rng(mix64(seed, 0x96ad));
    const ExtractorStrategy strategies[] = {ExtractorStrategy::subtree,
                                            ExtractorStrategy::subgraph};
    const GnnKind kinds[] = {GnnKind::gcn, GnnKind::gin};
    for (ExtractorStrategy strategy : strategies) {
        for (GnnKind kind : kinds) {
            for (int with_edges = 0; with_edges <= 1; ++with_edges) {
                SatConfig cfg;
                cfg.num_layers = 2;
                cfg.hidden_dim = 8;
                cfg.num_heads = 2;
                cfg.k = 2;
                cfg.extractor = strategy;
                cfg.gnn = kind;
                cfg.concat_original = true;
                cfg.readout = Readout::cls;
                cfg.dropout = 0.0;
                cfg.task = TaskKind::regression;
                cfg.output_dim = 1;

                const size_t feat_dim = 3;
                const size_t edge_dim = with_edges ? 2 : 0;
                std::vector<Graph> graphs;
                std::vector<double> targets;
                for (size_t i = 0; i < graphs_per_config; ++i) {
                    graphs.push_back(random_er_graph(rng, 6, 0.5, feat_dim, edge_dim));
                    targets.push_back(rng.normal());
                }
                ModelParams params = init_params(cfg, feat_dim, edge_dim, mix64(seed, 3));
                for (auto& [name, p] : params)
                    for (double& x : p.mutable_values()) x = 0.1 * rng.normal();

                auto f = [&](ModelParams& ps) {
                    Tensor total;
                    for (size_t i = 0; i < graphs.size(); ++i) {
                        ForwardResult r = forward(graphs[i], cfg, ps, false);
                        Tensor y(r.prediction.shape(),
                                 std::vector<double>(r.prediction.size(), targets[i]));
                        Tensor l = mean_all(abs_val(sub(r.prediction, y)));
                        total = total.defined() ? add(total, l) : l;
                    }
                    return total;
                };
                double err = grad_check(f, params, eps);
                res.worst = std::max(res.worst, err);
                ++res.trials;
                if (!(err < 1e-4)) ++res.failures;
            }
        }
    }
    res.note = "max relative error " + std::to_string(res.worst);
    return res;
}

}  // namespace sat
