#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "sat/graph.hpp"
#include "sat/tensor.hpp"

namespace sat {

enum class PeKind { none, rwpe, lappe };

inline const char* pe_kind_name(PeKind k) {
    switch (k) {
        case PeKind::none: return "none";
        case PeKind::rwpe: return "rwpe";
        case PeKind::lappe: return "lappe";
    }
    return "?";
}

// Absolute encoding: one row per node, `dim` columns (random-walk steps or
// eigenvector count).
struct PosEncoding {
    PeKind kind = PeKind::none;
    size_t rows = 0;
    size_t dim = 0;
    std::vector<double> values;  // rows x dim
};

namespace detail {

// n x n matrix product with value-sorted per-entry accumulation, so the
// result commutes exactly with simultaneous row/column relabeling.
inline std::vector<double> matmul_sorted(const std::vector<double>& a,
                                         const std::vector<double>& b, size_t n) {
    std::vector<double> out(n * n);
    std::vector<double> buf(n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            for (size_t w = 0; w < n; ++w) buf[w] = a[i * n + w] * b[w * n + j];
            out[i * n + j] = sorted_sum(buf);
        }
    return out;
}

}  // namespace detail

// Random-walk encoding: entry (v, i) is the i-step return probability of the
// walk with transition matrix A D^-1. Columns of isolated nodes are zero, so
// their rows come out all zero.
inline PosEncoding rwpe(const Graph& g, size_t p) {
    if (p < 1) throw std::invalid_argument("rwpe: step count must be >= 1");
    const size_t n = g.num_nodes;
    std::vector<double> walk(n * n, 0.0);
    for (size_t v = 0; v < n; ++v) {
        if (g.degrees[v] == 0) continue;
        double inv = 1.0 / static_cast<double>(g.degrees[v]);
        for (size_t u : g.adj[v]) walk[u * n + v] = inv;
    }
    PosEncoding pe;
    pe.kind = PeKind::rwpe;
    pe.rows = n;
    pe.dim = p;
    pe.values.assign(n * p, 0.0);
    std::vector<double> power = walk;
    for (size_t step = 1; step <= p; ++step) {
        for (size_t v = 0; v < n; ++v) pe.values[v * p + (step - 1)] = power[v * n + v];
        if (step < p) power = detail::matmul_sorted(walk, power, n);
    }
    return pe;
}

struct EigDecomposition {
    std::vector<double> eigenvalues;  // ascending
    std::vector<double> vectors;      // n x n row-major; column j pairs with eigenvalue j
};

// Cyclic Jacobi diagonalization of a dense symmetric matrix. Sweeps until
// every off-diagonal magnitude drops below 1e-12, at most 50 sweeps.
inline EigDecomposition sym_eig(const std::vector<double>& m_in, size_t n) {
    if (m_in.size() != n * n) throw std::invalid_argument("sym_eig: bad matrix size");
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j)
            if (std::fabs(m_in[i * n + j] - m_in[j * n + i]) > 1e-10)
                throw std::invalid_argument("sym_eig: matrix not symmetric at (" +
                                            std::to_string(i) + "," + std::to_string(j) + ")");

    std::vector<double> a = m_in;
    std::vector<double> v(n * n, 0.0);
    for (size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

    const double tol = 1e-12;
    bool converged = (n < 2);
    for (int sweep = 0; sweep < 50 && !converged; ++sweep) {
        for (size_t p = 0; p + 1 < n; ++p) {
            for (size_t q = p + 1; q < n; ++q) {
                double apq = a[p * n + q];
                if (std::fabs(apq) <= tol) continue;
                double app = a[p * n + p], aqq = a[q * n + q];
                double tau = (aqq - app) / (2.0 * apq);
                double t = (tau >= 0.0 ? 1.0 : -1.0) /
                           (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = t * c;
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for (size_t i = 0; i < n; ++i) {
                    if (i != p && i != q) {
                        double aip = a[i * n + p], aiq = a[i * n + q];
                        a[i * n + p] = c * aip - s * aiq;
                        a[p * n + i] = a[i * n + p];
                        a[i * n + q] = s * aip + c * aiq;
                        a[q * n + i] = a[i * n + q];
                    }
                    double vip = v[i * n + p], viq = v[i * n + q];
                    v[i * n + p] = c * vip - s * viq;
                    v[i * n + q] = s * vip + c * viq;
                }
            }
        }
        double off = 0.0;
        for (size_t i = 0; i < n; ++i)
            for (size_t j = i + 1; j < n; ++j) off = std::max(off, std::fabs(a[i * n + j]));
        converged = off < tol;
    }
    if (!converged) throw std::runtime_error("sym_eig: no convergence within 50 sweeps");

    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](size_t x, size_t y) { return a[x * n + x] < a[y * n + y]; });
    EigDecomposition out;
    out.eigenvalues.resize(n);
    out.vectors.resize(n * n);
    for (size_t j = 0; j < n; ++j) {
        out.eigenvalues[j] = a[idx[j] * n + idx[j]];
        for (size_t i = 0; i < n; ++i) out.vectors[i * n + j] = v[i * n + idx[j]];
    }
    return out;
}

// Symmetric normalized Laplacian I - D^{-1/2} A D^{-1/2}; isolated nodes get
// a zero D^{-1/2} entry (their diagonal stays 1 from the identity term).
inline std::vector<double> normalized_laplacian(const Graph& g) {
    const size_t n = g.num_nodes;
    std::vector<double> inv_sqrt(n, 0.0);
    for (size_t v = 0; v < n; ++v)
        if (g.degrees[v] > 0) inv_sqrt[v] = 1.0 / std::sqrt(static_cast<double>(g.degrees[v]));
    std::vector<double> lap(n * n, 0.0);
    for (size_t v = 0; v < n; ++v) lap[v * n + v] = 1.0;
    for (const auto& [u, v] : g.edges) {
        double w = inv_sqrt[u] * inv_sqrt[v];
        lap[u * n + v] -= w;
        lap[v * n + u] -= w;
    }
    return lap;
}

namespace detail {

// Deterministic, label-independent sign choice for an eigenvector: prefer the
// orientation whose extreme entry is positive (decided by max+min), falling
// back to the cube sum and finally to the first largest-magnitude entry. Only
// an exactly sign-symmetric value multiset reaches the last fallback.
inline double eigvec_sign(const std::vector<double>& v) {
    double mx = v[0], mn = v[0];
    for (double x : v) {
        mx = std::max(mx, x);
        mn = std::min(mn, x);
    }
    if (std::fabs(mx + mn) > 1e-12) return mx + mn > 0.0 ? 1.0 : -1.0;
    double cubes = 0.0;
    for (double x : v) cubes += x * x * x;
    if (std::fabs(cubes) > 1e-12) return cubes > 0.0 ? 1.0 : -1.0;
    size_t pivot = 0;
    for (size_t i = 1; i < v.size(); ++i)
        if (std::fabs(v[i]) > std::fabs(v[pivot])) pivot = i;
    return v[pivot] < 0.0 ? -1.0 : 1.0;
}

}  // namespace detail

// Laplacian encoding: eigenvectors at sorted indices 1..m (index 0 skipped),
// each with a deterministic sign convention.
inline PosEncoding lap_pe(const Graph& g, size_t m) {
    const size_t n = g.num_nodes;
    if (n == 0 || m > n - 1)
        throw std::invalid_argument("lap_pe: need m <= num_nodes - 1");
    EigDecomposition eig = sym_eig(normalized_laplacian(g), n);
    PosEncoding pe;
    pe.kind = PeKind::lappe;
    pe.rows = n;
    pe.dim = m;
    pe.values.assign(n * m, 0.0);
    std::vector<double> col(n);
    for (size_t j = 0; j < m; ++j) {
        for (size_t i = 0; i < n; ++i) col[i] = eig.vectors[i * n + (j + 1)];
        double sign = detail::eigvec_sign(col);
        for (size_t i = 0; i < n; ++i) pe.values[i * m + j] = sign * col[i];
    }
    return pe;
}

inline PosEncoding no_encoding(const Graph& g) {
    return PosEncoding{PeKind::none, g.num_nodes, 0, {}};
}

// New graph whose node features are [original | encoding].
inline Graph attach_encoding(const Graph& g, const PosEncoding& pe) {
    if (pe.kind == PeKind::none || pe.dim == 0) return g;
    if (pe.rows != g.num_nodes)
        throw std::invalid_argument("attach_encoding: row count mismatch");
    Graph out = g;
    out.feat_dim = g.feat_dim + pe.dim;
    out.node_feats.assign(out.num_nodes * out.feat_dim, 0.0);
    for (size_t v = 0; v < g.num_nodes; ++v) {
        std::copy(g.feat_row(v), g.feat_row(v) + g.feat_dim,
                  out.node_feats.begin() + v * out.feat_dim);
        std::copy(pe.values.begin() + v * pe.dim, pe.values.begin() + (v + 1) * pe.dim,
                  out.node_feats.begin() + v * out.feat_dim + g.feat_dim);
    }
    return out;
}

inline PosEncoding compute_encoding(const Graph& g, PeKind kind, size_t dim) {
    switch (kind) {
        case PeKind::none: return no_encoding(g);
        case PeKind::rwpe: return rwpe(g, dim);
        case PeKind::lappe: return lap_pe(g, dim);
    }
    throw std::invalid_argument("compute_encoding: unknown kind");
}

}  // namespace sat
