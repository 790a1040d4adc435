#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "sat/rng.hpp"

namespace sat {

namespace detail {

inline uint64_t next_seq() {
    static std::atomic<uint64_t> counter{0};
    return ++counter;
}

// Node of the recorded computation. `seq` is the creation stamp; creation
// order is a valid topological order of the tape.
struct TensorNode {
    std::vector<size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool is_leaf = true;
    bool consumed = false;
    uint64_t seq = 0;
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::function<void(TensorNode&)> backprop;

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
    }
};

inline size_t shape_size(const std::vector<size_t>& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const std::vector<size_t>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out + "]";
}

// Sums a multiset of doubles in a canonical (value-sorted) order, so the
// result is bit-identical no matter how the inputs were ordered. Used by the
// aggregation primitives to make message passing exactly permutation
// equivariant.
inline double sorted_sum(std::vector<double>& buf) {
    std::sort(buf.begin(), buf.end());
    double acc = 0.0;
    for (double v : buf) acc += v;
    return acc;
}

}  // namespace detail

// Dense row-major tensor (1-D or 2-D) participating in reverse-mode
// differentiation. Value-semantics handle to a shared tape node.
class Tensor {
public:
    Tensor() = default;

    Tensor(std::vector<size_t> shape, std::vector<double> data, bool requires_grad = false) {
        if (detail::shape_size(shape) != data.size())
            throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                        " does not match shape " + detail::shape_str(shape));
        if (shape.size() > 2)
            throw std::invalid_argument("Tensor: only 1-D and 2-D tensors supported");
        n_ = std::make_shared<detail::TensorNode>();
        n_->shape = std::move(shape);
        n_->value = std::move(data);
        n_->requires_grad = requires_grad;
        n_->seq = detail::next_seq();
        if (requires_grad) n_->ensure_grad();
    }

    static Tensor zeros(std::vector<size_t> shape, bool requires_grad = false) {
        size_t n = detail::shape_size(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static Tensor full(std::vector<size_t> shape, double v, bool requires_grad = false) {
        size_t n = detail::shape_size(shape);
        return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return Tensor({1}, {v}, requires_grad);
    }

    bool defined() const { return n_ != nullptr; }
    const std::vector<size_t>& shape() const { return n_->shape; }
    size_t ndim() const { return n_->shape.size(); }
    size_t size() const { return n_->value.size(); }
    size_t rows() const { return n_->shape.empty() ? 0 : n_->shape[0]; }
    size_t cols() const { return n_->shape.size() == 2 ? n_->shape[1] : (n_->shape.empty() ? 0 : 1); }
    bool is_matrix() const { return n_->shape.size() == 2; }
    bool is_scalar() const { return size() == 1; }

    double item() const {
        if (!is_scalar()) throw std::invalid_argument("Tensor::item: not a scalar");
        return n_->value[0];
    }
    double at(size_t i) const { return n_->value.at(i); }
    double at(size_t i, size_t j) const { return n_->value.at(i * cols() + j); }

    const std::vector<double>& values() const { return n_->value; }

    // In-place mutation is only allowed on leaves (parameters, inputs);
    // op results are immutable.
    std::vector<double>& mutable_values() {
        if (!n_->is_leaf)
            throw std::invalid_argument("Tensor: cannot mutate a non-leaf tensor");
        return n_->value;
    }

    bool requires_grad() const { return n_ && n_->requires_grad; }
    bool is_leaf() const { return n_->is_leaf; }

    std::vector<double>& grad() {
        n_->ensure_grad();
        return n_->grad;
    }
    const std::vector<double>& grad() const {
        n_->ensure_grad();
        return n_->grad;
    }
    void zero_grad() { n_->grad.assign(n_->value.size(), 0.0); }

    // Value copy detached from any tape.
    Tensor detach() const { return Tensor(n_->shape, n_->value, false); }

    // Deep copy as a fresh leaf, preserving requires_grad (grads not copied).
    Tensor clone() const { return Tensor(n_->shape, n_->value, n_->requires_grad); }

    void set_requires_grad(bool rg) {
        if (!n_->is_leaf)
            throw std::invalid_argument("Tensor: requires_grad can only be toggled on leaves");
        n_->requires_grad = rg;
        if (rg) n_->ensure_grad();
    }

    std::shared_ptr<detail::TensorNode> node() const { return n_; }
    explicit Tensor(std::shared_ptr<detail::TensorNode> n) : n_(std::move(n)) {}

private:
    std::shared_ptr<detail::TensorNode> n_;
};

// Named collection of trainable tensors.
using ModelParams = std::map<std::string, Tensor>;

inline void zero_all_grads(ModelParams& params) {
    for (auto& [name, p] : params) p.zero_grad();
}

inline ModelParams clone_params(const ModelParams& params) {
    ModelParams out;
    for (const auto& [name, p] : params) out.emplace(name, p.clone());
    return out;
}

namespace detail {

inline Tensor make_op(std::vector<size_t> shape, std::vector<double> value,
                      std::initializer_list<Tensor> inputs,
                      std::function<void(TensorNode&)> backprop) {
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->is_leaf = false;
    node->seq = next_seq();
    bool needs = false;
    for (const Tensor& t : inputs) needs = needs || t.requires_grad();
    if (needs) {
        node->requires_grad = true;
        for (const Tensor& t : inputs) node->inputs.push_back(t.node());
        node->backprop = std::move(backprop);
    }
    return Tensor(std::move(node));
}

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// primitives
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::check(a.is_matrix() && b.is_matrix(), "matmul: both operands must be 2-D");
    detail::check(a.cols() == b.rows(), "matmul: inner dimensions " +
                                            std::to_string(a.cols()) + " vs " +
                                            std::to_string(b.rows()));
    const size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n, 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (size_t i = 0; i < m; ++i)
        for (size_t l = 0; l < k; ++l) {
            double ail = av[i * k + l];
            if (ail == 0.0) continue;
            const double* brow = bv.data() + l * n;
            double* orow = out.data() + i * n;
            for (size_t j = 0; j < n; ++j) orow[j] += ail * brow[j];
        }
    return detail::make_op({m, n}, std::move(out), {a, b}, [m, k, n](detail::TensorNode& self) {
        auto& A = *self.inputs[0];
        auto& B = *self.inputs[1];
        const auto& dC = self.grad;
        if (A.requires_grad) {
            A.ensure_grad();
            for (size_t i = 0; i < m; ++i)
                for (size_t l = 0; l < k; ++l) {
                    double acc = 0.0;
                    const double* drow = dC.data() + i * n;
                    const double* brow = B.value.data() + l * n;
                    for (size_t j = 0; j < n; ++j) acc += drow[j] * brow[j];
                    A.grad[i * k + l] += acc;
                }
        }
        if (B.requires_grad) {
            B.ensure_grad();
            for (size_t i = 0; i < m; ++i)
                for (size_t l = 0; l < k; ++l) {
                    double ail = A.value[i * k + l];
                    if (ail == 0.0) continue;
                    const double* drow = dC.data() + i * n;
                    double* grow = B.grad.data() + l * n;
                    for (size_t j = 0; j < n; ++j) grow[j] += ail * drow[j];
                }
        }
    });
}

inline Tensor transpose(const Tensor& a) {
    detail::check(a.is_matrix(), "transpose: operand must be 2-D");
    const size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m * n);
    const auto& av = a.values();
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
    return detail::make_op({n, m}, std::move(out), {a}, [m, n](detail::TensorNode& self) {
        auto& A = *self.inputs[0];
        if (!A.requires_grad) return;
        A.ensure_grad();
        for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < n; ++j) A.grad[i * n + j] += self.grad[j * m + i];
    });
}

// Same-shape addition, or row-broadcast of a 1-D bias across a matrix.
inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) {
        std::vector<double> out(a.size());
        for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
        return detail::make_op(a.shape(), std::move(out), {a, b}, [](detail::TensorNode& self) {
            for (auto& in : self.inputs) {
                if (!in->requires_grad) continue;
                in->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
            }
        });
    }
    detail::check(a.is_matrix() && b.ndim() == 1 && b.size() == a.cols(),
                  "add: shapes " + detail::shape_str(a.shape()) + " and " +
                      detail::shape_str(b.shape()) + " are not addable");
    const size_t m = a.rows(), n = a.cols();
    std::vector<double> out(a.size());
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) out[i * n + j] = a.values()[i * n + j] + b.values()[j];
    return detail::make_op({m, n}, std::move(out), {a, b}, [m, n](detail::TensorNode& self) {
        auto& A = *self.inputs[0];
        auto& B = *self.inputs[1];
        if (A.requires_grad) {
            A.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i];
        }
        if (B.requires_grad) {
            B.ensure_grad();
            for (size_t i = 0; i < m; ++i)
                for (size_t j = 0; j < n; ++j) B.grad[j] += self.grad[i * n + j];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check(a.shape() == b.shape(), "sub: shape mismatch");
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    return detail::make_op(a.shape(), std::move(out), {a, b}, [](detail::TensorNode& self) {
        auto& A = *self.inputs[0];
        auto& B = *self.inputs[1];
        if (A.requires_grad) {
            A.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i];
        }
        if (B.requires_grad) {
            B.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) B.grad[i] -= self.grad[i];
        }
    });
}

inline Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = c * a.values()[i];
    return detail::make_op(a.shape(), std::move(out), {a}, [c](detail::TensorNode& self) {
        auto& A = *self.inputs[0];
        if (!A.requires_grad) return;
        A.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += c * self.grad[i];
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check(a.shape() == b.shape(), "mul: shape mismatch");
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    return detail::make_op(a.shape(), std::move(out), {a, b}, [](detail::TensorNode& self) {
        auto& A = *self.inputs[0];
        auto& B = *self.inputs[1];
        if (A.requires_grad) {
            A.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i] * B.value[i];
        }
        if (B.requires_grad) {
            B.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) B.grad[i] += self.grad[i] * A.value[i];
        }
    });
}

// y = s * a where s is a one-element tensor (e.g. a trainable scalar).
inline Tensor mul_scalar(const Tensor& a, const Tensor& s) {
    detail::check(s.size() == 1, "mul_scalar: scale must be a one-element tensor");
    const double sv = s.values()[0];
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = sv * a.values()[i];
    return detail::make_op(a.shape(), std::move(out), {a, s}, [sv](detail::TensorNode& self) {
        auto& A = *self.inputs[0];
        auto& S = *self.inputs[1];
        if (A.requires_grad) {
            A.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += sv * self.grad[i];
        }
        if (S.requires_grad) {
            S.ensure_grad();
            double acc = 0.0;
            for (size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * A.value[i];
            S.grad[0] += acc;
        }
    });
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
    detail::check(!parts.empty(), "concat: empty input list");
    detail::check(axis == 0 || axis == 1, "concat: invalid axis");
    for (const Tensor& t : parts)
        detail::check(t.is_matrix(), "concat: all parts must be 2-D");
    size_t rows = 0, cols = 0;
    if (axis == 0) {
        cols = parts[0].cols();
        for (const Tensor& t : parts) {
            detail::check(t.cols() == cols, "concat: column mismatch");
            rows += t.rows();
        }
    } else {
        rows = parts[0].rows();
        for (const Tensor& t : parts) {
            detail::check(t.rows() == rows, "concat: row mismatch");
            cols += t.cols();
        }
    }
    std::vector<double> out(rows * cols);
    if (axis == 0) {
        size_t off = 0;
        for (const Tensor& t : parts) {
            std::copy(t.values().begin(), t.values().end(), out.begin() + off);
            off += t.size();
        }
    } else {
        size_t coff = 0;
        for (const Tensor& t : parts) {
            size_t tc = t.cols();
            for (size_t i = 0; i < rows; ++i)
                std::copy(t.values().begin() + i * tc, t.values().begin() + (i + 1) * tc,
                          out.begin() + i * cols + coff);
            coff += tc;
        }
    }

    // make_op takes an initializer_list; build the node by hand for a vector.
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = {rows, cols};
    node->value = std::move(out);
    node->is_leaf = false;
    node->seq = detail::next_seq();
    bool needs = false;
    for (const Tensor& t : parts) needs = needs || t.requires_grad();
    if (needs) {
        node->requires_grad = true;
        for (const Tensor& t : parts) node->inputs.push_back(t.node());
        node->backprop = [rows, cols, axis](detail::TensorNode& self) {
            size_t off = 0;
            for (auto& in : self.inputs) {
                if (axis == 0) {
                    if (in->requires_grad) {
                        in->ensure_grad();
                        for (size_t i = 0; i < in->value.size(); ++i)
                            in->grad[i] += self.grad[off + i];
                    }
                    off += in->value.size();
                } else {
                    size_t tc = in->shape[1];
                    if (in->requires_grad) {
                        in->ensure_grad();
                        for (size_t i = 0; i < rows; ++i)
                            for (size_t j = 0; j < tc; ++j)
                                in->grad[i * tc + j] += self.grad[i * cols + off + j];
                    }
                    off += tc;
                }
            }
        };
    }
    return Tensor(std::move(node));
}

inline Tensor row_gather(const Tensor& a, const std::vector<size_t>& indices) {
    detail::check(a.is_matrix(), "row_gather: operand must be 2-D");
    const size_t n = a.cols();
    for (size_t idx : indices)
        detail::check(idx < a.rows(), "row_gather: index out of range");
    std::vector<double> out(indices.size() * n);
    for (size_t i = 0; i < indices.size(); ++i)
        std::copy(a.values().begin() + indices[i] * n, a.values().begin() + (indices[i] + 1) * n,
                  out.begin() + i * n);
    return detail::make_op({indices.size(), n}, std::move(out), {a},
                           [indices, n](detail::TensorNode& self) {
                               auto& A = *self.inputs[0];
                               if (!A.requires_grad) return;
                               A.ensure_grad();
                               for (size_t i = 0; i < indices.size(); ++i)
                                   for (size_t j = 0; j < n; ++j)
                                       A.grad[indices[i] * n + j] += self.grad[i * n + j];
                           });
}

// Sums rows of `a` into `num_segments` buckets. Accumulation is value-sorted
// per output coordinate, which makes the result independent of the input row
// order (exact permutation equivariance for message passing and pooling).
inline Tensor segment_sum(const Tensor& a, const std::vector<size_t>& segment_ids,
                          size_t num_segments) {
    detail::check(a.is_matrix(), "segment_sum: operand must be 2-D");
    detail::check(segment_ids.size() == a.rows(), "segment_sum: segment id count mismatch");
    for (size_t s : segment_ids)
        detail::check(s < num_segments, "segment_sum: segment id out of range");
    const size_t n = a.cols();
    std::vector<std::vector<size_t>> members(num_segments);
    for (size_t i = 0; i < segment_ids.size(); ++i) members[segment_ids[i]].push_back(i);
    std::vector<double> out(num_segments * n, 0.0);
    std::vector<double> buf;
    for (size_t s = 0; s < num_segments; ++s) {
        for (size_t j = 0; j < n; ++j) {
            buf.clear();
            for (size_t i : members[s]) buf.push_back(a.values()[i * n + j]);
            out[s * n + j] = detail::sorted_sum(buf);
        }
    }
    return detail::make_op({num_segments, n}, std::move(out), {a},
                           [segment_ids, n](detail::TensorNode& self) {
                               auto& A = *self.inputs[0];
                               if (!A.requires_grad) return;
                               A.ensure_grad();
                               for (size_t i = 0; i < segment_ids.size(); ++i)
                                   for (size_t j = 0; j < n; ++j)
                                       A.grad[i * n + j] += self.grad[segment_ids[i] * n + j];
                           });
}

inline Tensor softmax_rows(const Tensor& a) {
    detail::check(a.is_matrix(), "softmax_rows: operand must be 2-D");
    const size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m * n);
    for (size_t i = 0; i < m; ++i) {
        const double* row = a.values().data() + i * n;
        double mx = row[0];
        for (size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (size_t j = 0; j < n; ++j) {
            out[i * n + j] = std::exp(row[j] - mx);
            sum += out[i * n + j];
        }
        for (size_t j = 0; j < n; ++j) out[i * n + j] /= sum;
    }
    return detail::make_op({m, n}, std::move(out), {a}, [m, n](detail::TensorNode& self) {
        auto& A = *self.inputs[0];
        if (!A.requires_grad) return;
        A.ensure_grad();
        for (size_t i = 0; i < m; ++i) {
            const double* y = self.value.data() + i * n;
            const double* dy = self.grad.data() + i * n;
            double dot = 0.0;
            for (size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
            for (size_t j = 0; j < n; ++j) A.grad[i * n + j] += y[j] * (dy[j] - dot);
        }
    });
}

inline Tensor log_softmax_rows(const Tensor& a) {
    detail::check(a.is_matrix(), "log_softmax_rows: operand must be 2-D");
    const size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m * n);
    for (size_t i = 0; i < m; ++i) {
        const double* row = a.values().data() + i * n;
        double mx = row[0];
        for (size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (size_t j = 0; j < n; ++j) sum += std::exp(row[j] - mx);
        double lse = mx + std::log(sum);
        for (size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lse;
    }
    return detail::make_op({m, n}, std::move(out), {a}, [m, n](detail::TensorNode& self) {
        auto& A = *self.inputs[0];
        if (!A.requires_grad) return;
        A.ensure_grad();
        for (size_t i = 0; i < m; ++i) {
            const double* y = self.value.data() + i * n;
            const double* dy = self.grad.data() + i * n;
            double total = 0.0;
            for (size_t j = 0; j < n; ++j) total += dy[j];
            for (size_t j = 0; j < n; ++j)
                A.grad[i * n + j] += dy[j] - std::exp(y[j]) * total;
        }
    });
}

inline Tensor relu(const Tensor& a) {
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
    return detail::make_op(a.shape(), std::move(out), {a}, [](detail::TensorNode& self) {
        auto& A = *self.inputs[0];
        if (!A.requires_grad) return;
        A.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (A.value[i] > 0.0) A.grad[i] += self.grad[i];
    });
}

inline Tensor abs_val(const Tensor& a) {
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(a.values()[i]);
    return detail::make_op(a.shape(), std::move(out), {a}, [](detail::TensorNode& self) {
        auto& A = *self.inputs[0];
        if (!A.requires_grad) return;
        A.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            double x = A.value[i];
            if (x > 0.0)
                A.grad[i] += self.grad[i];
            else if (x < 0.0)
                A.grad[i] -= self.grad[i];
        }
    });
}

// Row-wise layer normalization with learnable gain and bias.
inline Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
    detail::check(a.is_matrix(), "layer_norm: operand must be 2-D");
    const size_t m = a.rows(), n = a.cols();
    detail::check(gain.ndim() == 1 && gain.size() == n, "layer_norm: gain size mismatch");
    detail::check(bias.ndim() == 1 && bias.size() == n, "layer_norm: bias size mismatch");
    std::vector<double> out(m * n);
    std::vector<double> xhat(m * n);
    std::vector<double> inv_std(m);
    for (size_t i = 0; i < m; ++i) {
        const double* row = a.values().data() + i * n;
        double mean = 0.0;
        for (size_t j = 0; j < n; ++j) mean += row[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<double>(n);
        double inv = 1.0 / std::sqrt(var + eps);
        inv_std[i] = inv;
        for (size_t j = 0; j < n; ++j) {
            xhat[i * n + j] = (row[j] - mean) * inv;
            out[i * n + j] = gain.values()[j] * xhat[i * n + j] + bias.values()[j];
        }
    }
    return detail::make_op(
        {m, n}, std::move(out), {a, gain, bias},
        [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::TensorNode& self) {
            auto& A = *self.inputs[0];
            auto& G = *self.inputs[1];
            auto& B = *self.inputs[2];
            if (G.requires_grad) {
                G.ensure_grad();
                for (size_t i = 0; i < m; ++i)
                    for (size_t j = 0; j < n; ++j)
                        G.grad[j] += self.grad[i * n + j] * xhat[i * n + j];
            }
            if (B.requires_grad) {
                B.ensure_grad();
                for (size_t i = 0; i < m; ++i)
                    for (size_t j = 0; j < n; ++j) B.grad[j] += self.grad[i * n + j];
            }
            if (A.requires_grad) {
                A.ensure_grad();
                for (size_t i = 0; i < m; ++i) {
                    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                    for (size_t j = 0; j < n; ++j) {
                        double dxh = self.grad[i * n + j] * G.value[j];
                        mean_dxhat += dxh;
                        mean_dxhat_xhat += dxh * xhat[i * n + j];
                    }
                    mean_dxhat /= static_cast<double>(n);
                    mean_dxhat_xhat /= static_cast<double>(n);
                    for (size_t j = 0; j < n; ++j) {
                        double dxh = self.grad[i * n + j] * G.value[j];
                        A.grad[i * n + j] +=
                            inv_std[i] * (dxh - mean_dxhat - xhat[i * n + j] * mean_dxhat_xhat);
                    }
                }
            }
        });
}

// Inverted dropout with a counter-based mask: the mask is a pure function of
// (seed, element index), so a repeated forward pass with the same seed is
// bit-identical. rate 0 or train=false is the identity.
inline Tensor dropout(const Tensor& a, double rate, bool train, uint64_t seed) {
    detail::check(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
    if (!train || rate == 0.0) return a;
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(a.size());
    for (size_t i = 0; i < mask.size(); ++i)
        mask[i] = u64_to_unit(mix64(seed, i)) < rate ? 0.0 : keep_scale;
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * mask[i];
    return detail::make_op(a.shape(), std::move(out), {a},
                           [mask = std::move(mask)](detail::TensorNode& self) {
                               auto& A = *self.inputs[0];
                               if (!A.requires_grad) return;
                               A.ensure_grad();
                               for (size_t i = 0; i < self.grad.size(); ++i)
                                   A.grad[i] += self.grad[i] * mask[i];
                           });
}

// y[i,:] = coeffs[i] * a[i,:] with constant (non-differentiable) coefficients.
inline Tensor row_scale(const Tensor& a, const std::vector<double>& coeffs) {
    detail::check(a.is_matrix(), "row_scale: operand must be 2-D");
    detail::check(coeffs.size() == a.rows(), "row_scale: coefficient count mismatch");
    const size_t n = a.cols();
    std::vector<double> out(a.size());
    for (size_t i = 0; i < a.rows(); ++i)
        for (size_t j = 0; j < n; ++j) out[i * n + j] = coeffs[i] * a.values()[i * n + j];
    return detail::make_op(a.shape(), std::move(out), {a},
                           [coeffs, n](detail::TensorNode& self) {
                               auto& A = *self.inputs[0];
                               if (!A.requires_grad) return;
                               A.ensure_grad();
                               for (size_t i = 0; i < coeffs.size(); ++i)
                                   for (size_t j = 0; j < n; ++j)
                                       A.grad[i * n + j] += coeffs[i] * self.grad[i * n + j];
                           });
}

inline Tensor sum_all(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    return detail::make_op({1}, {acc}, {a}, [](detail::TensorNode& self) {
        auto& A = *self.inputs[0];
        if (!A.requires_grad) return;
        A.ensure_grad();
        for (size_t i = 0; i < A.grad.size(); ++i) A.grad[i] += self.grad[0];
    });
}

inline Tensor mean_all(const Tensor& a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

// ---------------------------------------------------------------------------
// reverse pass
// ---------------------------------------------------------------------------

// Runs the adjoints of everything `loss` depends on, in reverse construction
// order, accumulating (+=) into the grads of requires_grad leaves. The
// visited tape is consumed: saved inputs are released and a second backward
// through any of it throws.
inline void backward(const Tensor& loss) {
    detail::check(loss.defined(), "backward: undefined tensor");
    detail::check(loss.size() == 1, "backward: loss must be scalar, got shape " +
                                        detail::shape_str(loss.shape()));
    auto root = loss.node();
    if (root->consumed) throw std::runtime_error("backward: tape already consumed");
    if (!root->requires_grad) return;  // constant loss: all gradients are zero

    std::vector<std::shared_ptr<detail::TensorNode>> order;
    std::vector<std::shared_ptr<detail::TensorNode>> stack{root};
    std::unordered_set<const detail::TensorNode*> visited{root.get()};
    while (!stack.empty()) {
        auto node = stack.back();
        stack.pop_back();
        order.push_back(node);
        for (auto& in : node->inputs) {
            if (in->is_leaf || visited.count(in.get())) continue;
            if (in->consumed)
                throw std::runtime_error("backward: tape already consumed");
            visited.insert(in.get());
            stack.push_back(in);
        }
    }
    for (auto& node : order)
        if (!node->is_leaf) node->consumed = true;

    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a->seq > b->seq; });

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto& node : order) {
        if (!node->backprop) continue;
        node->ensure_grad();
        node->backprop(*node);
        node->backprop = nullptr;  // release saved state
        if (!node->is_leaf) node->inputs.clear();
    }
}

// ---------------------------------------------------------------------------
// gradient checking
// ---------------------------------------------------------------------------

// Compares the reverse-mode gradient of f against central differences over
// every parameter coordinate. Returns the max of
// |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
inline double grad_check(const std::function<Tensor(ModelParams&)>& f, ModelParams& params,
                         double eps) {
    detail::check(eps > 0.0, "grad_check: eps must be positive");
    zero_all_grads(params);
    Tensor loss = f(params);
    detail::check(loss.size() == 1, "grad_check: f must return a scalar");
    backward(loss);

    std::map<std::string, std::vector<double>> ad_grads;
    for (auto& [name, p] : params)
        if (p.requires_grad()) ad_grads[name] = p.grad();

    // Finite-difference passes do not need a tape; drop requires_grad so the
    // forward evaluations skip adjoint bookkeeping entirely.
    std::vector<std::pair<std::string, bool>> saved;
    for (auto& [name, p] : params) {
        saved.emplace_back(name, p.requires_grad());
        p.set_requires_grad(false);
    }

    double max_err = 0.0;
    for (auto& [name, g_ad] : ad_grads) {
        Tensor& p = params.at(name);
        auto& vals = p.mutable_values();
        for (size_t i = 0; i < vals.size(); ++i) {
            double orig = vals[i];
            vals[i] = orig + eps;
            double lp = f(params).item();
            vals[i] = orig - eps;
            double lm = f(params).item();
            vals[i] = orig;
            double g_fd = (lp - lm) / (2.0 * eps);
            if (!std::isfinite(g_fd) || !std::isfinite(g_ad[i]))
                throw std::runtime_error("grad_check: non-finite value at " + name);
            double denom = std::max({1.0, std::fabs(g_ad[i]), std::fabs(g_fd)});
            max_err = std::max(max_err, std::fabs(g_ad[i] - g_fd) / denom);
        }
    }
    for (auto& [name, rg] : saved) params.at(name).set_requires_grad(rg);
    return max_err;
}

}  // namespace sat
