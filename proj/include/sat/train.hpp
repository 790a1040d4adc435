#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sat/datasets.hpp"
#include "sat/model.hpp"
#include "sat/rng.hpp"
#include "sat/tensor.hpp"

namespace sat {

enum class LossKind { l1, cross_entropy };
enum class Schedule { transformer_inv_sqrt, cosine };

inline const char* loss_kind_name(LossKind k) {
    return k == LossKind::l1 ? "l1" : "cross-entropy";
}
inline const char* schedule_name(Schedule s) {
    return s == Schedule::transformer_inv_sqrt ? "transformer-inv-sqrt" : "cosine";
}

struct TrainConfig {
    double base_lr = 1e-3;
    size_t batch_size = 128;
    size_t epochs = 100;
    size_t warmup_steps = 5000;
    double weight_decay = 1e-5;
    Schedule schedule = Schedule::transformer_inv_sqrt;
    uint64_t seed = 0;
    LossKind loss = LossKind::l1;
    size_t total_steps = 0;  // cosine horizon; 0 = derived from epochs x batches

    void validate() const {
        if (base_lr < 0 || batch_size == 0 || epochs == 0 || warmup_steps == 0)
            throw std::invalid_argument(
                "TrainConfig: batch size, epochs and warmup must be positive");
        if (weight_decay < 0) throw std::invalid_argument("TrainConfig: negative weight decay");
    }
};

struct EpochStats {
    double train_loss = 0.0;
    double val_metric = 0.0;
    double lr = 0.0;
    double wall_seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    size_t best_epoch = 0;
    double best_val_metric = 0.0;
};

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

inline Tensor l1_loss(const Tensor& pred, const std::vector<double>& target) {
    if (pred.size() != target.size())
        throw std::invalid_argument("l1_loss: prediction/target size mismatch");
    Tensor t(pred.shape(), target);
    return mean_all(abs_val(sub(pred, t)));
}

// Mean cross-entropy of softmax logits against integer class targets, one
// target per logit row.
inline Tensor cross_entropy_loss(const Tensor& logits, const std::vector<int>& classes) {
    if (!logits.is_matrix() || logits.rows() != classes.size())
        throw std::invalid_argument("cross_entropy_loss: one class index per logit row required");
    const size_t c = logits.cols();
    std::vector<double> onehot(logits.size(), 0.0);
    for (size_t i = 0; i < classes.size(); ++i) {
        if (classes[i] < 0 || static_cast<size_t>(classes[i]) >= c)
            throw std::invalid_argument("cross_entropy_loss: class index " +
                                        std::to_string(classes[i]) + " out of range");
        onehot[i * c + static_cast<size_t>(classes[i])] = 1.0;
    }
    Tensor mask(logits.shape(), std::move(onehot));
    return scale(sum_all(mul(log_softmax_rows(logits), mask)),
                 -1.0 / static_cast<double>(classes.size()));
}

inline Tensor loss_for_sample(const Tensor& pred, const GraphSample& sample, LossKind kind) {
    if (kind == LossKind::l1) {
        if (!std::holds_alternative<double>(sample.target))
            throw std::invalid_argument("loss: l1 needs a scalar target");
        return l1_loss(pred, std::vector<double>(pred.size(), std::get<double>(sample.target)));
    }
    if (std::holds_alternative<int>(sample.target))
        return cross_entropy_loss(pred, {std::get<int>(sample.target)});
    if (std::holds_alternative<std::vector<int>>(sample.target))
        return cross_entropy_loss(pred, std::get<std::vector<int>>(sample.target));
    throw std::invalid_argument("loss: cross-entropy needs class targets");
}

// ---------------------------------------------------------------------------
// optimizer and schedule
// ---------------------------------------------------------------------------

struct AdamWState {
    size_t step = 0;
    std::map<std::string, std::vector<double>> m, v;
};

// Decoupled weight decay: theta -= lr * (m^ / (sqrt(v^) + eps) + wd * theta).
inline void adamw_step(ModelParams& params, AdamWState& state, double lr, double weight_decay,
                       double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (auto& [name, p] : params) {
        if (!p.requires_grad()) continue;
        const auto& g = p.grad();
        auto& theta = p.mutable_values();
        if (g.size() != theta.size())
            throw std::invalid_argument("adamw_step: gradient shape mismatch for " + name);
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.empty()) m.assign(theta.size(), 0.0);
        if (v.empty()) v.assign(theta.size(), 0.0);
        if (m.size() != theta.size())
            throw std::invalid_argument("adamw_step: state shape mismatch for " + name);
        for (size_t i = 0; i < theta.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            double m_hat = m[i] / bc1;
            double v_hat = v[i] / bc2;
            theta[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + weight_decay * theta[i]);
        }
    }
}

// Learning rate at a 1-based optimizer step. The inverse-sqrt schedule is
// base_lr * min(step/warmup, sqrt(warmup/step)); cosine warms up linearly and
// then decays by 0.5*(1+cos(pi*progress)) toward total_steps.
inline double lr_at(size_t step, const TrainConfig& cfg) {
    if (step < 1) throw std::invalid_argument("lr_at: steps are 1-based");
    const double s = static_cast<double>(step);
    const double w = static_cast<double>(cfg.warmup_steps);
    if (cfg.schedule == Schedule::transformer_inv_sqrt)
        return cfg.base_lr * std::min(s / w, std::sqrt(w / s));
    if (step <= cfg.warmup_steps) return cfg.base_lr * s / w;
    const double total = static_cast<double>(std::max(cfg.total_steps, cfg.warmup_steps + 1));
    double progress = std::min(1.0, (s - w) / (total - w));
    return cfg.base_lr * 0.5 * (1.0 + std::cos(3.141592653589793238462643383 * progress));
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

struct Metrics {
    TaskKind task = TaskKind::regression;
    double mae = 0.0;
    double accuracy = 0.0;
    std::vector<double> per_class_accuracy;
    size_t count = 0;
};

// argmax with a deterministic tie-break: the lowest index wins
inline size_t argmax_row(const std::vector<double>& v, size_t offset, size_t n) {
    size_t best = 0;
    for (size_t j = 1; j < n; ++j)
        if (v[offset + j] > v[offset + best]) best = j;
    return best;
}

inline Metrics evaluate_on(const Dataset& ds, const std::vector<size_t>& indices,
                           const ModelParams& params, const SatConfig& cfg) {
    Metrics m;
    m.task = ds.task;
    if (ds.task == TaskKind::regression) {
        double total = 0.0;
        size_t n = 0;
        for (size_t i : indices) {
            ForwardResult r = forward(ds.samples[i].graph, cfg, params, false);
            double y = std::get<double>(ds.samples[i].target);
            for (size_t j = 0; j < r.prediction.size(); ++j)
                total += std::fabs(r.prediction.values()[j] - y);
            n += r.prediction.size();
        }
        m.mae = n ? total / static_cast<double>(n) : 0.0;
        m.count = indices.size();
        return m;
    }
    size_t classes = std::max<size_t>(ds.num_classes, 1);
    std::vector<size_t> correct(classes, 0), seen(classes, 0);
    for (size_t i : indices) {
        ForwardResult r = forward(ds.samples[i].graph, cfg, params, false);
        const auto& logits = r.prediction;
        if (ds.task == TaskKind::graph_class) {
            int y = std::get<int>(ds.samples[i].target);
            size_t pred = argmax_row(logits.values(), 0, logits.cols());
            ++seen[static_cast<size_t>(y)];
            if (pred == static_cast<size_t>(y)) ++correct[static_cast<size_t>(y)];
        } else {
            const auto& ys = std::get<std::vector<int>>(ds.samples[i].target);
            for (size_t v = 0; v < ys.size(); ++v) {
                size_t pred = argmax_row(logits.values(), v * logits.cols(), logits.cols());
                ++seen[static_cast<size_t>(ys[v])];
                if (pred == static_cast<size_t>(ys[v])) ++correct[static_cast<size_t>(ys[v])];
            }
        }
    }
    size_t total_correct = 0, total_seen = 0;
    m.per_class_accuracy.resize(classes, 0.0);
    for (size_t c = 0; c < classes; ++c) {
        total_correct += correct[c];
        total_seen += seen[c];
        m.per_class_accuracy[c] =
            seen[c] ? static_cast<double>(correct[c]) / static_cast<double>(seen[c]) : 0.0;
    }
    m.accuracy = total_seen ? static_cast<double>(total_correct) / static_cast<double>(total_seen) : 0.0;
    m.count = indices.size();
    return m;
}

// MAE on regression, accuracy on classification; runs over the test split
// when one is set, otherwise over all samples.
inline Metrics evaluate(const Dataset& ds, const ModelParams& params, const SatConfig& cfg) {
    if (!ds.test_idx.empty()) return evaluate_on(ds, ds.test_idx, params, cfg);
    std::vector<size_t> all(ds.samples.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = i;
    return evaluate_on(ds, all, params, cfg);
}

// lower-is-better for MAE, higher-is-better for accuracy
inline bool metric_improved(TaskKind task, double candidate, double best) {
    return task == TaskKind::regression ? candidate < best : candidate > best;
}

inline double metric_value(const Metrics& m) {
    return m.task == TaskKind::regression ? m.mae : m.accuracy;
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

struct TrainResult {
    ModelParams best_params;
    TrainHistory history;
};

// Mini-batch training: graphs are processed individually and gradients
// averaged per batch. Deterministic given tcfg.seed (timing aside); the
// parameters achieving the best validation metric are retained.
inline TrainResult train(const Dataset& ds, const SatConfig& cfg, TrainConfig tcfg) {
    cfg.validate();
    tcfg.validate();
    if (ds.samples.empty()) throw std::invalid_argument("train: empty dataset");
    if (ds.train_idx.empty())
        throw std::invalid_argument("train: dataset has no training split");

    const size_t batches_per_epoch =
        (ds.train_idx.size() + tcfg.batch_size - 1) / tcfg.batch_size;
    if (tcfg.total_steps == 0) tcfg.total_steps = tcfg.epochs * batches_per_epoch;

    ModelParams params = init_params(cfg, ds.feat_dim, ds.edge_feat_dim, tcfg.seed);
    AdamWState opt;
    TrainResult result;
    result.history.best_val_metric =
        ds.task == TaskKind::regression ? std::numeric_limits<double>::infinity() : -1.0;

    size_t step = 0;
    double current_lr = 0.0;
    for (size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        std::vector<size_t> order = ds.train_idx;
        Rng shuffle_rng(mix64(tcfg.seed, 0xe90c4, epoch));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        size_t batch_count = 0;
        for (size_t start = 0; start < order.size(); start += tcfg.batch_size) {
            size_t stop = std::min(order.size(), start + tcfg.batch_size);
            zero_all_grads(params);
            Tensor batch_loss;
            for (size_t i = start; i < stop; ++i) {
                uint64_t drop_seed = mix64(mix64(tcfg.seed, 0xd307), epoch * 1000003 + i);
                ForwardResult r = forward(ds.samples[order[i]].graph, cfg, params, true, drop_seed);
                Tensor l = loss_for_sample(r.prediction, ds.samples[order[i]], tcfg.loss);
                batch_loss = batch_loss.defined() ? add(batch_loss, l) : l;
            }
            batch_loss = scale(batch_loss, 1.0 / static_cast<double>(stop - start));
            double lv = batch_loss.item();
            if (!std::isfinite(lv))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(batch_count));
            backward(batch_loss);
            ++step;
            current_lr = lr_at(step, tcfg);
            adamw_step(params, opt, current_lr, tcfg.weight_decay);
            epoch_loss += lv;
            ++batch_count;
        }

        Metrics val = evaluate_on(ds, ds.val_idx, params, cfg);
        double val_metric = metric_value(val);
        auto t1 = std::chrono::steady_clock::now();

        EpochStats stats;
        stats.train_loss = epoch_loss / static_cast<double>(std::max<size_t>(batch_count, 1));
        stats.val_metric = val_metric;
        stats.lr = current_lr;
        stats.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
        result.history.epochs.push_back(stats);

        if (ds.val_idx.empty() ||
            metric_improved(ds.task, val_metric, result.history.best_val_metric)) {
            result.history.best_val_metric = val_metric;
            result.history.best_epoch = epoch;
            result.best_params = clone_params(params);
        }
    }
    if (result.best_params.empty()) result.best_params = std::move(params);
    return result;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------
// Layout: magic "SATCKPT", u32 version, u64 config-JSON length + bytes, u64
// tensor count, then per tensor: u64 name length + name, u32 rank, u64 dims,
// raw little-endian f64 payload.

constexpr uint32_t kCheckpointVersion = 1;
constexpr char kCheckpointMagic[8] = "SATCKPT";  // 7 chars + NUL, 7 written

namespace detail {

template <class T>
inline void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
inline T read_pod(std::istream& in, const std::string& what) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated while reading " + what);
    return v;
}

}  // namespace detail

// `config_json` is the model configuration serialized as canonical JSON
// (sorted keys); see config_io.hpp.
inline void save_checkpoint(const ModelParams& params, const std::string& config_json,
                            const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    out.write(kCheckpointMagic, 7);
    detail::write_pod<uint32_t>(out, kCheckpointVersion);
    detail::write_pod<uint64_t>(out, config_json.size());
    out.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
    detail::write_pod<uint64_t>(out, params.size());
    for (const auto& [name, p] : params) {
        detail::write_pod<uint64_t>(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_pod<uint32_t>(out, static_cast<uint32_t>(p.shape().size()));
        for (size_t d : p.shape()) detail::write_pod<uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(p.values().data()),
                  static_cast<std::streamsize>(p.values().size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("checkpoint: write error in " + path);
}

struct Checkpoint {
    ModelParams params;
    std::string config_json;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[7];
    in.read(magic, 7);
    if (!in || std::memcmp(magic, kCheckpointMagic, 7) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    uint32_t version = detail::read_pod<uint32_t>(in, "version");
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    uint64_t cfg_len = detail::read_pod<uint64_t>(in, "config length");
    Checkpoint ck;
    ck.config_json.resize(cfg_len);
    in.read(ck.config_json.data(), static_cast<std::streamsize>(cfg_len));
    if (!in) throw std::runtime_error("checkpoint: truncated while reading config");
    uint64_t count = detail::read_pod<uint64_t>(in, "tensor count");
    for (uint64_t t = 0; t < count; ++t) {
        uint64_t name_len = detail::read_pod<uint64_t>(in, "tensor name length");
        std::string name(name_len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_len));
        if (!in) throw std::runtime_error("checkpoint: truncated while reading tensor name");
        uint32_t rank = detail::read_pod<uint32_t>(in, "tensor rank");
        std::vector<size_t> shape(rank);
        size_t total = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            shape[d] = detail::read_pod<uint64_t>(in, "tensor dim");
            total *= shape[d];
        }
        std::vector<double> data(total);
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(total * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint: truncated while reading tensor data");
        ck.params.emplace(std::move(name), Tensor(std::move(shape), std::move(data), true));
    }
    return ck;
}

}  // namespace sat
