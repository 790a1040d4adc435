#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "sat/datasets.hpp"
#include "sat/train.hpp"

using namespace sat;
using Catch::Approx;

namespace {

SatConfig tiny_cfg(TaskKind task = TaskKind::regression, size_t out_dim = 1) {
    SatConfig cfg;
    cfg.num_layers = 1;
    cfg.hidden_dim = 8;
    cfg.num_heads = 2;
    cfg.k = 1;
    cfg.extractor = ExtractorStrategy::subtree;
    cfg.gnn = GnnKind::gin;
    cfg.readout = task == TaskKind::node_class ? Readout::none : Readout::mean;
    cfg.task = task;
    cfg.output_dim = out_dim;
    return cfg;
}

std::string temp_path(const std::string& name) {
    return std::string("/tmp/sat_test_") + name;
}

}  // namespace

TEST_CASE("losses: fixtures") {
    CHECK(l1_loss(Tensor({1, 1}, {3.0}), {3.0}).item() == 0.0);
    CHECK(l1_loss(Tensor({1, 2}, {1.0, 2.0}), {0.0, 4.0}).item() == 1.5);
    double ce = cross_entropy_loss(Tensor({1, 2}, {0.3, 0.3}), {0}).item();
    CHECK(ce == Approx(std::log(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(cross_entropy_loss(Tensor({1, 2}, {0.0, 0.0}), {2}),
                    std::invalid_argument);
    CHECK_THROWS_AS(cross_entropy_loss(Tensor({1, 2}, {0.0, 0.0}), {-1}),
                    std::invalid_argument);
    CHECK_THROWS_AS(l1_loss(Tensor({1, 2}, {0.0, 0.0}), {1.0}), std::invalid_argument);
}

TEST_CASE("adamw: first-step magnitude and decay-only behaviour") {
    ModelParams params;
    params.emplace("p", Tensor({1}, {1.0}, true));
    AdamWState state;

    params.at("p").grad()[0] = 1.0;
    adamw_step(params, state, 0.1, 0.0);
    // bias-corrected m and v are both 1 after one unit-gradient step
    CHECK(std::fabs(params.at("p").values()[0] - 0.9) < 1e-8);

    ModelParams frozen;
    frozen.emplace("p", Tensor({1}, {2.0}, true));
    AdamWState s2;
    adamw_step(frozen, s2, 0.1, 0.0);  // zero gradient
    CHECK(frozen.at("p").values()[0] == 2.0);

    ModelParams decayed;
    decayed.emplace("p", Tensor({1}, {2.0}, true));
    AdamWState s3;
    adamw_step(decayed, s3, 1.0, 0.1);  // zero gradient, pure decoupled decay
    CHECK(decayed.at("p").values()[0] == Approx(1.8).margin(1e-12));
}

TEST_CASE("adamw: matches an independent scalar reimplementation") {
    Rng rng(3);
    ModelParams params;
    params.emplace("a", Tensor({3}, {0.5, -0.2, 0.9}, true));
    AdamWState state;

    // from-scratch oracle
    std::vector<double> theta = {0.5, -0.2, 0.9}, m(3, 0.0), v(3, 0.0);
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.01, wd = 0.02;

    for (int step = 1; step <= 50; ++step) {
        std::vector<double> g(3);
        for (double& x : g) x = rng.normal();
        for (size_t i = 0; i < 3; ++i) params.at("a").grad()[i] = g[i];
        adamw_step(params, state, lr, wd);
        zero_all_grads(params);

        for (size_t i = 0; i < 3; ++i) {
            m[i] = b1 * m[i] + (1 - b1) * g[i];
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
            double mh = m[i] / (1 - std::pow(b1, step));
            double vh = v[i] / (1 - std::pow(b2, step));
            theta[i] -= lr * (mh / (std::sqrt(vh) + eps) + wd * theta[i]);
        }
        for (size_t i = 0; i < 3; ++i)
            CHECK(std::fabs(params.at("a").values()[i] - theta[i]) < 1e-12);
    }
}

TEST_CASE("lr_at: warmup meeting point, inverse-sqrt tail, cosine tail") {
    TrainConfig cfg;
    cfg.base_lr = 0.4;
    cfg.warmup_steps = 100;
    cfg.schedule = Schedule::transformer_inv_sqrt;
    CHECK(lr_at(100, cfg) == Approx(0.4));
    CHECK(lr_at(400, cfg) == Approx(0.2));  // sqrt(100/400) = 1/2
    CHECK(lr_at(50, cfg) == Approx(0.2));

    // continuity at the warmup boundary
    CHECK(std::fabs(lr_at(99, cfg) - lr_at(100, cfg)) < 0.41 * 2.0 / 100.0);
    CHECK(std::fabs(lr_at(101, cfg) - lr_at(100, cfg)) < 0.41 * 2.0 / 100.0);

    cfg.schedule = Schedule::cosine;
    cfg.total_steps = 1000;
    CHECK(lr_at(100, cfg) == Approx(0.4));
    CHECK(lr_at(1000, cfg) == Approx(0.0).margin(1e-12));
    CHECK(std::fabs(lr_at(101, cfg) - lr_at(100, cfg)) < 0.41 * 4.0 / 900.0);
    CHECK_THROWS_AS(lr_at(0, cfg), std::invalid_argument);
}

TEST_CASE("train: a wide enough model memorizes one sample") {
    Dataset ds = gen_triangle_count_regression(1, 8, 0.4, 99);
    ds.train_idx = {0};
    ds.val_idx = {0};

    SatConfig cfg = tiny_cfg();
    cfg.hidden_dim = 16;
    cfg.num_heads = 4;
    TrainConfig tcfg;
    tcfg.base_lr = 3e-3;
    tcfg.batch_size = 1;
    tcfg.epochs = 300;
    tcfg.warmup_steps = 20;
    tcfg.weight_decay = 0.0;
    tcfg.seed = 5;
    tcfg.loss = LossKind::l1;
    TrainResult result = train(ds, cfg, tcfg);
    double final_loss = result.history.epochs.back().train_loss;
    CHECK(result.history.best_val_metric < 1e-2);
    CHECK(final_loss < 1.0);
}

TEST_CASE("train: same seed gives bit-identical trajectories") {
    Dataset ds = gen_triangle_count_regression(16, 8, 0.35, 7);
    ds = split(std::move(ds), {0.75, 0.25, 0.0}, 11);

    SatConfig cfg = tiny_cfg();
    cfg.dropout = 0.2;  // exercise the seeded mask path
    TrainConfig tcfg;
    tcfg.base_lr = 1e-3;
    tcfg.batch_size = 4;
    tcfg.epochs = 4;
    tcfg.warmup_steps = 5;
    tcfg.seed = 123;

    TrainResult a = train(ds, cfg, tcfg);
    TrainResult b = train(ds, cfg, tcfg);
    REQUIRE(a.history.epochs.size() == b.history.epochs.size());
    for (size_t e = 0; e < a.history.epochs.size(); ++e) {
        CHECK(a.history.epochs[e].train_loss == b.history.epochs[e].train_loss);
        CHECK(a.history.epochs[e].val_metric == b.history.epochs[e].val_metric);
        CHECK(a.history.epochs[e].lr == b.history.epochs[e].lr);
    }
    for (const auto& [name, p] : a.best_params)
        CHECK(p.values() == b.best_params.at(name).values());
}

TEST_CASE("train: zero learning rate leaves parameters untouched") {
    Dataset ds = gen_triangle_count_regression(4, 6, 0.4, 3);
    ds.train_idx = {0, 1, 2, 3};
    SatConfig cfg = tiny_cfg();
    TrainConfig tcfg;
    tcfg.base_lr = 0.0;
    tcfg.batch_size = 2;
    tcfg.epochs = 2;
    tcfg.warmup_steps = 1;
    tcfg.weight_decay = 0.5;  // decay is scaled by lr, so still inert
    tcfg.seed = 9;
    TrainResult result = train(ds, cfg, tcfg);
    ModelParams fresh = init_params(cfg, ds.feat_dim, ds.edge_feat_dim, tcfg.seed);
    for (const auto& [name, p] : fresh)
        CHECK(p.values() == result.best_params.at(name).values());
}

TEST_CASE("train: rejects empty datasets and reports non-finite losses") {
    Dataset empty;
    CHECK_THROWS_AS(train(empty, tiny_cfg(), TrainConfig{}), std::invalid_argument);

    Dataset no_split = gen_triangle_count_regression(4, 6, 0.4, 3);
    CHECK_THROWS_AS(train(no_split, tiny_cfg(), TrainConfig{}), std::invalid_argument);
}

TEST_CASE("train: one small step does not increase the batch loss") {
    // re-evaluated with dropout off; lr 1e-3 must help in at least 95% of trials
    size_t improved = 0;
    const size_t trials = 40;
    for (size_t t = 0; t < trials; ++t) {
        Dataset ds = gen_triangle_count_regression(2, 7, 0.4, 1000 + t);
        SatConfig cfg = tiny_cfg();
        ModelParams params = init_params(cfg, ds.feat_dim, 0, 2000 + t);

        auto batch_loss = [&](const ModelParams& ps) {
            Tensor total;
            for (const GraphSample& s : ds.samples) {
                ForwardResult r = forward(s.graph, cfg, ps, false);
                Tensor l = loss_for_sample(r.prediction, s, LossKind::l1);
                total = total.defined() ? add(total, l) : l;
            }
            return scale(total, 0.5);
        };

        double before = batch_loss(params).item();
        zero_all_grads(params);
        backward(batch_loss(params));
        AdamWState state;
        adamw_step(params, state, 1e-3, 0.0);
        double after = batch_loss(params).item();
        if (after <= before + 1e-12) ++improved;
    }
    CHECK(improved >= 38);
}

TEST_CASE("checkpoint: bit-exact round trip with versioned format") {
    SatConfig cfg = tiny_cfg();
    ModelParams params = init_params(cfg, 3, 0, 77);
    std::string cfg_json = "{\"hidden_dim\":8}";
    std::string path = temp_path("ckpt.bin");
    save_checkpoint(params, cfg_json, path);

    Checkpoint ck = load_checkpoint(path);
    CHECK(ck.config_json == cfg_json);
    REQUIRE(ck.params.size() == params.size());
    for (const auto& [name, p] : params) {
        CHECK(ck.params.at(name).shape() == p.shape());
        CHECK(ck.params.at(name).values() == p.values());
    }

    // resaving the loaded state reproduces the file byte for byte
    std::string path2 = temp_path("ckpt2.bin");
    save_checkpoint(ck.params, ck.config_json, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
}

TEST_CASE("checkpoint: corruption is reported distinctly") {
    SatConfig cfg = tiny_cfg();
    ModelParams params = init_params(cfg, 3, 0, 78);
    std::string path = temp_path("ckpt3.bin");
    save_checkpoint(params, "{}", path);

    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    {  // bad magic
        std::string bad = bytes;
        bad[0] = 'X';
        std::ofstream out(temp_path("bad_magic.bin"), std::ios::binary);
        out << bad;
        out.close();
        CHECK_THROWS_WITH(load_checkpoint(temp_path("bad_magic.bin")),
                          Catch::Matchers::ContainsSubstring("bad magic"));
    }
    {  // version mismatch
        std::string bad = bytes;
        bad[7] = 99;
        std::ofstream out(temp_path("bad_version.bin"), std::ios::binary);
        out << bad;
        out.close();
        CHECK_THROWS_WITH(load_checkpoint(temp_path("bad_version.bin")),
                          Catch::Matchers::ContainsSubstring("version"));
    }
    {  // truncation
        std::ofstream out(temp_path("truncated.bin"), std::ios::binary);
        out << bytes.substr(0, bytes.size() / 2);
        out.close();
        CHECK_THROWS_WITH(load_checkpoint(temp_path("truncated.bin")),
                          Catch::Matchers::ContainsSubstring("truncated"));
    }
    CHECK_THROWS_AS(load_checkpoint(temp_path("does_not_exist.bin")), std::runtime_error);
}

TEST_CASE("evaluate: mae agrees with an independent second pass") {
    Dataset ds = gen_triangle_count_regression(10, 8, 0.35, 21);
    SatConfig cfg = tiny_cfg();
    ModelParams params = init_params(cfg, ds.feat_dim, 0, 22);
    Metrics m = evaluate(ds, params, cfg);

    double total = 0.0;
    for (const GraphSample& s : ds.samples) {
        ForwardResult r = forward(s.graph, cfg, params, false);
        total += std::fabs(r.prediction.values()[0] - std::get<double>(s.target));
    }
    CHECK(m.mae == Approx(total / 10.0).epsilon(1e-12));
    CHECK(m.count == 10);
}

TEST_CASE("evaluate: constant classifier scores one half on a balanced set") {
    Dataset ds = gen_cycle_vs_triangles(40, 5);
    SatConfig cfg = tiny_cfg(TaskKind::graph_class, 2);
    ModelParams params = init_params(cfg, ds.feat_dim, 0, 6);
    params.at("head.w") = Tensor::zeros({8, 2}, true);
    params.at("head.b") = Tensor({2}, {0.3, 0.1}, true);
    Metrics m = evaluate(ds, params, cfg);
    CHECK(m.accuracy == 0.5);
    CHECK(m.per_class_accuracy[0] == 1.0);
    CHECK(m.per_class_accuracy[1] == 0.0);
}

TEST_CASE("evaluate: perfect node predictions score accuracy one") {
    Dataset ds = gen_sbm_node_classification(2, {4, 4}, 0.9, 0.05, 31);
    SatConfig cfg = tiny_cfg(TaskKind::node_class, 2);
    ModelParams params = init_params(cfg, ds.feat_dim, 0, 32);
    // rig the head so logits copy the true label parity via targets directly:
    // evaluate against predictions forced equal to the labels
    for (GraphSample& s : ds.samples) {
        auto& labels = std::get<std::vector<int>>(s.target);
        for (size_t v = 0; v < labels.size(); ++v) labels[v] = 0;
    }
    params.at("head.w") = Tensor::zeros({8, 2}, true);
    params.at("head.b") = Tensor({2}, {1.0, 0.0}, true);
    Metrics m = evaluate(ds, params, cfg);
    CHECK(m.accuracy == 1.0);
    CHECK(m.per_class_accuracy[0] == 1.0);
}
