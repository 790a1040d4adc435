// Command-line front end: dataset generation, training, evaluation,
// attention-trace dumps and the verification suites.
//
// Exit codes: 0 success, 1 domain failure, 2 invalid flags.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sat/config_io.hpp"
#include "sat/datasets.hpp"
#include "sat/model.hpp"
#include "sat/train.hpp"
#include "sat/verify.hpp"

namespace {

struct GenOptions {
    std::string kind;
    std::string out;
    uint64_t seed = 0;
    size_t n = 200;
    size_t nodes = 12;
    double p = 0.3;
    std::vector<size_t> blocks{10, 10, 10};
    double p_in = 0.5;
    double p_out = 0.1;
};

int cmd_gen(const GenOptions& opt) {
    sat::Dataset ds;
    if (opt.kind == "cycle-vs-triangles") {
        ds = sat::gen_cycle_vs_triangles(opt.n, opt.seed);
    } else if (opt.kind == "triangle-count") {
        ds = sat::gen_triangle_count_regression(opt.n, opt.nodes, opt.p, opt.seed);
    } else if (opt.kind == "sbm") {
        ds = sat::gen_sbm_node_classification(opt.n, opt.blocks, opt.p_in, opt.p_out, opt.seed);
    } else {
        std::cerr << "unknown generator kind \"" << opt.kind << "\"\n";
        return 2;
    }
    sat::save_jsonl(ds, opt.out);
    std::cerr << "wrote " << ds.samples.size() << " graphs to " << opt.out << "\n";
    return 0;
}

struct TrainOptions {
    std::string data;
    std::string config;
    std::string out = "model.ckpt";
    std::vector<std::string> overrides;
    int64_t seed = -1;
};

int cmd_train(const TrainOptions& opt) {
    sat::json config_json = sat::RunConfig{}.to_json();
    if (!opt.config.empty()) {
        sat::json file = sat::load_json_file(opt.config);
        config_json.merge_patch(file);
    }
    sat::apply_overrides(config_json, opt.overrides);
    sat::RunConfig rc = sat::RunConfig::from_json(config_json);
    if (opt.seed >= 0) rc.train.seed = static_cast<uint64_t>(opt.seed);
    rc.model.validate();
    rc.train.validate();

    sat::Dataset ds = sat::load_jsonl(opt.data);
    std::cerr << "loaded " << ds.samples.size() << " graphs (" << sat::task_name(ds.task)
              << ")\n";
    ds = sat::split(std::move(ds), rc.split_fractions, rc.train.seed, rc.stratify);
    ds = sat::with_encoding(std::move(ds), rc.model.pe, rc.model.pe_dim);

    sat::TrainResult result = sat::train(ds, rc.model, rc.train);
    std::cerr << "best validation metric " << result.history.best_val_metric << " at epoch "
              << result.history.best_epoch << "\n";

    std::string model_json = sat::model_config_to_json(rc.model).dump();
    sat::save_checkpoint(result.best_params, model_json, opt.out);
    std::cerr << "checkpoint written to " << opt.out << "\n";

    sat::json hist = sat::history_to_json(result.history, rc);
    {
        std::ofstream f(opt.out + ".history.json");
        f << hist.dump(2) << "\n";
    }

    sat::json summary{{"best_epoch", result.history.best_epoch},
                      {"best_val_metric", result.history.best_val_metric},
                      {"checkpoint", opt.out},
                      {"history", opt.out + ".history.json"}};
    if (!ds.test_idx.empty())
        summary["test"] =
            sat::metrics_to_json(sat::evaluate_on(ds, ds.test_idx, result.best_params, rc.model));
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_eval(const std::string& data, const std::string& checkpoint) {
    sat::Checkpoint ck = sat::load_checkpoint(checkpoint);
    sat::SatConfig cfg = sat::model_config_from_json(sat::json::parse(ck.config_json));
    sat::Dataset ds = sat::load_jsonl(data);
    ds = sat::with_encoding(std::move(ds), cfg.pe, cfg.pe_dim);
    sat::Metrics m = sat::evaluate(ds, ck.params, cfg);
    std::cout << sat::metrics_to_json(m).dump(2) << "\n";
    return 0;
}

int cmd_dump_attention(const std::string& data, const std::string& checkpoint,
                       size_t graph_index, const std::string& out) {
    sat::Checkpoint ck = sat::load_checkpoint(checkpoint);
    sat::SatConfig cfg = sat::model_config_from_json(sat::json::parse(ck.config_json));
    sat::Dataset ds = sat::load_jsonl(data);
    if (graph_index >= ds.samples.size())
        throw std::invalid_argument("graph index " + std::to_string(graph_index) +
                                    " out of range (dataset has " +
                                    std::to_string(ds.samples.size()) + " graphs)");
    ds = sat::with_encoding(std::move(ds), cfg.pe, cfg.pe_dim);
    sat::ForwardResult r = sat::forward(ds.samples[graph_index].graph, cfg, ck.params, false);
    sat::json j = sat::trace_to_json(r.trace);
    if (out.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::ofstream f(out);
        if (!f) throw std::runtime_error("cannot open " + out + " for writing");
        f << j.dump(2) << "\n";
        std::cerr << "trace written to " << out << "\n";
    }
    return 0;
}

int cmd_verify(const std::string& suite, uint64_t seed, size_t trials) {
    std::vector<sat::SuiteResult> results;
    auto want = [&](const char* name) { return suite == "all" || suite == name; };
    if (want("theorem1")) {
        std::cerr << "running theorem1 (" << trials << " trials)...\n";
        results.push_back(sat::run_theorem1_suite(seed, trials));
    }
    if (want("theorem2")) {
        size_t runs = std::min<size_t>(trials, 20);
        std::cerr << "running theorem2 (" << runs << " runs)...\n";
        results.push_back(sat::run_theorem2_suite(seed, runs));
    }
    if (want("smoother")) {
        std::cerr << "running smoother (" << trials << " trials)...\n";
        results.push_back(sat::run_smoother_suite(seed, trials));
    }
    if (want("equivariance")) {
        size_t n = std::min<size_t>(trials, 100);
        std::cerr << "running equivariance (" << n << " trials)...\n";
        results.push_back(sat::run_equivariance_suite(seed, n));
    }
    if (want("gradcheck")) {
        std::cerr << "running gradcheck (8 configurations)...\n";
        results.push_back(sat::run_gradcheck_suite(seed));
    }
    if (results.empty()) {
        std::cerr << "unknown suite \"" << suite << "\"\n";
        return 2;
    }
    bool all_passed = true;
    sat::json suites = sat::json::array();
    for (const auto& r : results) {
        all_passed = all_passed && r.passed();
        suites.push_back(sat::json{{"name", r.name},
                                   {"trials", r.trials},
                                   {"failures", r.failures},
                                   {"worst", r.worst},
                                   {"note", r.note},
                                   {"passed", r.passed()}});
        std::cerr << (r.passed() ? "[pass] " : "[FAIL] ") << r.name << ": " << r.note << "\n";
    }
    sat::json report{{"suite", suite}, {"seed", seed}, {"trials", trials},
                     {"suites", suites}, {"passed", all_passed}};
    std::cout << report.dump(2) << "\n";
    return all_passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Structure-aware graph Transformer: train, evaluate and verify"};
    app.require_subcommand(1);

    GenOptions gen_opt;
    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset (JSONL)");
    gen->add_option("kind", gen_opt.kind, "cycle-vs-triangles | triangle-count | sbm")
        ->required();
    gen->add_option("--out", gen_opt.out, "output path (.jsonl or .jsonl.gz)")->required();
    gen->add_option("--seed", gen_opt.seed, "generator seed");
    gen->add_option("--n", gen_opt.n, "number of graphs");
    gen->add_option("--nodes", gen_opt.nodes, "nodes per graph (triangle-count)");
    gen->add_option("--p", gen_opt.p, "edge probability (triangle-count)");
    gen->add_option("--blocks", gen_opt.blocks, "block sizes (sbm)");
    gen->add_option("--p-in", gen_opt.p_in, "intra-block edge probability (sbm)");
    gen->add_option("--p-out", gen_opt.p_out, "inter-block edge probability (sbm)");

    TrainOptions train_opt;
    auto* train = app.add_subcommand("train", "train a model on a JSONL dataset");
    train->add_option("--data", train_opt.data, "dataset path")->required();
    train->add_option("--config", train_opt.config, "JSON config file");
    train->add_option("--out", train_opt.out, "checkpoint output path");
    train->add_option("--set", train_opt.overrides, "config override key=value (repeatable)");
    train->add_option("--seed", train_opt.seed, "training seed (overrides config)");

    std::string eval_data, eval_ckpt;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval->add_option("--data", eval_data, "dataset path")->required();
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();

    std::string dump_data, dump_ckpt, dump_out;
    size_t dump_index = 0;
    auto* dump = app.add_subcommand("dump-attention", "dump attention weights for one graph");
    dump->add_option("--data", dump_data, "dataset path")->required();
    dump->add_option("--checkpoint", dump_ckpt, "checkpoint path")->required();
    dump->add_option("--graph-index", dump_index, "graph index within the dataset");
    dump->add_option("--out", dump_out, "output path (stdout when omitted)");

    std::string verify_suite = "all";
    uint64_t verify_seed = 0;
    size_t verify_trials = 200;
    auto* verify = app.add_subcommand("verify", "run the verification suites");
    verify->add_option("--suite", verify_suite,
                       "theorem1 | theorem2 | smoother | equivariance | gradcheck | all");
    verify->add_option("--seed", verify_seed, "harness seed");
    verify->add_option("--trials", verify_trials, "trial count for the randomized suites");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen(gen_opt);
        if (train->parsed()) return cmd_train(train_opt);
        if (eval->parsed()) return cmd_eval(eval_data, eval_ckpt);
        if (dump->parsed()) return cmd_dump_attention(dump_data, dump_ckpt, dump_index, dump_out);
        if (verify->parsed()) return cmd_verify(verify_suite, verify_seed, verify_trials);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
