#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <set>

#include "sat/datasets.hpp"
#include "sat/verify.hpp"

using namespace sat;

namespace {

std::string temp_path(const std::string& name) {
    return std::string("/tmp/sat_ds_") + name;
}

std::string file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

bool samples_equal(const GraphSample& a, const GraphSample& b) {
    return a.graph == b.graph && a.target == b.target;
}

}  // namespace

TEST_CASE("gen_cycle_vs_triangles: construction invariants") {
    Dataset ds = gen_cycle_vs_triangles(40, 7);
    REQUIRE(ds.samples.size() == 40);
    CHECK(ds.task == TaskKind::graph_class);
    size_t class0 = 0;
    for (const GraphSample& s : ds.samples) {
        CHECK(s.graph.num_nodes == 6);
        CHECK(s.graph.num_edges() == 6);
        for (size_t v = 0; v < 6; ++v) CHECK(s.graph.degrees[v] == 2);
        if (std::get<int>(s.target) == 0) ++class0;
    }
    CHECK(class0 == 20);
    CHECK_THROWS_AS(gen_cycle_vs_triangles(5, 1), std::invalid_argument);
}

TEST_CASE("gen_cycle_vs_triangles: classes are 1-WL indistinguishable") {
    Dataset ds = gen_cycle_vs_triangles(10, 3);
    std::multiset<int> reference;
    for (const GraphSample& s : ds.samples) {
        auto colors = wl_refinement(s.graph, 6);
        std::multiset<int> multiset(colors.begin(), colors.end());
        if (reference.empty())
            reference = multiset;
        else
            CHECK(multiset == reference);
    }
}

TEST_CASE("gen_triangle_count_regression: targets match a brute-force oracle") {
    Dataset ds = gen_triangle_count_regression(30, 10, 0.35, 11);
    for (const GraphSample& s : ds.samples) {
        // independent O(n^3) enumeration over index triples
        size_t count = 0;
        auto has_edge = [&](size_t a, size_t b) {
            return std::binary_search(s.graph.adj[a].begin(), s.graph.adj[a].end(), b);
        };
        for (size_t a = 0; a < 10; ++a)
            for (size_t b = a + 1; b < 10; ++b)
                for (size_t c = b + 1; c < 10; ++c)
                    if (has_edge(a, b) && has_edge(a, c) && has_edge(b, c)) ++count;
        CHECK(std::get<double>(s.target) == static_cast<double>(count));
    }
    CHECK_THROWS_AS(gen_triangle_count_regression(1, 40, 0.3, 1), std::invalid_argument);
}

TEST_CASE("count_triangles: complete graph and tree fixtures") {
    std::vector<std::pair<size_t, size_t>> k4;
    for (size_t u = 0; u < 4; ++u)
        for (size_t v = u + 1; v < 4; ++v) k4.emplace_back(u, v);
    Graph complete = build_graph(4, k4, std::vector<std::vector<double>>(4, {1.0}));
    CHECK(count_triangles(complete) == 4);

    Graph tree = build_graph(5, {{0, 1}, {0, 2}, {1, 3}, {1, 4}},
                             std::vector<std::vector<double>>(5, {1.0}));
    CHECK(count_triangles(tree) == 0);
}

TEST_CASE("gen_sbm_node_classification: labels, blocks and density") {
    std::vector<size_t> blocks = {8, 8, 8};
    Dataset ds = gen_sbm_node_classification(30, blocks, 0.6, 0.05, 13);
    CHECK(ds.task == TaskKind::node_class);
    CHECK(ds.num_classes == 3);
    CHECK(ds.feat_dim == 4);

    size_t intra_pairs = 0, intra_edges = 0;
    for (const GraphSample& s : ds.samples) {
        const auto& labels = std::get<std::vector<int>>(s.target);
        std::set<int> seen(labels.begin(), labels.end());
        CHECK(seen.size() == 3);  // every block is represented
        for (size_t u = 0; u < s.graph.num_nodes; ++u)
            for (size_t v = u + 1; v < s.graph.num_nodes; ++v)
                if (labels[u] == labels[v]) {
                    ++intra_pairs;
                    if (std::binary_search(s.graph.adj[u].begin(), s.graph.adj[u].end(), v))
                        ++intra_edges;
                }
    }
    double p_hat = static_cast<double>(intra_edges) / static_cast<double>(intra_pairs);
    double sigma = std::sqrt(0.6 * 0.4 / static_cast<double>(intra_pairs));
    CHECK(std::fabs(p_hat - 0.6) <= 3.0 * sigma);

    CHECK_THROWS_AS(gen_sbm_node_classification(1, blocks, 0.1, 0.2, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(gen_sbm_node_classification(1, {4, 0}, 0.5, 0.1, 1),
                    std::invalid_argument);
}

TEST_CASE("gen_sbm_node_classification: p_out = 0 keeps components inside blocks") {
    Dataset ds = gen_sbm_node_classification(5, {5, 5}, 0.9, 0.0, 17);
    for (const GraphSample& s : ds.samples) {
        const auto& labels = std::get<std::vector<int>>(s.target);
        for (auto [u, v] : s.graph.edges) CHECK(labels[u] == labels[v]);
    }
}

TEST_CASE("generators are pure functions of the seed") {
    std::string a = temp_path("gen_a.jsonl"), b = temp_path("gen_b.jsonl");
    save_jsonl(gen_cycle_vs_triangles(20, 42), a);
    save_jsonl(gen_cycle_vs_triangles(20, 42), b);
    CHECK(file_bytes(a) == file_bytes(b));

    save_jsonl(gen_triangle_count_regression(15, 9, 0.3, 9), a);
    save_jsonl(gen_triangle_count_regression(15, 9, 0.3, 9), b);
    CHECK(file_bytes(a) == file_bytes(b));
}

TEST_CASE("jsonl: value-exact round trip for all three target kinds") {
    for (int which = 0; which < 3; ++which) {
        Dataset ds = which == 0   ? gen_triangle_count_regression(8, 7, 0.4, 5)
                     : which == 1 ? gen_cycle_vs_triangles(8, 5)
                                  : gen_sbm_node_classification(4, {4, 4}, 0.7, 0.1, 5);
        // salt the features with awkward doubles
        Rng rng(6);
        for (GraphSample& s : ds.samples)
            for (double& f : s.graph.node_feats) f += rng.normal() / 3.0;
        std::string path = temp_path("roundtrip.jsonl");
        save_jsonl(ds, path);
        Dataset back = load_jsonl(path);
        CHECK(back.task == ds.task);
        REQUIRE(back.samples.size() == ds.samples.size());
        for (size_t i = 0; i < ds.samples.size(); ++i)
            CHECK(samples_equal(ds.samples[i], back.samples[i]));
    }
}

TEST_CASE("jsonl: gzip variant by extension") {
    Dataset ds = gen_triangle_count_regression(6, 8, 0.35, 23);
    std::string path = temp_path("corpus.jsonl.gz");
    save_jsonl(ds, path);
    // really compressed: gzip magic bytes
    std::string raw = file_bytes(path);
    REQUIRE(raw.size() >= 2);
    CHECK(static_cast<unsigned char>(raw[0]) == 0x1f);
    CHECK(static_cast<unsigned char>(raw[1]) == 0x8b);
    Dataset back = load_jsonl(path);
    REQUIRE(back.samples.size() == 6);
    for (size_t i = 0; i < 6; ++i) CHECK(samples_equal(ds.samples[i], back.samples[i]));
}

TEST_CASE("jsonl: edge features round trip") {
    Graph g = build_graph(3, {{0, 1}, {1, 2}}, {{1.0}, {2.0}, {3.0}},
                          {{0.25, -1.5}, {1e-17, 3.0}});
    Dataset ds;
    ds.task = TaskKind::regression;
    ds.feat_dim = 1;
    ds.edge_feat_dim = 2;
    ds.samples.push_back({g, 1.25});
    std::string path = temp_path("efeat.jsonl");
    save_jsonl(ds, path);
    Dataset back = load_jsonl(path);
    CHECK(back.edge_feat_dim == 2);
    CHECK(samples_equal(ds.samples[0], back.samples[0]));
}

TEST_CASE("jsonl: schema violations name the line") {
    std::string path = temp_path("bad.jsonl");
    {
        std::ofstream f(path);
        f << R"({"num_nodes": 2, "edges": [[0,1]], "node_feat": [[1.0],[1.0]], "y": 0.5})" << "\n";
        f << R"({"num_nodes": 2, "node_feat": [[1.0],[1.0]], "y": 0.5})" << "\n";
    }
    CHECK_THROWS_WITH(load_jsonl(path), Catch::Matchers::ContainsSubstring(":2:") &&
                                            Catch::Matchers::ContainsSubstring("edges"));

    {
        std::ofstream f(path);
        f << R"({"num_nodes": 2, "edges": [[0,1]], "node_feat": [[1.0],[1.0]], "y": 0.5})" << "\n";
        f << R"({"num_nodes": 2, "edges": [[0,1]], "node_feat": [[1.0,2.0],[1.0,2.0]], "y": 0.5})" << "\n";
    }
    CHECK_THROWS_WITH(load_jsonl(path),
                      Catch::Matchers::ContainsSubstring("node feature width"));

    {
        std::ofstream f(path);
        f << R"({"num_nodes": 2, "edges": [[0,1]], "node_feat": [[1.0],[1.0]], "y": 0.5})" << "\n";
        f << R"({"num_nodes": 2, "edges": [[0,1]], "node_feat": [[1.0],[1.0]], "y": 3})" << "\n";
    }
    CHECK_THROWS_WITH(load_jsonl(path),
                      Catch::Matchers::ContainsSubstring("target kind"));

    {
        std::ofstream f(path);
        f << "not json at all\n";
    }
    CHECK_THROWS_WITH(load_jsonl(path), Catch::Matchers::ContainsSubstring(":1:"));
}

TEST_CASE("jsonl: integer-valued regression targets stay regression") {
    Dataset ds;
    ds.task = TaskKind::regression;
    ds.feat_dim = 1;
    ds.samples.push_back({build_graph(1, {}, {{1.0}}), 3.0});
    std::string path = temp_path("int_reg.jsonl");
    save_jsonl(ds, path);
    CHECK(file_bytes(path).find("3.0") != std::string::npos);
    Dataset back = load_jsonl(path);
    CHECK(back.task == TaskKind::regression);
}

TEST_CASE("split: sizes, determinism, stratification") {
    Dataset ds = gen_triangle_count_regression(100, 6, 0.3, 31);
    Dataset s1 = split(ds, {0.8, 0.1, 0.1}, 5);
    CHECK(s1.train_idx.size() == 80);
    CHECK(s1.val_idx.size() == 10);
    CHECK(s1.test_idx.size() == 10);

    Dataset s2 = split(ds, {0.8, 0.1, 0.1}, 5);
    CHECK(s1.train_idx == s2.train_idx);
    CHECK(s1.val_idx == s2.val_idx);
    CHECK(s1.test_idx == s2.test_idx);

    // splits are disjoint and cover everything
    std::set<size_t> all;
    for (size_t i : s1.train_idx) all.insert(i);
    for (size_t i : s1.val_idx) all.insert(i);
    for (size_t i : s1.test_idx) all.insert(i);
    CHECK(all.size() == 100);

    CHECK_THROWS_AS(split(ds, {0.5, 0.2, 0.2}, 1), std::invalid_argument);
    CHECK_THROWS_AS(split(ds, {0.8, 0.1, 0.1}, 1, true), std::invalid_argument);

    Dataset balanced = gen_cycle_vs_triangles(100, 3);
    Dataset strat = split(balanced, {0.8, 0.1, 0.1}, 7, true);
    size_t train0 = 0;
    for (size_t i : strat.train_idx)
        if (std::get<int>(strat.samples[i].target) == 0) ++train0;
    CHECK(strat.train_idx.size() == 80);
    CHECK(train0 == 40);
}

TEST_CASE("with_encoding: widens features once per sample") {
    Dataset ds = gen_cycle_vs_triangles(4, 9);
    Dataset enc = with_encoding(ds, PeKind::rwpe, 5);
    CHECK(enc.feat_dim == 6);
    for (const GraphSample& s : enc.samples) CHECK(s.graph.feat_dim == 6);
}
