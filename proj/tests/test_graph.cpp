#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "testutil.hpp"
#include "txgnn/errors.hpp"
#include "txgnn/graph.hpp"
#include "txgnn/rng.hpp"

using namespace txgnn;
using testutil::build_test_graph;
using testutil::close;
using testutil::random_test_graph;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("graph_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

bool graphs_identical(const TransactionGraph& a, const TransactionGraph& b) {
    if (a.node_count != b.node_count || a.edge_count() != b.edge_count() ||
        a.pair_count() != b.pair_count() || a.node_dim != b.node_dim ||
        a.edge_dim != b.edge_dim || a.task != b.task || a.has_labels != b.has_labels)
        return false;
    if (a.node_features != b.node_features || a.edge_features != b.edge_features ||
        a.labels != b.labels || a.node_ids != b.node_ids ||
        a.node_feature_names != b.node_feature_names ||
        a.edge_feature_names != b.edge_feature_names)
        return false;
    for (std::int64_t e = 0; e < a.edge_count(); ++e) {
        const auto &x = a.edges[e], &y = b.edges[e];
        if (x.src != y.src || x.dst != y.dst || x.k != y.k || x.pair != y.pair ||
            x.timestamp != y.timestamp)
            return false;
    }
    for (std::int64_t p = 0; p < a.pair_count(); ++p) {
        if (a.pairs[p].a != b.pairs[p].a || a.pairs[p].b != b.pairs[p].b ||
            a.pairs[p].members != b.pairs[p].members)
            return false;
    }
    return true;
}

} // namespace

TEST_CASE("three parallel edges form one pair group") {
    Rng rng(1);
    auto g = build_test_graph(rng, 2, {{0, 1, 10}, {1, 0, 5}, {0, 1, 7}}, 2, 3);
    CHECK(g.node_count == 2);
    CHECK(g.edge_count() == 3);
    REQUIRE(g.pair_count() == 1);
    CHECK(g.pairs[0].members.size() == 3);
    // k follows ascending timestamp: edges arrive with ts 10, 5, 7.
    CHECK(g.edges[1].k == 1);
    CHECK(g.edges[2].k == 2);
    CHECK(g.edges[0].k == 3);
    CHECK(g.pairs[0].members == std::vector<std::int32_t>{1, 2, 0});
}

TEST_CASE("equal timestamps rank parallel edges by input order") {
    Rng rng(2);
    auto g = build_test_graph(rng, 2, {{0, 1, 5}, {0, 1, 5}, {0, 1, 5}}, 1, 1);
    CHECK(g.edges[0].k == 1);
    CHECK(g.edges[1].k == 2);
    CHECK(g.edges[2].k == 3);
}

TEST_CASE("neighbour sets are symmetric, deduplicated, and directional-blind") {
    Rng rng(3);
    auto g = build_test_graph(rng, 4, {{0, 1, 1}, {0, 1, 2}, {2, 0, 3}}, 1, 1);
    CHECK(g.neighbours(0) == std::vector<std::int32_t>{1, 2});
    CHECK(g.neighbours(1) == std::vector<std::int32_t>{0});
    CHECK(g.neighbours(2) == std::vector<std::int32_t>{0});
    CHECK(g.neighbours(3).empty()); // isolated
    CHECK_THROWS_AS((void)g.neighbours(4), IndexError);
    CHECK_THROWS_AS((void)g.neighbours(-1), IndexError);

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng r(seed);
        auto rg = random_test_graph(r, 12, 20, 1, 1);
        for (std::int64_t i = 0; i < rg.node_count; ++i) {
            for (auto j : rg.neighbours(i)) {
                auto back = rg.neighbours(j);
                CHECK(std::find(back.begin(), back.end(), static_cast<std::int32_t>(i)) !=
                      back.end());
            }
        }
        std::int64_t member_sum = 0;
        for (const auto& pg : rg.pairs) member_sum += static_cast<std::int64_t>(pg.members.size());
        CHECK(member_sum == rg.edge_count());
    }
}

TEST_CASE("structural violations are rejected") {
    Rng rng(4);
    CHECK_THROWS_AS((void)build_test_graph(rng, 2, {{0, 5, 1}}, 1, 1), IntegrityError);
    CHECK_THROWS_AS((void)build_test_graph(rng, 2, {{0, 1, -3}}, 1, 1), IntegrityError);

    TransactionGraph bad;
    bad.node_count = 2;
    bad.node_dim = 1;
    bad.node_features = {1.0}; // one row short
    CHECK_THROWS_AS((void)finalize_graph(std::move(bad)), DimensionError);

    TransactionGraph mislabeled;
    mislabeled.node_count = 2;
    mislabeled.node_dim = 1;
    mislabeled.node_features = {1.0, 1.0};
    mislabeled.task = Task::edge;
    mislabeled.has_labels = true;
    mislabeled.labels = {0, 1}; // two labels, zero edges
    CHECK_THROWS_AS((void)finalize_graph(std::move(mislabeled)), IntegrityError);
}

TEST_CASE("temporal split cuts 10 edges into 6/2/2") {
    Rng rng(5);
    std::vector<testutil::EdgeSpec> specs;
    for (int e = 0; e < 10; ++e)
        specs.push_back({0, 1, static_cast<double>(90 - e * 7)}); // distinct, shuffled order
    auto g = build_test_graph(rng, 2, specs, 1, 1);
    auto m = temporal_split(g);
    int counts[3] = {0, 0, 0};
    for (auto s : m.edge_split) ++counts[s];
    CHECK(counts[0] == 6);
    CHECK(counts[1] == 2);
    CHECK(counts[2] == 2);
    // Largest timestamps (edges 0 and 1, ts 90 and 83) are the test split.
    CHECK(m.edge_split[0] == 2);
    CHECK(m.edge_split[1] == 2);
    CHECK(m.edge_split[9] == 0); // smallest timestamp
}

TEST_CASE("identical timestamps still split 6/2/2 by stable input order") {
    Rng rng(6);
    std::vector<testutil::EdgeSpec> specs(10, {0, 1, 42});
    auto g = build_test_graph(rng, 2, specs, 1, 1);
    auto m = temporal_split(g);
    for (int e = 0; e < 6; ++e) CHECK(m.edge_split[e] == 0);
    for (int e = 6; e < 8; ++e) CHECK(m.edge_split[e] == 1);
    for (int e = 8; e < 10; ++e) CHECK(m.edge_split[e] == 2);
}

TEST_CASE("boundary ties keep earlier input rows in the earlier split") {
    Rng rng(7);
    // Edges 4..7 share the boundary timestamp; rows 4 and 5 must stay in train.
    std::vector<testutil::EdgeSpec> specs;
    for (int e = 0; e < 4; ++e) specs.push_back({0, 1, static_cast<double>(e)});
    for (int e = 4; e < 8; ++e) specs.push_back({0, 1, 50});
    for (int e = 8; e < 10; ++e) specs.push_back({0, 1, static_cast<double>(100 + e)});
    auto g = build_test_graph(rng, 2, specs, 1, 1);
    auto m = temporal_split(g);
    CHECK(m.edge_split[4] == 0);
    CHECK(m.edge_split[5] == 0);
    CHECK(m.edge_split[6] == 1);
    CHECK(m.edge_split[7] == 1);
}

TEST_CASE("node split follows the latest incident edge") {
    Rng rng(8);
    // Node 2's only edge is early (train); node 3 touches the last edge (test).
    auto g = build_test_graph(rng, 4,
                              {{2, 0, 1}, {0, 1, 2}, {0, 1, 3}, {0, 1, 4}, {0, 1, 5},
                               {0, 1, 6}, {0, 1, 7}, {0, 1, 8}, {0, 3, 9}, {3, 1, 10}},
                              1, 1);
    auto m = temporal_split(g);
    CHECK(m.node_split[2] == 0);
    CHECK(m.node_split[3] == 2);
    CHECK(m.node_split[0] == 2); // node 0 touches edge with ts 9
    CHECK(m.node_split[1] == 2);
}

TEST_CASE("splits flag missing positive labels") {
    Rng rng(9);
    std::vector<testutil::EdgeSpec> specs;
    for (int e = 0; e < 10; ++e) specs.push_back({0, 1, static_cast<double>(e)});
    auto g = build_test_graph(rng, 2, specs, 1, 1, Task::edge, true);
    g.labels.assign(10, 0);
    g.labels[0] = 1; // positive only in train
    auto m = temporal_split(g);
    CHECK(!m.missing_positive[0]);
    CHECK(m.missing_positive[1]);
    CHECK(m.missing_positive[2]);
}

TEST_CASE("normalization uses train statistics and zeroes constant columns") {
    Rng rng(10);
    // Early edges sit between nodes 2,3 so the train split keeps some nodes.
    std::vector<testutil::EdgeSpec> specs;
    for (int e = 0; e < 6; ++e) specs.push_back({2, 3, static_cast<double>(e)});
    for (int e = 6; e < 10; ++e) specs.push_back({0, 1, static_cast<double>(e)});
    auto g = build_test_graph(rng, 4, specs, 1, 2);
    // Column 0: [0,2,0,2,0,2] over the train rows (mean 1, population sd 1);
    // the held-out rows carry 3. Column 1: constant 2.
    for (int e = 0; e < 10; ++e) {
        g.edge_features[e * 2 + 0] = e < 6 ? (e % 2 == 0 ? 0.0 : 2.0) : 3.0;
        g.edge_features[e * 2 + 1] = 2.0;
    }
    auto m = temporal_split(g);
    auto stats = compute_feature_stats(g, m);
    CHECK(close(stats.edge_mean[0], 1.0));
    CHECK(close(stats.edge_sd[0], 1.0));
    CHECK(stats.edge_constant[0] == 0);
    CHECK(stats.edge_constant[1] == 1);

    auto n = normalize_features(g, stats);
    CHECK(close(n.edge_features[0], -1.0));
    CHECK(close(n.edge_features[2], 1.0));
    CHECK(close(n.edge_features[6 * 2], 2.0)); // held-out 3 -> (3-1)/1
    for (int e = 0; e < 10; ++e) CHECK(n.edge_features[e * 2 + 1] == 0.0);

    FeatureStats wrong = stats;
    wrong.edge_mean.push_back(0.0);
    CHECK_THROWS_AS((void)normalize_features(g, wrong), DimensionError);
}

TEST_CASE("edge CSV ingestion handles the wide transaction layout") {
    TempDir tmp;
    write_file(tmp.file("edges.csv"),
               "src,dst,timestamp,amount,currency,format,label\n"
               "acctA,acctB,100,25.5,1,0,0\n"
               "acctB,acctC,200,19,2,1,1\n"
               "acctA,acctB,150,7.25,1,2,0\n");
    DatasetSchema schema;
    auto g = load_edge_csv(tmp.file("edges.csv"), schema);
    CHECK(g.node_count == 3);
    CHECK(g.edge_count() == 3);
    CHECK(g.pair_count() == 2);
    CHECK(g.edge_feature_names == std::vector<std::string>{"amount", "currency", "format"});
    CHECK(g.has_labels);
    CHECK(g.labels == std::vector<std::int32_t>{0, 1, 0});
    CHECK(g.node_ids == std::vector<std::string>{"acctA", "acctB", "acctC"});
    // Parallel acctA->acctB edges: ts 100 before ts 150.
    CHECK(g.edges[0].k == 1);
    CHECK(g.edges[2].k == 2);
    CHECK(close(g.edge_features[0], 25.5));
}

TEST_CASE("malformed rows report their line number") {
    TempDir tmp;
    write_file(tmp.file("bad_ts.csv"),
               "src,dst,timestamp,amount\n"
               "a,b,100,1.0\n"
               "a,b,oops,2.0\n");
    DatasetSchema schema;
    try {
        (void)load_edge_csv(tmp.file("bad_ts.csv"), schema);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }

    write_file(tmp.file("short.csv"),
               "src,dst,timestamp,amount\n"
               "a,b,100\n");
    CHECK_THROWS_AS((void)load_edge_csv(tmp.file("short.csv"), schema), ParseError);
    CHECK_THROWS_AS((void)load_edge_csv(tmp.file("missing.csv"), schema), ParseError);

    write_file(tmp.file("bad_header.csv"), "source,dest,time\na,b,1\n");
    CHECK_THROWS_AS((void)load_edge_csv(tmp.file("bad_header.csv"), schema), ParseError);
}

TEST_CASE("explicit duplicate ranks are an integrity failure") {
    TempDir tmp;
    write_file(tmp.file("dup_k.csv"),
               "src,dst,timestamp,k,amount\n"
               "a,b,100,1,1.0\n"
               "a,b,200,1,2.0\n");
    DatasetSchema schema;
    try {
        (void)load_edge_csv(tmp.file("dup_k.csv"), schema);
        FAIL("expected an integrity error");
    } catch (const IntegrityError& e) {
        CHECK(std::string(e.what()).find("duplicate k") != std::string::npos);
    }

    write_file(tmp.file("gap_k.csv"),
               "src,dst,timestamp,k,amount\n"
               "a,b,100,1,1.0\n"
               "a,b,200,3,2.0\n");
    CHECK_THROWS_AS((void)load_edge_csv(tmp.file("gap_k.csv"), schema), IntegrityError);
}

TEST_CASE("dataset directory round-trips to an identical graph") {
    Rng rng(11);
    auto g = random_test_graph(rng, 8, 14, 3, 2, Task::edge, true);
    g.node_feature_names = {"f0", "f1", "f2"};
    g.edge_feature_names = {"amount", "code"};
    // Integer timestamps are required by the file format.
    for (auto& e : g.edges) e.timestamp = std::floor(e.timestamp);
    g = finalize_graph(std::move(g));

    // The first load canonicalizes dense node ids; from then on the cycle
    // must be an exact fixed point, files included.
    TempDir tmp;
    save_dataset(g, tmp.file("d1"));
    auto g2 = load_dataset(tmp.file("d1"));
    save_dataset(g2, tmp.file("d2"));
    auto g3 = load_dataset(tmp.file("d2"));
    save_dataset(g3, tmp.file("d3"));
    CHECK(graphs_identical(g2, g3));
    CHECK(read_file(tmp.file("d2") + "/edges.csv") == read_file(tmp.file("d3") + "/edges.csv"));
    CHECK(read_file(tmp.file("d2") + "/nodes.csv") == read_file(tmp.file("d3") + "/nodes.csv"));
    CHECK(read_file(tmp.file("d2") + "/manifest.txt") ==
          read_file(tmp.file("d3") + "/manifest.txt"));
    CHECK(g2.edge_count() == g.edge_count());
    CHECK(g2.pair_count() == g.pair_count());
}

TEST_CASE("node-task dataset round-trips labels through the node table") {
    Rng rng(12);
    auto g = random_test_graph(rng, 6, 8, 2, 1, Task::node, true);
    g.node_feature_names = {"a", "b"};
    g.edge_feature_names = {"amount"};
    for (auto& e : g.edges) e.timestamp = std::floor(e.timestamp);
    g = finalize_graph(std::move(g));

    TempDir tmp;
    save_dataset(g, tmp.file("d"));
    auto g2 = load_dataset(tmp.file("d"));
    CHECK(g2.task == Task::node);
    CHECK(g2.has_labels);
    CHECK(g2.node_count == g.node_count);
    // Labels ride dense ids, which the reload may permute; compare via ids.
    for (std::int64_t v = 0; v < g.node_count; ++v) {
        const auto& ext = g.node_ids[v];
        const auto it = std::find(g2.node_ids.begin(), g2.node_ids.end(), ext);
        REQUIRE(it != g2.node_ids.end());
        const auto w = std::distance(g2.node_ids.begin(), it);
        CHECK(g2.labels[w] == g.labels[v]);
    }
}

TEST_CASE("manifests are strict about their keys") {
    TempDir tmp;
    fs::create_directories(tmp.file("d"));
    write_file(tmp.file("d") + "/manifest.txt", "task=edge\nbogus=1\n");
    write_file(tmp.file("d") + "/edges.csv", "src,dst,timestamp\na,b,1\n");
    CHECK_THROWS_AS((void)load_dataset(tmp.file("d")), ParseError);
    write_file(tmp.file("d") + "/manifest.txt", "label_column=label\n");
    CHECK_THROWS_AS((void)load_dataset(tmp.file("d")), ParseError);
    write_file(tmp.file("d") + "/manifest.txt", "task=edge\n");
    auto g = load_dataset(tmp.file("d"));
    CHECK(g.edge_count() == 1);
    CHECK(!g.has_labels);
}

TEST_CASE("node table must cover every endpoint") {
    TempDir tmp;
    fs::create_directories(tmp.file("d"));
    write_file(tmp.file("d") + "/manifest.txt", "task=node\n");
    write_file(tmp.file("d") + "/edges.csv", "src,dst,timestamp\na,b,1\nb,c,2\n");
    write_file(tmp.file("d") + "/nodes.csv", "node_id,f,label\na,1.0,0\nb,2.0,1\n");
    CHECK_THROWS_AS((void)load_dataset(tmp.file("d")), IntegrityError);
    write_file(tmp.file("d") + "/nodes.csv",
               "node_id,f,label\na,1.0,0\nb,2.0,1\nc,3.0,0\nd,4.0,1\n");
    auto g = load_dataset(tmp.file("d"));
    CHECK(g.node_count == 4); // d is isolated but present
    CHECK(g.neighbours(3).empty());
    CHECK(g.labels == std::vector<std::int32_t>{0, 1, 0, 1});
}
