#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <set>

#include "rewirelab/data.hpp"

using namespace rewirelab;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("synth_st: stability guard, determinism, planted identity", "[data]") {
    SynthSTConfig c;
    c.n_nodes = 10;
    c.steps = 200;
    c.window = 6;
    c.horizon = 2;
    c.rho = 1.2;
    REQUIRE_THROWS_AS(synth_st(c), std::invalid_argument);

    c.rho = 0.9;
    SynthSTResult a = synth_st(c);
    SynthSTResult b = synth_st(c);
    REQUIRE(a.dataset.signal == b.dataset.signal);
    REQUIRE(graph_hash(a.planted.true_graph) == graph_hash(b.planted.true_graph));

    // zero slack: init graph is the true graph
    REQUIRE(a.planted.slack_level == 0.0);
    REQUIRE(graph_hash(a.planted.true_graph) == graph_hash(a.planted.init_graph));

    c.slack = 0.4;
    SynthSTResult s = synth_st(c);
    REQUIRE(graph_hash(s.planted.true_graph) != graph_hash(s.planted.init_graph));
    REQUIRE(s.planted.init_graph.edges.size() == s.planted.true_graph.edges.size());
}

TEST_CASE("synth_st with zero noise and identity structure is predictable", "[data]") {
    // one-step prediction by the true diffusion map reproduces the next step
    SynthSTConfig c;
    c.n_nodes = 8;
    c.steps = 120;
    c.window = 4;
    c.horizon = 1;
    c.noise = 0.0;
    c.season_amplitude = 0.0;
    c.seed = 5;
    SynthSTResult r = synth_st(c);
    const STDataset& ds = r.dataset;
    int n = ds.graph.n;
    std::vector<double> a = r.planted.true_graph.dense_adjacency();
    for (int i = 0; i < n; ++i) {
        double srow = 0;
        for (int j = 0; j < n; ++j) srow += a[static_cast<std::size_t>(i) * n + j];
        for (int j = 0; j < n; ++j) a[static_cast<std::size_t>(i) * n + j] /= srow;
    }
    for (int t = 10; t < 20; ++t)
        for (int i = 0; i < n; ++i) {
            double pred = 0;
            for (int j = 0; j < n; ++j) pred += 0.9 * a[static_cast<std::size_t>(i) * n + j] * ds.raw(t, j);
            REQUIRE(pred == Catch::Approx(ds.raw(t + 1, i)).margin(1e-9));
        }
}

TEST_CASE("synth_nc: homophily targeting and feasibility", "[data]") {
    SynthNCConfig c;
    c.n_nodes = 300;
    c.classes = 3;
    c.homophily = 0.8;
    c.mean_degree = 10;
    c.seed = 9;
    NCDataset ds = synth_nc(c);
    double h = edge_homophily(ds.graph);
    REQUIRE(h == Catch::Approx(0.8).margin(0.05));

    c.homophily = 0.5;
    c.n_nodes = 400;
    NCDataset ds2 = synth_nc(c);
    REQUIRE(edge_homophily(ds2.graph) == Catch::Approx(0.5).margin(0.06));

    SynthNCConfig bad;
    bad.n_nodes = 20;
    bad.classes = 10;
    bad.homophily = 0.99;
    bad.mean_degree = 19;
    REQUIRE_THROWS_AS(synth_nc(bad), std::invalid_argument);

    REQUIRE_THROWS_AS([] {
        SynthNCConfig c2;
        c2.homophily = 1.0;
        return synth_nc(c2);
    }(), std::invalid_argument);
}

TEST_CASE("synth_nc split stratification covers every class", "[data]") {
    SynthNCConfig c;
    c.n_nodes = 90;
    c.classes = 5;
    c.homophily = 0.7;
    NCDataset ds = synth_nc(c);
    std::set<int> train_classes;
    for (int v : ds.train_nodes) train_classes.insert(ds.graph.labels[static_cast<std::size_t>(v)]);
    REQUIRE(static_cast<int>(train_classes.size()) == 5);
    ds.validate();
}

TEST_CASE("csv round trip preserves tensors", "[data]") {
    SynthSTConfig c;
    c.n_nodes = 6;
    c.steps = 150;
    c.window = 5;
    c.horizon = 2;
    c.seed = 31;
    STDataset ds = synth_st(c).dataset;
    std::string sig = tmp_path("rwl_sig.csv"), gr = tmp_path("rwl_graph.txt");
    save_signal_csv(ds, sig);
    save_edge_list(ds.graph, gr);
    STDataset back = load_csv_st(sig, gr, 5, 2);
    REQUIRE(back.signal == ds.signal);
    REQUIRE(graph_hash(back.graph) == graph_hash(ds.graph));
    REQUIRE(back.node_mean == ds.node_mean);
    std::remove(sig.c_str());
    std::remove(gr.c_str());
}

TEST_CASE("csv loader rejects ragged rows and NaNs with row numbers", "[data]") {
    std::string gr = tmp_path("rwl_graph2.txt");
    save_edge_list(make_graph(2, {{0, 1, 1.0}}), gr);

    std::string sig = tmp_path("rwl_bad.csv");
    {
        std::ofstream f(sig);
        f << "t,node0,node1\n0,1.0,2.0\n1,3.0\n";
    }
    try {
        load_csv_st(sig, gr, 1, 1);
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        REQUIRE(std::string(e.what()).find("row 3") != std::string::npos);
    }
    {
        std::ofstream f(sig);
        f << "t,node0,node1\n0,1.0,nan\n";
    }
    REQUIRE_THROWS_AS(load_csv_st(sig, gr, 1, 1), std::invalid_argument);
    std::remove(sig.c_str());
    std::remove(gr.c_str());
}

TEST_CASE("window+horizon exceeding a split errors", "[data]") {
    SynthSTConfig c;
    c.n_nodes = 5;
    c.steps = 60;
    c.window = 10;
    c.horizon = 3;
    REQUIRE_THROWS_AS(synth_st(c), std::invalid_argument);  // val split has only 6 steps
}

TEST_CASE("normalization: train split has mean 0 std 1 after fit", "[data]") {
    SynthSTConfig c;
    c.n_nodes = 7;
    c.steps = 300;
    c.window = 6;
    c.horizon = 2;
    c.seed = 77;
    STDataset ds = synth_st(c).dataset;
    for (int v = 0; v < ds.graph.n; ++v) {
        double m = 0, m2 = 0;
        int count = ds.splits.train_end - ds.splits.train_begin;
        for (int t = ds.splits.train_begin; t < ds.splits.train_end; ++t) {
            m += ds.normalized(t, v);
            m2 += ds.normalized(t, v) * ds.normalized(t, v);
        }
        m /= count;
        m2 /= count;
        REQUIRE(m == Catch::Approx(0.0).margin(1e-9));
        REQUIRE(m2 == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("batch_iter: determinism, coverage, count, split isolation", "[data]") {
    SynthSTConfig c;
    c.n_nodes = 5;
    c.steps = 400;
    c.window = 8;
    c.horizon = 2;
    STDataset ds = synth_st(c).dataset;

    auto b1 = batch_iter(ds, 16, 99, Split::Train);
    auto b2 = batch_iter(ds, 16, 99, Split::Train);
    REQUIRE(b1 == b2);
    auto b3 = batch_iter(ds, 16, 100, Split::Train);
    REQUIRE(b1 != b3);

    // union of batches == all valid window starts, each exactly once
    std::set<int> seen;
    std::size_t total = 0;
    for (const auto& b : b1) {
        total += b.size();
        for (int s : b) seen.insert(s);
    }
    auto starts = ds.window_starts(Split::Train);
    REQUIRE(total == starts.size());
    REQUIRE(seen == std::set<int>(starts.begin(), starts.end()));
    REQUIRE(b1.size() == (starts.size() + 15) / 16);

    // no leakage: every train window stays inside the train range
    for (int s : starts) {
        REQUIRE(s >= ds.splits.train_begin);
        REQUIRE(s + ds.window + ds.horizon <= ds.splits.train_end);
    }
    // val/test batches are sequential
    auto vb = batch_iter(ds, 16, 1, Split::Val);
    std::vector<int> flat;
    for (const auto& b : vb) flat.insert(flat.end(), b.begin(), b.end());
    REQUIRE(std::is_sorted(flat.begin(), flat.end()));
}
