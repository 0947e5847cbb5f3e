#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <set>

#include "rewirelab/graph.hpp"

using namespace rewirelab;

namespace {

// Independent union-find oracle for component counting.
struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) { return parent[static_cast<std::size_t>(x)] == x ? x : parent[static_cast<std::size_t>(x)] = find(parent[static_cast<std::size_t>(x)]); }
    void unite(int a, int b) { parent[static_cast<std::size_t>(find(a))] = find(b); }
};

Graph random_graph(int n, double p, Rng& rng) {
    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (rng.uniform() < p) edges.push_back({i, j, rng.uniform(0.1, 1.0)});
    return make_graph(n, std::move(edges));
}

// Two planar clusters of given width (km-scale coordinates faked as lat/lon
// offsets near the equator where 1 degree ~ 111.19 km).
std::vector<Coord> two_cluster_layout(int per_cluster, double width_km, double separation_km, Rng& rng) {
    std::vector<Coord> coords;
    double deg_per_km = 1.0 / 111.19;
    for (int c = 0; c < 2; ++c) {
        double base_lon = c * separation_km * deg_per_km;
        for (int i = 0; i < per_cluster; ++i)
            coords.push_back({rng.uniform(0, width_km * deg_per_km), base_lon + rng.uniform(0, width_km * deg_per_km)});
    }
    return coords;
}

}  // namespace

TEST_CASE("graph invariants are enforced", "[graph]") {
    REQUIRE_THROWS_AS(make_graph(3, {{0, 0, 1.0}}), std::invalid_argument);
    REQUIRE_THROWS_AS(make_graph(3, {{0, 1, 1.0}, {1, 0, 1.0}}), std::invalid_argument);
    REQUIRE_THROWS_AS(make_graph(3, {{0, 1, -0.5}}), std::invalid_argument);
    REQUIRE_THROWS_AS(make_graph(2, {{0, 5, 1.0}}), std::invalid_argument);
    Graph g = make_graph(3, {{1, 0, 0.5}});  // unordered input is normalized
    REQUIRE(g.edges[0].i == 0);
    REQUIRE(g.edges[0].j == 1);
}

TEST_CASE("connected components: trivial cases", "[graph]") {
    Graph empty5 = make_graph(5, {});
    ComponentReport rep = connected_components(empty5);
    REQUIRE(rep.component_count == 5);
    REQUIRE(rep.isolated_count == 5);

    Graph p4 = make_graph(4, {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}});
    REQUIRE(connected_components(p4).component_count == 1);
}

TEST_CASE("connected components match union-find oracle", "[graph]") {
    Rng rng(11);
    for (int trial = 0; trial < 25; ++trial) {
        Graph g = random_graph(rng.index(40) + 2, rng.uniform(0.0, 0.15), rng);
        UnionFind uf(g.n);
        for (const Edge& e : g.edges) uf.unite(e.i, e.j);
        std::set<int> roots;
        for (int i = 0; i < g.n; ++i) roots.insert(uf.find(i));
        ComponentReport rep = connected_components(g);
        REQUIRE(rep.component_count == static_cast<int>(roots.size()));
        long long total = 0;
        for (int s : rep.component_sizes) total += s;
        REQUIRE(total == g.n);
        REQUIRE(static_cast<int>(rep.lcc_nodes.size()) == rep.component_sizes.front());
    }
}

TEST_CASE("gaussian kernel adjacency basics", "[graph]") {
    REQUIRE_THROWS_AS(gaussian_kernel_adjacency({{0, 0}, {1, 1}}, 0.0, 0.1), std::invalid_argument);

    // two nodes at distance zero -> one edge of weight 1
    Graph g = gaussian_kernel_adjacency({{10.0, 20.0}, {10.0, 20.0}}, 5.0, 0.1);
    REQUIRE(g.edges.size() == 1);
    REQUIRE(g.edges[0].w == Catch::Approx(1.0));

    Graph g1 = gaussian_kernel_adjacency({{0.0, 0.0}}, 5.0, 0.1);
    REQUIRE(g1.edges.empty());
}

TEST_CASE("two-cluster layout: bandwidth controls inter-cluster edges", "[graph]") {
    Rng rng(7);
    std::vector<Coord> coords = two_cluster_layout(12, 10.0, 500.0, rng);
    std::vector<int> cluster = single_linkage_clusters(coords, 80.0);

    Graph narrow = gaussian_kernel_adjacency(coords, 20.0, 0.1);
    for (const Edge& e : narrow.edges)
        REQUIRE(cluster[static_cast<std::size_t>(e.i)] == cluster[static_cast<std::size_t>(e.j)]);

    Graph wide = gaussian_kernel_adjacency(coords, 400.0, 0.1);
    int inter = 0;
    for (const Edge& e : wide.edges)
        if (cluster[static_cast<std::size_t>(e.i)] != cluster[static_cast<std::size_t>(e.j)]) ++inter;
    REQUIRE(inter > 0);
}

TEST_CASE("kernel adjacency is monotone in bandwidth", "[graph]") {
    Rng rng(13);
    std::vector<Coord> coords = two_cluster_layout(10, 15.0, 300.0, rng);
    std::vector<double> thetas = {5, 10, 20, 50, 100, 200, 400};
    std::set<std::pair<int, int>> prev;
    int prev_components = std::numeric_limits<int>::max();
    for (double th : thetas) {
        Graph g = gaussian_kernel_adjacency(coords, th, 0.1);
        std::set<std::pair<int, int>> cur;
        for (const Edge& e : g.edges) cur.insert({e.i, e.j});
        for (const auto& e : prev) REQUIRE(cur.count(e) == 1);
        int comps = connected_components(g).component_count;
        REQUIRE(comps <= prev_components);
        prev_components = comps;
        prev = cur;
    }
}

TEST_CASE("single linkage chains and boundary", "[graph]") {
    double km = 1.0 / 111.19;  // one km in equatorial degrees
    // all points within cutoff -> one cluster
    std::vector<Coord> tight = {{0, 0}, {0, 10 * km}, {10 * km, 0}};
    auto c1 = single_linkage_clusters(tight, 80.0);
    REQUIRE(c1[0] == c1[1]);
    REQUIRE(c1[1] == c1[2]);

    // chain: spacing 0.9 cutoff, endpoints 1.8 cutoff apart
    std::vector<Coord> chain = {{0, 0}, {0, 72 * km}, {0, 144 * km}};
    auto c2 = single_linkage_clusters(chain, 80.0);
    REQUIRE(c2[0] == c2[2]);

    // exactly at cutoff joins (<= convention); comfortably beyond does not
    std::vector<Coord> apart = {{0, 0}, {0, 81 * km}};
    auto c3 = single_linkage_clusters(apart, 80.0);
    REQUIRE(c3[0] != c3[1]);
    auto c4 = single_linkage_clusters({{0, 0}, {0, 79.9 * km}}, 80.0);
    REQUIRE(c4[0] == c4[1]);

    // equals connected components of the {d <= cutoff} graph by construction
    Rng rng(5);
    auto coords = two_cluster_layout(8, 30.0, 200.0, rng);
    auto sl = single_linkage_clusters(coords, 40.0);
    Graph cut;
    cut.n = static_cast<int>(coords.size());
    for (int i = 0; i < cut.n; ++i)
        for (int j = i + 1; j < cut.n; ++j)
            if (haversine_km(coords[static_cast<std::size_t>(i)], coords[static_cast<std::size_t>(j)]) <= 40.0)
                cut.edges.push_back({i, j, 1.0});
    auto comp = connected_components(cut).component_of;
    for (int i = 0; i < cut.n; ++i)
        for (int j = 0; j < cut.n; ++j)
            REQUIRE((sl[static_cast<std::size_t>(i)] == sl[static_cast<std::size_t>(j)]) ==
                    (comp[static_cast<std::size_t>(i)] == comp[static_cast<std::size_t>(j)]));
}

TEST_CASE("bandwidth ablation table", "[graph]") {
    Rng rng(3);
    auto coords = two_cluster_layout(10, 10.0, 500.0, rng);
    std::vector<int> subset(10);
    std::iota(subset.begin(), subset.end(), 0);  // first cluster only
    std::vector<BandwidthRule> rules = {
        {BandwidthRule::Kind::StdOfSubset, "intra-cluster std", 0, subset},
        {BandwidthRule::Kind::Percentile, "p95", 95, {}},
        {BandwidthRule::Kind::Fixed, "fixed 20km", 20.0, {}},
    };
    auto rows = bandwidth_ablation(coords, rules, 0.1);
    REQUIRE(rows.size() == 3);
    REQUIRE(rows[0].inter_cluster_edges == 0);   // intra-cluster bandwidth keeps blocks separate
    REQUIRE(rows[1].component_count == 1);       // p95 bandwidth connects everything
    REQUIRE(rows[1].inter_cluster_edges > 0);
    REQUIRE_THROWS_AS(bandwidth_ablation(coords, {{BandwidthRule::Kind::StdOfSubset, "bad", 0, {0}}}, 0.1),
                      std::invalid_argument);

    // single cluster, bandwidth above max distance -> complete single-component graph
    std::vector<Coord> one;
    for (int i = 0; i < 6; ++i) one.push_back({rng.uniform(0, 0.01), rng.uniform(0, 0.01)});
    auto rows2 = bandwidth_ablation(one, {{BandwidthRule::Kind::Fixed, "huge", 1000.0, {}}}, 0.1);
    REQUIRE(rows2[0].component_count == 1);
    REQUIRE(rows2[0].edge_count == 15);
}

TEST_CASE("corrupt_edges: identity at r=0, count preserved, deterministic", "[graph]") {
    Rng rng(21);
    Graph g = random_graph(20, 0.2, rng);
    Graph same = corrupt_edges(g, 0.0, 99);
    REQUIRE(same.edges.size() == g.edges.size());
    for (std::size_t i = 0; i < g.edges.size(); ++i) {
        REQUIRE(same.edges[i].i == g.edges[i].i);
        REQUIRE(same.edges[i].j == g.edges[i].j);
    }

    Graph c1 = corrupt_edges(g, 0.4, 123);
    Graph c2 = corrupt_edges(g, 0.4, 123);
    REQUIRE(graph_hash(c1) == graph_hash(c2));
    REQUIRE(c1.edges.size() == g.edges.size());

    long long expected_removed = static_cast<long long>(0.4 * static_cast<double>(g.edges.size()));
    std::set<std::pair<int, int>> orig, cor;
    for (const Edge& e : g.edges) orig.insert({e.i, e.j});
    for (const Edge& e : c1.edges) cor.insert({e.i, e.j});
    long long removed = 0;
    for (const auto& e : orig)
        if (!cor.count(e)) ++removed;
    REQUIRE(removed == expected_removed);
}

TEST_CASE("corrupt_edges full swap on a complete graph stays legal", "[graph]") {
    // removal happens first, so the freed slots always leave room for the
    // additions; the result must still satisfy every graph invariant
    std::vector<Edge> all;
    for (int i = 0; i < 5; ++i)
        for (int j = i + 1; j < 5; ++j) all.push_back({i, j, 1.0});
    Graph k5 = make_graph(5, std::move(all));
    Graph swapped = corrupt_edges(k5, 1.0, 7);
    REQUIRE(swapped.edges.size() == 10);
    swapped.validate();
}

TEST_CASE("bfs distances: trivial and Floyd-Warshall oracle", "[graph]") {
    Graph p4 = make_graph(4, {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}});
    auto d = bfs_distances(p4, {0});
    REQUIRE(d[0][0] == 0);
    REQUIRE(d[0][3] == 3);

    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        int n = 8 + rng.index(30);
        Graph g = random_graph(n, 0.12, rng);
        std::vector<std::vector<long long>> fw(static_cast<std::size_t>(n),
                                               std::vector<long long>(static_cast<std::size_t>(n), 1 << 20));
        for (int i = 0; i < n; ++i) fw[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 0;
        for (const Edge& e : g.edges) {
            fw[static_cast<std::size_t>(e.i)][static_cast<std::size_t>(e.j)] = 1;
            fw[static_cast<std::size_t>(e.j)][static_cast<std::size_t>(e.i)] = 1;
        }
        for (int k = 0; k < n; ++k)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    fw[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                        std::min(fw[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)],
                                 fw[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] +
                                     fw[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)]);
        std::vector<int> sources(static_cast<std::size_t>(n));
        std::iota(sources.begin(), sources.end(), 0);
        auto bfs = bfs_distances(g, sources);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                long long oracle = fw[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                int got = bfs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                if (oracle >= (1 << 20))
                    REQUIRE(got == kUnreachable);
                else
                    REQUIRE(got == static_cast<int>(oracle));
            }
    }
}

TEST_CASE("edge homophily", "[graph]") {
    Graph same = make_graph(3, {{0, 1, 1}, {1, 2, 1}});
    same.labels = {1, 1, 1};
    REQUIRE(edge_homophily(same) == Catch::Approx(1.0));

    Graph diff = make_graph(2, {{0, 1, 1}});
    diff.labels = {0, 1};
    REQUIRE(edge_homophily(diff) == Catch::Approx(0.0));

    Graph iso = make_graph(3, {});
    iso.labels = {0, 1, 0};
    REQUIRE_THROWS_AS(edge_homophily(iso), std::invalid_argument);

    // planted 2-block: hand count of node-averaged same-label fractions
    Graph blk = make_graph(4, {{0, 1, 1}, {2, 3, 1}, {1, 2, 1}});
    blk.labels = {0, 0, 1, 1};
    // node0: 1/1, node1: 1/2, node2: 1/2, node3: 1/1 -> mean = 3/4
    REQUIRE(edge_homophily(blk) == Catch::Approx(0.75));
}

TEST_CASE("weight delta stats", "[graph]") {
    Rng rng(41);
    Graph g = random_graph(15, 0.3, rng);
    WeightDeltaStats zero = weight_delta_stats(g, g);
    REQUIRE(zero.median == 0.0);
    REQUIRE(zero.fraction_below_0p1 == 1.0);

    Graph shifted = g;
    for (Edge& e : shifted.edges) e.w += 0.2;
    WeightDeltaStats s = weight_delta_stats(g, shifted);
    REQUIRE(s.median == Catch::Approx(0.2));

    Graph other = random_graph(14, 0.3, rng);
    REQUIRE_THROWS_AS(weight_delta_stats(g, other), std::invalid_argument);

    // random perturbation matches direct recomputation
    Graph pert = g;
    std::vector<double> expect;
    for (Edge& e : pert.edges) {
        double d = rng.uniform(0, 0.5);
        e.w += d;
        expect.push_back(d);
    }
    std::sort(expect.begin(), expect.end());
    WeightDeltaStats sp = weight_delta_stats(g, pert);
    REQUIRE(sp.median == Catch::Approx(quantile_sorted(expect, 0.5)));
}

TEST_CASE("haversine earth radius convention", "[graph]") {
    // one degree of latitude ~ 111.19 km at radius 6371 km
    double d = haversine_km({0, 0}, {1, 0});
    REQUIRE(d == Catch::Approx(6371.0 * 3.14159265358979323846 / 180.0).epsilon(1e-9));
}
