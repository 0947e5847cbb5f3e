#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "rewirelab/rng.hpp"

namespace rewirelab {

constexpr int kUnreachable = std::numeric_limits<int>::max();

struct Edge {
    int i, j;       // i < j, undirected storage
    double w;
};

struct Coord {
    double lat, lon;  // degrees for geographic data; (x, y) for planar layouts
};

// Weighted symmetric adjacency with optional node coordinates, labels and
// features. Immutable by convention: operations return new graphs.
struct Graph {
    int n = 0;
    std::vector<Edge> edges;
    std::vector<Coord> coords;                 // optional (empty or size n)
    std::vector<int> labels;                   // optional
    std::vector<std::vector<double>> features; // optional, one row per node

    void validate() const {
        if (n < 0) throw std::invalid_argument("Graph: negative node count");
        std::set<std::pair<int, int>> seen;
        for (const Edge& e : edges) {
            if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n)
                throw std::invalid_argument("Graph: edge endpoint out of range");
            if (e.i == e.j) throw std::invalid_argument("Graph: self-loop at node " + std::to_string(e.i));
            if (e.i > e.j) throw std::invalid_argument("Graph: edge not stored with i < j");
            if (!seen.insert({e.i, e.j}).second)
                throw std::invalid_argument("Graph: duplicate edge (" + std::to_string(e.i) + "," + std::to_string(e.j) + ")");
            if (!std::isfinite(e.w) || e.w < 0) throw std::invalid_argument("Graph: edge weight must be finite and >= 0");
        }
        if (!coords.empty() && static_cast<int>(coords.size()) != n) throw std::invalid_argument("Graph: coords size mismatch");
        if (!labels.empty() && static_cast<int>(labels.size()) != n) throw std::invalid_argument("Graph: labels size mismatch");
        if (!features.empty() && static_cast<int>(features.size()) != n) throw std::invalid_argument("Graph: features size mismatch");
    }

    std::vector<std::vector<std::pair<int, double>>> adjacency_list() const {
        std::vector<std::vector<std::pair<int, double>>> adj(static_cast<std::size_t>(n));
        for (const Edge& e : edges) {
            adj[static_cast<std::size_t>(e.i)].push_back({e.j, e.w});
            adj[static_cast<std::size_t>(e.j)].push_back({e.i, e.w});
        }
        return adj;
    }

    // Dense symmetric adjacency, row-major n*n.
    std::vector<double> dense_adjacency() const {
        std::vector<double> a(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
        for (const Edge& e : edges) {
            a[static_cast<std::size_t>(e.i) * n + e.j] = e.w;
            a[static_cast<std::size_t>(e.j) * n + e.i] = e.w;
        }
        return a;
    }

    std::vector<double> degrees() const {
        std::vector<double> d(static_cast<std::size_t>(n), 0.0);
        for (const Edge& e : edges) {
            d[static_cast<std::size_t>(e.i)] += e.w;
            d[static_cast<std::size_t>(e.j)] += e.w;
        }
        return d;
    }

    bool has_edge(int i, int j) const {
        if (i > j) std::swap(i, j);
        for (const Edge& e : edges)
            if (e.i == i && e.j == j) return true;
        return false;
    }
};

inline Graph make_graph(int n, std::vector<Edge> edges) {
    Graph g;
    g.n = n;
    for (Edge& e : edges)
        if (e.i > e.j) std::swap(e.i, e.j);
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        return a.i != b.i ? a.i < b.i : a.j < b.j;
    });
    g.edges = std::move(edges);
    g.validate();
    return g;
}

struct ComponentReport {
    int component_count = 0;
    std::vector<int> component_sizes;  // sorted descending
    int isolated_count = 0;
    std::vector<int> lcc_nodes;        // ascending node ids
    std::vector<int> component_of;     // per-node component id (by smallest member)
};

inline ComponentReport connected_components(const Graph& g) {
    ComponentReport rep;
    rep.component_of.assign(static_cast<std::size_t>(g.n), -1);
    auto adj = g.adjacency_list();
    std::vector<std::vector<int>> comps;
    for (int s = 0; s < g.n; ++s) {
        if (rep.component_of[static_cast<std::size_t>(s)] != -1) continue;
        int cid = static_cast<int>(comps.size());
        comps.push_back({});
        std::queue<int> q;
        q.push(s);
        rep.component_of[static_cast<std::size_t>(s)] = cid;
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            comps[static_cast<std::size_t>(cid)].push_back(u);
            for (auto [v, w] : adj[static_cast<std::size_t>(u)]) {
                (void)w;
                if (rep.component_of[static_cast<std::size_t>(v)] == -1) {
                    rep.component_of[static_cast<std::size_t>(v)] = cid;
                    q.push(v);
                }
            }
        }
    }
    rep.component_count = static_cast<int>(comps.size());
    std::size_t lcc_idx = 0;
    for (std::size_t c = 0; c < comps.size(); ++c) {
        rep.component_sizes.push_back(static_cast<int>(comps[c].size()));
        if (comps[c].size() == 1) ++rep.isolated_count;
        if (comps[c].size() > comps[lcc_idx].size()) lcc_idx = c;
    }
    if (!comps.empty()) {
        rep.lcc_nodes = comps[lcc_idx];
        std::sort(rep.lcc_nodes.begin(), rep.lcc_nodes.end());
    }
    std::sort(rep.component_sizes.begin(), rep.component_sizes.end(), std::greater<int>());
    return rep;
}

// ---- distances ----

inline double haversine_km(const Coord& a, const Coord& b) {
    constexpr double kEarthRadiusKm = 6371.0;
    constexpr double d2r = 3.14159265358979323846 / 180.0;
    double lat1 = a.lat * d2r, lat2 = b.lat * d2r;
    double dlat = (b.lat - a.lat) * d2r, dlon = (b.lon - a.lon) * d2r;
    double s = std::sin(dlat / 2), t = std::sin(dlon / 2);
    double h = s * s + std::cos(lat1) * std::cos(lat2) * t * t;
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

inline double euclidean(const Coord& a, const Coord& b) {
    double dx = a.lat - b.lat, dy = a.lon - b.lon;
    return std::sqrt(dx * dx + dy * dy);
}

enum class DistanceMetric { GreatCircle, Euclidean };

inline double node_distance(const Coord& a, const Coord& b, DistanceMetric m) {
    return m == DistanceMetric::GreatCircle ? haversine_km(a, b) : euclidean(a, b);
}

// Thresholded Gaussian-kernel adjacency: edge (i,j) iff exp(-d^2/theta^2) >= tau,
// retaining the raw kernel value as the weight.
inline Graph gaussian_kernel_adjacency(const std::vector<Coord>& coords, double theta, double tau,
                                       DistanceMetric metric = DistanceMetric::GreatCircle) {
    if (theta <= 0) throw std::invalid_argument("gaussian_kernel_adjacency: bandwidth must be > 0");
    if (tau < 0 || tau >= 1) throw std::invalid_argument("gaussian_kernel_adjacency: threshold must lie in [0,1)");
    Graph g;
    g.n = static_cast<int>(coords.size());
    g.coords = coords;
    for (int i = 0; i < g.n; ++i)
        for (int j = i + 1; j < g.n; ++j) {
            double d = node_distance(coords[static_cast<std::size_t>(i)], coords[static_cast<std::size_t>(j)], metric);
            double k = std::exp(-(d * d) / (theta * theta));
            if (k >= tau) g.edges.push_back({i, j, k});
        }
    g.validate();
    return g;
}

// Single-linkage clustering at a distance cutoff: connected components of the
// graph with edges {d <= cutoff}. Ties at exactly the cutoff join.
inline std::vector<int> single_linkage_clusters(const std::vector<Coord>& coords, double cutoff,
                                                DistanceMetric metric = DistanceMetric::GreatCircle) {
    if (cutoff <= 0) throw std::invalid_argument("single_linkage_clusters: cutoff must be > 0");
    int n = static_cast<int>(coords.size());
    Graph g;
    g.n = n;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (node_distance(coords[static_cast<std::size_t>(i)], coords[static_cast<std::size_t>(j)], metric) <= cutoff)
                g.edges.push_back({i, j, 1.0});
    return connected_components(g).component_of;
}

// ---- bandwidth ablation ----

struct BandwidthRule {
    enum class Kind { Fixed, StdOfSubset, Percentile } kind;
    std::string name;
    double value = 0;                 // Fixed: theta; Percentile: p in [0,100]
    std::vector<int> subset;          // StdOfSubset: node ids
};

struct BandwidthRow {
    std::string rule;
    double theta = 0;
    int component_count = 0;
    int isolated_count = 0;
    double mean_degree = 0;
    long long edge_count = 0;
    long long inter_cluster_edges = 0;
};

inline double pairwise_distance_std(const std::vector<Coord>& coords, const std::vector<int>& subset,
                                    DistanceMetric metric) {
    if (subset.size() < 2) throw std::invalid_argument("bandwidth rule: subset must contain at least 2 nodes");
    std::vector<double> d;
    for (std::size_t a = 0; a < subset.size(); ++a)
        for (std::size_t b = a + 1; b < subset.size(); ++b)
            d.push_back(node_distance(coords[static_cast<std::size_t>(subset[a])],
                                      coords[static_cast<std::size_t>(subset[b])], metric));
    double mean = 0;
    for (double x : d) mean += x;
    mean /= static_cast<double>(d.size());
    double var = 0;
    for (double x : d) var += (x - mean) * (x - mean);
    var /= static_cast<double>(d.size());
    return std::sqrt(var);
}

inline double pairwise_distance_percentile(const std::vector<Coord>& coords, double p, DistanceMetric metric) {
    std::vector<double> d;
    int n = static_cast<int>(coords.size());
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            d.push_back(node_distance(coords[static_cast<std::size_t>(i)], coords[static_cast<std::size_t>(j)], metric));
    if (d.empty()) throw std::invalid_argument("percentile rule: fewer than 2 nodes");
    std::sort(d.begin(), d.end());
    double idx = (p / 100.0) * static_cast<double>(d.size() - 1);
    std::size_t lo = static_cast<std::size_t>(idx);
    std::size_t hi = std::min(lo + 1, d.size() - 1);
    double frac = idx - static_cast<double>(lo);
    return d[lo] * (1 - frac) + d[hi] * frac;
}

// One table row per bandwidth rule: connectivity statistics of the kernel
// graph plus the number of edges crossing single-linkage clusters at the
// given cluster cutoff.
inline std::vector<BandwidthRow> bandwidth_ablation(const std::vector<Coord>& coords,
                                                    const std::vector<BandwidthRule>& rules, double tau,
                                                    double cluster_cutoff_km = 80.0,
                                                    DistanceMetric metric = DistanceMetric::GreatCircle) {
    std::vector<int> cluster = single_linkage_clusters(coords, cluster_cutoff_km, metric);
    std::vector<BandwidthRow> rows;
    for (const BandwidthRule& r : rules) {
        double theta = 0;
        switch (r.kind) {
            case BandwidthRule::Kind::Fixed: theta = r.value; break;
            case BandwidthRule::Kind::StdOfSubset: theta = pairwise_distance_std(coords, r.subset, metric); break;
            case BandwidthRule::Kind::Percentile: theta = pairwise_distance_percentile(coords, r.value, metric); break;
        }
        Graph g = gaussian_kernel_adjacency(coords, theta, tau, metric);
        ComponentReport rep = connected_components(g);
        BandwidthRow row;
        row.rule = r.name;
        row.theta = theta;
        row.component_count = rep.component_count;
        row.isolated_count = rep.isolated_count;
        row.edge_count = static_cast<long long>(g.edges.size());
        row.mean_degree = g.n > 0 ? 2.0 * static_cast<double>(g.edges.size()) / g.n : 0.0;
        for (const Edge& e : g.edges)
            if (cluster[static_cast<std::size_t>(e.i)] != cluster[static_cast<std::size_t>(e.j)]) ++row.inter_cluster_edges;
        rows.push_back(row);
    }
    return rows;
}

// ---- corruption ----

// Random edge swap: remove floor(r*|E|) existing edges uniformly, then add the
// same number sampled uniformly from the complement of the post-removal edge
// set. Edge count, symmetry and the no-self-loop invariant are preserved;
// deterministic in the seed. Added edges carry weight 1.
inline Graph corrupt_edges(const Graph& g, double r, std::uint64_t seed) {
    if (r < 0 || r > 1) throw std::invalid_argument("corrupt_edges: fraction must lie in [0,1]");
    long long m = static_cast<long long>(g.edges.size());
    long long k = static_cast<long long>(r * static_cast<double>(m));
    Rng rng(seed);

    std::vector<int> order(static_cast<std::size_t>(m));
    for (long long i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = static_cast<int>(i);
    rng.shuffle(order);

    std::set<std::pair<int, int>> current;
    for (const Edge& e : g.edges) current.insert({e.i, e.j});
    std::map<std::pair<int, int>, double> weights;
    for (const Edge& e : g.edges) weights[{e.i, e.j}] = e.w;
    for (long long i = 0; i < k; ++i) {
        const Edge& e = g.edges[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        current.erase({e.i, e.j});
    }

    long long max_pairs = static_cast<long long>(g.n) * (g.n - 1) / 2;
    if (max_pairs - static_cast<long long>(current.size()) < k)
        throw std::invalid_argument("corrupt_edges: complement too small to add " + std::to_string(k) + " edges");

    std::set<std::pair<int, int>> added;
    while (static_cast<long long>(added.size()) < k) {
        int i = rng.index(g.n);
        int j = rng.index(g.n);
        if (i == j) continue;
        if (i > j) std::swap(i, j);
        if (current.count({i, j}) || added.count({i, j})) continue;
        added.insert({i, j});
    }

    Graph out;
    out.n = g.n;
    out.coords = g.coords;
    out.labels = g.labels;
    out.features = g.features;
    for (const auto& p : current) out.edges.push_back({p.first, p.second, weights[p]});
    for (const auto& p : added) out.edges.push_back({p.first, p.second, 1.0});
    std::sort(out.edges.begin(), out.edges.end(), [](const Edge& a, const Edge& b) {
        return a.i != b.i ? a.i < b.i : a.j < b.j;
    });
    out.validate();
    return out;
}

// ---- BFS distances ----

// Unweighted hop distances from each source; kUnreachable marks disconnected
// pairs.
inline std::vector<std::vector<int>> bfs_distances(const Graph& g, const std::vector<int>& sources) {
    auto adj = g.adjacency_list();
    std::vector<std::vector<int>> out;
    for (int s : sources) {
        if (s < 0 || s >= g.n) throw std::out_of_range("bfs_distances: source out of range");
        std::vector<int> dist(static_cast<std::size_t>(g.n), kUnreachable);
        std::queue<int> q;
        dist[static_cast<std::size_t>(s)] = 0;
        q.push(s);
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            for (auto [v, w] : adj[static_cast<std::size_t>(u)]) {
                (void)w;
                if (dist[static_cast<std::size_t>(v)] == kUnreachable) {
                    dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
                    q.push(v);
                }
            }
        }
        out.push_back(std::move(dist));
    }
    return out;
}

// ---- label statistics ----

// Node-averaged same-label neighbor fraction; isolated nodes are excluded
// from the mean.
inline double edge_homophily(const Graph& g) {
    if (g.labels.empty()) throw std::invalid_argument("edge_homophily: graph has no labels");
    auto adj = g.adjacency_list();
    double acc = 0;
    int counted = 0;
    for (int u = 0; u < g.n; ++u) {
        const auto& nb = adj[static_cast<std::size_t>(u)];
        if (nb.empty()) continue;
        int same = 0;
        for (auto [v, w] : nb) {
            (void)w;
            if (g.labels[static_cast<std::size_t>(v)] == g.labels[static_cast<std::size_t>(u)]) ++same;
        }
        acc += static_cast<double>(same) / static_cast<double>(nb.size());
        ++counted;
    }
    if (counted == 0) throw std::invalid_argument("edge_homophily: all nodes isolated");
    return acc / static_cast<double>(counted);
}

// ---- weight deltas between an original and a learned graph ----

struct WeightDeltaStats {
    double median = 0;
    double q25 = 0, q75 = 0;
    double fraction_below_0p1 = 0;
    std::vector<long long> histogram;  // counts
    std::vector<double> bin_edges;     // histogram.size() + 1 edges
    long long edge_count = 0;
};

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0;
    double idx = q * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(idx);
    std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = idx - static_cast<double>(lo);
    return sorted[lo] * (1 - frac) + sorted[hi] * frac;
}

// |delta w| distribution over the edges of the original graph; edges absent
// from the learned graph count as weight zero there.
inline WeightDeltaStats weight_delta_stats(const Graph& original, const Graph& learned, int bins = 20) {
    if (original.n != learned.n) throw std::invalid_argument("weight_delta_stats: node count mismatch");
    std::map<std::pair<int, int>, double> lw;
    for (const Edge& e : learned.edges) lw[{e.i, e.j}] = e.w;
    std::vector<double> deltas;
    for (const Edge& e : original.edges) {
        auto it = lw.find({e.i, e.j});
        double w2 = it == lw.end() ? 0.0 : it->second;
        deltas.push_back(std::fabs(w2 - e.w));
    }
    WeightDeltaStats s;
    s.edge_count = static_cast<long long>(deltas.size());
    if (deltas.empty()) return s;
    std::sort(deltas.begin(), deltas.end());
    s.median = quantile_sorted(deltas, 0.5);
    s.q25 = quantile_sorted(deltas, 0.25);
    s.q75 = quantile_sorted(deltas, 0.75);
    long long below = 0;
    for (double d : deltas)
        if (d < 0.1) ++below;
    s.fraction_below_0p1 = static_cast<double>(below) / static_cast<double>(deltas.size());
    double hi = std::max(deltas.back(), 1e-12);
    s.histogram.assign(static_cast<std::size_t>(bins), 0);
    for (int b = 0; b <= bins; ++b) s.bin_edges.push_back(hi * static_cast<double>(b) / bins);
    for (double d : deltas) {
        int b = std::min(bins - 1, static_cast<int>(d / hi * bins));
        ++s.histogram[static_cast<std::size_t>(b)];
    }
    return s;
}

// Order-independent hash of the edge structure; used to assert that parallel
// arms of a study consumed the identical graph.
inline std::uint64_t graph_hash(const Graph& g) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto mix = [&h](std::uint64_t v) {
        h ^= v;
        h *= 0x100000001B3ULL;
    };
    mix(static_cast<std::uint64_t>(g.n));
    for (const Edge& e : g.edges) {
        mix(static_cast<std::uint64_t>(e.i));
        mix(static_cast<std::uint64_t>(e.j));
        std::uint64_t wb;
        static_assert(sizeof(double) == sizeof(std::uint64_t));
        std::memcpy(&wb, &e.w, sizeof(wb));
        mix(wb);
    }
    return h;
}

}  // namespace rewirelab
