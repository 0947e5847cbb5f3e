#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rewirelab/graph.hpp"
#include "rewirelab/graph_io.hpp"
#include "rewirelab/rng.hpp"

namespace rewirelab {

// Contiguous time ranges [begin, end) for train/val/test.
struct SplitRanges {
    int train_begin = 0, train_end = 0;
    int val_begin = 0, val_end = 0;
    int test_begin = 0, test_end = 0;
};

inline SplitRanges default_splits(int steps, double train_frac = 0.7, double val_frac = 0.1) {
    SplitRanges s;
    s.train_begin = 0;
    s.train_end = static_cast<int>(steps * train_frac);
    s.val_begin = s.train_end;
    s.val_end = s.train_end + static_cast<int>(steps * val_frac);
    s.test_begin = s.val_end;
    s.test_end = steps;
    return s;
}

enum class Split { Train, Val, Test };

// Spatio-temporal dataset: raw (unnormalized) time x node signal plus the
// graph the models consume. Normalization statistics are fit on the train
// split only; batches are produced in normalized units.
struct STDataset {
    Graph graph;
    std::vector<double> signal;  // row-major steps x n
    int steps = 0;
    int window = 0;
    int horizon = 0;
    SplitRanges splits;
    std::vector<double> node_mean, node_std;

    double raw(int t, int node) const { return signal[static_cast<std::size_t>(t) * graph.n + node]; }
    double normalized(int t, int node) const {
        return (raw(t, node) - node_mean[static_cast<std::size_t>(node)]) / node_std[static_cast<std::size_t>(node)];
    }
    double denormalize(double z, int node) const {
        return z * node_std[static_cast<std::size_t>(node)] + node_mean[static_cast<std::size_t>(node)];
    }

    std::pair<int, int> split_range(Split s) const {
        switch (s) {
            case Split::Train: return {splits.train_begin, splits.train_end};
            case Split::Val: return {splits.val_begin, splits.val_end};
            default: return {splits.test_begin, splits.test_end};
        }
    }

    // Valid window start indices: the full window+horizon fits in the split.
    std::vector<int> window_starts(Split s) const {
        auto [b, e] = split_range(s);
        std::vector<int> out;
        for (int t = b; t + window + horizon <= e; ++t) out.push_back(t);
        return out;
    }

    void fit_normalization() {
        node_mean.assign(static_cast<std::size_t>(graph.n), 0.0);
        node_std.assign(static_cast<std::size_t>(graph.n), 1.0);
        int b = splits.train_begin, e = splits.train_end;
        if (e <= b) throw std::invalid_argument("STDataset: empty train split");
        for (int v = 0; v < graph.n; ++v) {
            double m = 0;
            for (int t = b; t < e; ++t) m += raw(t, v);
            m /= static_cast<double>(e - b);
            double var = 0;
            for (int t = b; t < e; ++t) var += (raw(t, v) - m) * (raw(t, v) - m);
            var /= static_cast<double>(e - b);
            node_mean[static_cast<std::size_t>(v)] = m;
            node_std[static_cast<std::size_t>(v)] = var > 0 ? std::sqrt(var) : 1.0;
        }
    }

    void validate() const {
        graph.validate();
        if (static_cast<long long>(signal.size()) != static_cast<long long>(steps) * graph.n)
            throw std::invalid_argument("STDataset: signal size mismatch");
        if (!(splits.train_begin <= splits.train_end && splits.train_end == splits.val_begin &&
              splits.val_end == splits.test_begin && splits.test_end <= steps))
            throw std::invalid_argument("STDataset: splits must be disjoint, ordered, contiguous");
        if (window_starts(Split::Train).empty() || window_starts(Split::Val).empty() ||
            window_starts(Split::Test).empty())
            throw std::invalid_argument("STDataset: window+horizon exceeds a split");
    }
};

// Node-classification dataset with node index splits.
struct NCDataset {
    Graph graph;  // carries features and labels
    std::vector<int> train_nodes, val_nodes, test_nodes;
    int classes = 0;

    void validate() const {
        graph.validate();
        if (graph.labels.empty() || graph.features.empty())
            throw std::invalid_argument("NCDataset: graph must carry labels and features");
        std::vector<int> seen(static_cast<std::size_t>(graph.n), 0);
        for (int v : train_nodes) ++seen[static_cast<std::size_t>(v)];
        for (int v : val_nodes) ++seen[static_cast<std::size_t>(v)];
        for (int v : test_nodes) ++seen[static_cast<std::size_t>(v)];
        for (int c : seen)
            if (c > 1) throw std::invalid_argument("NCDataset: splits overlap");
        std::vector<bool> in_train(static_cast<std::size_t>(classes), false);
        for (int v : train_nodes) in_train[static_cast<std::size_t>(graph.labels[static_cast<std::size_t>(v)])] = true;
        for (int c = 0; c < classes; ++c)
            if (!in_train[static_cast<std::size_t>(c)])
                throw std::invalid_argument("NCDataset: class " + std::to_string(c) + " missing from train split");
    }
};

// Planted true-vs-init divergence: the generator diffuses on true_graph while
// models are handed init_graph, so slack_level fraction of the structure is
// recoverable by rewiring.
struct PlantedSpec {
    Graph true_graph;
    Graph init_graph;
    double slack_level = 0;
};

// ---- synthetic spatio-temporal generator ----

struct SynthSTConfig {
    int n_nodes = 60;
    int steps = 3000;
    int window = 12;
    int horizon = 4;
    double mean_degree = 4.0;
    double rho = 0.9;              // diffusion strength; must stay < 1
    double slack = 0.0;            // fraction of true edges swapped in the init graph
    double noise = 0.05;
    double season_amplitude = 1.0;
    int season_period = 288;       // steps per synthetic day
    std::uint64_t seed = 42;
};

inline Graph random_diffusion_graph(int n, double mean_degree, Rng& rng) {
    double p = mean_degree / static_cast<double>(n - 1);
    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (rng.uniform() < p) edges.push_back({i, j, rng.uniform(0.5, 1.0)});
    // keep every node usable: attach isolated nodes to a random neighbor
    std::vector<int> deg(static_cast<std::size_t>(n), 0);
    for (const Edge& e : edges) {
        ++deg[static_cast<std::size_t>(e.i)];
        ++deg[static_cast<std::size_t>(e.j)];
    }
    for (int i = 0; i < n; ++i)
        if (deg[static_cast<std::size_t>(i)] == 0) {
            int j = rng.index(n - 1);
            if (j >= i) ++j;
            edges.push_back({std::min(i, j), std::max(i, j), rng.uniform(0.5, 1.0)});
            ++deg[static_cast<std::size_t>(i)];
            ++deg[static_cast<std::size_t>(j)];
        }
    return make_graph(n, std::move(edges));
}

struct SynthSTResult {
    STDataset dataset;
    PlantedSpec planted;
};

inline SynthSTResult synth_st(const SynthSTConfig& cfg) {
    if (cfg.rho >= 1.0) throw std::invalid_argument("synth_st: rho must be < 1 for a stable diffusion");
    if (cfg.n_nodes < 2) throw std::invalid_argument("synth_st: need at least 2 nodes");
    Rng rng(cfg.seed);
    Graph true_graph = random_diffusion_graph(cfg.n_nodes, cfg.mean_degree, rng);
    Graph init_graph = cfg.slack > 0 ? corrupt_edges(true_graph, cfg.slack, rng.next_u64()) : true_graph;

    int n = cfg.n_nodes;
    // row-normalized true adjacency
    std::vector<double> a = true_graph.dense_adjacency();
    for (int i = 0; i < n; ++i) {
        double s = 0;
        for (int j = 0; j < n; ++j) s += a[static_cast<std::size_t>(i) * n + j];
        if (s > 0)
            for (int j = 0; j < n; ++j) a[static_cast<std::size_t>(i) * n + j] /= s;
    }

    std::vector<double> phase(static_cast<std::size_t>(n)), amp(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        phase[static_cast<std::size_t>(i)] = rng.uniform(0, 6.283185307179586);
        amp[static_cast<std::size_t>(i)] = cfg.season_amplitude;
    }

    STDataset ds;
    ds.graph = init_graph;
    ds.steps = cfg.steps;
    ds.window = cfg.window;
    ds.horizon = cfg.horizon;
    ds.signal.assign(static_cast<std::size_t>(cfg.steps) * n, 0.0);
    std::vector<double> x(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = rng.gaussian();
    std::vector<double> next(static_cast<std::size_t>(n));
    for (int t = 0; t < cfg.steps; ++t) {
        for (int i = 0; i < n; ++i) ds.signal[static_cast<std::size_t>(t) * n + i] = x[static_cast<std::size_t>(i)];
        double ang = 6.283185307179586 * static_cast<double>(t + 1) / cfg.season_period;
        for (int i = 0; i < n; ++i) {
            double diff = 0;
            for (int j = 0; j < n; ++j) diff += a[static_cast<std::size_t>(i) * n + j] * x[static_cast<std::size_t>(j)];
            next[static_cast<std::size_t>(i)] = cfg.rho * diff +
                                                amp[static_cast<std::size_t>(i)] * std::sin(ang + phase[static_cast<std::size_t>(i)]) +
                                                cfg.noise * rng.gaussian();
        }
        std::swap(x, next);
    }
    ds.splits = default_splits(cfg.steps);
    ds.fit_normalization();
    ds.validate();

    SynthSTResult out;
    out.dataset = std::move(ds);
    out.planted = PlantedSpec{std::move(true_graph), std::move(init_graph), cfg.slack};
    return out;
}

// ---- synthetic node-classification generator (stochastic block model) ----

struct SynthNCConfig {
    int n_nodes = 200;
    int classes = 3;
    double homophily = 0.8;     // target node-averaged same-label neighbor fraction
    int feature_dim = 16;
    double mean_degree = 8.0;
    double class_separation = 1.0;  // distance scale between class feature means
    double feature_noise = 1.0;
    double train_frac = 0.2, val_frac = 0.2;
    std::uint64_t seed = 42;
};

inline NCDataset synth_nc(const SynthNCConfig& cfg) {
    if (cfg.homophily <= 0 || cfg.homophily >= 1) throw std::invalid_argument("synth_nc: homophily must lie in (0,1)");
    if (cfg.classes < 2) throw std::invalid_argument("synth_nc: need at least 2 classes");
    int n = cfg.n_nodes, c = cfg.classes;
    double per_class = static_cast<double>(n) / c;
    double p_in = cfg.homophily * cfg.mean_degree / (per_class - 1.0);
    double p_out = (1.0 - cfg.homophily) * cfg.mean_degree / (static_cast<double>(n) - per_class);
    if (p_in > 1.0 || p_out > 1.0)
        throw std::invalid_argument("synth_nc: infeasible homophily/degree combination (p_in=" +
                                    std::to_string(p_in) + ", p_out=" + std::to_string(p_out) + ")");
    Rng rng(cfg.seed);
    Graph g;
    g.n = n;
    g.labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) g.labels[static_cast<std::size_t>(i)] = i % c;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double p = g.labels[static_cast<std::size_t>(i)] == g.labels[static_cast<std::size_t>(j)] ? p_in : p_out;
            if (rng.uniform() < p) g.edges.push_back({i, j, 1.0});
        }

    std::vector<std::vector<double>> means(static_cast<std::size_t>(c), std::vector<double>(static_cast<std::size_t>(cfg.feature_dim)));
    for (auto& mu : means)
        for (auto& v : mu) v = cfg.class_separation * rng.gaussian();
    g.features.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto& row = g.features[static_cast<std::size_t>(i)];
        row.resize(static_cast<std::size_t>(cfg.feature_dim));
        const auto& mu = means[static_cast<std::size_t>(g.labels[static_cast<std::size_t>(i)])];
        for (int f = 0; f < cfg.feature_dim; ++f)
            row[static_cast<std::size_t>(f)] = mu[static_cast<std::size_t>(f)] + cfg.feature_noise * rng.gaussian();
    }
    g.validate();

    NCDataset ds;
    ds.graph = std::move(g);
    ds.classes = c;
    // stratified splits so every class appears in train
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(c));
    for (int i = 0; i < n; ++i) by_class[static_cast<std::size_t>(ds.graph.labels[static_cast<std::size_t>(i)])].push_back(i);
    for (auto& bucket : by_class) {
        rng.shuffle(bucket);
        int ntr = std::max(1, static_cast<int>(bucket.size() * cfg.train_frac));
        int nva = std::max(1, static_cast<int>(bucket.size() * cfg.val_frac));
        for (std::size_t k = 0; k < bucket.size(); ++k) {
            if (static_cast<int>(k) < ntr) ds.train_nodes.push_back(bucket[k]);
            else if (static_cast<int>(k) < ntr + nva) ds.val_nodes.push_back(bucket[k]);
            else ds.test_nodes.push_back(bucket[k]);
        }
    }
    ds.validate();
    return ds;
}

// ---- CSV ingestion ----

// Signal CSV format: header "t,node0,...,nodeK", one row per time step.
inline void save_signal_csv(const STDataset& ds, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "t";
    for (int v = 0; v < ds.graph.n; ++v) f << ",node" << v;
    f << "\n";
    for (int t = 0; t < ds.steps; ++t) {
        f << t;
        for (int v = 0; v < ds.graph.n; ++v) f << "," << format_double(ds.raw(t, v));
        f << "\n";
    }
}

inline STDataset load_csv_st(const std::string& signal_path, const std::string& graph_path, int window, int horizon,
                             double train_frac = 0.7, double val_frac = 0.1) {
    STDataset ds;
    ds.graph = load_edge_list(graph_path);
    ds.window = window;
    ds.horizon = horizon;

    std::ifstream f(signal_path);
    if (!f) throw std::runtime_error("cannot open: " + signal_path);
    std::string line;
    if (!std::getline(f, line)) throw std::invalid_argument(signal_path + ": empty signal file");
    int cols = 0;
    for (char ch : line)
        if (ch == ',') ++cols;
    if (cols != ds.graph.n)
        throw std::invalid_argument(signal_path + ": header has " + std::to_string(cols) + " node columns, graph has " +
                                    std::to_string(ds.graph.n) + " nodes");
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::getline(ls, cell, ',');  // time index column
        int got = 0;
        while (std::getline(ls, cell, ',')) {
            double v;
            try {
                v = std::stod(cell);
            } catch (...) {
                throw std::invalid_argument(signal_path + ": row " + std::to_string(lineno) + ": bad value '" + cell + "'");
            }
            if (!std::isfinite(v))
                throw std::invalid_argument(signal_path + ": row " + std::to_string(lineno) + ": non-finite value");
            ds.signal.push_back(v);
            ++got;
        }
        if (got != ds.graph.n)
            throw std::invalid_argument(signal_path + ": row " + std::to_string(lineno) + " has " + std::to_string(got) +
                                        " values, expected " + std::to_string(ds.graph.n));
        ++ds.steps;
    }
    ds.splits = default_splits(ds.steps, train_frac, val_frac);
    ds.fit_normalization();
    ds.validate();
    return ds;
}

// ---- batching ----

// Deterministic batches of window start indices: shuffled by seed for train,
// sequential for val/test; covers every valid start exactly once.
inline std::vector<std::vector<int>> batch_iter(const STDataset& ds, int batch_size, std::uint64_t seed, Split split) {
    if (batch_size < 1) throw std::invalid_argument("batch_iter: batch size must be >= 1");
    std::vector<int> starts = ds.window_starts(split);
    if (split == Split::Train) {
        Rng rng(seed);
        rng.shuffle(starts);
    }
    std::vector<std::vector<int>> batches;
    for (std::size_t i = 0; i < starts.size(); i += static_cast<std::size_t>(batch_size)) {
        std::vector<int> b(starts.begin() + static_cast<long>(i),
                           starts.begin() + static_cast<long>(std::min(starts.size(), i + static_cast<std::size_t>(batch_size))));
        batches.push_back(std::move(b));
    }
    return batches;
}

}  // namespace rewirelab
