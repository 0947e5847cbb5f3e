#pragma once

#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "rewirelab/stats.hpp"
#include "rewirelab/train.hpp"

namespace rewirelab {

enum class MetricDirection { SmallerBetter, LargerBetter };

// Run a list of independent closures on up to `jobs` threads. Runs share
// nothing but immutable inputs; results land in caller-owned slots.
inline void run_parallel(std::vector<std::function<void()>> tasks, int jobs) {
    if (jobs <= 1 || tasks.size() <= 1) {
        for (auto& t : tasks) t();
        return;
    }
    std::size_t next = 0;
    std::vector<std::thread> pool;
    std::mutex mu;
    for (int j = 0; j < jobs; ++j)
        pool.emplace_back([&tasks, &next, &mu]() {
            for (;;) {
                std::size_t mine;
                {
                    std::lock_guard<std::mutex> lock(mu);
                    if (next >= tasks.size()) return;
                    mine = next++;
                }
                tasks[mine]();
            }
        });
    for (auto& t : pool) t.join();
}

// ---- Decomposition of the bilevel gain into inner and graph channels ----

struct ShareCi {
    double lo = 0, hi = 0;
    bool unstable = false;            // share undefined in > 50% of resamples
    double undefined_fraction = 0;
};

struct DecompositionReport {
    std::vector<double> vanilla, frozen, bilevel;  // per-seed metrics
    MetricDirection direction = MetricDirection::SmallerBetter;
    double mean_vanilla = 0, mean_frozen = 0, mean_bilevel = 0;
    double std_vanilla = 0, std_frozen = 0, std_bilevel = 0;
    double delta_inner = 0, delta_graph = 0, delta_total = 0;
    bool share_defined = false;
    std::string na_reason;  // "nonpositive_total" or "opposite_signs"
    double inner_share = 0;  // fraction of delta_total
    ShareCi share_ci;
    stats::TTestResult p_total, p_graph, p_inner;
};

namespace detail {

struct ShareOutcome {
    bool defined = false;
    std::string reason;
    double share = 0;
    double d_inner = 0, d_graph = 0, d_total = 0;
};

// Eq.-style channel split with the n/a policy: undefined when the total gain
// is nonpositive, or when the channels carry strictly opposite signs and the
// total is small against the pooled per-seed spread.
inline ShareOutcome share_from_samples(const std::vector<double>& v, const std::vector<double>& f,
                                       const std::vector<double>& b, MetricDirection dir) {
    ShareOutcome out;
    double mv = stats::mean(v), mf = stats::mean(f), mb = stats::mean(b);
    double sgn = dir == MetricDirection::SmallerBetter ? 1.0 : -1.0;
    out.d_inner = sgn * (mv - mf);
    out.d_graph = sgn * (mf - mb);
    out.d_total = out.d_inner + out.d_graph;
    if (out.d_total <= 0) {
        out.reason = "nonpositive_total";
        return out;
    }
    double pooled = std::sqrt((stats::variance(v) + stats::variance(f) + stats::variance(b)) / 3.0);
    bool opposite = out.d_inner != 0 && out.d_graph != 0 && ((out.d_inner > 0) != (out.d_graph > 0));
    if (opposite && std::fabs(out.d_total) < pooled) {
        out.reason = "opposite_signs";
        return out;
    }
    out.defined = true;
    out.share = out.d_inner / out.d_total;
    return out;
}

}  // namespace detail

// 95% bootstrap percentile interval of the inner share over B paired
// resamples of seed indices; deterministic in the seed.
inline ShareCi bootstrap_share_ci(const std::vector<double>& vanilla, const std::vector<double>& frozen,
                                  const std::vector<double>& bilevel, MetricDirection dir, int B = 1000,
                                  double level = 0.95, std::uint64_t seed = 20240531) {
    if (vanilla.size() < 3) throw std::invalid_argument("bootstrap_share_ci: need at least 3 seeds");
    Rng rng(seed);
    std::size_t n = vanilla.size();
    std::vector<double> shares;
    int undefined = 0;
    for (int rep = 0; rep < B; ++rep) {
        std::vector<double> v, f, b;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t k = static_cast<std::size_t>(rng.index(static_cast<int>(n)));
            v.push_back(vanilla[k]);
            f.push_back(frozen[k]);
            b.push_back(bilevel[k]);
        }
        detail::ShareOutcome o = detail::share_from_samples(v, f, b, dir);
        if (o.defined) shares.push_back(o.share);
        else ++undefined;
    }
    ShareCi ci;
    ci.undefined_fraction = static_cast<double>(undefined) / B;
    ci.unstable = ci.undefined_fraction > 0.5;
    if (!shares.empty()) {
        double alpha = (1.0 - level) / 2.0;
        ci.lo = stats::quantile(shares, alpha);
        ci.hi = stats::quantile(shares, 1.0 - alpha);
    }
    return ci;
}

// Three-way comparison; seed lists must be index-aligned (same seed set per
// arm) for the paired tests to be meaningful.
inline DecompositionReport decompose(const std::vector<double>& vanilla, const std::vector<double>& frozen,
                                     const std::vector<double>& bilevel,
                                     MetricDirection dir = MetricDirection::SmallerBetter, int bootstrap_B = 1000,
                                     std::uint64_t ci_seed = 20240531) {
    if (vanilla.size() != frozen.size() || vanilla.size() != bilevel.size())
        throw std::invalid_argument("decompose: seed lists must be aligned across arms");
    if (vanilla.size() < 2) throw std::invalid_argument("decompose: need at least 2 seeds");
    DecompositionReport rep;
    rep.vanilla = vanilla;
    rep.frozen = frozen;
    rep.bilevel = bilevel;
    rep.direction = dir;
    rep.mean_vanilla = stats::mean(vanilla);
    rep.mean_frozen = stats::mean(frozen);
    rep.mean_bilevel = stats::mean(bilevel);
    rep.std_vanilla = stats::stddev(vanilla);
    rep.std_frozen = stats::stddev(frozen);
    rep.std_bilevel = stats::stddev(bilevel);
    detail::ShareOutcome o = detail::share_from_samples(vanilla, frozen, bilevel, dir);
    rep.delta_inner = o.d_inner;
    rep.delta_graph = o.d_graph;
    rep.delta_total = o.d_total;
    rep.share_defined = o.defined;
    rep.na_reason = o.reason;
    rep.inner_share = o.share;
    rep.p_total = stats::paired_t_test(vanilla, bilevel);
    rep.p_graph = stats::paired_t_test(frozen, bilevel);
    rep.p_inner = stats::paired_t_test(vanilla, frozen);
    if (vanilla.size() >= 3) rep.share_ci = bootstrap_share_ci(vanilla, frozen, bilevel, dir, bootstrap_B, 0.95, ci_seed);
    return rep;
}

// ---- seeded multi-run helpers ----

template <typename Dataset>
inline std::vector<RunRecord> run_arm(TrainConfig cfg, const BackboneConfig& bb, const GraphParam& phi,
                                      const Dataset& ds, const std::vector<std::uint64_t>& seeds, int jobs = 1) {
    std::vector<RunRecord> out(seeds.size());
    std::vector<std::function<void()>> tasks;
    for (std::size_t i = 0; i < seeds.size(); ++i)
        tasks.push_back([&, i]() {
            TrainConfig c = cfg;
            c.seed = seeds[i];
            out[i] = train(c, bb, phi, ds);
        });
    run_parallel(std::move(tasks), jobs);
    return out;
}

inline std::vector<double> test_metrics(const std::vector<RunRecord>& runs) {
    std::vector<double> m;
    for (const auto& r : runs) {
        if (r.failed) throw std::runtime_error("run failed: " + r.failure_reason);
        m.push_back(r.test_metric);
    }
    return m;
}

// Three-way decomposition on a dataset: runs vanilla, frozen and bilevel over
// the shared seed list and decomposes the test metrics.
template <typename Dataset>
inline DecompositionReport decompose_on(const TrainConfig& base, const BackboneConfig& bb, const GraphParam& phi,
                                        const Dataset& ds, const std::vector<std::uint64_t>& seeds,
                                        MetricDirection dir, int jobs = 1) {
    TrainConfig cv = base;
    cv.mode = TrainMode::Vanilla;
    TrainConfig cf = base;
    cf.mode = TrainMode::FrozenPhi;
    TrainConfig cb = base;
    cb.mode = TrainMode::Bilevel;
    auto v = test_metrics(run_arm(cv, bb, phi, ds, seeds, jobs));
    auto f = test_metrics(run_arm(cf, bb, phi, ds, seeds, jobs));
    auto b = test_metrics(run_arm(cb, bb, phi, ds, seeds, jobs));
    return decompose(v, f, b, dir);
}

// ---- T-sweep ----

struct SweepCell {
    double axis_value = 0;
    std::string arm;
    std::vector<double> per_seed;
    double mean = 0, stddev = 0;
    bool failed = false;
    std::string failure;
};

struct TSweepReport {
    std::vector<int> t_values;
    std::vector<SweepCell> cells;          // frozen/bilevel per T
    std::vector<double> vanilla_per_seed;  // T-independent reference arm
    double vanilla_mean = 0;
    bool frozen_t1_equals_vanilla = false;     // exact (bit-identical test metrics)
    double frozen_max_minus_min = 0;           // across T values (fullbatch signature)
    bool frozen_monotone_to_plateau = false;   // metric non-increasing along T (minibatch signature)
};

template <typename Dataset>
inline TSweepReport t_sweep(const TrainConfig& base, const BackboneConfig& bb, const GraphParam& phi,
                            const Dataset& ds, const std::vector<int>& t_values, bool include_bilevel,
                            const std::vector<std::uint64_t>& seeds, int jobs = 1) {
    for (int t : t_values)
        if (t < 1) throw std::invalid_argument("t_sweep: T values must be >= 1");
    TSweepReport rep;
    rep.t_values = t_values;

    TrainConfig cv = base;
    cv.mode = TrainMode::Vanilla;
    rep.vanilla_per_seed = test_metrics(run_arm(cv, bb, phi, ds, seeds, jobs));
    rep.vanilla_mean = stats::mean(rep.vanilla_per_seed);

    auto add_cells = [&](TrainMode mode, const char* name) {
        for (int t : t_values) {
            SweepCell cell;
            cell.axis_value = t;
            cell.arm = name;
            TrainConfig c = base;
            c.mode = mode;
            c.inner_steps = t;
            try {
                cell.per_seed = test_metrics(run_arm(c, bb, phi, ds, seeds, jobs));
                cell.mean = stats::mean(cell.per_seed);
                cell.stddev = stats::stddev(cell.per_seed);
            } catch (const std::exception& e) {
                cell.failed = true;
                cell.failure = e.what();
            }
            rep.cells.push_back(std::move(cell));
        }
    };
    add_cells(TrainMode::FrozenPhi, "frozen");
    if (include_bilevel) add_cells(TrainMode::Bilevel, "bilevel");

    std::vector<double> frozen_means;
    for (const auto& c : rep.cells)
        if (c.arm == "frozen" && !c.failed) frozen_means.push_back(c.mean);
    if (!frozen_means.empty()) {
        double lo = frozen_means[0], hi = frozen_means[0];
        for (double m : frozen_means) {
            lo = std::min(lo, m);
            hi = std::max(hi, m);
        }
        rep.frozen_max_minus_min = hi - lo;
        rep.frozen_monotone_to_plateau = true;
        for (std::size_t i = 1; i < frozen_means.size(); ++i)
            if (frozen_means[i] > frozen_means[i - 1] + 1e-12) rep.frozen_monotone_to_plateau = false;
    }
    for (const auto& c : rep.cells)
        if (c.arm == "frozen" && c.axis_value == 1.0 && !c.failed)
            rep.frozen_t1_equals_vanilla = c.per_seed == rep.vanilla_per_seed;
    return rep;
}

// ---- corruption study (NC) ----

struct CorruptionCell {
    double r = 0;
    std::uint64_t graph_hash_vanilla = 0, graph_hash_frozen = 0, graph_hash_bilevel = 0;
    DecompositionReport decomposition;
};

struct CorruptionReport {
    std::vector<CorruptionCell> cells;
    bool graph_channel_increasing = false;   // strictly, along r
    bool inner_channel_saturating = false;   // later increment smaller than earlier
    bool cells_share_graphs = false;         // hash equality across arms at every r
};

// Runs the three-way decomposition on graphs corrupted at each fraction r.
// Every arm re-derives the corrupted graph from the same corruption seed, and
// the hashes are recorded to prove the cells share one graph.
inline CorruptionReport corruption_study(const NCDataset& ds, const std::vector<double>& r_values,
                                         std::uint64_t corrupt_seed, const TrainConfig& base,
                                         const BackboneConfig& bb, GraphParamKind phi_kind,
                                         const std::vector<std::uint64_t>& seeds, int jobs = 1) {
    CorruptionReport rep;
    rep.cells_share_graphs = true;
    for (double r : r_values) {
        if (r < 0 || r > 1) throw std::invalid_argument("corruption_study: r outside [0,1]");
        CorruptionCell cell;
        cell.r = r;
        auto corrupt_for_arm = [&]() { return corrupt_edges(ds.graph, r, corrupt_seed); };
        Graph gv = corrupt_for_arm();
        Graph gf = corrupt_for_arm();
        Graph gb = corrupt_for_arm();
        cell.graph_hash_vanilla = graph_hash(gv);
        cell.graph_hash_frozen = graph_hash(gf);
        cell.graph_hash_bilevel = graph_hash(gb);
        if (cell.graph_hash_vanilla != cell.graph_hash_frozen || cell.graph_hash_frozen != cell.graph_hash_bilevel)
            rep.cells_share_graphs = false;

        auto make_ds = [&](const Graph& g) {
            NCDataset d = ds;
            d.graph = g;
            return d;
        };
        auto make_phi = [&](const Graph& g) {
            return phi_kind == GraphParamKind::SoftmaxReweight ? GraphParam::softmax_reweight(g)
                                                               : GraphParam::bernoulli(g);
        };
        TrainConfig cv = base;
        cv.mode = TrainMode::Vanilla;
        TrainConfig cf = base;
        cf.mode = TrainMode::FrozenPhi;
        TrainConfig cb = base;
        cb.mode = TrainMode::Bilevel;
        NCDataset dv = make_ds(gv), df = make_ds(gf), db = make_ds(gb);
        auto v = test_metrics(run_arm(cv, bb, make_phi(gv), dv, seeds, jobs));
        auto f = test_metrics(run_arm(cf, bb, make_phi(gf), df, seeds, jobs));
        auto b = test_metrics(run_arm(cb, bb, make_phi(gb), db, seeds, jobs));
        cell.decomposition = decompose(v, f, b, MetricDirection::SmallerBetter);
        rep.cells.push_back(std::move(cell));
    }

    if (rep.cells.size() >= 2) {
        rep.graph_channel_increasing = true;
        for (std::size_t i = 1; i < rep.cells.size(); ++i)
            if (rep.cells[i].decomposition.delta_graph <= rep.cells[i - 1].decomposition.delta_graph)
                rep.graph_channel_increasing = false;
    }
    if (rep.cells.size() >= 3) {
        double inc1 = rep.cells[1].decomposition.delta_inner - rep.cells[0].decomposition.delta_inner;
        double inc2 = rep.cells[2].decomposition.delta_inner - rep.cells[1].decomposition.delta_inner;
        rep.inner_channel_saturating = inc2 < inc1;
    }
    return rep;
}

// ---- graph distillation ----

struct DistillReport {
    std::vector<double> vanilla, distilled, bilevel;
    double mean_vanilla = 0, mean_distilled = 0, mean_bilevel = 0;
    bool share_defined = false;
    double graph_share = 0;  // (M_vanilla - M_distilled) / (M_vanilla - M_bilevel)
    stats::TTestResult p_distill;  // distilled vs vanilla
};

// Binarize a Bernoulli phi at threshold tau; softmax phi materializes to its
// continuous reweighted adjacency.
inline Graph distill_target_graph(const GraphParam& phi, std::optional<double> tau) {
    if (phi.kind == GraphParamKind::SoftmaxReweight) return adjacency_to_graph(materialize_graph(phi), phi.n);
    if (!tau) throw std::invalid_argument("distill: Bernoulli phi requires a binarization threshold");
    Graph g;
    g.n = phi.n;
    for (int i = 0; i < phi.n; ++i)
        for (int j = i + 1; j < phi.n; ++j)
            if (phi.values[static_cast<std::size_t>(i) * phi.n + j] >= *tau) g.edges.push_back({i, j, 1.0});
    g.validate();
    return g;
}

// Vanilla re-training on a transferred graph, scored against reference arms.
// Seeds must match the reference runs for the shared-seed null to be exact.
template <typename Dataset>
inline DistillReport distill(const Graph& target_graph, const BackboneConfig& bb, const Dataset& ds,
                             GraphParamKind phi_kind, const TrainConfig& base,
                             const std::vector<std::uint64_t>& seeds, const std::vector<double>& vanilla_ref,
                             const std::vector<double>& bilevel_ref, MetricDirection dir, int jobs = 1) {
    if (vanilla_ref.size() != seeds.size() || bilevel_ref.size() != seeds.size())
        throw std::invalid_argument("distill: reference metric lists must align with the seed list");
    Dataset dd = ds;
    dd.graph = target_graph;
    // carry node attributes through to the transferred graph
    dd.graph.labels = ds.graph.labels;
    dd.graph.features = ds.graph.features;
    dd.graph.coords = ds.graph.coords;
    GraphParam phi = phi_kind == GraphParamKind::SoftmaxReweight ? GraphParam::softmax_reweight(dd.graph)
                                                                 : GraphParam::bernoulli(dd.graph);
    TrainConfig cfg = base;
    cfg.mode = TrainMode::Vanilla;
    DistillReport rep;
    rep.vanilla = vanilla_ref;
    rep.bilevel = bilevel_ref;
    rep.distilled = test_metrics(run_arm(cfg, bb, phi, dd, seeds, jobs));
    rep.mean_vanilla = stats::mean(rep.vanilla);
    rep.mean_distilled = stats::mean(rep.distilled);
    rep.mean_bilevel = stats::mean(rep.bilevel);
    double sgn = dir == MetricDirection::SmallerBetter ? 1.0 : -1.0;
    double denom = sgn * (rep.mean_vanilla - rep.mean_bilevel);
    if (denom == 0) {
        rep.share_defined = false;
        return rep;
    }
    rep.share_defined = true;
    rep.graph_share = sgn * (rep.mean_vanilla - rep.mean_distilled) / denom;
    rep.p_distill = stats::paired_t_test(rep.vanilla, rep.distilled);
    return rep;
}

// ---- Jacobian norms stratified by graph distance ----

struct JacobianStratum {
    std::string label;
    int lo = 0, hi = 0;  // inclusive hop range; hi < 0 means unbounded
    std::vector<double> norms;
    double mean = 0, median = 0;
    bool present = false;
};

struct JacobianDistanceReport {
    std::vector<JacobianStratum> strata;
    double short_to_long_ratio = 0;  // mean over d<=2 divided by mean over d>=3
    long long pairs_evaluated = 0;
};

inline std::vector<JacobianStratum> nc_strata() {
    return {{"d=1", 1, 1}, {"d=2", 2, 2}, {"d=3", 3, 3}, {"d=4", 4, 4}, {"d>=5", 5, -1}};
}
inline std::vector<JacobianStratum> st_strata() {
    return {{"d<=2", 1, 2}, {"d=3-5", 3, 5}, {"d>=6", 6, -1}};
}

namespace detail {

inline void finalize_strata(JacobianDistanceReport& rep) {
    double short_mean = 0, long_mean = 0;
    long long short_n = 0, long_n = 0;
    for (auto& s : rep.strata) {
        s.present = !s.norms.empty();
        if (!s.present) continue;
        s.mean = stats::mean(s.norms);
        s.median = stats::quantile(s.norms, 0.5);
        for (double v : s.norms) {
            if (s.hi >= 0 && s.hi <= 2) {
                short_mean += v;
                ++short_n;
            }
            if (s.lo >= 3) {
                long_mean += v;
                ++long_n;
            }
        }
        rep.pairs_evaluated += static_cast<long long>(s.norms.size());
    }
    if (short_n > 0 && long_n > 0 && long_mean > 0)
        rep.short_to_long_ratio = (short_mean / short_n) / (long_mean / long_n);
}

// All pairs when n <= 100, otherwise a seeded per-stratum sample.
inline std::vector<std::pair<int, int>> sample_pairs(const Graph& g, const std::vector<std::vector<int>>& dist,
                                                     const std::vector<JacobianStratum>& strata, int per_stratum,
                                                     std::uint64_t seed) {
    std::vector<std::pair<int, int>> pairs;
    if (g.n <= 100) {
        for (int u = 0; u < g.n; ++u)
            for (int v = 0; v < g.n; ++v)
                if (u != v && dist[static_cast<std::size_t>(u)][static_cast<std::size_t>(v)] != kUnreachable)
                    pairs.push_back({u, v});
        return pairs;
    }
    Rng rng(seed);
    for (const auto& s : strata) {
        std::vector<std::pair<int, int>> bucket;
        for (int u = 0; u < g.n; ++u)
            for (int v = 0; v < g.n; ++v) {
                if (u == v) continue;
                int d = dist[static_cast<std::size_t>(u)][static_cast<std::size_t>(v)];
                if (d == kUnreachable) continue;
                if (d >= s.lo && (s.hi < 0 || d <= s.hi)) bucket.push_back({u, v});
            }
        rng.shuffle(bucket);
        for (int k = 0; k < per_stratum && k < static_cast<int>(bucket.size()); ++k) pairs.push_back(bucket[static_cast<std::size_t>(k)]);
    }
    return pairs;
}

}  // namespace detail

// Per-stratum mean/median input-output Jacobian norms of a trained STGNN,
// with hop distances measured on the reference graph.
inline JacobianDistanceReport jacobian_by_distance_st(const BackboneConfig& bb, const ModelParams& params,
                                                      const std::vector<double>& adj, const Graph& reference_graph,
                                                      const STDataset& ds, int output_step,
                                                      std::uint64_t sample_seed = 7, int per_stratum = 200) {
    std::vector<int> all_nodes(static_cast<std::size_t>(reference_graph.n));
    for (int i = 0; i < reference_graph.n; ++i) all_nodes[static_cast<std::size_t>(i)] = i;
    auto dist = bfs_distances(reference_graph, all_nodes);
    JacobianDistanceReport rep;
    rep.strata = st_strata();
    auto pairs = detail::sample_pairs(reference_graph, dist, rep.strata, per_stratum, sample_seed);

    // probe window: first test-split window, normalized units
    std::vector<int> starts = ds.window_starts(Split::Test);
    std::vector<double> xv, yv;
    detail::st_batch_values(ds, {starts.front()}, xv, yv);

    for (auto [u, v] : pairs) {
        int d = dist[static_cast<std::size_t>(u)][static_cast<std::size_t>(v)];
        double norm = stgnn_jacobian_norm(bb, params, adj, reference_graph.n, xv, u, v, output_step);
        for (auto& s : rep.strata)
            if (d >= s.lo && (s.hi < 0 || d <= s.hi)) s.norms.push_back(norm);
    }
    detail::finalize_strata(rep);
    return rep;
}

inline JacobianDistanceReport jacobian_by_distance_nc(const BackboneConfig& bb, const ModelParams& params,
                                                      const std::vector<double>& adj, const NCDataset& ds,
                                                      std::uint64_t sample_seed = 7, int per_stratum = 200) {
    std::vector<int> all_nodes(static_cast<std::size_t>(ds.graph.n));
    for (int i = 0; i < ds.graph.n; ++i) all_nodes[static_cast<std::size_t>(i)] = i;
    auto dist = bfs_distances(ds.graph, all_nodes);
    JacobianDistanceReport rep;
    rep.strata = nc_strata();
    auto pairs = detail::sample_pairs(ds.graph, dist, rep.strata, per_stratum, sample_seed);
    for (auto [u, v] : pairs) {
        int d = dist[static_cast<std::size_t>(u)][static_cast<std::size_t>(v)];
        double norm = gcn_jacobian_norm(bb, params, adj, ds.graph.n, ds.graph.features, u, v);
        for (auto& s : rep.strata)
            if (d >= s.lo && (s.hi < 0 || d <= s.hi)) s.norms.push_back(norm);
    }
    detail::finalize_strata(rep);
    return rep;
}

// ---- Bernoulli edge-probability report ----

struct EdgeProbReport {
    std::vector<long long> histogram;  // over [0,1]
    int bins = 20;
    double fraction_below_001 = 0;
    double fraction_above_09 = 0;
    double substitution_rate = 0;  // original edges absent at tau = 0.5
    double addition_rate = 0;      // new edges at tau = 0.5, relative to the original count
};

inline EdgeProbReport edge_probability_report(const GraphParam& phi, int bins = 20) {
    if (phi.kind != GraphParamKind::Bernoulli)
        throw std::invalid_argument("edge_probability_report: requires a Bernoulli phi");
    EdgeProbReport rep;
    rep.bins = bins;
    rep.histogram.assign(static_cast<std::size_t>(bins), 0);
    long long total = 0, below = 0, above = 0;
    long long orig_edges = 0, kept = 0, added = 0;
    for (int i = 0; i < phi.n; ++i)
        for (int j = i + 1; j < phi.n; ++j) {
            double p = phi.values[static_cast<std::size_t>(i) * phi.n + j];
            ++total;
            int b = std::min(bins - 1, static_cast<int>(p * bins));
            ++rep.histogram[static_cast<std::size_t>(b)];
            if (p < 0.01) ++below;
            if (p > 0.9) ++above;
            bool orig = phi.a_init[static_cast<std::size_t>(i) * phi.n + j] > 0;
            bool now = p >= 0.5;
            if (orig) {
                ++orig_edges;
                if (now) ++kept;
            } else if (now) {
                ++added;
            }
        }
    rep.fraction_below_001 = static_cast<double>(below) / total;
    rep.fraction_above_09 = static_cast<double>(above) / total;
    if (orig_edges > 0) {
        rep.substitution_rate = static_cast<double>(orig_edges - kept) / orig_edges;
        rep.addition_rate = static_cast<double>(added) / orig_edges;
    }
    return rep;
}

}  // namespace rewirelab
