#pragma once

// Config-driven experiment orchestration: dataset construction, a
// content-hash run cache (--resume), seed-parallel execution, and summary
// emission. This is the layer behind the CLI subcommands.

#include <filesystem>
#include <set>

#include "rewirelab/reports.hpp"

namespace rewirelab {

namespace fs = std::filesystem;

struct ExperimentConfig {
    std::string experiment;  // train | decompose | tsweep | corruption | distill | spectra | jacobian | igr-oracle | bandwidth-ablation
    json dataset;
    TrainConfig train;
    BackboneConfig backbone;
    GraphParamKind phi_kind = GraphParamKind::SoftmaxReweight;
    std::vector<std::uint64_t> seeds;
    std::string out_dir;
    json extra;  // experiment-specific knobs
    int jobs = 1;
    bool resume = false;
};

inline ExperimentConfig experiment_from_json(const json& j) {
    ExperimentConfig c;
    c.experiment = j.at("experiment").get<std::string>();
    c.dataset = j.value("dataset", json::object());
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("backbone")) c.backbone = backbone_from_json(j.at("backbone"));
    if (j.contains("phi_kind")) c.phi_kind = phi_kind_from_string(j.at("phi_kind").get<std::string>());
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (c.seeds.empty()) c.seeds = {42, 123, 456, 789, 1024};
    std::set<std::uint64_t> uniq(c.seeds.begin(), c.seeds.end());
    if (uniq.size() != c.seeds.size()) throw std::invalid_argument("config: seed list must not contain duplicates");
    c.out_dir = j.value("out", std::string("out"));
    c.extra = j.value("extra", json::object());
    c.jobs = j.value("jobs", 1);
    return c;
}

// ---- dataset construction from a spec ----

struct BuiltDataset {
    bool is_st = false;
    STDataset st;
    NCDataset nc;
    PlantedSpec planted;      // synth_st only
    std::uint64_t hash = 0;   // content identity for the run cache
};

inline BuiltDataset build_dataset(const json& spec) {
    BuiltDataset out;
    std::string kind = spec.value("kind", std::string("synth_st"));
    if (kind == "synth_st") {
        SynthSTConfig c;
        c.n_nodes = spec.value("n_nodes", c.n_nodes);
        c.steps = spec.value("steps", c.steps);
        c.window = spec.value("window", c.window);
        c.horizon = spec.value("horizon", c.horizon);
        c.mean_degree = spec.value("mean_degree", c.mean_degree);
        c.rho = spec.value("rho", c.rho);
        c.slack = spec.value("slack", c.slack);
        c.noise = spec.value("noise", c.noise);
        c.season_amplitude = spec.value("season_amplitude", c.season_amplitude);
        c.season_period = spec.value("season_period", c.season_period);
        c.seed = spec.value("seed", c.seed);
        SynthSTResult r = synth_st(c);
        out.is_st = true;
        out.st = std::move(r.dataset);
        out.planted = std::move(r.planted);
    } else if (kind == "synth_nc") {
        SynthNCConfig c;
        c.n_nodes = spec.value("n_nodes", c.n_nodes);
        c.classes = spec.value("classes", c.classes);
        c.homophily = spec.value("homophily", c.homophily);
        c.feature_dim = spec.value("feature_dim", c.feature_dim);
        c.mean_degree = spec.value("mean_degree", c.mean_degree);
        c.class_separation = spec.value("class_separation", c.class_separation);
        c.feature_noise = spec.value("feature_noise", c.feature_noise);
        c.train_frac = spec.value("train_frac", c.train_frac);
        c.val_frac = spec.value("val_frac", c.val_frac);
        c.seed = spec.value("seed", c.seed);
        out.nc = synth_nc(c);
    } else if (kind == "csv_st") {
        out.is_st = true;
        out.st = load_csv_st(spec.at("signal").get<std::string>(), spec.at("graph").get<std::string>(),
                             spec.at("window").get<int>(), spec.at("horizon").get<int>(),
                             spec.value("train_frac", 0.7), spec.value("val_frac", 0.1));
    } else if (kind == "csv_nc") {
        NCDataset ds;
        ds.graph = load_edge_list(spec.at("graph").get<std::string>());
        ds.graph.labels = load_labels_csv(spec.at("labels").get<std::string>());
        ds.graph.features = load_features_csv(spec.at("features").get<std::string>());
        int classes = 0;
        for (int l : ds.graph.labels) classes = std::max(classes, l + 1);
        ds.classes = classes;
        Rng rng(spec.value("split_seed", 1ULL));
        std::vector<std::vector<int>> by_class(static_cast<std::size_t>(classes));
        for (int i = 0; i < ds.graph.n; ++i) by_class[static_cast<std::size_t>(ds.graph.labels[static_cast<std::size_t>(i)])].push_back(i);
        double tf = spec.value("train_frac", 0.2), vf = spec.value("val_frac", 0.2);
        for (auto& bucket : by_class) {
            rng.shuffle(bucket);
            int ntr = std::max(1, static_cast<int>(bucket.size() * tf));
            int nva = std::max(1, static_cast<int>(bucket.size() * vf));
            for (std::size_t k = 0; k < bucket.size(); ++k) {
                if (static_cast<int>(k) < ntr) ds.train_nodes.push_back(bucket[k]);
                else if (static_cast<int>(k) < ntr + nva) ds.val_nodes.push_back(bucket[k]);
                else ds.test_nodes.push_back(bucket[k]);
            }
        }
        ds.validate();
        out.nc = std::move(ds);
    } else {
        throw std::invalid_argument("dataset: unknown kind '" + kind + "'");
    }
    out.hash = hash_tag(spec.dump());
    if (out.is_st) out.hash ^= graph_hash(out.st.graph);
    else out.hash ^= graph_hash(out.nc.graph);
    return out;
}

// ---- content-addressed run cache ----

inline std::uint64_t phi_hash(const GraphParam& phi) {
    std::uint64_t h = hash_tag(to_string(phi.kind));
    auto mix = [&h](const std::vector<double>& v) {
        for (double x : v) {
            std::uint64_t b;
            std::memcpy(&b, &x, sizeof(b));
            h ^= b;
            h *= 0x100000001B3ULL;
        }
    };
    mix(phi.values);
    mix(phi.a_init);
    return h;
}

inline std::uint64_t run_key(const TrainConfig& cfg, const BackboneConfig& bb, const GraphParam& phi,
                             std::uint64_t dataset_hash) {
    std::uint64_t h = hash_tag(to_json(cfg).dump() + to_json(bb).dump());
    h ^= phi_hash(phi) + 0x9E3779B97F4A7C15ULL;
    h ^= dataset_hash * 0xC2B2AE3D27D4EB4FULL;
    return h;
}

struct RunCache {
    std::string dir;      // empty = disabled
    bool reuse = false;   // --resume

    std::string json_path(std::uint64_t key) const {
        std::ostringstream os;
        os << dir << "/run_" << std::hex << key << ".json";
        return os.str();
    }
    std::string ckpt_path(std::uint64_t key) const {
        std::ostringstream os;
        os << dir << "/run_" << std::hex << key << ".ckpt";
        return os.str();
    }
};

// Train with optional cache reuse. Cached records restore the metrics, the
// learned phi and the best parameters, so downstream consumers (distill,
// jacobian) behave identically on cache hits.
template <typename Dataset>
inline RunRecord cached_train(const RunCache& cache, const TrainConfig& cfg, const BackboneConfig& bb,
                              const GraphParam& phi, const Dataset& ds, std::uint64_t dataset_hash) {
    std::uint64_t key = run_key(cfg, bb, phi, dataset_hash);
    if (!cache.dir.empty() && cache.reuse && fs::exists(cache.json_path(key))) {
        json j = load_json_file(cache.json_path(key));
        RunRecord rec;
        rec.config = cfg;
        rec.train_metric = j.at("train_metric").get<std::vector<double>>();
        rec.val_metric = j.at("val_metric").get<std::vector<double>>();
        rec.test_metric = j.at("test_metric").get<double>();
        rec.best_epoch = j.at("best_epoch").get<int>();
        rec.failed = j.at("failed").get<bool>();
        rec.failure_reason = j.value("failure_reason", std::string());
        rec.wall_time_sec = j.value("wall_time_sec", 0.0);
        auto [params, header] = load_checkpoint(cache.ckpt_path(key));
        rec.learned_phi = phi;
        ModelParams best;
        for (auto& e : params.entries) {
            if (e.name == "__phi_values") rec.learned_phi.values = e.data;
            else best.entries.push_back(std::move(e));
        }
        best.init_seed = params.init_seed;
        rec.best_params = std::move(best);
        return rec;
    }
    RunRecord rec = train(cfg, bb, phi, ds);
    if (!cache.dir.empty()) {
        fs::create_directories(cache.dir);
        json j = to_json(rec);
        j["run_key"] = key;
        save_json_file(j, cache.json_path(key));
        if (!rec.failed) {
            ModelParams with_phi = rec.best_params;
            with_phi.entries.push_back({"__phi_values", {rec.learned_phi.n, rec.learned_phi.n}, rec.learned_phi.values});
            save_checkpoint(with_phi, json{{"mode", to_string(cfg.mode)}}, cache.ckpt_path(key));
        }
    }
    return rec;
}

// ---- experiment drivers ----

struct ExperimentResult {
    int exit_code = 0;  // 0 ok, 1 config error, 2 partial failure, 3 total failure
    json summary;
};

namespace detail {

inline GraphParam make_phi(GraphParamKind kind, const Graph& g, int sample_count = 16) {
    return kind == GraphParamKind::SoftmaxReweight ? GraphParam::softmax_reweight(g)
                                                   : GraphParam::bernoulli(g, sample_count);
}

template <typename Dataset>
inline std::vector<RunRecord> cached_arm(const RunCache& cache, TrainConfig cfg, const BackboneConfig& bb,
                                         const GraphParam& phi, const Dataset& ds, std::uint64_t ds_hash,
                                         const std::vector<std::uint64_t>& seeds, int jobs) {
    std::vector<RunRecord> out(seeds.size());
    std::vector<std::function<void()>> tasks;
    for (std::size_t i = 0; i < seeds.size(); ++i)
        tasks.push_back([&, i]() {
            TrainConfig c = cfg;
            c.seed = seeds[i];
            out[i] = cached_train(cache, c, bb, phi, ds, ds_hash);
        });
    run_parallel(std::move(tasks), jobs);
    return out;
}

inline json seed_failures(const std::vector<std::uint64_t>& seeds, const std::vector<RunRecord>& runs) {
    json failed = json::array();
    for (std::size_t i = 0; i < runs.size(); ++i)
        if (runs[i].failed) failed.push_back(json{{"seed", seeds[i]}, {"reason", runs[i].failure_reason}});
    return failed;
}

template <typename Dataset>
inline ExperimentResult run_training_experiments(const ExperimentConfig& cfg, const Dataset& ds,
                                                 std::uint64_t ds_hash, const PlantedSpec* planted) {
    ExperimentResult res;
    RunCache cache{cfg.out_dir + "/runs", cfg.resume};
    MetricDirection dir = MetricDirection::SmallerBetter;  // NC metrics are error rates
    GraphParam phi = make_phi(cfg.phi_kind, ds.graph, cfg.extra.value("sample_count", 16));

    if (cfg.experiment == "train") {
        auto runs = cached_arm(cache, cfg.train, cfg.backbone, phi, ds, ds_hash, cfg.seeds, cfg.jobs);
        json per_seed = json::array();
        std::vector<double> ok_metrics;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            fs::create_directories(cfg.out_dir + "/seed_" + std::to_string(cfg.seeds[i]));
            std::string base = cfg.out_dir + "/seed_" + std::to_string(cfg.seeds[i]);
            save_json_file(to_json(runs[i]), base + "/run.json");
            if (!runs[i].failed) {
                save_checkpoint(runs[i].best_params, json{{"backbone", to_json(cfg.backbone)}}, base + "/model.ckpt");
                save_edge_list(adjacency_to_graph(materialize_graph(runs[i].learned_phi), runs[i].learned_phi.n),
                               base + "/learned_phi.txt");
                if (cfg.train.instrument_gradients) save_grad_norms_csv(runs[i], base + "/grad_norms.csv");
                ok_metrics.push_back(runs[i].test_metric);
            }
            per_seed.push_back(json{{"seed", cfg.seeds[i]},
                                    {"test_metric", runs[i].test_metric},
                                    {"failed", runs[i].failed}});
        }
        res.summary["per_seed"] = per_seed;
        res.summary["failed_seeds"] = seed_failures(cfg.seeds, runs);
        if (!ok_metrics.empty()) {
            res.summary["mean_test_metric"] = stats::mean(ok_metrics);
            res.summary["std_test_metric"] = stats::stddev(ok_metrics);
        }
        if (ok_metrics.empty()) res.exit_code = 3;
        else if (ok_metrics.size() < cfg.seeds.size()) res.exit_code = 2;
        return res;
    }

    if (cfg.experiment == "decompose") {
        TrainConfig cv = cfg.train;
        cv.mode = TrainMode::Vanilla;
        TrainConfig cf = cfg.train;
        cf.mode = TrainMode::FrozenPhi;
        TrainConfig cb = cfg.train;
        cb.mode = TrainMode::Bilevel;
        auto rv = cached_arm(cache, cv, cfg.backbone, phi, ds, ds_hash, cfg.seeds, cfg.jobs);
        auto rf = cached_arm(cache, cf, cfg.backbone, phi, ds, ds_hash, cfg.seeds, cfg.jobs);
        auto rb = cached_arm(cache, cb, cfg.backbone, phi, ds, ds_hash, cfg.seeds, cfg.jobs);
        json failures = seed_failures(cfg.seeds, rv);
        for (const auto& f : seed_failures(cfg.seeds, rf)) failures.push_back(f);
        for (const auto& f : seed_failures(cfg.seeds, rb)) failures.push_back(f);
        res.summary["failed_seeds"] = failures;
        if (!failures.empty()) {
            res.exit_code = 3;  // decomposition needs every aligned seed
            return res;
        }
        DecompositionReport rep = decompose(test_metrics(rv), test_metrics(rf), test_metrics(rb), dir);
        res.summary["decomposition"] = to_json(rep);
        return res;
    }

    if (cfg.experiment == "tsweep") {
        std::vector<int> t_values = cfg.extra.value("t_values", std::vector<int>{1, 5});
        bool include_bilevel = cfg.extra.value("include_bilevel", true);
        TSweepReport rep = t_sweep(cfg.train, cfg.backbone, phi, ds, t_values, include_bilevel, cfg.seeds, cfg.jobs);
        res.summary["tsweep"] = to_json(rep);
        return res;
    }

    if (cfg.experiment == "distill") {
        TrainConfig cv = cfg.train;
        cv.mode = TrainMode::Vanilla;
        TrainConfig cb = cfg.train;
        cb.mode = TrainMode::Bilevel;
        auto rv = cached_arm(cache, cv, cfg.backbone, phi, ds, ds_hash, cfg.seeds, cfg.jobs);
        auto rb = cached_arm(cache, cb, cfg.backbone, phi, ds, ds_hash, cfg.seeds, cfg.jobs);
        json failures = seed_failures(cfg.seeds, rv);
        for (const auto& f : seed_failures(cfg.seeds, rb)) failures.push_back(f);
        if (!failures.empty()) {
            res.summary["failed_seeds"] = failures;
            res.exit_code = 3;
            return res;
        }
        std::string target = cfg.extra.value("target", std::string("learned"));
        std::optional<double> tau;
        if (cfg.extra.contains("binarize_threshold")) tau = cfg.extra.at("binarize_threshold").get<double>();
        std::vector<double> distilled;
        std::vector<std::function<void()>> tasks;
        distilled.resize(cfg.seeds.size());
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
            tasks.push_back([&, i]() {
                Graph target_graph;
                if (target == "learned") target_graph = distill_target_graph(rb[i].learned_phi, tau);
                else if (target == "init") target_graph = ds.graph;
                else if (target == "true" && planted) target_graph = planted->true_graph;
                else target_graph = load_edge_list(target);
                Dataset dd = ds;
                dd.graph = target_graph;
                dd.graph.labels = ds.graph.labels;
                dd.graph.features = ds.graph.features;
                dd.graph.coords = ds.graph.coords;
                GraphParam dphi = make_phi(cfg.phi_kind, dd.graph);
                TrainConfig c = cv;
                c.seed = cfg.seeds[i];
                distilled[i] =
                    cached_train(cache, c, cfg.backbone, dphi, dd, ds_hash ^ graph_hash(target_graph)).test_metric;
            });
        run_parallel(std::move(tasks), cfg.jobs);
        DistillReport rep;
        rep.vanilla = test_metrics(rv);
        rep.bilevel = test_metrics(rb);
        rep.distilled = distilled;
        rep.mean_vanilla = stats::mean(rep.vanilla);
        rep.mean_distilled = stats::mean(rep.distilled);
        rep.mean_bilevel = stats::mean(rep.bilevel);
        double denom = rep.mean_vanilla - rep.mean_bilevel;
        rep.share_defined = denom != 0;
        if (rep.share_defined) {
            rep.graph_share = (rep.mean_vanilla - rep.mean_distilled) / denom;
            rep.p_distill = stats::paired_t_test(rep.vanilla, rep.distilled);
        }
        res.summary["distill"] = to_json(rep);
        res.summary["target"] = target;
        return res;
    }

    if (cfg.experiment == "jacobian") {
        TrainConfig c = cfg.train;
        auto runs = cached_arm(cache, c, cfg.backbone, phi, ds, ds_hash, cfg.seeds, cfg.jobs);
        json per_seed = json::array();
        for (std::size_t i = 0; i < runs.size(); ++i) {
            if (runs[i].failed) continue;
            std::vector<double> adj = materialize_graph(runs[i].learned_phi);
            JacobianDistanceReport rep;
            if constexpr (std::is_same_v<Dataset, STDataset>) {
                rep = jacobian_by_distance_st(cfg.backbone, runs[i].best_params, adj, ds.graph, ds,
                                              cfg.backbone.horizon - 1, 7,
                                              cfg.extra.value("pairs_per_stratum", 200));
            } else {
                rep = jacobian_by_distance_nc(cfg.backbone, runs[i].best_params, adj, ds, 7,
                                              cfg.extra.value("pairs_per_stratum", 200));
            }
            per_seed.push_back(json{{"seed", cfg.seeds[i]}, {"report", to_json(rep)}});
        }
        res.summary["jacobian_per_seed"] = per_seed;
        res.summary["failed_seeds"] = seed_failures(cfg.seeds, runs);
        if (per_seed.empty()) res.exit_code = 3;
        else if (per_seed.size() < cfg.seeds.size()) res.exit_code = 2;
        return res;
    }

    throw std::invalid_argument("experiment '" + cfg.experiment + "' not valid for this dataset kind");
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    ExperimentResult res;
    fs::create_directories(cfg.out_dir);

    std::uint64_t config_hash =
        hash_tag(cfg.experiment + cfg.dataset.dump() + to_json(cfg.train).dump() + to_json(cfg.backbone).dump() +
                 to_string(cfg.phi_kind) + cfg.extra.dump());

    // dataset-free experiments
    if (cfg.experiment == "igr-oracle") {
        int dim = cfg.extra.value("dim", 5);
        Rng rng(cfg.extra.value("hessian_seed", 11ULL));
        SymMatrix h = SymMatrix::zero(dim);
        for (int i = 0; i < dim; ++i)
            for (int j = i; j < dim; ++j) {
                double v = rng.uniform(-0.3, 0.3);
                h.at(i, j) = v;
                h.at(j, i) = v;
            }
        for (int i = 0; i < dim; ++i) h.at(i, i) += 1.5;
        std::vector<double> theta0(static_cast<std::size_t>(dim));
        for (auto& v : theta0) v = rng.uniform(-1, 1);
        std::vector<double> etas = cfg.extra.value("etas", std::vector<double>{});
        if (etas.empty())
            for (double e = 1e-3; e <= 0.1 + 1e-12; e *= std::pow(10.0, 0.25)) etas.push_back(e);
        IgrReport rep = igr_oracle(h, theta0, etas, cfg.extra.value("total_time", 1.0));
        res.summary["igr"] = to_json(rep);
    } else if (cfg.experiment == "bandwidth-ablation") {
        std::vector<Coord> coords;
        if (cfg.extra.contains("coords_csv")) {
            coords = load_coords_csv(cfg.extra.at("coords_csv").get<std::string>());
        } else {
            json syn = cfg.extra.value("synthetic", json{{"per_cluster", 20}, {"width_km", 10.0}, {"separation_km", 500.0}, {"seed", 5}});
            Rng rng(syn.value("seed", 5ULL));
            double deg_per_km = 1.0 / 111.19;
            int per = syn.value("per_cluster", 20);
            double width = syn.value("width_km", 10.0), sep = syn.value("separation_km", 500.0);
            for (int c = 0; c < 2; ++c)
                for (int i = 0; i < per; ++i)
                    coords.push_back({rng.uniform(0, width * deg_per_km),
                                      c * sep * deg_per_km + rng.uniform(0, width * deg_per_km)});
        }
        std::vector<BandwidthRule> rules;
        for (const auto& rj : cfg.extra.value("rules", json::array())) {
            BandwidthRule r;
            std::string k = rj.at("kind").get<std::string>();
            r.name = rj.value("name", k);
            if (k == "fixed") {
                r.kind = BandwidthRule::Kind::Fixed;
                r.value = rj.at("value").get<double>();
            } else if (k == "std_subset") {
                r.kind = BandwidthRule::Kind::StdOfSubset;
                r.subset = rj.at("subset").get<std::vector<int>>();
            } else if (k == "percentile") {
                r.kind = BandwidthRule::Kind::Percentile;
                r.value = rj.at("value").get<double>();
            } else {
                throw std::invalid_argument("bandwidth rule kind '" + k + "' unknown");
            }
            rules.push_back(std::move(r));
        }
        if (rules.empty())
            rules = {{BandwidthRule::Kind::Fixed, "fixed_20km", 20.0, {}},
                     {BandwidthRule::Kind::Percentile, "p95", 95.0, {}}};
        auto rows = bandwidth_ablation(coords, rules, cfg.extra.value("tau", 0.1),
                                       cfg.extra.value("cluster_cutoff_km", 80.0));
        res.summary["bandwidth_ablation"] = to_json(rows);
    } else if (cfg.experiment == "spectra") {
        double eps = cfg.extra.value("eps", 0.05);
        json reports = json::array();
        if (cfg.extra.contains("graphs")) {
            for (const auto& pj : cfg.extra.at("graphs")) {
                std::string path = pj.get<std::string>();
                Graph g = load_edge_list(path);
                SpectrumReport rep = spectral_report(g, eps);
                reports.push_back(json{{"graph", path}, {"report", to_json(rep)}});
                save_eigenvalues_csv(rep, cfg.out_dir + "/" + fs::path(path).stem().string() + "_eigenvalues.csv");
            }
        } else {
            BuiltDataset ds = build_dataset(cfg.dataset);
            const Graph& g = ds.is_st ? ds.st.graph : ds.nc.graph;
            SpectrumReport rep = spectral_report(g, eps);
            reports.push_back(json{{"graph", "dataset"}, {"report", to_json(rep)}});
            save_eigenvalues_csv(rep, cfg.out_dir + "/dataset_eigenvalues.csv");
        }
        res.summary["spectra"] = reports;
        if (cfg.extra.contains("tightening_pair")) {
            auto pair = cfg.extra.at("tightening_pair");
            Graph base = load_edge_list(pair.at(0).get<std::string>());
            Graph improved = load_edge_list(pair.at(1).get<std::string>());
            TighteningReport rep = verify_tightening(base, improved, cfg.extra.value("alpha", 0.6),
                                                     cfg.extra.value("c1", 0.05), cfg.extra.value("c2", 0.4),
                                                     cfg.extra.value("k_max", 10));
            res.summary["tightening"] = to_json(rep);
        }
    } else if (cfg.experiment == "corruption") {
        BuiltDataset ds = build_dataset(cfg.dataset);
        if (ds.is_st) throw std::invalid_argument("corruption experiment requires a node-classification dataset");
        std::vector<double> r_values = cfg.extra.value("r_values", std::vector<double>{0.0, 0.25, 0.5});
        CorruptionReport rep = corruption_study(ds.nc, r_values, cfg.extra.value("corrupt_seed", 99ULL), cfg.train,
                                                cfg.backbone, cfg.phi_kind, cfg.seeds, cfg.jobs);
        res.summary["corruption"] = to_json(rep);
    } else {
        BuiltDataset ds = build_dataset(cfg.dataset);
        ExperimentResult inner = ds.is_st
                                     ? detail::run_training_experiments(cfg, ds.st, ds.hash, &ds.planted)
                                     : detail::run_training_experiments(cfg, ds.nc, ds.hash, nullptr);
        res.exit_code = inner.exit_code;
        res.summary = std::move(inner.summary);
    }

    res.summary["schema"] = kSchemaVersion;
    res.summary["experiment"] = cfg.experiment;
    res.summary["config_hash"] = config_hash;
    res.summary["seeds"] = cfg.seeds;
    save_json_file(res.summary, cfg.out_dir + "/summary.json");
    return res;
}

}  // namespace rewirelab
