#pragma once

// JSON serialization of run records and reports (stable "schema" field on
// every top-level document), the model checkpoint container, and table
// rendering in csv/markdown.

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "rewirelab/diagnostics.hpp"
#include "rewirelab/graph_io.hpp"
#include "rewirelab/spectral.hpp"
#include "rewirelab/train.hpp"

namespace rewirelab {

using nlohmann::json;

inline constexpr const char* kSchemaVersion = "rewirelab/1";

// ---- enum names ----

inline std::string to_string(Regime r) { return r == Regime::MinibatchReuse ? "minibatch_reuse" : "fullbatch_reset"; }
inline std::string to_string(TrainMode m) { return mode_name(m); }
inline std::string to_string(GraphParamKind k) {
    return k == GraphParamKind::SoftmaxReweight ? "softmax_reweight" : "bernoulli";
}

inline TrainMode mode_from_string(const std::string& s) {
    if (s == "vanilla") return TrainMode::Vanilla;
    if (s == "frozen_phi") return TrainMode::FrozenPhi;
    if (s == "bilevel") return TrainMode::Bilevel;
    if (s == "e2e_joint") return TrainMode::E2eJoint;
    throw std::invalid_argument("unknown train mode: " + s);
}
inline Regime regime_from_string(const std::string& s) {
    if (s == "minibatch_reuse") return Regime::MinibatchReuse;
    if (s == "fullbatch_reset") return Regime::FullbatchReset;
    throw std::invalid_argument("unknown regime: " + s);
}
inline GraphParamKind phi_kind_from_string(const std::string& s) {
    if (s == "softmax_reweight") return GraphParamKind::SoftmaxReweight;
    if (s == "bernoulli") return GraphParamKind::Bernoulli;
    throw std::invalid_argument("unknown graph parameterization: " + s);
}

// ---- config <-> json ----

inline json to_json(const TrainConfig& c) {
    return json{{"mode", to_string(c.mode)},
                {"regime", to_string(c.regime)},
                {"inner_steps", c.inner_steps},
                {"warmup_epochs", c.warmup_epochs},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"inner_lr", c.inner_lr},
                {"outer_lr", c.outer_lr},
                {"weight_decay", c.weight_decay},
                {"grad_clip", c.grad_clip},
                {"lr_schedule", c.lr_schedule == LrSchedule::Cosine ? "cosine" : "constant"},
                {"lr_min", c.lr_min},
                {"inner_optimizer", c.inner_optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
                {"outer_optimizer", c.outer_optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
                {"seed", c.seed},
                {"early_stop_patience", c.early_stop_patience},
                {"instrument_gradients", c.instrument_gradients}};
}

inline TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("regime")) c.regime = regime_from_string(j.at("regime").get<std::string>());
    c.inner_steps = j.value("inner_steps", c.inner_steps);
    c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.inner_lr = j.value("inner_lr", c.inner_lr);
    c.outer_lr = j.value("outer_lr", c.outer_lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    if (j.contains("lr_schedule"))
        c.lr_schedule = j.at("lr_schedule").get<std::string>() == "cosine" ? LrSchedule::Cosine : LrSchedule::Constant;
    c.lr_min = j.value("lr_min", c.lr_min);
    if (j.contains("inner_optimizer"))
        c.inner_optimizer = j.at("inner_optimizer").get<std::string>() == "adam" ? OptimizerKind::Adam : OptimizerKind::Sgd;
    if (j.contains("outer_optimizer"))
        c.outer_optimizer = j.at("outer_optimizer").get<std::string>() == "adam" ? OptimizerKind::Adam : OptimizerKind::Sgd;
    c.seed = j.value("seed", c.seed);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    c.instrument_gradients = j.value("instrument_gradients", c.instrument_gradients);
    c.check();
    return c;
}

inline json to_json(const BackboneConfig& b) {
    return json{{"kind", b.kind == BackboneKind::GcnClassifier ? "gcn_classifier" : "decoupled_stgnn"},
                {"hidden", b.hidden},
                {"blocks", b.blocks},
                {"temporal_per_block", b.temporal_per_block},
                {"spatial_per_block", b.spatial_per_block},
                {"diffusion_hops", b.diffusion_hops},
                {"kernel", b.kernel},
                {"dilation", b.dilation},
                {"dilation_growth", b.dilation_growth},
                {"bidirectional", b.bidirectional},
                {"window", b.window},
                {"horizon", b.horizon},
                {"feature_dim", b.feature_dim},
                {"classes", b.classes},
                {"dropout", b.dropout}};
}

inline BackboneConfig backbone_from_json(const json& j) {
    BackboneConfig b;
    if (j.contains("kind"))
        b.kind = j.at("kind").get<std::string>() == "gcn_classifier" ? BackboneKind::GcnClassifier
                                                                     : BackboneKind::DecoupledStgnn;
    b.hidden = j.value("hidden", b.hidden);
    b.blocks = j.value("blocks", b.blocks);
    b.temporal_per_block = j.value("temporal_per_block", b.temporal_per_block);
    b.spatial_per_block = j.value("spatial_per_block", b.spatial_per_block);
    b.diffusion_hops = j.value("diffusion_hops", b.diffusion_hops);
    b.kernel = j.value("kernel", b.kernel);
    b.dilation = j.value("dilation", b.dilation);
    b.dilation_growth = j.value("dilation_growth", b.dilation_growth);
    b.bidirectional = j.value("bidirectional", b.bidirectional);
    b.window = j.value("window", b.window);
    b.horizon = j.value("horizon", b.horizon);
    b.feature_dim = j.value("feature_dim", b.feature_dim);
    b.classes = j.value("classes", b.classes);
    b.dropout = j.value("dropout", b.dropout);
    b.check();
    return b;
}

// ---- records and reports -> json ----

inline json to_json(const stats::TTestResult& t) {
    return json{{"t", t.t}, {"p", t.p}, {"dof", t.dof}, {"degenerate", t.degenerate}};
}

inline json to_json(const RunRecord& r) {
    json j{{"schema", kSchemaVersion},
           {"config", to_json(r.config)},
           {"train_metric", r.train_metric},
           {"val_metric", r.val_metric},
           {"test_metric", r.test_metric},
           {"best_epoch", r.best_epoch},
           {"wall_time_sec", r.wall_time_sec},
           {"failed", r.failed},
           {"failure_reason", r.failure_reason}};
    if (!r.grad_norms.empty()) {
        json g = json::array();
        for (const auto& rec : r.grad_norms)
            g.push_back(json{{"epoch", rec.epoch}, {"batch", rec.batch}, {"inner_step", rec.inner_step}, {"norm", rec.norm}});
        j["grad_norms"] = g;
    }
    return j;
}

inline json to_json(const ShareCi& c) {
    return json{{"lo", c.lo}, {"hi", c.hi}, {"unstable", c.unstable}, {"undefined_fraction", c.undefined_fraction}};
}

inline json to_json(const DecompositionReport& d) {
    json j{{"schema", kSchemaVersion},
           {"vanilla", d.vanilla},
           {"frozen", d.frozen},
           {"bilevel", d.bilevel},
           {"mean_vanilla", d.mean_vanilla},
           {"mean_frozen", d.mean_frozen},
           {"mean_bilevel", d.mean_bilevel},
           {"std_vanilla", d.std_vanilla},
           {"std_frozen", d.std_frozen},
           {"std_bilevel", d.std_bilevel},
           {"delta_inner", d.delta_inner},
           {"delta_graph", d.delta_graph},
           {"delta_total", d.delta_total},
           {"share_defined", d.share_defined},
           {"p_total", to_json(d.p_total)},
           {"p_graph", to_json(d.p_graph)},
           {"p_inner", to_json(d.p_inner)}};
    if (d.share_defined) {
        j["inner_share"] = d.inner_share;
        j["inner_share_pct_display"] = static_cast<int>(std::llround(d.inner_share * 100));
        j["share_ci"] = to_json(d.share_ci);
    } else {
        j["na_reason"] = d.na_reason;
    }
    return j;
}

inline json to_json(const TSweepReport& r) {
    json cells = json::array();
    for (const auto& c : r.cells)
        cells.push_back(json{{"T", c.axis_value},
                             {"arm", c.arm},
                             {"per_seed", c.per_seed},
                             {"mean", c.mean},
                             {"std", c.stddev},
                             {"failed", c.failed},
                             {"failure", c.failure}});
    return json{{"schema", kSchemaVersion},
                {"t_values", r.t_values},
                {"vanilla_per_seed", r.vanilla_per_seed},
                {"vanilla_mean", r.vanilla_mean},
                {"cells", cells},
                {"frozen_t1_equals_vanilla", r.frozen_t1_equals_vanilla},
                {"frozen_max_minus_min", r.frozen_max_minus_min},
                {"frozen_monotone_to_plateau", r.frozen_monotone_to_plateau}};
}

inline json to_json(const CorruptionReport& r) {
    json cells = json::array();
    for (const auto& c : r.cells)
        cells.push_back(json{{"r", c.r},
                             {"graph_hash", c.graph_hash_vanilla},
                             {"hashes_equal", c.graph_hash_vanilla == c.graph_hash_frozen &&
                                                  c.graph_hash_frozen == c.graph_hash_bilevel},
                             {"decomposition", to_json(c.decomposition)}});
    return json{{"schema", kSchemaVersion},
                {"cells", cells},
                {"graph_channel_increasing", r.graph_channel_increasing},
                {"inner_channel_saturating", r.inner_channel_saturating},
                {"cells_share_graphs", r.cells_share_graphs}};
}

inline json to_json(const DistillReport& r) {
    json j{{"schema", kSchemaVersion},
           {"vanilla", r.vanilla},
           {"distilled", r.distilled},
           {"bilevel", r.bilevel},
           {"mean_vanilla", r.mean_vanilla},
           {"mean_distilled", r.mean_distilled},
           {"mean_bilevel", r.mean_bilevel},
           {"share_defined", r.share_defined},
           {"p_distill", to_json(r.p_distill)}};
    if (r.share_defined) j["graph_share"] = r.graph_share;
    return j;
}

inline json to_json(const SpectrumReport& r) {
    json j{{"schema", kSchemaVersion},
           {"eigenvalues", r.eigenvalues},
           {"lcc_size", r.lcc_size},
           {"lambda2", r.lambda2},
           {"eps", r.eps},
           {"whole_graph_lambda2", r.whole_graph_lambda2},
           {"dropped_zero_degree", r.dropped_zero_degree}};
    if (std::isnan(r.w_eps)) j["w_eps"] = nullptr;
    else j["w_eps"] = r.w_eps;
    return j;
}

inline json to_json(const TighteningReport& r) {
    return json{{"schema", kSchemaVersion},
                {"applicable", r.applicable},
                {"reason", r.reason},
                {"rho_eff_base", r.rho_eff_base},
                {"rho_eff_improved", r.rho_eff_improved},
                {"residual_base", r.residual_base},
                {"residual_improved", r.residual_improved},
                {"rate_bound_base", r.rate_bound_base},
                {"rate_bound_improved", r.rate_bound_improved},
                {"improved_dominated", r.improved_dominated}};
}

inline json to_json(const JacobianDistanceReport& r) {
    json strata = json::array();
    for (const auto& s : r.strata) {
        json e{{"label", s.label}, {"present", s.present}};
        if (s.present) {
            e["mean"] = s.mean;
            e["median"] = s.median;
            e["count"] = s.norms.size();
        }
        strata.push_back(e);
    }
    return json{{"schema", kSchemaVersion},
                {"strata", strata},
                {"short_to_long_ratio", r.short_to_long_ratio},
                {"pairs_evaluated", r.pairs_evaluated}};
}

inline json to_json(const IgrReport& r) {
    json sweep = json::array();
    for (const auto& d : r.sweep)
        sweep.push_back(json{{"eta", d.eta_effective}, {"dev_plain", d.dev_plain}, {"dev_modified", d.dev_modified}});
    return json{{"schema", kSchemaVersion},
                {"sweep", sweep},
                {"slope_plain", r.slope_plain},
                {"slope_modified", r.slope_modified}};
}

inline json to_json(const std::vector<BandwidthRow>& rows) {
    json arr = json::array();
    for (const auto& r : rows)
        arr.push_back(json{{"rule", r.rule},
                           {"theta_km", r.theta},
                           {"components", r.component_count},
                           {"isolated", r.isolated_count},
                           {"mean_degree", r.mean_degree},
                           {"edges", r.edge_count},
                           {"inter_cluster_edges", r.inter_cluster_edges}});
    return json{{"schema", kSchemaVersion}, {"rows", arr}};
}

inline json to_json(const EdgeProbReport& r) {
    return json{{"schema", kSchemaVersion},
                {"histogram", r.histogram},
                {"bins", r.bins},
                {"fraction_below_0.01", r.fraction_below_001},
                {"fraction_above_0.9", r.fraction_above_09},
                {"substitution_rate", r.substitution_rate},
                {"addition_rate", r.addition_rate}};
}

// ---- gradient instrumentation CSV ----

inline void save_grad_norms_csv(const RunRecord& r, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "epoch,batch,inner_step,pre_clip_norm\n";
    for (const auto& g : r.grad_norms)
        f << g.epoch << "," << g.batch << "," << g.inner_step << "," << format_double(g.norm) << "\n";
}

inline void save_eigenvalues_csv(const SpectrumReport& r, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "index,eigenvalue\n";
    for (std::size_t i = 0; i < r.eigenvalues.size(); ++i) f << i << "," << format_double(r.eigenvalues[i]) << "\n";
}

// ---- model checkpoints: JSON header + named float64 arrays ----

inline void save_checkpoint(const ModelParams& p, const json& config_header, const std::string& path) {
    json header = config_header;
    header["schema"] = kSchemaVersion;
    header["init_seed"] = p.init_seed;
    json entries = json::array();
    for (const auto& e : p.entries) entries.push_back(json{{"name", e.name}, {"shape", e.shape}});
    header["entries"] = entries;
    std::string htext = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write("RWLCKPT1", 8);
    std::uint64_t hlen = htext.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const auto& e : p.entries)
        f.write(reinterpret_cast<const char*>(e.data.data()), static_cast<std::streamsize>(e.data.size() * sizeof(double)));
}

inline std::pair<ModelParams, json> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    char magic[8];
    f.read(magic, 8);
    if (std::string(magic, 8) != "RWLCKPT1") throw std::runtime_error(path + ": not a checkpoint file");
    std::uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string htext(hlen, '\0');
    f.read(htext.data(), static_cast<std::streamsize>(hlen));
    json header = json::parse(htext);
    if (header.value("schema", "") != kSchemaVersion)
        throw std::runtime_error(path + ": schema version mismatch: file has '" + header.value("schema", "") +
                                 "', reader expects '" + kSchemaVersion + "'");
    ModelParams p;
    p.init_seed = header.value("init_seed", 0ULL);
    for (const auto& e : header.at("entries")) {
        ModelParams::Entry ent;
        ent.name = e.at("name").get<std::string>();
        ent.shape = e.at("shape").get<ad::Shape>();
        ent.data.resize(static_cast<std::size_t>(ad::numel(ent.shape)));
        f.read(reinterpret_cast<char*>(ent.data.data()), static_cast<std::streamsize>(ent.data.size() * sizeof(double)));
        p.entries.push_back(std::move(ent));
    }
    return {p, header};
}

// ---- table rendering ----

inline std::string fmt_mean_std(double mean, double sd, int prec = 3) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << mean << " +/- " << sd;
    return os.str();
}

inline std::string fmt_p(const json& t) {
    if (t.value("degenerate", false)) return "degenerate";
    double p = t.value("p", 1.0);
    std::ostringstream os;
    if (p < 0.001) os << "<0.001";
    else os << std::fixed << std::setprecision(3) << p;
    return os.str();
}

// Decomposition row in the main-table layout: one row of
// label | vanilla | frozen-phi | bilevel | inner share | p_total.
inline std::string render_decomposition(const json& d, const std::string& label, const std::string& format) {
    std::string share = d.value("share_defined", false)
                            ? std::to_string(d.value("inner_share_pct_display", 0)) + "%"
                            : "n/a (" + d.value("na_reason", std::string("undefined")) + ")";
    std::vector<std::string> cols = {label,
                                     fmt_mean_std(d.value("mean_vanilla", 0.0), d.value("std_vanilla", 0.0)),
                                     fmt_mean_std(d.value("mean_frozen", 0.0), d.value("std_frozen", 0.0)),
                                     fmt_mean_std(d.value("mean_bilevel", 0.0), d.value("std_bilevel", 0.0)),
                                     share,
                                     fmt_p(d.value("p_total", json::object()))};
    std::ostringstream os;
    if (format == "csv") {
        os << "label,vanilla,frozen_phi,bilevel,inner_share,p_total\n";
        for (std::size_t i = 0; i < cols.size(); ++i) os << cols[i] << (i + 1 < cols.size() ? "," : "\n");
    } else {  // markdown
        os << "| label | vanilla | frozen-phi | bilevel | inner share | p_total |\n";
        os << "|---|---|---|---|---|---|\n| ";
        for (std::size_t i = 0; i < cols.size(); ++i) os << cols[i] << (i + 1 < cols.size() ? " | " : " |\n");
    }
    return os.str();
}

inline json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    return json::parse(f);
}

inline void save_json_file(const json& j, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << j.dump(2) << "\n";
}

}  // namespace rewirelab
