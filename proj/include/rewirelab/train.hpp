#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "rewirelab/data.hpp"
#include "rewirelab/models.hpp"
#include "rewirelab/spectral.hpp"
#include "rewirelab/stats.hpp"

namespace rewirelab {

enum class TrainMode { Vanilla, FrozenPhi, Bilevel, E2eJoint };
enum class Regime { MinibatchReuse, FullbatchReset };
enum class OptimizerKind { Sgd, Adam };
enum class LrSchedule { Constant, Cosine };

inline const char* mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::Vanilla: return "vanilla";
        case TrainMode::FrozenPhi: return "frozen_phi";
        case TrainMode::Bilevel: return "bilevel";
        default: return "e2e_joint";
    }
}

struct TrainConfig {
    TrainMode mode = TrainMode::Vanilla;
    Regime regime = Regime::MinibatchReuse;
    int inner_steps = 1;        // T
    int warmup_epochs = 0;      // E_w: outer steps start after this epoch
    int epochs = 20;
    int batch_size = 32;
    double inner_lr = 1e-3;
    double outer_lr = 1e-3;
    double weight_decay = 0.0;
    double grad_clip = 5.0;     // 0 disables clipping
    LrSchedule lr_schedule = LrSchedule::Cosine;
    double lr_min = 1e-6;
    OptimizerKind inner_optimizer = OptimizerKind::Adam;
    OptimizerKind outer_optimizer = OptimizerKind::Adam;
    std::uint64_t seed = 42;
    int early_stop_patience = 0;  // 0 disables
    bool instrument_gradients = false;
    bool store_step_params = false;  // test hook: snapshot theta before every inner step

    void check() const {
        if (inner_steps < 1) throw std::invalid_argument("TrainConfig: inner_steps must be >= 1");
        if (warmup_epochs > epochs) throw std::invalid_argument("TrainConfig: warmup_epochs must be <= epochs");
        if (epochs < 1 || batch_size < 1) throw std::invalid_argument("TrainConfig: epochs and batch_size must be positive");
        if (mode == TrainMode::E2eJoint && regime == Regime::FullbatchReset)
            throw std::invalid_argument("TrainConfig: e2e_joint is a single persistent optimization; the fullbatch_reset regime does not apply");
    }

    double lr_at(int epoch) const {
        if (lr_schedule == LrSchedule::Constant) return inner_lr;
        double tmax = static_cast<double>(epochs);
        return lr_min + 0.5 * (inner_lr - lr_min) * (1.0 + std::cos(3.14159265358979323846 * epoch / tmax));
    }
};

struct GradNormRecord {
    int epoch, batch, inner_step;
    double norm;  // pre-clip global gradient norm
};

struct StepSnapshot {
    int epoch, batch, inner_step;
    std::vector<double> params;       // theta before the step
    std::vector<int> window_starts;   // ST batch content (empty for NC)
};

struct RunRecord {
    TrainConfig config;
    std::vector<double> train_metric;  // per-epoch mean train loss (first inner step per batch)
    std::vector<double> val_metric;    // per-epoch validation metric
    double test_metric = std::numeric_limits<double>::quiet_NaN();
    int best_epoch = -1;
    GraphParam learned_phi;
    ModelParams best_params;
    std::vector<GradNormRecord> grad_norms;
    std::vector<StepSnapshot> step_snapshots;
    double wall_time_sec = 0;
    bool failed = false;
    std::string failure_reason;
};

// ---- flat optimizer over the concatenated parameter vector ----

struct Optimizer {
    OptimizerKind kind = OptimizerKind::Sgd;
    double weight_decay = 0;
    std::vector<double> m, v;
    long long t = 0;

    void reset() {
        m.clear();
        v.clear();
        t = 0;
    }

    void step(std::vector<double>& w, const std::vector<double>& g, double lr) {
        if (kind == OptimizerKind::Sgd) {
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * (g[i] + weight_decay * w[i]);
            return;
        }
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        if (m.size() != w.size()) {
            m.assign(w.size(), 0.0);
            v.assign(w.size(), 0.0);
            t = 0;
        }
        ++t;
        double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
        double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (std::size_t i = 0; i < w.size(); ++i) {
            double gi = g[i] + weight_decay * w[i];
            m[i] = b1 * m[i] + (1 - b1) * gi;
            v[i] = b2 * v[i] + (1 - b2) * gi * gi;
            w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
    }
};

namespace detail {

inline double global_norm(const std::vector<std::vector<double>>& grads) {
    double acc = 0;
    for (const auto& g : grads)
        for (double x : g) acc += x * x;
    return std::sqrt(acc);
}

inline std::vector<double> concat_grads(const std::vector<std::vector<double>>& grads, double clip) {
    double norm = global_norm(grads);
    double scalef = (clip > 0 && norm > clip) ? clip / norm : 1.0;
    std::vector<double> flat;
    for (const auto& g : grads)
        for (double x : g) flat.push_back(x * scalef);
    return flat;
}

inline std::uint64_t site_seed(std::uint64_t seed, std::string_view site, std::uint64_t a = 0, std::uint64_t b = 0,
                               std::uint64_t c = 0) {
    std::uint64_t h = hash_tag(site) ^ seed;
    Rng r(h);
    h = r.next_u64() ^ (a * 0x9E3779B97F4A7C15ULL);
    Rng r2(h);
    h = r2.next_u64() ^ (b * 0xC2B2AE3D27D4EB4FULL);
    Rng r3(h);
    return r3.next_u64() ^ (c * 0x165667B19E3779F9ULL);
}

}  // namespace detail

// ---- spatio-temporal task plumbing ----

namespace detail {

// Builds the (batch, window, nodes) input and (batch, horizon, nodes) target
// for a set of window starts, in normalized units.
inline void st_batch_values(const STDataset& ds, const std::vector<int>& starts, std::vector<double>& x,
                            std::vector<double>& y) {
    int n = ds.graph.n;
    x.assign(static_cast<std::size_t>(starts.size()) * ds.window * n, 0.0);
    y.assign(static_cast<std::size_t>(starts.size()) * ds.horizon * n, 0.0);
    for (std::size_t b = 0; b < starts.size(); ++b) {
        for (int t = 0; t < ds.window; ++t)
            for (int v = 0; v < n; ++v)
                x[(b * ds.window + t) * n + v] = ds.normalized(starts[b] + t, v);
        for (int h = 0; h < ds.horizon; ++h)
            for (int v = 0; v < n; ++v)
                y[(b * ds.horizon + h) * n + v] = ds.normalized(starts[b] + ds.window + h, v);
    }
}

// Mean absolute error in raw signal units over a whole split.
inline double st_eval_mae(const STDataset& ds, const BackboneConfig& bb, const ModelParams& params,
                          const std::vector<double>& adj, Split split, int eval_batch = 256) {
    std::vector<int> starts = ds.window_starts(split);
    int n = ds.graph.n;
    double acc = 0;
    long long count = 0;
    for (std::size_t off = 0; off < starts.size(); off += static_cast<std::size_t>(eval_batch)) {
        std::vector<int> chunk(starts.begin() + static_cast<long>(off),
                               starts.begin() + static_cast<long>(std::min(starts.size(), off + static_cast<std::size_t>(eval_batch))));
        std::vector<double> xv, yv;
        st_batch_values(ds, chunk, xv, yv);
        ad::Tape tape;
        LeafedParams lp = leaf_params(tape, params, false);
        ad::Tensor A = tape.constant({n, n}, adj);
        ad::Tensor x = tape.constant({static_cast<int>(chunk.size()), ds.window, n}, xv);
        StgnnOutput out = stgnn_forward(tape, lp, A, x, bb, false, 0);
        const auto& pred = out.forecast.value();
        for (std::size_t b = 0; b < chunk.size(); ++b)
            for (int h = 0; h < ds.horizon; ++h)
                for (int v = 0; v < n; ++v) {
                    double p = ds.denormalize(pred[(b * static_cast<std::size_t>(ds.horizon) + h) * n + v], v);
                    double truth = ds.raw(chunk[b] + ds.window + h, v);
                    acc += std::fabs(p - truth);
                    ++count;
                }
    }
    return acc / static_cast<double>(count);
}

// ---- node-classification task plumbing ----

inline std::vector<double> nc_feature_matrix(const NCDataset& ds) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(ds.graph.n) * ds.graph.features[0].size());
    for (const auto& row : ds.graph.features) flat.insert(flat.end(), row.begin(), row.end());
    return flat;
}

inline double nc_eval_error_rate(const NCDataset& ds, const BackboneConfig& bb, const ModelParams& params,
                                 const std::vector<double>& adj, const std::vector<int>& nodes) {
    ad::Tape tape;
    LeafedParams lp = leaf_params(tape, params, false);
    int n = ds.graph.n;
    ad::Tensor A = tape.constant({n, n}, adj);
    ad::Tensor x = tape.constant({n, bb.feature_dim}, nc_feature_matrix(ds));
    GcnOutput out = gcn_forward(tape, lp, A, x, bb, false, 0);
    const auto& logits = out.logits.value();
    long long wrong = 0;
    for (int v : nodes) {
        int best = 0;
        for (int c = 1; c < bb.classes; ++c)
            if (logits[static_cast<std::size_t>(v) * bb.classes + c] > logits[static_cast<std::size_t>(v) * bb.classes + best])
                best = c;
        if (best != ds.graph.labels[static_cast<std::size_t>(v)]) ++wrong;
    }
    return 100.0 * static_cast<double>(wrong) / static_cast<double>(nodes.size());
}

}  // namespace detail

// ---- the training loop (Algorithm 1 and its controls) ----
//
// vanilla      persistent theta, one inner step per batch, no outer step
// frozen_phi   identical loop to bilevel with the outer-step block skipped
// bilevel      T inner steps (minibatch reuse: same batch, persistent theta;
//              fullbatch reset: theta reinitialized per outer iteration),
//              then one first-order outer step on a validation batch
// e2e_joint    single optimizer over (theta, phi) on the training loss
//
// The scheduler steps once per epoch in every mode, and vanilla is literally
// the frozen_phi code path at T=1, which makes the negative control an exact
// (bit-identical) collapse.

inline RunRecord train(const TrainConfig& cfg, const BackboneConfig& bb, const GraphParam& phi_init,
                       const STDataset& ds) {
    cfg.check();
    auto t_start = std::chrono::steady_clock::now();
    RunRecord rec;
    rec.config = cfg;

    ModelParams params = init_params(bb, detail::site_seed(cfg.seed, "init"));
    GraphParam phi = phi_init;
    Optimizer inner_opt{cfg.inner_optimizer, cfg.weight_decay};
    Optimizer outer_opt{cfg.outer_optimizer, 0.0};
    Optimizer joint_opt{cfg.inner_optimizer, cfg.weight_decay};

    int n = ds.graph.n;
    bool do_outer = cfg.mode == TrainMode::Bilevel;
    bool frozen_like = cfg.mode == TrainMode::FrozenPhi || cfg.mode == TrainMode::Bilevel;
    int T = frozen_like ? cfg.inner_steps : 1;
    bool reset_inner = frozen_like && cfg.regime == Regime::FullbatchReset;

    ModelParams reset_source = params;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr_now = cfg.lr_at(epoch);
        std::vector<std::vector<int>> batches;
        if (cfg.regime == Regime::FullbatchReset && frozen_like)
            batches = {ds.window_starts(Split::Train)};
        else
            batches = batch_iter(ds, cfg.batch_size, detail::site_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)),
                                 Split::Train);
        double train_loss_acc = 0;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            if (reset_inner) {
                params = reset_source;
                inner_opt.reset();
            }
            std::vector<double> xv, yv;
            detail::st_batch_values(ds, batches[bi], xv, yv);
            std::vector<double> a_det;
            if (phi.kind == GraphParamKind::Bernoulli)
                a_det = materialize_graph(phi, MaterializeMode::sample(detail::site_seed(cfg.seed, "inner_draw",
                                                                                         static_cast<std::uint64_t>(epoch), bi)));
            else
                a_det = materialize_graph(phi);

            for (int t = 0; t < T; ++t) {
                if (cfg.store_step_params)
                    rec.step_snapshots.push_back({epoch, static_cast<int>(bi), t, params.flatten(), batches[bi]});
                ad::Tape tape;
                LeafedParams lp = leaf_params(tape, params, true);
                ad::Tensor A;
                ad::Tensor phi_leaf;
                if (cfg.mode == TrainMode::E2eJoint && phi.kind == GraphParamKind::SoftmaxReweight) {
                    phi_leaf = tape.leaf({n, n}, phi.values, true);
                    A = materialize_softmax_on_tape(tape, phi_leaf, phi);
                } else {
                    A = tape.constant({n, n}, a_det);  // detached inner graph
                }
                ad::Tensor x = tape.constant({static_cast<int>(batches[bi].size()), ds.window, n}, xv);
                ad::Tensor y = tape.constant({static_cast<int>(batches[bi].size()), ds.horizon, n}, yv);
                StgnnOutput out = stgnn_forward(tape, lp, A, x, bb, true,
                                                detail::site_seed(cfg.seed, "dropout", static_cast<std::uint64_t>(epoch), bi,
                                                                  static_cast<std::uint64_t>(t)));
                ad::Tensor loss = loss_op(tape, out.forecast, y, LossKind::Mae);
                double lval = loss.item();
                if (!std::isfinite(lval)) {
                    rec.failed = true;
                    rec.failure_reason = "NaN train loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(bi);
                    return rec;
                }
                if (t == 0) train_loss_acc += lval;
                tape.backward(loss);
                std::vector<std::vector<double>> grads;
                for (auto& lt : lp.tensors) grads.push_back(lt.grad());
                if (cfg.mode == TrainMode::E2eJoint && phi_leaf.valid()) grads.push_back(phi_leaf.grad());
                if (cfg.instrument_gradients)
                    rec.grad_norms.push_back({epoch, static_cast<int>(bi), t, detail::global_norm(grads)});
                std::vector<double> flat_g = detail::concat_grads(grads, cfg.grad_clip);
                if (cfg.mode == TrainMode::E2eJoint && phi_leaf.valid()) {
                    std::vector<double> w = params.flatten();
                    w.insert(w.end(), phi.values.begin(), phi.values.end());
                    joint_opt.step(w, flat_g, lr_now);
                    std::vector<double> theta_part(w.begin(), w.begin() + static_cast<long>(params.total_count()));
                    params.unflatten(theta_part);
                    std::copy(w.begin() + static_cast<long>(params.total_count()), w.end(), phi.values.begin());
                } else {
                    std::vector<double> w = params.flatten();
                    inner_opt.step(w, flat_g, lr_now);
                    params.unflatten(w);
                }
            }

            if (do_outer && epoch >= cfg.warmup_epochs) {
                // first-order outer step: theta fixed, phi differentiable
                std::vector<int> val_starts = ds.window_starts(Split::Val);
                Rng vr(detail::site_seed(cfg.seed, "valpick", static_cast<std::uint64_t>(epoch), bi));
                std::vector<int> vb;
                for (int k = 0; k < cfg.batch_size && k < static_cast<int>(val_starts.size()); ++k)
                    vb.push_back(val_starts[static_cast<std::size_t>(vr.index(static_cast<int>(val_starts.size())))]);
                std::vector<double> vx, vy;
                detail::st_batch_values(ds, vb, vx, vy);
                ad::Tape tape;
                LeafedParams lp = leaf_params(tape, params, false);  // theta treated as constant
                ad::Tensor phi_leaf = tape.leaf({n, n}, phi.values, true);
                ad::Tensor A;
                std::vector<std::vector<double>> phi_grads;
                if (phi.kind == GraphParamKind::SoftmaxReweight) {
                    A = materialize_softmax_on_tape(tape, phi_leaf, phi);
                    ad::Tensor x = tape.constant({static_cast<int>(vb.size()), ds.window, n}, vx);
                    ad::Tensor y = tape.constant({static_cast<int>(vb.size()), ds.horizon, n}, vy);
                    StgnnOutput out = stgnn_forward(tape, lp, A, x, bb, false, 0);
                    ad::Tensor vloss = loss_op(tape, out.forecast, y, LossKind::Mae);
                    if (!std::isfinite(vloss.item())) {
                        rec.failed = true;
                        rec.failure_reason = "NaN outer loss at epoch " + std::to_string(epoch);
                        return rec;
                    }
                    tape.backward(vloss);
                    phi_grads.push_back(phi_leaf.grad());
                } else {
                    // average the expectation-relaxed gradient over S sampled graphs
                    std::vector<double> gacc(phi.values.size(), 0.0);
                    for (int s = 0; s < phi.sample_count; ++s) {
                        ad::Tape tape_s;
                        LeafedParams lps = leaf_params(tape_s, params, false);
                        ad::Tensor theta_leaf = tape_s.leaf({n, n}, phi.values, true);
                        std::vector<double> mask = phi.sample_mask(detail::site_seed(cfg.seed, "outer_draw",
                                                                                     static_cast<std::uint64_t>(epoch), bi,
                                                                                     static_cast<std::uint64_t>(s)));
                        ad::Tensor As = materialize_bernoulli_on_tape(tape_s, theta_leaf, mask, n);
                        ad::Tensor x = tape_s.constant({static_cast<int>(vb.size()), ds.window, n}, vx);
                        ad::Tensor y = tape_s.constant({static_cast<int>(vb.size()), ds.horizon, n}, vy);
                        StgnnOutput out = stgnn_forward(tape_s, lps, As, x, bb, false, 0);
                        ad::Tensor vloss = loss_op(tape_s, out.forecast, y, LossKind::Mae);
                        tape_s.backward(vloss);
                        const auto& g = theta_leaf.grad();
                        for (std::size_t i = 0; i < gacc.size(); ++i) gacc[i] += g[i] / phi.sample_count;
                    }
                    phi_grads.push_back(std::move(gacc));
                }
                std::vector<double> flat_g = detail::concat_grads(phi_grads, cfg.grad_clip);
                outer_opt.step(phi.values, flat_g, cfg.outer_lr);
                phi.clamp_bernoulli();
            }
        }
        rec.train_metric.push_back(train_loss_acc / static_cast<double>(batches.size()));

        std::vector<double> a_eval = materialize_graph(phi);
        double val = detail::st_eval_mae(ds, bb, params, a_eval, Split::Val);
        rec.val_metric.push_back(val);
        if (val < best_val) {
            best_val = val;
            rec.best_epoch = epoch;
            rec.best_params = params;
            rec.learned_phi = phi;
            since_best = 0;
        } else if (cfg.early_stop_patience > 0 && ++since_best >= cfg.early_stop_patience) {
            break;
        }
    }
    if (rec.best_epoch < 0) {
        rec.best_params = params;
        rec.learned_phi = phi;
    }
    rec.test_metric = detail::st_eval_mae(ds, bb, rec.best_params, materialize_graph(rec.learned_phi), Split::Test);
    rec.wall_time_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rec;
}

inline RunRecord train(const TrainConfig& cfg, const BackboneConfig& bb, const GraphParam& phi_init,
                       const NCDataset& ds) {
    cfg.check();
    auto t_start = std::chrono::steady_clock::now();
    RunRecord rec;
    rec.config = cfg;

    ModelParams params = init_params(bb, detail::site_seed(cfg.seed, "init"));
    GraphParam phi = phi_init;
    Optimizer inner_opt{cfg.inner_optimizer, cfg.weight_decay};
    Optimizer outer_opt{cfg.outer_optimizer, 0.0};
    Optimizer joint_opt{cfg.inner_optimizer, cfg.weight_decay};

    int n = ds.graph.n;
    bool do_outer = cfg.mode == TrainMode::Bilevel;
    bool frozen_like = cfg.mode == TrainMode::FrozenPhi || cfg.mode == TrainMode::Bilevel;
    int T = frozen_like ? cfg.inner_steps : 1;
    bool reset_inner = frozen_like && cfg.regime == Regime::FullbatchReset;

    std::vector<double> feats = detail::nc_feature_matrix(ds);
    std::vector<std::uint8_t> train_mask(static_cast<std::size_t>(n), 0);
    for (int v : ds.train_nodes) train_mask[static_cast<std::size_t>(v)] = 1;
    std::vector<std::uint8_t> val_mask(static_cast<std::size_t>(n), 0);
    for (int v : ds.val_nodes) val_mask[static_cast<std::size_t>(v)] = 1;

    ModelParams reset_source = params;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr_now = cfg.lr_at(epoch);
        if (reset_inner) {
            params = reset_source;
            inner_opt.reset();
        }
        double train_loss_epoch = 0;
        for (int t = 0; t < T; ++t) {
            if (cfg.store_step_params) rec.step_snapshots.push_back({epoch, 0, t, params.flatten(), {}});
            std::vector<double> a_det;
            if (phi.kind == GraphParamKind::Bernoulli)
                a_det = materialize_graph(phi, MaterializeMode::sample(detail::site_seed(cfg.seed, "inner_draw",
                                                                                         static_cast<std::uint64_t>(epoch),
                                                                                         static_cast<std::uint64_t>(t))));
            else
                a_det = materialize_graph(phi);
            ad::Tape tape;
            LeafedParams lp = leaf_params(tape, params, true);
            ad::Tensor A;
            ad::Tensor phi_leaf;
            if (cfg.mode == TrainMode::E2eJoint) {
                phi_leaf = tape.leaf({n, n}, phi.values, true);
                A = phi.kind == GraphParamKind::SoftmaxReweight
                        ? materialize_softmax_on_tape(tape, phi_leaf, phi)
                        : phi_leaf;  // deterministic expectation relaxation for joint training
            } else {
                A = tape.constant({n, n}, a_det);
            }
            ad::Tensor x = tape.constant({n, bb.feature_dim}, feats);
            GcnOutput out = gcn_forward(tape, lp, A, x, bb, true,
                                        detail::site_seed(cfg.seed, "dropout", static_cast<std::uint64_t>(epoch),
                                                          static_cast<std::uint64_t>(t)));
            ad::Tensor loss = ad::cross_entropy_logits(out.logits, ds.graph.labels, train_mask);
            double lval = loss.item();
            if (!std::isfinite(lval)) {
                rec.failed = true;
                rec.failure_reason = "NaN train loss at epoch " + std::to_string(epoch);
                return rec;
            }
            if (t == 0) train_loss_epoch = lval;
            tape.backward(loss);
            std::vector<std::vector<double>> grads;
            for (auto& lt : lp.tensors) grads.push_back(lt.grad());
            if (cfg.mode == TrainMode::E2eJoint && phi_leaf.valid()) grads.push_back(phi_leaf.grad());
            if (cfg.instrument_gradients) rec.grad_norms.push_back({epoch, 0, t, detail::global_norm(grads)});
            std::vector<double> flat_g = detail::concat_grads(grads, cfg.grad_clip);
            if (cfg.mode == TrainMode::E2eJoint && phi_leaf.valid()) {
                std::vector<double> w = params.flatten();
                w.insert(w.end(), phi.values.begin(), phi.values.end());
                joint_opt.step(w, flat_g, lr_now);
                std::vector<double> theta_part(w.begin(), w.begin() + static_cast<long>(params.total_count()));
                params.unflatten(theta_part);
                std::copy(w.begin() + static_cast<long>(params.total_count()), w.end(), phi.values.begin());
                phi.clamp_bernoulli();
            } else {
                std::vector<double> w = params.flatten();
                inner_opt.step(w, flat_g, lr_now);
                params.unflatten(w);
            }
        }

        if (do_outer && epoch >= cfg.warmup_epochs) {
            std::vector<double> gacc(phi.values.size(), 0.0);
            int draws = phi.kind == GraphParamKind::Bernoulli ? phi.sample_count : 1;
            for (int s = 0; s < draws; ++s) {
                ad::Tape tape;
                LeafedParams lp = leaf_params(tape, params, false);  // theta constant at the outer step
                ad::Tensor phi_leaf = tape.leaf({n, n}, phi.values, true);
                ad::Tensor A;
                if (phi.kind == GraphParamKind::SoftmaxReweight) {
                    A = materialize_softmax_on_tape(tape, phi_leaf, phi);
                } else {
                    std::vector<double> mask = phi.sample_mask(detail::site_seed(cfg.seed, "outer_draw",
                                                                                 static_cast<std::uint64_t>(epoch),
                                                                                 static_cast<std::uint64_t>(s)));
                    A = materialize_bernoulli_on_tape(tape, phi_leaf, mask, n);
                }
                ad::Tensor x = tape.constant({n, bb.feature_dim}, feats);
                GcnOutput out = gcn_forward(tape, lp, A, x, bb, false, 0);
                ad::Tensor vloss = ad::cross_entropy_logits(out.logits, ds.graph.labels, val_mask);
                if (!std::isfinite(vloss.item())) {
                    rec.failed = true;
                    rec.failure_reason = "NaN outer loss at epoch " + std::to_string(epoch);
                    return rec;
                }
                tape.backward(vloss);
                const auto& g = phi_leaf.grad();
                for (std::size_t i = 0; i < gacc.size(); ++i) gacc[i] += g[i] / draws;
            }
            std::vector<double> flat_g = detail::concat_grads({gacc}, cfg.grad_clip);
            outer_opt.step(phi.values, flat_g, cfg.outer_lr);
            phi.clamp_bernoulli();
        }

        rec.train_metric.push_back(train_loss_epoch);
        std::vector<double> a_eval = materialize_graph(phi);
        double val = detail::nc_eval_error_rate(ds, bb, params, a_eval, ds.val_nodes);
        rec.val_metric.push_back(val);
        if (val < best_val) {
            best_val = val;
            rec.best_epoch = epoch;
            rec.best_params = params;
            rec.learned_phi = phi;
            since_best = 0;
        } else if (cfg.early_stop_patience > 0 && ++since_best >= cfg.early_stop_patience) {
            break;
        }
    }
    if (rec.best_epoch < 0) {
        rec.best_params = params;
        rec.learned_phi = phi;
    }
    rec.test_metric = detail::nc_eval_error_rate(ds, bb, rec.best_params, materialize_graph(rec.learned_phi), ds.test_nodes);
    rec.wall_time_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rec;
}

// ---- implicit-regularization oracle on quadratic losses ----

struct IgrDeviation {
    double eta_effective = 0;
    double dev_plain = 0;     // || theta_GD(T) - flow of L at time T*eta ||
    double dev_modified = 0;  // || theta_GD(T) - flow of L + (eta/4)||grad L||^2 ||
};

struct IgrReport {
    std::vector<IgrDeviation> sweep;
    double slope_plain = 0;     // log-log slope of dev_plain vs eta (expected ~1)
    double slope_modified = 0;  // log-log slope of dev_modified vs eta (expected ~2)
};

namespace detail {

inline std::vector<double> matvec(const SymMatrix& h, const std::vector<double>& x) {
    std::vector<double> y(x.size(), 0.0);
    for (int i = 0; i < h.n; ++i) {
        double acc = 0;
        for (int j = 0; j < h.n; ++j) acc += h.at(i, j) * x[static_cast<std::size_t>(j)];
        y[static_cast<std::size_t>(i)] = acc;
    }
    return y;
}

// RK4 on theta' = -M theta to the given time.
inline std::vector<double> rk4_linear_flow(const SymMatrix& m, std::vector<double> x, double time, int substeps) {
    double h = time / substeps;
    auto f = [&m](const std::vector<double>& v) {
        std::vector<double> y = matvec(m, v);
        for (double& e : y) e = -e;
        return y;
    };
    for (int s = 0; s < substeps; ++s) {
        std::vector<double> k1 = f(x);
        std::vector<double> tmp(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
        std::vector<double> k2 = f(tmp);
        for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
        std::vector<double> k3 = f(tmp);
        for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + h * k3[i];
        std::vector<double> k4 = f(tmp);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    }
    return x;
}

}  // namespace detail

// Deviation of T gradient-descent steps on L = 1/2 theta^T H theta from (i)
// the gradient flow of L and (ii) the flow of the modified loss
// L + (eta/4)||H theta||^2, both integrated by RK4 to time T*eta.
inline IgrDeviation igr_deviation(const SymMatrix& H, const std::vector<double>& theta0, double eta, int steps) {
    if (static_cast<int>(theta0.size()) != H.n) throw std::invalid_argument("igr_deviation: dimension mismatch");
    double lmax = eigen_sym(H).values.back();
    if (eta >= 1.0 / lmax)
        throw std::invalid_argument("igr_deviation: eta " + std::to_string(eta) + " violates eta < 1/lambda_max = " +
                                    std::to_string(1.0 / lmax));
    std::vector<double> gd = theta0;
    for (int t = 0; t < steps; ++t) {
        std::vector<double> g = detail::matvec(H, gd);
        for (std::size_t i = 0; i < gd.size(); ++i) gd[i] -= eta * g[i];
    }
    double time = eta * steps;
    int substeps = std::max(64, 8 * steps);
    std::vector<double> flow = detail::rk4_linear_flow(H, theta0, time, substeps);
    // modified drift: H + (eta/2) H^2  (gradient of L + (eta/4)||H theta||^2)
    SymMatrix hmod = H;
    SymMatrix h2 = matmul_dense(H, H);
    for (std::size_t i = 0; i < hmod.a.size(); ++i) hmod.a[i] += 0.5 * eta * h2.a[i];
    std::vector<double> mod = detail::rk4_linear_flow(hmod, theta0, time, substeps);

    IgrDeviation d;
    d.eta_effective = eta;
    for (std::size_t i = 0; i < gd.size(); ++i) {
        d.dev_plain += (gd[i] - flow[i]) * (gd[i] - flow[i]);
        d.dev_modified += (gd[i] - mod[i]) * (gd[i] - mod[i]);
    }
    d.dev_plain = std::sqrt(d.dev_plain);
    d.dev_modified = std::sqrt(d.dev_modified);
    return d;
}

// Order-of-accuracy sweep at fixed total flow time: step counts are chosen as
// round(total_time/eta), so deviations scale as eta (plain flow) and eta^2
// (modified flow). Slopes are least-squares fits in log-log space.
inline IgrReport igr_oracle(const SymMatrix& H, const std::vector<double>& theta0, const std::vector<double>& etas,
                            double total_time = 1.0) {
    IgrReport rep;
    std::vector<double> lx, ly_plain, ly_mod;
    for (double eta : etas) {
        int steps = std::max(1, static_cast<int>(std::llround(total_time / eta)));
        double eta_eff = total_time / steps;
        IgrDeviation d = igr_deviation(H, theta0, eta_eff, steps);
        rep.sweep.push_back(d);
        lx.push_back(std::log(eta_eff));
        ly_plain.push_back(std::log(std::max(d.dev_plain, 1e-300)));
        ly_mod.push_back(std::log(std::max(d.dev_modified, 1e-300)));
    }
    rep.slope_plain = stats::fit_slope(lx, ly_plain);
    rep.slope_modified = stats::fit_slope(lx, ly_mod);
    return rep;
}

}  // namespace rewirelab
