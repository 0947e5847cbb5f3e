#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "rewirelab/graph.hpp"
#include "rewirelab/rng.hpp"
#include "rewirelab/tensor.hpp"

namespace rewirelab {

namespace ad = rewirelab::ad;

// ---- named parameter collection ----

struct ModelParams {
    struct Entry {
        std::string name;
        ad::Shape shape;
        std::vector<double> data;
    };
    std::vector<Entry> entries;
    std::uint64_t init_seed = 0;

    Entry& find(const std::string& name) {
        for (Entry& e : entries)
            if (e.name == name) return e;
        throw std::out_of_range("ModelParams: no parameter named " + name);
    }
    const Entry& find(const std::string& name) const {
        for (const Entry& e : entries)
            if (e.name == name) return e;
        throw std::out_of_range("ModelParams: no parameter named " + name);
    }

    long long total_count() const {
        long long c = 0;
        for (const Entry& e : entries) c += static_cast<long long>(e.data.size());
        return c;
    }

    std::vector<double> flatten() const {
        std::vector<double> out;
        out.reserve(static_cast<std::size_t>(total_count()));
        for (const Entry& e : entries) out.insert(out.end(), e.data.begin(), e.data.end());
        return out;
    }

    void unflatten(const std::vector<double>& flat) {
        if (static_cast<long long>(flat.size()) != total_count())
            throw std::invalid_argument("ModelParams: flat vector length mismatch");
        std::size_t off = 0;
        for (Entry& e : entries) {
            std::copy(flat.begin() + static_cast<long>(off), flat.begin() + static_cast<long>(off + e.data.size()),
                      e.data.begin());
            off += e.data.size();
        }
    }
};

inline std::vector<double> glorot_uniform(const ad::Shape& shape, Rng& rng) {
    long long n = ad::numel(shape);
    long long fan_in = shape.size() >= 2 ? shape[shape.size() - 2] : shape[0];
    long long fan_out = shape.back();
    if (shape.size() == 3) fan_in = shape[1] * shape[2];  // conv kernels
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = rng.uniform(-limit, limit);
    return v;
}

// Parameters leafed onto a tape for one forward/backward pass.
struct LeafedParams {
    const ModelParams* spec = nullptr;
    std::vector<ad::Tensor> tensors;

    ad::Tensor get(const std::string& name) const {
        for (std::size_t i = 0; i < spec->entries.size(); ++i)
            if (spec->entries[i].name == name) return tensors[i];
        throw std::out_of_range("LeafedParams: no parameter named " + name);
    }
};

inline LeafedParams leaf_params(ad::Tape& tape, const ModelParams& p, bool requires_grad = true) {
    LeafedParams lp;
    lp.spec = &p;
    for (const auto& e : p.entries) lp.tensors.push_back(tape.leaf(e.shape, e.data, requires_grad));
    return lp;
}

// ---- backbone configuration ----

enum class BackboneKind { GcnClassifier, DecoupledStgnn };

struct BackboneConfig {
    BackboneKind kind = BackboneKind::DecoupledStgnn;
    int hidden = 16;

    // STGNN stack: `blocks` repetitions of [temporal_per_block dilated convs,
    // then spatial_per_block diffusion layers]; linear readout to `horizon`.
    int blocks = 2;
    int temporal_per_block = 1;
    int spatial_per_block = 1;
    int diffusion_hops = 2;  // K
    int kernel = 3;
    int dilation = 1;
    int dilation_growth = 1;  // per-conv multiplier (2 = exponential dilation)
    bool bidirectional = true;
    int window = 12;
    int horizon = 4;

    // GCN classifier (2 layers)
    int feature_dim = 16;
    int classes = 3;

    double dropout = 0.0;

    void check() const {
        if (hidden < 1 || blocks < 1 || horizon < 1 || window < 1)
            throw std::invalid_argument("BackboneConfig: dimensions must be positive");
    }

    // Maximal graph distance that can influence an output node.
    int spatial_radius() const {
        if (kind == BackboneKind::GcnClassifier) return 2;  // two message-passing layers, 1 hop each
        return diffusion_hops * spatial_per_block * blocks;
    }

    // Minimal window length the temporal stack accepts.
    int temporal_receptive_field() const {
        int span = 1;
        int d = dilation;
        for (int b = 0; b < blocks; ++b)
            for (int l = 0; l < temporal_per_block; ++l) {
                span += (kernel - 1) * d;
                d *= dilation_growth;
            }
        return span;
    }
};

inline ModelParams init_params(const BackboneConfig& cfg, std::uint64_t seed) {
    cfg.check();
    Rng rng(seed);
    ModelParams p;
    p.init_seed = seed;
    auto push = [&p, &rng](const std::string& name, ad::Shape shape) {
        std::vector<double> data = glorot_uniform(shape, rng);
        p.entries.push_back({name, std::move(shape), std::move(data)});
    };
    auto push_zero = [&p](const std::string& name, ad::Shape shape) {
        p.entries.push_back({name, shape, std::vector<double>(static_cast<std::size_t>(ad::numel(shape)), 0.0)});
    };
    if (cfg.kind == BackboneKind::GcnClassifier) {
        push("gcn.w1", {cfg.feature_dim, cfg.hidden});
        push_zero("gcn.b1", {cfg.hidden});
        push("gcn.w2", {cfg.hidden, cfg.classes});
        push_zero("gcn.b2", {cfg.classes});
        return p;
    }
    push("lift.w", {cfg.hidden, 1, 1});
    push_zero("lift.b", {cfg.hidden});
    for (int b = 0; b < cfg.blocks; ++b) {
        for (int l = 0; l < cfg.temporal_per_block; ++l) {
            std::string base = "block" + std::to_string(b) + ".t" + std::to_string(l);
            push(base + ".w", {cfg.hidden, cfg.hidden, cfg.kernel});
            push_zero(base + ".b", {cfg.hidden});
        }
        for (int s = 0; s < cfg.spatial_per_block; ++s) {
            std::string base = "block" + std::to_string(b) + ".s" + std::to_string(s);
            push(base + ".w0", {cfg.hidden, cfg.hidden});
            for (int p2 = 1; p2 <= cfg.diffusion_hops; ++p2) {
                push(base + ".wf" + std::to_string(p2), {cfg.hidden, cfg.hidden});
                if (cfg.bidirectional) push(base + ".wb" + std::to_string(p2), {cfg.hidden, cfg.hidden});
            }
            push_zero(base + ".b", {cfg.hidden});
        }
    }
    push("head.w", {cfg.hidden, cfg.horizon});
    push_zero("head.b", {cfg.horizon});
    return p;
}

// ---- graph parameterizations of the outer variable ----

enum class GraphParamKind { SoftmaxReweight, Bernoulli };

// Outer parameter phi. SoftmaxReweight: per-edge logits masked to the support
// of A_init, materialized as A_init (x) row-softmax(W). Bernoulli: symmetric
// per-pair edge probabilities sampled as 0/1 adjacencies.
struct GraphParam {
    GraphParamKind kind = GraphParamKind::SoftmaxReweight;
    int n = 0;
    std::vector<double> a_init;    // dense n*n reference adjacency
    std::vector<double> support;   // 0/1 mask of a_init (softmax kind)
    std::vector<double> values;    // logits (softmax) or probabilities theta (bernoulli), dense n*n
    int sample_count = 16;         // bernoulli draws per outer step

    static GraphParam softmax_reweight(const Graph& g) {
        GraphParam p;
        p.kind = GraphParamKind::SoftmaxReweight;
        p.n = g.n;
        p.a_init = g.dense_adjacency();
        p.support.assign(p.a_init.size(), 0.0);
        for (std::size_t i = 0; i < p.a_init.size(); ++i) p.support[i] = p.a_init[i] > 0 ? 1.0 : 0.0;
        p.values.assign(p.a_init.size(), 0.0);
        return p;
    }

    // LDS-style initialization: probabilities set to the (binary) adjacency.
    static GraphParam bernoulli(const Graph& g, int sample_count = 16) {
        GraphParam p;
        p.kind = GraphParamKind::Bernoulli;
        p.n = g.n;
        p.a_init = g.dense_adjacency();
        p.values.assign(p.a_init.size(), 0.0);
        for (std::size_t i = 0; i < p.a_init.size(); ++i) p.values[i] = p.a_init[i] > 0 ? 1.0 : 0.0;
        p.sample_count = sample_count;
        return p;
    }

    void clamp_bernoulli() {
        if (kind != GraphParamKind::Bernoulli) return;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double& v = values[static_cast<std::size_t>(i) * n + j];
                if (i == j) v = 0;
                v = std::min(1.0, std::max(0.0, v));
            }
        // keep theta symmetric: average the two triangles
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                double m = 0.5 * (values[static_cast<std::size_t>(i) * n + j] + values[static_cast<std::size_t>(j) * n + i]);
                values[static_cast<std::size_t>(i) * n + j] = m;
                values[static_cast<std::size_t>(j) * n + i] = m;
            }
    }

    // Symmetric 0/1 draw from the Bernoulli probabilities (upper triangle
    // sampled, mirrored).
    std::vector<double> sample_mask(std::uint64_t seed) const {
        Rng rng(seed);
        std::vector<double> m(values.size(), 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                double p = values[static_cast<std::size_t>(i) * n + j];
                double bit = rng.uniform() < p ? 1.0 : 0.0;
                m[static_cast<std::size_t>(i) * n + j] = bit;
                m[static_cast<std::size_t>(j) * n + i] = bit;
            }
        return m;
    }
};

struct MaterializeMode {
    bool sampled = false;
    std::uint64_t seed = 0;

    static MaterializeMode deterministic() { return {false, 0}; }
    static MaterializeMode sample(std::uint64_t s) { return {true, s}; }
};

// Plain-value materialization (no tape): softmax -> A_init (x) row-softmax(W);
// bernoulli deterministic -> theta; bernoulli sampled -> one 0/1 draw.
inline std::vector<double> materialize_graph(const GraphParam& phi, MaterializeMode mode = MaterializeMode::deterministic()) {
    if (phi.kind == GraphParamKind::SoftmaxReweight) {
        ad::Tape t;
        ad::Tensor w = t.constant({phi.n, phi.n}, phi.values);
        ad::Tensor mask = t.constant({phi.n, phi.n}, phi.support);
        ad::Tensor sm = ad::masked_row_softmax(w, mask);
        std::vector<double> out(phi.a_init.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = phi.a_init[i] * sm.value()[i];
        return out;
    }
    if (!mode.sampled) return phi.values;
    std::vector<double> m = phi.sample_mask(mode.seed);
    return m;
}

// On-tape materialization used by the outer step: the result is
// differentiable with respect to the leafed phi tensor.
inline ad::Tensor materialize_softmax_on_tape(ad::Tape& tape, const ad::Tensor& logits, const GraphParam& phi) {
    ad::Tensor mask = tape.constant({phi.n, phi.n}, phi.support);
    ad::Tensor ainit = tape.constant({phi.n, phi.n}, phi.a_init);
    return ad::mul(ainit, ad::masked_row_softmax(logits, mask));
}

// Expectation-relaxed sampled adjacency: forward value theta (x) mask with
// gradient flowing into theta through the product.
inline ad::Tensor materialize_bernoulli_on_tape(ad::Tape& tape, const ad::Tensor& theta, const std::vector<double>& mask01, int n) {
    ad::Tensor mask = tape.constant({n, n}, mask01);
    return ad::mul(theta, mask);
}

inline Graph adjacency_to_graph(const std::vector<double>& dense, int n, double threshold = 0.0) {
    Graph g;
    g.n = n;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double w = 0.5 * (dense[static_cast<std::size_t>(i) * n + j] + dense[static_cast<std::size_t>(j) * n + i]);
            if (w > threshold) g.edges.push_back({i, j, w});
        }
    g.validate();
    return g;
}

// ---- GCN classifier ----

// Symmetric D^{-1/2}(A+I)D^{-1/2} normalization built on the tape, so it
// stays differentiable when `adj` is the materialized outer parameter.
inline ad::Tensor gcn_normalize(ad::Tape& tape, const ad::Tensor& adj, int n) {
    std::vector<double> eye(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) eye[static_cast<std::size_t>(i) * n + i] = 1.0;
    ad::Tensor a_sl = ad::add(adj, tape.constant({n, n}, eye));
    ad::Tensor dinv = ad::rsqrt(ad::rowsum(a_sl));
    return ad::scale_cols(ad::scale_rows(a_sl, dinv), dinv);
}

struct GcnOutput {
    ad::Tensor logits;  // (n, classes)
};

inline GcnOutput gcn_forward(ad::Tape& tape, const LeafedParams& params, const ad::Tensor& adj,
                             const ad::Tensor& features, const BackboneConfig& cfg, bool training,
                             std::uint64_t dropout_seed) {
    if (features.shape().size() != 2 || features.shape()[1] != cfg.feature_dim)
        throw std::invalid_argument("gcn_forward: feature shape " + ad::shape_str(features.shape()) +
                                    " does not match configured dim " + std::to_string(cfg.feature_dim));
    int n = features.shape()[0];
    if (adj.shape() != ad::Shape{n, n})
        throw std::invalid_argument("gcn_forward: adjacency shape " + ad::shape_str(adj.shape()) + " vs n=" + std::to_string(n));
    ad::Tensor ahat = gcn_normalize(tape, adj, n);
    ad::Tensor h = ad::relu(ad::add_rowvec(ad::matmul(ad::matmul(ahat, features), params.get("gcn.w1")), params.get("gcn.b1")));
    if (training && cfg.dropout > 0) h = ad::dropout(h, cfg.dropout, dropout_seed);
    ad::Tensor logits = ad::add_rowvec(ad::matmul(ad::matmul(ahat, h), params.get("gcn.w2")), params.get("gcn.b2"));
    return {logits};
}

// ---- decoupled STGNN ----

namespace detail {

// (B*N, C, T) -> (N, B*C*T) node-mixing layout
inline ad::Tensor to_node_layout(const ad::Tensor& x, int B, int N, int C, int T) {
    ad::Tensor x4 = ad::reshape(x, {B, N, C, T});
    return ad::reshape(ad::permute(x4, {1, 0, 2, 3}), {N, B * C * T});
}

// (N, B*C*T) -> (B*N*T, C) channel-mixing layout
inline ad::Tensor node_to_channel_layout(const ad::Tensor& u, int B, int N, int C, int T) {
    ad::Tensor u4 = ad::reshape(u, {N, B, C, T});
    return ad::reshape(ad::permute(u4, {1, 0, 3, 2}), {B * N * T, C});
}

// (B*N, C, T) -> (B*N*T, C)
inline ad::Tensor conv_to_channel_layout(const ad::Tensor& x, int B, int N, int C, int T) {
    ad::Tensor x4 = ad::reshape(x, {B, N, C, T});
    return ad::reshape(ad::permute(x4, {0, 1, 3, 2}), {B * N * T, C});
}

// (B*N*T, C) -> (B*N, C, T)
inline ad::Tensor channel_to_conv_layout(const ad::Tensor& x, int B, int N, int C, int T) {
    ad::Tensor x4 = ad::reshape(x, {B, N, T, C});
    return ad::reshape(ad::permute(x4, {0, 1, 3, 2}), {B * N, C, T});
}

}  // namespace detail

struct StgnnOutput {
    ad::Tensor forecast;  // (B, horizon, N)
};

// Decoupled stack: per block, temporal dilated convolutions (GeLU) followed by
// K-hop bidirectional diffusion over row-normalized A and A^T; linear head
// from the last temporal state to the horizon.
inline StgnnOutput stgnn_forward(ad::Tape& tape, const LeafedParams& params, const ad::Tensor& adj,
                                 const ad::Tensor& window_input, const BackboneConfig& cfg, bool training,
                                 std::uint64_t dropout_seed) {
    if (window_input.shape().size() != 3)
        throw std::invalid_argument("stgnn_forward: input must be (batch, window, nodes), got " +
                                    ad::shape_str(window_input.shape()));
    int B = window_input.shape()[0], T = window_input.shape()[1], N = window_input.shape()[2];
    if (adj.shape() != ad::Shape{N, N})
        throw std::invalid_argument("stgnn_forward: adjacency shape " + ad::shape_str(adj.shape()) + " vs nodes " +
                                    std::to_string(N));
    int rf = cfg.temporal_receptive_field();
    if (T < rf)
        throw std::invalid_argument("stgnn_forward: window length " + std::to_string(T) +
                                    " below required receptive field " + std::to_string(rf));

    // row-normalized forward and backward transition matrices
    ad::Tensor pf = ad::scale_rows(adj, ad::safe_recip(ad::rowsum(adj)));
    ad::Tensor at = ad::transpose(adj);
    ad::Tensor pb = ad::scale_rows(at, ad::safe_recip(ad::rowsum(at)));

    ad::Tensor x = ad::reshape(ad::permute(window_input, {0, 2, 1}), {B * N, 1, T});
    x = ad::conv1d(x, params.get("lift.w"), params.get("lift.b"), 1);
    int C = cfg.hidden;
    int Tcur = T;
    int dil = cfg.dilation;
    std::uint64_t drop_ix = 0;
    for (int b = 0; b < cfg.blocks; ++b) {
        for (int l = 0; l < cfg.temporal_per_block; ++l) {
            std::string base = "block" + std::to_string(b) + ".t" + std::to_string(l);
            x = ad::gelu(ad::conv1d(x, params.get(base + ".w"), params.get(base + ".b"), dil));
            Tcur -= (cfg.kernel - 1) * dil;
            dil *= cfg.dilation_growth;
        }
        for (int s = 0; s < cfg.spatial_per_block; ++s) {
            std::string base = "block" + std::to_string(b) + ".s" + std::to_string(s);
            ad::Tensor acc = ad::matmul(detail::conv_to_channel_layout(x, B, N, C, Tcur), params.get(base + ".w0"));
            ad::Tensor uf = detail::to_node_layout(x, B, N, C, Tcur);
            ad::Tensor ub = uf;
            for (int p = 1; p <= cfg.diffusion_hops; ++p) {
                uf = ad::matmul(pf, uf);
                acc = ad::add(acc, ad::matmul(detail::node_to_channel_layout(uf, B, N, C, Tcur),
                                              params.get(base + ".wf" + std::to_string(p))));
                if (cfg.bidirectional) {
                    ub = ad::matmul(pb, ub);
                    acc = ad::add(acc, ad::matmul(detail::node_to_channel_layout(ub, B, N, C, Tcur),
                                                  params.get(base + ".wb" + std::to_string(p))));
                }
            }
            acc = ad::gelu(ad::add_rowvec(acc, params.get(base + ".b")));
            if (training && cfg.dropout > 0) acc = ad::dropout(acc, cfg.dropout, dropout_seed + (++drop_ix));
            x = detail::channel_to_conv_layout(acc, B, N, C, Tcur);
        }
    }
    ad::Tensor state = ad::last_step(x);  // (B*N, C)
    ad::Tensor head = ad::add_rowvec(ad::matmul(state, params.get("head.w")), params.get("head.b"));  // (B*N, H)
    ad::Tensor out = ad::permute(ad::reshape(head, {B, N, cfg.horizon}), {0, 2, 1});                  // (B, H, N)
    return {out};
}

// ---- losses ----

enum class LossKind { Mae, Mse, CrossEntropy };

// Mean over (optionally masked) entries. For CrossEntropy use
// cross_entropy_logits directly; this overload covers the regression losses.
inline ad::Tensor loss_op(ad::Tape& tape, const ad::Tensor& pred, const ad::Tensor& target, LossKind kind,
                          const std::vector<double>& mask = {}) {
    if (pred.shape() != target.shape())
        throw std::invalid_argument("loss: shape mismatch " + ad::shape_str(pred.shape()) + " vs " +
                                    ad::shape_str(target.shape()));
    ad::Tensor per;
    if (kind == LossKind::Mse) per = ad::squared_error(pred, target);
    else if (kind == LossKind::Mae) per = ad::abs_val(ad::sub(pred, target));
    else throw std::invalid_argument("loss: cross-entropy requires cross_entropy_logits");
    if (mask.empty()) return ad::reduce_mean(per);
    if (static_cast<long long>(mask.size()) != per.size()) throw std::invalid_argument("loss: mask size mismatch");
    double count = 0;
    for (double m : mask) count += m;
    if (count == 0) throw std::invalid_argument("loss: empty mask");
    ad::Tensor m = tape.constant(per.shape(), mask);
    return ad::scale(ad::reduce_sum(ad::mul(per, m)), 1.0 / count);
}

// ---- Jacobian probes ----

// Frobenius norm over all listed output components of the gradient restricted
// to the listed input components: one backward pass per output component.
inline double jacobian_source_norm(ad::Tape& tape, const ad::Tensor& output,
                                   const std::vector<long long>& output_components, const ad::Tensor& input,
                                   const std::vector<long long>& input_components) {
    double acc = 0;
    for (long long oc : output_components) {
        tape.zero_grad();
        ad::Tensor s = ad::pick(output, oc);
        tape.backward(s);
        const auto& g = input.grad();
        for (long long ic : input_components) acc += g[static_cast<std::size_t>(ic)] * g[static_cast<std::size_t>(ic)];
    }
    return std::sqrt(acc);
}

// || d yhat[target, output_step] / d x[:, source] ||_2 for a trained STGNN on
// one input window (raw normalized units).
inline double stgnn_jacobian_norm(const BackboneConfig& cfg, const ModelParams& params,
                                  const std::vector<double>& adj_dense, int n,
                                  const std::vector<double>& window, int source_node, int target_node,
                                  int output_step) {
    if (source_node < 0 || source_node >= n || target_node < 0 || target_node >= n)
        throw std::out_of_range("stgnn_jacobian_norm: node index out of range");
    if (output_step < 0 || output_step >= cfg.horizon) throw std::out_of_range("stgnn_jacobian_norm: output step out of range");
    ad::Tape tape;
    LeafedParams lp = leaf_params(tape, params, /*requires_grad=*/false);
    ad::Tensor adj = tape.constant({n, n}, adj_dense);
    ad::Tensor x = tape.leaf({1, cfg.window, n}, window, /*requires_grad=*/true);
    StgnnOutput out = stgnn_forward(tape, lp, adj, x, cfg, /*training=*/false, 0);
    long long out_idx = static_cast<long long>(output_step) * n + target_node;
    std::vector<long long> in_comps;
    for (int t = 0; t < cfg.window; ++t) in_comps.push_back(static_cast<long long>(t) * n + source_node);
    return jacobian_source_norm(tape, out.forecast, {out_idx}, x, in_comps);
}

// || d logits[target, :] / d x[source, :] ||_F for a trained GCN.
inline double gcn_jacobian_norm(const BackboneConfig& cfg, const ModelParams& params,
                                const std::vector<double>& adj_dense, int n,
                                const std::vector<std::vector<double>>& features, int source_node, int target_node) {
    if (source_node < 0 || source_node >= n || target_node < 0 || target_node >= n)
        throw std::out_of_range("gcn_jacobian_norm: node index out of range");
    ad::Tape tape;
    LeafedParams lp = leaf_params(tape, params, /*requires_grad=*/false);
    ad::Tensor adj = tape.constant({n, n}, adj_dense);
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(n) * cfg.feature_dim);
    for (const auto& row : features) flat.insert(flat.end(), row.begin(), row.end());
    ad::Tensor x = tape.leaf({n, cfg.feature_dim}, flat, /*requires_grad=*/true);
    GcnOutput out = gcn_forward(tape, lp, adj, x, cfg, /*training=*/false, 0);
    std::vector<long long> out_comps, in_comps;
    for (int c = 0; c < cfg.classes; ++c) out_comps.push_back(static_cast<long long>(target_node) * cfg.classes + c);
    for (int f = 0; f < cfg.feature_dim; ++f) in_comps.push_back(static_cast<long long>(source_node) * cfg.feature_dim + f);
    return jacobian_source_norm(tape, out.logits, out_comps, x, in_comps);
}

}  // namespace rewirelab
