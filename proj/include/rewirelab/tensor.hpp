#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "rewirelab/rng.hpp"

// Reverse-mode automatic differentiation over dense float64 tensors.
//
// A Tape owns every node created during a forward pass; Tensor is a cheap
// handle (tape pointer + node id). Creation order is the topological order,
// so backward() is a single reverse sweep over recorded closures. Parameters
// persist outside the tape as raw buffers and are re-leafed each step.

namespace rewirelab::ad {

using Shape = std::vector<int>;

inline long long numel(const Shape& s) {
    long long n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        out += std::to_string(s[i]);
        if (i + 1 < s.size()) out += ",";
    }
    return out + ")";
}

class Tape;

class Tensor {
public:
    Tensor() : tape_(nullptr), id_(-1) {}
    Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}

    bool valid() const { return tape_ != nullptr; }
    int id() const { return id_; }
    Tape* tape() const { return tape_; }

    const Shape& shape() const;
    long long size() const { return numel(shape()); }
    bool requires_grad() const;
    const std::vector<double>& value() const;
    std::vector<double>& value_mut();
    const std::vector<double>& grad() const;
    double item() const;

private:
    Tape* tape_;
    int id_;
};

class Tape {
public:
    struct Node {
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad;  // sized on first use
        bool requires_grad = false;
        std::function<void()> backward;  // empty for leaves
        const char* op = "leaf";
    };

    int size() const { return static_cast<int>(nodes_.size()); }
    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

    Tensor leaf(Shape shape, std::vector<double> data, bool requires_grad) {
        if (numel(shape) != static_cast<long long>(data.size()))
            throw std::invalid_argument("leaf: shape " + shape_str(shape) + " does not match data length " +
                                        std::to_string(data.size()));
        Node n;
        n.shape = std::move(shape);
        n.value = std::move(data);
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return Tensor(this, size() - 1);
    }

    Tensor constant(Shape shape, std::vector<double> data) { return leaf(std::move(shape), std::move(data), false); }
    Tensor param(Shape shape, std::vector<double> data) { return leaf(std::move(shape), std::move(data), true); }

    Tensor scalar(double v) { return constant({1}, {v}); }

    Tensor fresh(Shape shape, bool requires_grad, const char* op) {
        Node n;
        n.shape = std::move(shape);
        n.value.assign(static_cast<std::size_t>(numel(n.shape)), 0.0);
        n.requires_grad = requires_grad;
        n.op = op;
        nodes_.push_back(std::move(n));
        return Tensor(this, size() - 1);
    }

    // During a backward sweep this returns the sweep-local buffer, so each
    // call to backward() contributes exactly one gradient pass; outside a
    // sweep it returns the persistent accumulated gradient.
    std::vector<double>& grad_buf(int id) {
        if (in_sweep_) {
            auto& s = sweep_[static_cast<std::size_t>(id)];
            if (s.size() != node(id).value.size()) s.assign(node(id).value.size(), 0.0);
            return s;
        }
        Node& n = node(id);
        if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
        return n.grad;
    }

    void zero_grad() {
        for (Node& n : nodes_)
            if (!n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), 0.0);
    }

    // Reverse sweep from a scalar loss. Gradients accumulate across calls
    // until zero_grad() is invoked.
    void backward(const Tensor& loss) {
        if (loss.tape() != this) throw std::invalid_argument("backward: loss lives on a different tape");
        const Node& ln = node(loss.id());
        if (numel(ln.shape) != 1) throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(ln.shape));
        if (nodes_.empty()) throw std::logic_error("backward: empty tape");
        sweep_.assign(nodes_.size(), {});
        in_sweep_ = true;
        grad_buf(loss.id())[0] = 1.0;
        for (int i = loss.id(); i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.backward && !sweep_[static_cast<std::size_t>(i)].empty()) n.backward();
        }
        in_sweep_ = false;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (sweep_[i].empty()) continue;
            auto& g = grad_buf(static_cast<int>(i));
            for (std::size_t j = 0; j < g.size(); ++j) g[j] += sweep_[i][j];
        }
        sweep_.clear();
    }

private:
    std::vector<Node> nodes_;
    std::vector<std::vector<double>> sweep_;
    bool in_sweep_ = false;
};

inline const Shape& Tensor::shape() const { return tape_->node(id_).shape; }
inline bool Tensor::requires_grad() const { return tape_->node(id_).requires_grad; }
inline const std::vector<double>& Tensor::value() const { return tape_->node(id_).value; }
inline std::vector<double>& Tensor::value_mut() { return tape_->node(id_).value; }
inline const std::vector<double>& Tensor::grad() const { return tape_->grad_buf(id_); }
inline double Tensor::item() const {
    if (size() != 1) throw std::logic_error("item: tensor is not scalar");
    return value()[0];
}

namespace detail {

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

inline Tensor binary_elemwise(const char* op, const Tensor& a, const Tensor& b,
                              double (*f)(double, double),
                              void (*df)(double, double, double, double&, double&)) {
    require_same_shape(op, a, b);
    Tape& t = *a.tape();
    Tensor out = t.fresh(a.shape(), a.requires_grad() || b.requires_grad(), op);
    const auto& av = a.value();
    const auto& bv = b.value();
    auto& ov = out.value_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = f(av[i], bv[i]);
    if (out.requires_grad()) {
        int aid = a.id(), bid = b.id(), oid = out.id();
        bool ga = a.requires_grad(), gb = b.requires_grad();
        t.node(oid).backward = [&t, aid, bid, oid, ga, gb, df]() {
            const auto& g = t.grad_buf(oid);
            const auto& av2 = t.node(aid).value;
            const auto& bv2 = t.node(bid).value;
            auto* gra = ga ? &t.grad_buf(aid) : nullptr;
            auto* grb = gb ? &t.grad_buf(bid) : nullptr;
            for (std::size_t i = 0; i < g.size(); ++i) {
                double da = 0, db = 0;
                df(av2[i], bv2[i], g[i], da, db);
                if (gra) (*gra)[i] += da;
                if (grb) (*grb)[i] += db;
            }
        };
    }
    return out;
}

inline Tensor unary_elemwise(const char* op, const Tensor& a, double (*f)(double),
                             double (*dfdx)(double, double) /* (x, y) -> dy/dx */) {
    Tape& t = *a.tape();
    Tensor out = t.fresh(a.shape(), a.requires_grad(), op);
    const auto& av = a.value();
    auto& ov = out.value_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = f(av[i]);
    if (out.requires_grad()) {
        int aid = a.id(), oid = out.id();
        t.node(oid).backward = [&t, aid, oid, dfdx]() {
            const auto& g = t.grad_buf(oid);
            const auto& av2 = t.node(aid).value;
            const auto& ov2 = t.node(oid).value;
            auto& gra = t.grad_buf(aid);
            for (std::size_t i = 0; i < g.size(); ++i) gra[i] += g[i] * dfdx(av2[i], ov2[i]);
        };
    }
    return out;
}

}  // namespace detail

// ---- elementwise arithmetic ----

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_elemwise(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double, double g, double& da, double& db) { da = g; db = g; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_elemwise(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double, double g, double& da, double& db) { da = g; db = -g; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary_elemwise(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double g, double& da, double& db) { da = g * y; db = g * x; });
}

inline Tensor squared_error(const Tensor& pred, const Tensor& target) {
    return detail::binary_elemwise(
        "squared_error", pred, target, [](double p, double y) { return (p - y) * (p - y); },
        [](double p, double y, double g, double& dp, double& dy) {
            dp = g * 2.0 * (p - y);
            dy = -g * 2.0 * (p - y);
        });
}

inline Tensor scale(const Tensor& a, double c) {
    Tape& t = *a.tape();
    Tensor out = t.fresh(a.shape(), a.requires_grad(), "scale");
    const auto& av = a.value();
    auto& ov = out.value_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = c * av[i];
    if (out.requires_grad()) {
        int aid = a.id(), oid = out.id();
        t.node(oid).backward = [&t, aid, oid, c]() {
            const auto& g = t.grad_buf(oid);
            auto& gra = t.grad_buf(aid);
            for (std::size_t i = 0; i < g.size(); ++i) gra[i] += c * g[i];
        };
    }
    return out;
}

inline Tensor relu(const Tensor& a) {
    return detail::unary_elemwise(
        "relu", a, [](double x) { return x > 0 ? x : 0.0; },
        [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

inline Tensor sigmoid(const Tensor& a) {
    return detail::unary_elemwise(
        "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); });
}

// Exact (erf-based) GELU.
inline Tensor gelu(const Tensor& a) {
    return detail::unary_elemwise(
        "gelu", a,
        [](double x) { return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244)); },
        [](double x, double) {
            double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
            double pdf = std::exp(-0.5 * x * x) * 0.3989422804014326779;
            return cdf + x * pdf;
        });
}

inline Tensor abs_val(const Tensor& a) {
    return detail::unary_elemwise(
        "abs", a, [](double x) { return std::fabs(x); },
        [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

inline Tensor rsqrt(const Tensor& a) {
    return detail::unary_elemwise(
        "rsqrt", a, [](double x) { return 1.0 / std::sqrt(x); },
        [](double x, double y) { return -0.5 * y / x; });
}

// 1/x with the convention 0 -> 0 (used to normalize rows that may be empty;
// an empty row stays empty and receives no gradient).
inline Tensor safe_recip(const Tensor& a) {
    return detail::unary_elemwise(
        "safe_recip", a, [](double x) { return x == 0.0 ? 0.0 : 1.0 / x; },
        [](double x, double y) { return x == 0.0 ? 0.0 : -y * y; });
}

// ---- broadcast against row/column vectors ----

inline Tensor add_rowvec(const Tensor& x, const Tensor& v) {
    if (x.shape().size() != 2 || v.shape().size() != 1 || x.shape()[1] != v.shape()[0])
        throw std::invalid_argument("add_rowvec: shapes " + shape_str(x.shape()) + " vs " + shape_str(v.shape()));
    Tape& t = *x.tape();
    int m = x.shape()[0], n = x.shape()[1];
    Tensor out = t.fresh(x.shape(), x.requires_grad() || v.requires_grad(), "add_rowvec");
    const auto& xv = x.value();
    const auto& vv = v.value();
    auto& ov = out.value_mut();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) ov[static_cast<std::size_t>(i) * n + j] = xv[static_cast<std::size_t>(i) * n + j] + vv[static_cast<std::size_t>(j)];
    if (out.requires_grad()) {
        int xid = x.id(), vid = v.id(), oid = out.id();
        bool gx = x.requires_grad(), gv = v.requires_grad();
        t.node(oid).backward = [&t, xid, vid, oid, gx, gv, m, n]() {
            const auto& g = t.grad_buf(oid);
            if (gx) {
                auto& grx = t.grad_buf(xid);
                for (std::size_t i = 0; i < g.size(); ++i) grx[i] += g[i];
            }
            if (gv) {
                auto& grv = t.grad_buf(vid);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) grv[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(i) * n + j];
            }
        };
    }
    return out;
}

// out[i,j] = x[i,j] * v[i]
inline Tensor scale_rows(const Tensor& x, const Tensor& v) {
    if (x.shape().size() != 2 || v.shape().size() != 1 || x.shape()[0] != v.shape()[0])
        throw std::invalid_argument("scale_rows: shapes " + shape_str(x.shape()) + " vs " + shape_str(v.shape()));
    Tape& t = *x.tape();
    int m = x.shape()[0], n = x.shape()[1];
    Tensor out = t.fresh(x.shape(), x.requires_grad() || v.requires_grad(), "scale_rows");
    const auto& xv = x.value();
    const auto& vv = v.value();
    auto& ov = out.value_mut();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) ov[static_cast<std::size_t>(i) * n + j] = xv[static_cast<std::size_t>(i) * n + j] * vv[static_cast<std::size_t>(i)];
    if (out.requires_grad()) {
        int xid = x.id(), vid = v.id(), oid = out.id();
        bool gx = x.requires_grad(), gv = v.requires_grad();
        t.node(oid).backward = [&t, xid, vid, oid, gx, gv, m, n]() {
            const auto& g = t.grad_buf(oid);
            const auto& xv2 = t.node(xid).value;
            const auto& vv2 = t.node(vid).value;
            if (gx) {
                auto& grx = t.grad_buf(xid);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) grx[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(i) * n + j] * vv2[static_cast<std::size_t>(i)];
            }
            if (gv) {
                auto& grv = t.grad_buf(vid);
                for (int i = 0; i < m; ++i) {
                    double acc = 0;
                    for (int j = 0; j < n; ++j) acc += g[static_cast<std::size_t>(i) * n + j] * xv2[static_cast<std::size_t>(i) * n + j];
                    grv[static_cast<std::size_t>(i)] += acc;
                }
            }
        };
    }
    return out;
}

// out[i,j] = x[i,j] * v[j]
inline Tensor scale_cols(const Tensor& x, const Tensor& v) {
    if (x.shape().size() != 2 || v.shape().size() != 1 || x.shape()[1] != v.shape()[0])
        throw std::invalid_argument("scale_cols: shapes " + shape_str(x.shape()) + " vs " + shape_str(v.shape()));
    Tape& t = *x.tape();
    int m = x.shape()[0], n = x.shape()[1];
    Tensor out = t.fresh(x.shape(), x.requires_grad() || v.requires_grad(), "scale_cols");
    const auto& xv = x.value();
    const auto& vv = v.value();
    auto& ov = out.value_mut();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) ov[static_cast<std::size_t>(i) * n + j] = xv[static_cast<std::size_t>(i) * n + j] * vv[static_cast<std::size_t>(j)];
    if (out.requires_grad()) {
        int xid = x.id(), vid = v.id(), oid = out.id();
        bool gx = x.requires_grad(), gv = v.requires_grad();
        t.node(oid).backward = [&t, xid, vid, oid, gx, gv, m, n]() {
            const auto& g = t.grad_buf(oid);
            const auto& xv2 = t.node(xid).value;
            const auto& vv2 = t.node(vid).value;
            if (gx) {
                auto& grx = t.grad_buf(xid);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) grx[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(i) * n + j] * vv2[static_cast<std::size_t>(j)];
            }
            if (gv) {
                auto& grv = t.grad_buf(vid);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) grv[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(i) * n + j] * xv2[static_cast<std::size_t>(i) * n + j];
            }
        };
    }
    return out;
}

// ---- linear algebra / structural ops ----

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    Tape& t = *a.tape();
    int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    Tensor out = t.fresh({m, n}, a.requires_grad() || b.requires_grad(), "matmul");
    const auto& av = a.value();
    const auto& bv = b.value();
    auto& ov = out.value_mut();
    for (int i = 0; i < m; ++i) {
        double* orow = &ov[static_cast<std::size_t>(i) * n];
        for (int p = 0; p < k; ++p) {
            double aip = av[static_cast<std::size_t>(i) * k + p];
            if (aip == 0.0) continue;
            const double* brow = &bv[static_cast<std::size_t>(p) * n];
            for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    if (out.requires_grad()) {
        int aid = a.id(), bid = b.id(), oid = out.id();
        bool ga = a.requires_grad(), gb = b.requires_grad();
        t.node(oid).backward = [&t, aid, bid, oid, ga, gb, m, k, n]() {
            const auto& g = t.grad_buf(oid);
            const auto& av2 = t.node(aid).value;
            const auto& bv2 = t.node(bid).value;
            if (ga) {  // dA = G B^T
                auto& gra = t.grad_buf(aid);
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        double acc = 0;
                        const double* grow = &g[static_cast<std::size_t>(i) * n];
                        const double* brow = &bv2[static_cast<std::size_t>(p) * n];
                        for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        gra[static_cast<std::size_t>(i) * k + p] += acc;
                    }
            }
            if (gb) {  // dB = A^T G
                auto& grb = t.grad_buf(bid);
                for (int p = 0; p < k; ++p)
                    for (int i = 0; i < m; ++i) {
                        double apk = av2[static_cast<std::size_t>(i) * k + p];
                        if (apk == 0.0) continue;
                        const double* grow = &g[static_cast<std::size_t>(i) * n];
                        double* brow = &grb[static_cast<std::size_t>(p) * n];
                        for (int j = 0; j < n; ++j) brow[j] += apk * grow[j];
                    }
            }
        };
    }
    return out;
}

inline Tensor transpose(const Tensor& a) {
    if (a.shape().size() != 2) throw std::invalid_argument("transpose: need rank-2, got " + shape_str(a.shape()));
    Tape& t = *a.tape();
    int m = a.shape()[0], n = a.shape()[1];
    Tensor out = t.fresh({n, m}, a.requires_grad(), "transpose");
    const auto& av = a.value();
    auto& ov = out.value_mut();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) ov[static_cast<std::size_t>(j) * m + i] = av[static_cast<std::size_t>(i) * n + j];
    if (out.requires_grad()) {
        int aid = a.id(), oid = out.id();
        t.node(oid).backward = [&t, aid, oid, m, n]() {
            const auto& g = t.grad_buf(oid);
            auto& gra = t.grad_buf(aid);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) gra[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j) * m + i];
        };
    }
    return out;
}

namespace detail {
inline std::vector<long long> strides_of(const Shape& s) {
    std::vector<long long> st(s.size());
    long long acc = 1;
    for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
        st[static_cast<std::size_t>(i)] = acc;
        acc *= s[static_cast<std::size_t>(i)];
    }
    return st;
}
}  // namespace detail

// General axis permutation (rank <= 4 in practice).
inline Tensor permute(const Tensor& a, const std::vector<int>& perm) {
    const Shape s = a.shape();  // by value: fresh() below may reallocate the tape
    if (perm.size() != s.size()) throw std::invalid_argument("permute: axes count mismatch for " + shape_str(s));
    Shape os(s.size());
    for (std::size_t i = 0; i < perm.size(); ++i) os[i] = s[static_cast<std::size_t>(perm[i])];
    Tape& t = *a.tape();
    Tensor out = t.fresh(os, a.requires_grad(), "permute");
    auto in_strides = detail::strides_of(s);
    auto out_strides = detail::strides_of(os);
    long long total = numel(s);
    const auto& av = a.value();
    auto& ov = out.value_mut();
    std::vector<int> idx(s.size(), 0);
    for (long long flat = 0; flat < total; ++flat) {
        long long rem = flat;
        long long src = 0;
        for (std::size_t d = 0; d < os.size(); ++d) {
            long long q = rem / out_strides[d];
            rem -= q * out_strides[d];
            src += q * in_strides[static_cast<std::size_t>(perm[d])];
        }
        ov[static_cast<std::size_t>(flat)] = av[static_cast<std::size_t>(src)];
    }
    if (out.requires_grad()) {
        int aid = a.id(), oid = out.id();
        t.node(oid).backward = [&t, aid, oid, in_strides, out_strides, perm, total]() {
            const auto& g = t.grad_buf(oid);
            auto& gra = t.grad_buf(aid);
            for (long long flat = 0; flat < total; ++flat) {
                long long rem = flat;
                long long src = 0;
                for (std::size_t d = 0; d < out_strides.size(); ++d) {
                    long long q = rem / out_strides[d];
                    rem -= q * out_strides[d];
                    src += q * in_strides[static_cast<std::size_t>(perm[d])];
                }
                gra[static_cast<std::size_t>(src)] += g[static_cast<std::size_t>(flat)];
            }
        };
    }
    return out;
}

inline Tensor reshape(const Tensor& a, Shape ns) {
    if (numel(ns) != a.size())
        throw std::invalid_argument("reshape: cannot reshape " + shape_str(a.shape()) + " to " + shape_str(ns));
    Tape& t = *a.tape();
    Tensor out = t.fresh(std::move(ns), a.requires_grad(), "reshape");
    out.value_mut() = a.value();
    if (out.requires_grad()) {
        int aid = a.id(), oid = out.id();
        t.node(oid).backward = [&t, aid, oid]() {
            const auto& g = t.grad_buf(oid);
            auto& gra = t.grad_buf(aid);
            for (std::size_t i = 0; i < g.size(); ++i) gra[i] += g[i];
        };
    }
    return out;
}

// Concatenate along an axis.
inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: empty input list");
    const Shape s0 = parts[0].shape();  // by value: fresh() below may reallocate the tape
    if (axis < 0 || axis >= static_cast<int>(s0.size())) throw std::invalid_argument("concat: bad axis");
    Shape os = s0;
    bool rg = false;
    for (const Tensor& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != s0.size()) throw std::invalid_argument("concat: rank mismatch");
        for (std::size_t d = 0; d < s.size(); ++d)
            if (static_cast<int>(d) != axis && s[d] != s0[d])
                throw std::invalid_argument("concat: shape mismatch " + shape_str(s) + " vs " + shape_str(s0));
        rg = rg || p.requires_grad();
    }
    os[static_cast<std::size_t>(axis)] = 0;
    for (const Tensor& p : parts) os[static_cast<std::size_t>(axis)] += p.shape()[static_cast<std::size_t>(axis)];

    Tape& t = *parts[0].tape();
    Tensor out = t.fresh(os, rg, "concat");
    long long outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s0[static_cast<std::size_t>(d)];
    for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < s0.size(); ++d) inner *= s0[d];
    long long out_ax = os[static_cast<std::size_t>(axis)];
    auto& ov = out.value_mut();
    long long offset = 0;
    std::vector<std::pair<int, long long>> layout;  // (node id, axis length)
    for (const Tensor& p : parts) {
        long long ax = p.shape()[static_cast<std::size_t>(axis)];
        const auto& pv = p.value();
        for (long long o = 0; o < outer; ++o)
            for (long long a2 = 0; a2 < ax; ++a2)
                for (long long i = 0; i < inner; ++i)
                    ov[static_cast<std::size_t>((o * out_ax + offset + a2) * inner + i)] =
                        pv[static_cast<std::size_t>((o * ax + a2) * inner + i)];
        layout.emplace_back(p.id(), ax);
        offset += ax;
    }
    if (rg) {
        int oid = out.id();
        t.node(oid).backward = [&t, oid, layout, outer, inner, out_ax]() {
            const auto& g = t.grad_buf(oid);
            long long offset2 = 0;
            for (auto [pid, ax] : layout) {
                if (t.node(pid).requires_grad) {
                    auto& gp = t.grad_buf(pid);
                    for (long long o = 0; o < outer; ++o)
                        for (long long a2 = 0; a2 < ax; ++a2)
                            for (long long i = 0; i < inner; ++i)
                                gp[static_cast<std::size_t>((o * ax + a2) * inner + i)] +=
                                    g[static_cast<std::size_t>((o * out_ax + offset2 + a2) * inner + i)];
                }
                offset2 += ax;
            }
        };
    }
    return out;
}

// Last slice along the final axis of a rank-3 tensor: (B, C, T) -> (B, C).
inline Tensor last_step(const Tensor& a) {
    if (a.shape().size() != 3) throw std::invalid_argument("last_step: need rank-3, got " + shape_str(a.shape()));
    Tape& t = *a.tape();
    int B = a.shape()[0], C = a.shape()[1], T = a.shape()[2];
    Tensor out = t.fresh({B, C}, a.requires_grad(), "last_step");
    const auto& av = a.value();
    auto& ov = out.value_mut();
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) ov[static_cast<std::size_t>(b) * C + c] = av[(static_cast<std::size_t>(b) * C + c) * T + (T - 1)];
    if (out.requires_grad()) {
        int aid = a.id(), oid = out.id();
        t.node(oid).backward = [&t, aid, oid, B, C, T]() {
            const auto& g = t.grad_buf(oid);
            auto& gra = t.grad_buf(aid);
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c)
                    gra[(static_cast<std::size_t>(b) * C + c) * T + (T - 1)] += g[static_cast<std::size_t>(b) * C + c];
        };
    }
    return out;
}

// ---- reductions ----

inline Tensor reduce_sum(const Tensor& a) {
    Tape& t = *a.tape();
    Tensor out = t.fresh({1}, a.requires_grad(), "reduce_sum");
    const auto& av = a.value();
    double acc = 0;
    for (double v : av) acc += v;
    out.value_mut()[0] = acc;
    if (out.requires_grad()) {
        int aid = a.id(), oid = out.id();
        t.node(oid).backward = [&t, aid, oid]() {
            double g = t.grad_buf(oid)[0];
            auto& gra = t.grad_buf(aid);
            for (std::size_t i = 0; i < gra.size(); ++i) gra[i] += g;
        };
    }
    return out;
}

inline Tensor reduce_mean(const Tensor& a) {
    Tensor s = reduce_sum(a);
    return scale(s, 1.0 / static_cast<double>(a.size()));
}

// Row sums of a rank-2 tensor: (m, n) -> (m).
inline Tensor rowsum(const Tensor& a) {
    if (a.shape().size() != 2) throw std::invalid_argument("rowsum: need rank-2, got " + shape_str(a.shape()));
    Tape& t = *a.tape();
    int m = a.shape()[0], n = a.shape()[1];
    Tensor out = t.fresh({m}, a.requires_grad(), "rowsum");
    const auto& av = a.value();
    auto& ov = out.value_mut();
    for (int i = 0; i < m; ++i) {
        double acc = 0;
        for (int j = 0; j < n; ++j) acc += av[static_cast<std::size_t>(i) * n + j];
        ov[static_cast<std::size_t>(i)] = acc;
    }
    if (out.requires_grad()) {
        int aid = a.id(), oid = out.id();
        t.node(oid).backward = [&t, aid, oid, m, n]() {
            const auto& g = t.grad_buf(oid);
            auto& gra = t.grad_buf(aid);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) gra[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(i)];
        };
    }
    return out;
}

// Single entry by flat index: tensor -> scalar.
inline Tensor pick(const Tensor& a, long long flat_index) {
    if (flat_index < 0 || flat_index >= a.size())
        throw std::out_of_range("pick: index " + std::to_string(flat_index) + " out of range for " + shape_str(a.shape()));
    Tape& t = *a.tape();
    Tensor out = t.fresh({1}, a.requires_grad(), "pick");
    out.value_mut()[0] = a.value()[static_cast<std::size_t>(flat_index)];
    if (out.requires_grad()) {
        int aid = a.id(), oid = out.id();
        t.node(oid).backward = [&t, aid, oid, flat_index]() {
            t.grad_buf(aid)[static_cast<std::size_t>(flat_index)] += t.grad_buf(oid)[0];
        };
    }
    return out;
}

// ---- softmax family ----

// Row-wise softmax of W restricted to the support given by a 0/1 mask;
// entries outside the support are exactly zero and rows with empty support
// stay all-zero. mask must be a constant.
inline Tensor masked_row_softmax(const Tensor& w, const Tensor& mask) {
    detail::require_same_shape("masked_row_softmax", w, mask);
    if (w.shape().size() != 2) throw std::invalid_argument("masked_row_softmax: need rank-2, got " + shape_str(w.shape()));
    if (mask.requires_grad()) throw std::invalid_argument("masked_row_softmax: mask must be constant");
    Tape& t = *w.tape();
    int m = w.shape()[0], n = w.shape()[1];
    Tensor out = t.fresh(w.shape(), w.requires_grad(), "masked_row_softmax");
    const auto& wv = w.value();
    const auto& mv = mask.value();
    auto& ov = out.value_mut();
    for (int i = 0; i < m; ++i) {
        double mx = -1e300;
        bool any = false;
        for (int j = 0; j < n; ++j)
            if (mv[static_cast<std::size_t>(i) * n + j] != 0.0) {
                any = true;
                mx = std::max(mx, wv[static_cast<std::size_t>(i) * n + j]);
            }
        if (!any) continue;
        double denom = 0;
        for (int j = 0; j < n; ++j)
            if (mv[static_cast<std::size_t>(i) * n + j] != 0.0) denom += std::exp(wv[static_cast<std::size_t>(i) * n + j] - mx);
        for (int j = 0; j < n; ++j)
            if (mv[static_cast<std::size_t>(i) * n + j] != 0.0)
                ov[static_cast<std::size_t>(i) * n + j] = std::exp(wv[static_cast<std::size_t>(i) * n + j] - mx) / denom;
    }
    if (out.requires_grad()) {
        int wid = w.id(), oid = out.id(), mid = mask.id();
        t.node(oid).backward = [&t, wid, oid, mid, m, n]() {
            const auto& g = t.grad_buf(oid);
            const auto& ov2 = t.node(oid).value;
            const auto& mv2 = t.node(mid).value;
            auto& grw = t.grad_buf(wid);
            for (int i = 0; i < m; ++i) {
                double dot = 0;
                for (int j = 0; j < n; ++j) dot += g[static_cast<std::size_t>(i) * n + j] * ov2[static_cast<std::size_t>(i) * n + j];
                for (int j = 0; j < n; ++j)
                    if (mv2[static_cast<std::size_t>(i) * n + j] != 0.0)
                        grw[static_cast<std::size_t>(i) * n + j] +=
                            ov2[static_cast<std::size_t>(i) * n + j] * (g[static_cast<std::size_t>(i) * n + j] - dot);
            }
        };
    }
    return out;
}

inline Tensor row_softmax(const Tensor& w) {
    Tape& t = *w.tape();
    Tensor ones = t.constant(w.shape(), std::vector<double>(static_cast<std::size_t>(w.size()), 1.0));
    return masked_row_softmax(w, ones);
}

// Mean cross-entropy with logits over (optionally masked) rows.
// logits: (n, k); labels: integer class per row; row_mask: 0/1 per row.
inline Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& labels,
                                   const std::vector<std::uint8_t>& row_mask = {}) {
    if (logits.shape().size() != 2) throw std::invalid_argument("cross_entropy_logits: need rank-2 logits");
    int n = logits.shape()[0], k = logits.shape()[1];
    if (static_cast<int>(labels.size()) != n) throw std::invalid_argument("cross_entropy_logits: labels length mismatch");
    if (!row_mask.empty() && static_cast<int>(row_mask.size()) != n)
        throw std::invalid_argument("cross_entropy_logits: mask length mismatch");
    long long active = 0;
    for (int i = 0; i < n; ++i)
        if (row_mask.empty() || row_mask[static_cast<std::size_t>(i)]) ++active;
    if (active == 0) throw std::invalid_argument("cross_entropy_logits: empty row mask");
    for (int i = 0; i < n; ++i) {
        if (row_mask.empty() || row_mask[static_cast<std::size_t>(i)]) {
            if (labels[static_cast<std::size_t>(i)] < 0 || labels[static_cast<std::size_t>(i)] >= k)
                throw std::out_of_range("cross_entropy_logits: label out of range at row " + std::to_string(i));
        }
    }
    Tape& t = *logits.tape();
    Tensor out = t.fresh({1}, logits.requires_grad(), "cross_entropy_logits");
    const auto& zv = logits.value();
    double loss = 0;
    for (int i = 0; i < n; ++i) {
        if (!row_mask.empty() && !row_mask[static_cast<std::size_t>(i)]) continue;
        const double* row = &zv[static_cast<std::size_t>(i) * k];
        double mx = row[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double denom = 0;
        for (int j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
        loss += std::log(denom) + mx - row[labels[static_cast<std::size_t>(i)]];
    }
    out.value_mut()[0] = loss / static_cast<double>(active);
    if (out.requires_grad()) {
        int zid = logits.id(), oid = out.id();
        t.node(oid).backward = [&t, zid, oid, labels, row_mask, n, k, active]() {
            double g = t.grad_buf(oid)[0] / static_cast<double>(active);
            const auto& zv2 = t.node(zid).value;
            auto& grz = t.grad_buf(zid);
            for (int i = 0; i < n; ++i) {
                if (!row_mask.empty() && !row_mask[static_cast<std::size_t>(i)]) continue;
                const double* row = &zv2[static_cast<std::size_t>(i) * k];
                double mx = row[0];
                for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
                double denom = 0;
                for (int j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
                for (int j = 0; j < k; ++j) {
                    double p = std::exp(row[j] - mx) / denom;
                    grz[static_cast<std::size_t>(i) * k + j] +=
                        g * (p - (j == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0));
                }
            }
        };
    }
    return out;
}

// Inverted-dropout with an explicit per-call seed; rate 0 is the identity.
inline Tensor dropout(const Tensor& a, double rate, std::uint64_t seed) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must lie in [0,1)");
    Tape& t = *a.tape();
    if (rate == 0.0) return scale(a, 1.0);
    Rng rng(seed);
    auto mask = std::make_shared<std::vector<double>>(static_cast<std::size_t>(a.size()));
    double keep = 1.0 - rate;
    for (auto& mval : *mask) mval = (rng.uniform() < keep) ? 1.0 / keep : 0.0;
    Tensor out = t.fresh(a.shape(), a.requires_grad(), "dropout");
    const auto& av = a.value();
    auto& ov = out.value_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * (*mask)[i];
    if (out.requires_grad()) {
        int aid = a.id(), oid = out.id();
        t.node(oid).backward = [&t, aid, oid, mask]() {
            const auto& g = t.grad_buf(oid);
            auto& gra = t.grad_buf(aid);
            for (std::size_t i = 0; i < g.size(); ++i) gra[i] += g[i] * (*mask)[i];
        };
    }
    return out;
}

// 1-D temporal convolution with dilation ("valid" alignment, no padding).
// x: (B, C_in, T); w: (C_out, C_in, k); bias: (C_out) or invalid tensor.
inline Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int dilation) {
    if (x.shape().size() != 3 || w.shape().size() != 3)
        throw std::invalid_argument("conv1d: x must be rank-3 and w rank-3, got " + shape_str(x.shape()) + " and " +
                                    shape_str(w.shape()));
    if (dilation < 1) throw std::invalid_argument("conv1d: dilation must be >= 1");
    int B = x.shape()[0], Cin = x.shape()[1], T = x.shape()[2];
    int Cout = w.shape()[0], k = w.shape()[2];
    if (w.shape()[1] != Cin)
        throw std::invalid_argument("conv1d: channel mismatch " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
    int span = (k - 1) * dilation + 1;
    int Tout = T - span + 1;
    if (Tout < 1)
        throw std::invalid_argument("conv1d: input length " + std::to_string(T) +
                                    " shorter than receptive field " + std::to_string(span));
    bool has_bias = bias.valid();
    if (has_bias && (bias.shape().size() != 1 || bias.shape()[0] != Cout))
        throw std::invalid_argument("conv1d: bias shape " + shape_str(bias.shape()) + " vs C_out " + std::to_string(Cout));

    Tape& t = *x.tape();
    bool rg = x.requires_grad() || w.requires_grad() || (has_bias && bias.requires_grad());
    Tensor out = t.fresh({B, Cout, Tout}, rg, "conv1d");
    const auto& xv = x.value();
    const auto& wv = w.value();
    auto& ov = out.value_mut();
    for (int b = 0; b < B; ++b)
        for (int o = 0; o < Cout; ++o)
            for (int tt = 0; tt < Tout; ++tt) {
                double acc = has_bias ? bias.value()[static_cast<std::size_t>(o)] : 0.0;
                for (int c = 0; c < Cin; ++c)
                    for (int kk = 0; kk < k; ++kk)
                        acc += xv[(static_cast<std::size_t>(b) * Cin + c) * T + tt + kk * dilation] *
                               wv[(static_cast<std::size_t>(o) * Cin + c) * k + kk];
                ov[(static_cast<std::size_t>(b) * Cout + o) * Tout + tt] = acc;
            }
    if (rg) {
        int xid = x.id(), wid = w.id(), oid = out.id();
        int bid = has_bias ? bias.id() : -1;
        bool gx = x.requires_grad(), gw = w.requires_grad(), gb = has_bias && bias.requires_grad();
        t.node(oid).backward = [&t, xid, wid, bid, oid, gx, gw, gb, B, Cin, Cout, T, Tout, k, dilation]() {
            const auto& g = t.grad_buf(oid);
            const auto& xv2 = t.node(xid).value;
            const auto& wv2 = t.node(wid).value;
            for (int b = 0; b < B; ++b)
                for (int o = 0; o < Cout; ++o)
                    for (int tt = 0; tt < Tout; ++tt) {
                        double go = g[(static_cast<std::size_t>(b) * Cout + o) * Tout + tt];
                        if (go == 0.0) continue;
                        if (gb) t.grad_buf(bid)[static_cast<std::size_t>(o)] += go;
                        for (int c = 0; c < Cin; ++c)
                            for (int kk = 0; kk < k; ++kk) {
                                std::size_t xi = (static_cast<std::size_t>(b) * Cin + c) * T + tt + kk * dilation;
                                std::size_t wi = (static_cast<std::size_t>(o) * Cin + c) * k + kk;
                                if (gx) t.grad_buf(xid)[xi] += go * wv2[wi];
                                if (gw) t.grad_buf(wid)[wi] += go * xv2[xi];
                            }
                    }
        };
    }
    return out;
}

inline Tensor conv1d(const Tensor& x, const Tensor& w, int dilation) { return conv1d(x, w, Tensor(), dilation); }

}  // namespace rewirelab::ad
