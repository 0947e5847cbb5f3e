#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rewirelab/graph.hpp"

namespace rewirelab {

// Dense symmetric matrix, row-major.
struct SymMatrix {
    int n = 0;
    std::vector<double> a;

    double& at(int i, int j) { return a[static_cast<std::size_t>(i) * n + j]; }
    double at(int i, int j) const { return a[static_cast<std::size_t>(i) * n + j]; }

    static SymMatrix zero(int n) { return SymMatrix{n, std::vector<double>(static_cast<std::size_t>(n) * n, 0.0)}; }

    static SymMatrix identity(int n) {
        SymMatrix m = zero(n);
        for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }

    double fro_norm() const {
        double s = 0;
        for (double v : a) s += v * v;
        return std::sqrt(s);
    }

    double max_asymmetry() const {
        double m = 0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) m = std::max(m, std::fabs(at(i, j) - at(j, i)));
        return m;
    }
};

inline SymMatrix matmul_dense(const SymMatrix& x, const SymMatrix& y) {
    SymMatrix out = SymMatrix::zero(x.n);
    for (int i = 0; i < x.n; ++i)
        for (int k = 0; k < x.n; ++k) {
            double v = x.at(i, k);
            if (v == 0.0) continue;
            for (int j = 0; j < x.n; ++j) out.at(i, j) += v * y.at(k, j);
        }
    return out;
}

struct EigenResult {
    std::vector<double> values;          // ascending
    std::vector<double> vectors;         // column k = eigenvector of values[k]; row-major n*n
    bool has_vectors = false;

    double vec(int row, int k, int n) const { return vectors[static_cast<std::size_t>(row) * n + k]; }
};

// Full spectrum of a symmetric matrix by cyclic Jacobi rotations.
// Convergence: off(M) < 1e-12 * ||M||_F, at most 100 sweeps.
inline EigenResult eigen_sym(SymMatrix m, bool want_vectors = false) {
    if (m.max_asymmetry() > 1e-9)
        throw std::invalid_argument("eigen_sym: matrix asymmetric beyond 1e-9 (max " + std::to_string(m.max_asymmetry()) + ")");
    int n = m.n;
    // symmetrize the sub-1e-9 noise so rotations stay exact
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double v = 0.5 * (m.at(i, j) + m.at(j, i));
            m.at(i, j) = v;
            m.at(j, i) = v;
        }
    SymMatrix q = SymMatrix::identity(n);
    double fro = m.fro_norm();
    double tol = 1e-12 * (fro > 0 ? fro : 1.0);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += 2.0 * m.at(i, j) * m.at(i, j);
        if (std::sqrt(off) < tol) break;
        for (int p = 0; p < n - 1; ++p)
            for (int qi = p + 1; qi < n; ++qi) {
                double apq = m.at(p, qi);
                if (std::fabs(apq) < 1e-300) continue;
                double app = m.at(p, p), aqq = m.at(qi, qi);
                double theta = (aqq - app) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < n; ++k) {
                    double mkp = m.at(k, p), mkq = m.at(k, qi);
                    m.at(k, p) = c * mkp - s * mkq;
                    m.at(k, qi) = s * mkp + c * mkq;
                }
                for (int k = 0; k < n; ++k) {
                    double mpk = m.at(p, k), mqk = m.at(qi, k);
                    m.at(p, k) = c * mpk - s * mqk;
                    m.at(qi, k) = s * mpk + c * mqk;
                }
                for (int k = 0; k < n; ++k) {
                    double qkp = q.at(k, p), qkq = q.at(k, qi);
                    q.at(k, p) = c * qkp - s * qkq;
                    q.at(k, qi) = s * qkp + c * qkq;
                }
            }
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&m](int a, int b) { return m.at(a, a) < m.at(b, b); });
    EigenResult res;
    for (int i : order) res.values.push_back(m.at(i, i));
    if (want_vectors) {
        res.has_vectors = true;
        res.vectors.assign(static_cast<std::size_t>(n) * n, 0.0);
        for (int k = 0; k < n; ++k)
            for (int r = 0; r < n; ++r)
                res.vectors[static_cast<std::size_t>(r) * n + k] = q.at(r, order[static_cast<std::size_t>(k)]);
    }
    return res;
}

// ---- normalized Laplacian ----

struct LaplacianResult {
    SymMatrix matrix;             // I - D^{-1/2} A D^{-1/2} on retained nodes
    std::vector<int> nodes;       // retained node ids, ascending
    int dropped_zero_degree = 0;  // zero-degree nodes removed before normalization
};

inline LaplacianResult normalized_laplacian(const Graph& g, bool lcc_only) {
    std::vector<double> deg = g.degrees();
    std::vector<int> keep;
    if (lcc_only) {
        ComponentReport rep = connected_components(g);
        if (rep.lcc_nodes.size() < 2)
            throw std::invalid_argument("normalized_laplacian: LCC has fewer than 2 nodes");
        keep = rep.lcc_nodes;
    } else {
        for (int i = 0; i < g.n; ++i)
            if (deg[static_cast<std::size_t>(i)] > 0) keep.push_back(i);
        if (keep.empty()) throw std::invalid_argument("normalized_laplacian: graph has no edges");
    }
    LaplacianResult out;
    out.nodes = keep;
    out.dropped_zero_degree = g.n - static_cast<int>(keep.size());
    int m = static_cast<int>(keep.size());
    std::vector<int> pos(static_cast<std::size_t>(g.n), -1);
    for (int i = 0; i < m; ++i) pos[static_cast<std::size_t>(keep[static_cast<std::size_t>(i)])] = i;
    out.matrix = SymMatrix::identity(m);
    for (const Edge& e : g.edges) {
        int pi = pos[static_cast<std::size_t>(e.i)], pj = pos[static_cast<std::size_t>(e.j)];
        if (pi < 0 || pj < 0) continue;
        double v = e.w / std::sqrt(deg[static_cast<std::size_t>(e.i)] * deg[static_cast<std::size_t>(e.j)]);
        out.matrix.at(pi, pj) -= v;
        out.matrix.at(pj, pi) -= v;
    }
    return out;
}

// ---- spectral report ----

struct SpectrumReport {
    std::vector<double> eigenvalues;  // LCC spectrum, ascending
    int lcc_size = 0;
    double lambda2 = 0;
    double w_eps = std::numeric_limits<double>::quiet_NaN();  // NaN when undefined
    double eps = 0;
    double whole_graph_lambda2 = 0;
    int dropped_zero_degree = 0;
};

// W_eps: eps-trimmed spectral range lambda_ceil((1-eps)m) - lambda_(floor(eps m)+1)
// over the m ascending LCC eigenvalues (1-indexed).
inline double trimmed_spectral_range(const std::vector<double>& ascending, double eps) {
    long long m = static_cast<long long>(ascending.size());
    if (m < 3) return std::numeric_limits<double>::quiet_NaN();
    long long hi = static_cast<long long>(std::ceil((1.0 - eps) * static_cast<double>(m)));
    long long lo = static_cast<long long>(std::floor(eps * static_cast<double>(m))) + 1;
    hi = std::max(1LL, std::min(hi, m));
    lo = std::max(1LL, std::min(lo, m));
    return ascending[static_cast<std::size_t>(hi - 1)] - ascending[static_cast<std::size_t>(lo - 1)];
}

inline SpectrumReport spectral_report(const Graph& g, double eps = 0.05) {
    if (eps <= 0 || eps >= 0.5) throw std::invalid_argument("spectral_report: eps must lie in (0, 0.5)");
    SpectrumReport rep;
    rep.eps = eps;
    LaplacianResult lcc = normalized_laplacian(g, /*lcc_only=*/true);
    rep.dropped_zero_degree = lcc.dropped_zero_degree;
    rep.lcc_size = static_cast<int>(lcc.nodes.size());
    EigenResult eig = eigen_sym(lcc.matrix);
    rep.eigenvalues = eig.values;
    rep.lambda2 = eig.values.size() > 1 ? eig.values[1] : 0.0;
    rep.w_eps = trimmed_spectral_range(eig.values, eps);
    ComponentReport comps = connected_components(g);
    if (comps.component_count > 1) {
        rep.whole_graph_lambda2 = 0.0;  // identically zero for any disconnected graph
    } else {
        rep.whole_graph_lambda2 = rep.lambda2;  // connected: whole graph IS the LCC
    }
    return rep;
}

// ---- spatial message-passing matrix and its effective mixing rate ----

enum class AdjNormalization { Symmetric, RowStochastic };

struct SpatialMPMatrix {
    double alpha = 0, c1 = 0, c2 = 0;
    SymMatrix S;               // restricted to the LCC
    std::vector<int> nodes;    // LCC node ids
    double delta = 0;          // c1 * max_j |(A_hat^T 1)_j - mean|
    double lambda2 = 0;        // normalized-Laplacian spectral gap on the LCC
    double sigma1 = 0;         // alpha + c2
    double sigma2 = 0;         // (alpha + c2) - c2 * lambda2
    double rho_eff = 0;        // (sigma2 + delta) / (sigma1 - delta)
};

inline SpatialMPMatrix spatial_mp(const Graph& g, double alpha, double c1, double c2,
                                  AdjNormalization norm = AdjNormalization::Symmetric) {
    if (!std::isfinite(alpha) || !std::isfinite(c1) || !std::isfinite(c2))
        throw std::invalid_argument("spatial_mp: coefficients must be finite");
    ComponentReport rep = connected_components(g);
    if (rep.lcc_nodes.size() < 2) throw std::invalid_argument("spatial_mp: empty LCC");
    const std::vector<int>& keep = rep.lcc_nodes;
    int m = static_cast<int>(keep.size());
    std::vector<int> pos(static_cast<std::size_t>(g.n), -1);
    for (int i = 0; i < m; ++i) pos[static_cast<std::size_t>(keep[static_cast<std::size_t>(i)])] = i;

    std::vector<double> deg(static_cast<std::size_t>(m), 0.0);
    for (const Edge& e : g.edges) {
        int pi = pos[static_cast<std::size_t>(e.i)], pj = pos[static_cast<std::size_t>(e.j)];
        if (pi < 0 || pj < 0) continue;
        deg[static_cast<std::size_t>(pi)] += e.w;
        deg[static_cast<std::size_t>(pj)] += e.w;
    }

    SymMatrix ahat = SymMatrix::zero(m);
    for (const Edge& e : g.edges) {
        int pi = pos[static_cast<std::size_t>(e.i)], pj = pos[static_cast<std::size_t>(e.j)];
        if (pi < 0 || pj < 0) continue;
        if (norm == AdjNormalization::Symmetric) {
            double v = e.w / std::sqrt(deg[static_cast<std::size_t>(pi)] * deg[static_cast<std::size_t>(pj)]);
            ahat.at(pi, pj) = v;
            ahat.at(pj, pi) = v;
        } else {
            ahat.at(pi, pj) = e.w / deg[static_cast<std::size_t>(pi)];
            ahat.at(pj, pi) = e.w / deg[static_cast<std::size_t>(pj)];
        }
    }

    SpatialMPMatrix out;
    out.alpha = alpha;
    out.c1 = c1;
    out.c2 = c2;
    out.nodes = keep;
    std::vector<double> colsum(static_cast<std::size_t>(m), 0.0);  // (A_hat^T 1)_j
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) colsum[static_cast<std::size_t>(j)] += ahat.at(i, j);
    double mean = 0;
    for (double v : colsum) mean += v;
    mean /= static_cast<double>(m);
    double dev = 0;
    for (double v : colsum) dev = std::max(dev, std::fabs(v - mean));
    out.delta = c1 * dev;

    out.S = SymMatrix::zero(m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            out.S.at(i, j) = (i == j ? alpha + c1 * colsum[static_cast<std::size_t>(j)] : 0.0) + c2 * ahat.at(i, j);

    // lambda2 of the symmetric normalized Laplacian on the LCC
    Graph sub;
    sub.n = m;
    for (const Edge& e : g.edges) {
        int pi = pos[static_cast<std::size_t>(e.i)], pj = pos[static_cast<std::size_t>(e.j)];
        if (pi < 0 || pj < 0) continue;
        sub.edges.push_back({std::min(pi, pj), std::max(pi, pj), e.w});
    }
    LaplacianResult lap = normalized_laplacian(sub, /*lcc_only=*/false);
    EigenResult eig = eigen_sym(lap.matrix);
    out.lambda2 = eig.values.size() > 1 ? eig.values[1] : 0.0;

    out.sigma1 = alpha + c2;
    out.sigma2 = (alpha + c2) - c2 * out.lambda2;
    out.rho_eff = (out.sigma2 + out.delta) / (out.sigma1 - out.delta);
    return out;
}

// ---- uniform spectral tightening check ----

struct TighteningReport {
    bool applicable = false;
    std::string reason;                // set when not applicable
    double rho_eff_base = 0, rho_eff_improved = 0;
    std::vector<double> residual_base;      // sup |(S/sigma1)^K - q1 q1^T| for K = 1..K_max
    std::vector<double> residual_improved;
    bool rate_bound_base = false;      // residual(K) <= C * rho_eff^K with C fit at K=1
    bool rate_bound_improved = false;
    bool improved_dominated = false;   // residual_improved(K) <= residual_base(K) for all K
};

namespace detail {

// sup-norm residual sequence of normalized powers against the dominant-pair
// projection. Requires a simple positive dominant eigenvalue.
inline std::optional<std::vector<double>> power_residuals(const SymMatrix& S, int K_max, std::string* why) {
    if (S.max_asymmetry() > 1e-9) {
        if (why) *why = "spatial MP matrix not symmetric under this normalization";
        return std::nullopt;
    }
    EigenResult eig = eigen_sym(S, /*want_vectors=*/true);
    int n = S.n;
    double s1 = eig.values[static_cast<std::size_t>(n - 1)];
    double s2_abs = 0;
    for (int i = 0; i < n - 1; ++i) s2_abs = std::max(s2_abs, std::fabs(eig.values[static_cast<std::size_t>(i)]));
    if (s1 <= 0) {
        if (why) *why = "dominant eigenvalue not positive";
        return std::nullopt;
    }
    if (s1 - s2_abs < 1e-9 * std::max(1.0, std::fabs(s1))) {
        if (why) *why = "dominant eigenvalue not simple";
        return std::nullopt;
    }
    SymMatrix proj = SymMatrix::zero(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) proj.at(i, j) = eig.vec(i, n - 1, n) * eig.vec(j, n - 1, n);

    SymMatrix shat = S;
    for (double& v : shat.a) v /= s1;
    SymMatrix power = SymMatrix::identity(n);
    std::vector<double> res;
    for (int k = 1; k <= K_max; ++k) {
        power = matmul_dense(power, shat);
        double sup = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) sup = std::max(sup, std::fabs(power.at(i, j) - proj.at(i, j)));
        res.push_back(sup);
    }
    return res;
}

}  // namespace detail

// Checks the uniform spectral-tightening property on a (base, improved) graph
// pair by direct matrix powers. Preconditions (lambda2 up, delta down) are
// verified first; violations return a not-applicable report, not an error.
inline TighteningReport verify_tightening(const Graph& g, const Graph& g_improved, double alpha, double c1,
                                          double c2, int K_max,
                                          AdjNormalization norm = AdjNormalization::Symmetric) {
    if (g.n != g_improved.n) throw std::invalid_argument("verify_tightening: node count mismatch");
    TighteningReport rep;
    SpatialMPMatrix base = spatial_mp(g, alpha, c1, c2, norm);
    SpatialMPMatrix impr = spatial_mp(g_improved, alpha, c1, c2, norm);
    if (base.nodes != impr.nodes) {
        rep.reason = "LCC node sets differ";
        return rep;
    }
    if (impr.lambda2 < base.lambda2 - 1e-12) {
        rep.reason = "lambda2 did not increase";
        return rep;
    }
    if (impr.delta > base.delta + 1e-12) {
        rep.reason = "degree heterogeneity increased";
        return rep;
    }
    std::string why;
    auto res_base = detail::power_residuals(base.S, K_max, &why);
    if (!res_base) {
        rep.reason = "base graph: " + why;
        return rep;
    }
    auto res_impr = detail::power_residuals(impr.S, K_max, &why);
    if (!res_impr) {
        rep.reason = "improved graph: " + why;
        return rep;
    }
    rep.applicable = true;
    rep.rho_eff_base = base.rho_eff;
    rep.rho_eff_improved = impr.rho_eff;
    rep.residual_base = *res_base;
    rep.residual_improved = *res_impr;

    auto rate_holds = [K_max](const std::vector<double>& res, double rho) {
        if (rho <= 0) return false;
        double c = res[0] / rho;
        for (int k = 1; k <= K_max; ++k)
            if (res[static_cast<std::size_t>(k - 1)] > c * std::pow(rho, k) + 1e-12) return false;
        return true;
    };
    rep.rate_bound_base = rate_holds(*res_base, base.rho_eff);
    rep.rate_bound_improved = rate_holds(*res_impr, impr.rho_eff);
    rep.improved_dominated = true;
    for (int k = 0; k < K_max; ++k)
        if ((*res_impr)[static_cast<std::size_t>(k)] > (*res_base)[static_cast<std::size_t>(k)] + 1e-12)
            rep.improved_dominated = false;
    return rep;
}

// ---- Dirichlet energy ----

// tr(X^T L X) / tr(X^T X) with the symmetric normalized Laplacian; rows of X
// on zero-degree nodes are excluded alongside those nodes.
inline double dirichlet_energy(const Graph& g, const std::vector<std::vector<double>>& X) {
    if (static_cast<int>(X.size()) != g.n) throw std::invalid_argument("dirichlet_energy: X rows must align with nodes");
    LaplacianResult lap = normalized_laplacian(g, /*lcc_only=*/false);
    int m = static_cast<int>(lap.nodes.size());
    std::size_t k = X.empty() ? 0 : X[0].size();
    double denom = 0;
    for (int r = 0; r < m; ++r) {
        const auto& row = X[static_cast<std::size_t>(lap.nodes[static_cast<std::size_t>(r)])];
        if (row.size() != k) throw std::invalid_argument("dirichlet_energy: ragged feature matrix");
        for (double v : row) denom += v * v;
    }
    if (denom == 0) throw std::invalid_argument("dirichlet_energy: X is zero on all non-isolated nodes");
    double numer = 0;
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) {
            double lrc = lap.matrix.at(r, c);
            if (lrc == 0.0) continue;
            const auto& xr = X[static_cast<std::size_t>(lap.nodes[static_cast<std::size_t>(r)])];
            const auto& xc = X[static_cast<std::size_t>(lap.nodes[static_cast<std::size_t>(c)])];
            double dot = 0;
            for (std::size_t f = 0; f < k; ++f) dot += xr[f] * xc[f];
            numer += lrc * dot;
        }
    return numer / denom;
}

}  // namespace rewirelab
