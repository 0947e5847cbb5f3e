#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rewirelab/spectral.hpp"

using namespace rewirelab;

namespace {

Graph complete_graph(int n) {
    std::vector<Edge> e;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) e.push_back({i, j, 1.0});
    return make_graph(n, std::move(e));
}

Graph cycle_graph(int n) {
    std::vector<Edge> e;
    for (int i = 0; i < n; ++i) e.push_back({std::min(i, (i + 1) % n), std::max(i, (i + 1) % n), 1.0});
    return make_graph(n, std::move(e));
}

Graph path_graph(int n) {
    std::vector<Edge> e;
    for (int i = 0; i + 1 < n; ++i) e.push_back({i, i + 1, 1.0});
    return make_graph(n, std::move(e));
}

SymMatrix random_symmetric(int n, Rng& rng) {
    SymMatrix m = SymMatrix::zero(n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            double v = rng.uniform(-2, 2);
            m.at(i, j) = v;
            m.at(j, i) = v;
        }
    return m;
}

}  // namespace

TEST_CASE("eigen_sym: diagonal, analytic 2x2, trace identity, reconstruction", "[spectral]") {
    SymMatrix d = SymMatrix::zero(4);
    d.at(0, 0) = 3;
    d.at(1, 1) = -1;
    d.at(2, 2) = 0.5;
    d.at(3, 3) = 2;
    auto eig = eigen_sym(d);
    REQUIRE(eig.values[0] == Catch::Approx(-1));
    REQUIRE(eig.values[3] == Catch::Approx(3));

    SymMatrix m2 = SymMatrix::zero(2);
    m2.at(0, 0) = 2;
    m2.at(1, 1) = 2;
    m2.at(0, 1) = 1;
    m2.at(1, 0) = 1;
    auto e2 = eigen_sym(m2);
    REQUIRE(e2.values[0] == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(e2.values[1] == Catch::Approx(3.0).margin(1e-12));

    Rng rng(99);
    SymMatrix r = random_symmetric(20, rng);
    auto er = eigen_sym(r, true);
    double trace = 0, sum = 0;
    for (int i = 0; i < 20; ++i) trace += r.at(i, i);
    for (double v : er.values) sum += v;
    REQUIRE(std::fabs(trace - sum) < 1e-9);

    // reconstruction ||Q L Q^T - M||_F / ||M||_F < 1e-8
    SymMatrix rec = SymMatrix::zero(20);
    for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 20; ++j) {
            double acc = 0;
            for (int k = 0; k < 20; ++k) acc += er.vec(i, k, 20) * er.values[static_cast<std::size_t>(k)] * er.vec(j, k, 20);
            rec.at(i, j) = acc;
        }
    double diff = 0;
    for (std::size_t i = 0; i < rec.a.size(); ++i) diff += (rec.a[i] - r.a[i]) * (rec.a[i] - r.a[i]);
    REQUIRE(std::sqrt(diff) / r.fro_norm() < 1e-8);

    SymMatrix bad = SymMatrix::zero(2);
    bad.at(0, 1) = 1.0;  // asymmetric
    REQUIRE_THROWS_AS(eigen_sym(bad), std::invalid_argument);
}

TEST_CASE("normalized laplacian analytic spectra", "[spectral]") {
    // single edge -> {0, 2}
    auto lap = normalized_laplacian(make_graph(2, {{0, 1, 1.0}}), false);
    auto eig = eigen_sym(lap.matrix);
    REQUIRE(eig.values[0] == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(eig.values[1] == Catch::Approx(2.0).margin(1e-12));

    // P3 -> {0, 1, 2}
    auto lap3 = normalized_laplacian(path_graph(3), false);
    auto e3 = eigen_sym(lap3.matrix);
    REQUIRE(e3.values[0] == Catch::Approx(0.0).margin(1e-9));
    REQUIRE(e3.values[1] == Catch::Approx(1.0).margin(1e-9));
    REQUIRE(e3.values[2] == Catch::Approx(2.0).margin(1e-9));

    // K_n -> lambda2 = n/(n-1)
    for (int n = 3; n <= 8; ++n) {
        auto eign = eigen_sym(normalized_laplacian(complete_graph(n), false).matrix);
        REQUIRE(eign.values[1] == Catch::Approx(static_cast<double>(n) / (n - 1)).margin(1e-9));
    }

    // eigenvalue range [0, 2] and smallest ~ 0
    Rng rng(17);
    for (int trial = 0; trial < 8; ++trial) {
        int n = 5 + rng.index(20);
        std::vector<Edge> ed;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (rng.uniform() < 0.3) ed.push_back({i, j, rng.uniform(0.2, 2.0)});
        Graph g = make_graph(n, std::move(ed));
        if (g.edges.empty()) continue;
        auto e = eigen_sym(normalized_laplacian(g, false).matrix);
        REQUIRE(e.values.front() >= -1e-9);
        REQUIRE(e.values.front() <= 1e-9);
        REQUIRE(e.values.back() <= 2.0 + 1e-9);
    }

    REQUIRE_THROWS_AS(normalized_laplacian(make_graph(3, {}), true), std::invalid_argument);
}

TEST_CASE("spectral report: disconnection, K4, eps limit, small LCC", "[spectral]") {
    // disconnected graph -> whole-graph lambda2 = 0
    Graph two = make_graph(5, {{0, 1, 1}, {1, 2, 1}, {3, 4, 1}});
    SpectrumReport rep = spectral_report(two, 0.05);
    REQUIRE(rep.whole_graph_lambda2 == 0.0);
    REQUIRE(rep.lcc_size == 3);

    SpectrumReport k4 = spectral_report(complete_graph(4), 0.05);
    REQUIRE(k4.lambda2 == Catch::Approx(4.0 / 3.0).margin(1e-9));
    REQUIRE(k4.whole_graph_lambda2 == Catch::Approx(4.0 / 3.0).margin(1e-9));

    // eps -> 0 limit: trimmed range approaches full spectral range
    SpectrumReport c8 = spectral_report(cycle_graph(8), 1e-9);
    REQUIRE(c8.w_eps == Catch::Approx(c8.eigenvalues.back() - c8.eigenvalues.front()).margin(1e-12));

    // LCC of 2 nodes: lambda2 defined, W_eps NaN sentinel
    Graph pair = make_graph(4, {{0, 1, 1}});
    SpectrumReport rp = spectral_report(pair, 0.05);
    REQUIRE(rp.lambda2 == Catch::Approx(2.0).margin(1e-9));
    REQUIRE(std::isnan(rp.w_eps));

    REQUIRE_THROWS_AS(spectral_report(two, 0.7), std::invalid_argument);
}

TEST_CASE("LCC protocol: cross-component edge leaves LCC spectrum unchanged", "[spectral]") {
    // LCC = {0,1,2,3} (path), satellite pair {4,5}; joining 4-5 to node 6
    // changes a non-LCC component but not the LCC spectrum
    Graph g = make_graph(7, {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}, {4, 5, 1}});
    Graph g2 = make_graph(7, {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}, {4, 5, 1}, {5, 6, 1}});
    SpectrumReport a = spectral_report(g, 0.05);
    SpectrumReport b = spectral_report(g2, 0.05);
    REQUIRE(a.lcc_size == 4);
    REQUIRE(b.lcc_size == 4);
    for (std::size_t i = 0; i < a.eigenvalues.size(); ++i)
        REQUIRE(a.eigenvalues[i] == Catch::Approx(b.eigenvalues[i]).margin(1e-12));
}

TEST_CASE("spatial MP matrix fields and rho_eff", "[spectral]") {
    // regular graph: delta = 0 exactly
    SpatialMPMatrix mp = spatial_mp(cycle_graph(8), 0.5, 0.3, 0.5);
    REQUIRE(mp.delta == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(mp.sigma1 == Catch::Approx(1.0));
    REQUIRE(mp.sigma2 == Catch::Approx(1.0 - 0.5 * mp.lambda2));
    REQUIRE(mp.rho_eff == Catch::Approx((mp.sigma2 + mp.delta) / (mp.sigma1 - mp.delta)));

    // formula evaluation: alpha=0.5, c2=0.5, c1=0, lambda2=2 on a single edge
    SpatialMPMatrix p2 = spatial_mp(make_graph(2, {{0, 1, 1.0}}), 0.5, 0.0, 0.5);
    REQUIRE(p2.lambda2 == Catch::Approx(2.0).margin(1e-9));
    REQUIRE(p2.rho_eff == Catch::Approx((0.5 + 0.5 - 0.5 * 2.0) / 1.0).margin(1e-9));

    REQUIRE_THROWS_AS(spatial_mp(make_graph(3, {}), 0.5, 0.1, 0.5), std::invalid_argument);
}

TEST_CASE("rho_eff decreases when lambda2 increases at fixed coefficients", "[spectral]") {
    Graph c8 = cycle_graph(8);
    std::vector<Edge> chord = c8.edges;
    chord.push_back({0, 4, 1.0});
    chord.push_back({1, 5, 1.0});
    chord.push_back({2, 6, 1.0});
    chord.push_back({3, 7, 1.0});
    Graph c8x = make_graph(8, std::move(chord));  // + perfect matching: regular again
    SpatialMPMatrix a = spatial_mp(c8, 0.6, 0.1, 0.4);
    SpatialMPMatrix b = spatial_mp(c8x, 0.6, 0.1, 0.4);
    REQUIRE(b.lambda2 > a.lambda2);
    REQUIRE(b.rho_eff < a.rho_eff);
}

TEST_CASE("verify_tightening on cycle vs chorded cycle", "[spectral]") {
    Graph c8 = cycle_graph(8);
    std::vector<Edge> chord = c8.edges;
    for (int i = 0; i < 4; ++i) chord.push_back({i, i + 4, 1.0});
    Graph c8x = make_graph(8, std::move(chord));

    TighteningReport rep = verify_tightening(c8, c8x, 0.6, 0.05, 0.4, 10);
    REQUIRE(rep.applicable);
    REQUIRE(rep.rho_eff_improved <= rep.rho_eff_base);
    REQUIRE(rep.rate_bound_base);
    REQUIRE(rep.rate_bound_improved);
    REQUIRE(rep.improved_dominated);
    // residual decays beyond the first index
    for (std::size_t k = 1; k < rep.residual_base.size(); ++k)
        REQUIRE(rep.residual_base[k] <= rep.residual_base[k - 1] + 1e-12);

    // identical graphs -> identical residual sequences
    TighteningReport same = verify_tightening(c8, c8, 0.6, 0.05, 0.4, 8);
    REQUIRE(same.applicable);
    for (std::size_t k = 0; k < same.residual_base.size(); ++k)
        REQUIRE(same.residual_base[k] == Catch::Approx(same.residual_improved[k]).margin(1e-12));

    // precondition violation (lambda2 decreases) -> not applicable, no throw
    TighteningReport na = verify_tightening(c8x, c8, 0.6, 0.05, 0.4, 8);
    REQUIRE_FALSE(na.applicable);
}

TEST_CASE("dirichlet energy", "[spectral]") {
    Graph g = make_graph(4, {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}, {0, 3, 1}});

    // D^{1/2} 1 lies in the kernel
    auto deg = g.degrees();
    std::vector<std::vector<double>> x0;
    for (int i = 0; i < 4; ++i) x0.push_back({std::sqrt(deg[static_cast<std::size_t>(i)])});
    REQUIRE(dirichlet_energy(g, x0) == Catch::Approx(0.0).margin(1e-12));

    // eigenvector of L with eigenvalue mu -> energy mu
    auto lap = normalized_laplacian(g, false);
    auto eig = eigen_sym(lap.matrix, true);
    for (int k = 0; k < 4; ++k) {
        std::vector<std::vector<double>> xv;
        for (int i = 0; i < 4; ++i) xv.push_back({eig.vec(i, k, 4)});
        REQUIRE(dirichlet_energy(g, xv) == Catch::Approx(eig.values[static_cast<std::size_t>(k)]).margin(1e-9));
    }

    // two disconnected cliques with per-clique-constant D^{1/2}-scaled indicators -> 0
    Graph cl = make_graph(6, {{0, 1, 1}, {0, 2, 1}, {1, 2, 1}, {3, 4, 1}, {3, 5, 1}, {4, 5, 1}});
    auto dcl = cl.degrees();
    std::vector<std::vector<double>> xi;
    for (int i = 0; i < 6; ++i)
        xi.push_back({i < 3 ? std::sqrt(dcl[static_cast<std::size_t>(i)]) : 0.0,
                      i >= 3 ? 2.0 * std::sqrt(dcl[static_cast<std::size_t>(i)]) : 0.0});
    REQUIRE(dirichlet_energy(cl, xi) == Catch::Approx(0.0).margin(1e-12));

    // invariance to positive scaling
    std::vector<std::vector<double>> xr = {{0.3, 1.0}, {-0.4, 2.0}, {1.1, -0.7}, {0.9, 0.2}};
    double e1 = dirichlet_energy(g, xr);
    for (auto& row : xr)
        for (auto& v : row) v *= 3.7;
    REQUIRE(dirichlet_energy(g, xr) == Catch::Approx(e1).margin(1e-12));

    std::vector<std::vector<double>> zero(4, std::vector<double>{0.0});
    REQUIRE_THROWS_AS(dirichlet_energy(g, zero), std::invalid_argument);
}
