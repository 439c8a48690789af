// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "abflow/measures.hpp"

using namespace abflow;

namespace {
Grid g512() { return Grid::uniform(-2.2, 2.2, 513); }
}

TEST_CASE("hilbert transform of the semicircle is x/2 on the support") {
    const GridMeasure sc = GridMeasure::semicircle(1.0, g512());
    // Expected value x/2 on support (closed form); quadrature tolerance 1e-3.
    CHECK(hilbert_transform(sc, 1.0) == doctest::Approx(0.5).epsilon(0.0).scale(0.0).epsilon(2e-3));
    CHECK(std::abs(hilbert_transform(sc, 0.37) - 0.185) < 1e-3);
    // Odd symmetry at 0 for even densities.
    CHECK(std::abs(hilbert_transform(sc, 0.0)) < 1e-12);
    // Antisymmetry.
    CHECK(std::abs(hilbert_transform(sc, -1.0) + hilbert_transform(sc, 1.0)) < 1e-10);
}

TEST_CASE("hilbert transform of the uniform density: closed form") {
    const Grid g = Grid::uniform(-1.1, 1.1, 2201);
    const GridMeasure u = GridMeasure::uniform_density(-1.0, 1.0, g);
    // PV integral = (1/2) log((1+x)/(1-x)) at x = 0.5.
    const double expect = 0.5 * std::log(3.0);
    CHECK(std::abs(hilbert_transform(u, 0.5) - expect) < 1e-3);
    // Outside the support: plain integral, 1/2 log((x+1)/(x-1)) at x=2.
    CHECK(std::abs(hilbert_transform(u, 2.0) - 0.5 * std::log(3.0)) < 2e-3);
}

TEST_CASE("log energy of the semicircle is -1/4; translation/dilation rules") {
    const GridMeasure sc = GridMeasure::semicircle(1.0, g512());
    CHECK(std::abs(log_energy(sc) + 0.25) < 2e-3);

    const Grid gs = Grid::uniform(-2.2 + 0.9, 2.2 + 0.9, 513);
    const GridMeasure scs = GridMeasure::semicircle(1.0, gs, 0.9);
    CHECK(std::abs(log_energy(scs) - log_energy(sc)) < 1e-10);

    // Dilation by lambda adds log(lambda).
    const double lam = 1.7;
    const Grid gd = Grid::uniform(-2.2 * lam, 2.2 * lam, 513);
    const GridMeasure scd = GridMeasure::semicircle(lam * lam, gd);
    CHECK(std::abs(log_energy(scd) - (log_energy(sc) + std::log(lam))) < 5e-3);
}

TEST_CASE("log energy rejects atomic input") {
    Grid g = Grid::uniform(-1, 1, 101);
    std::vector<double> rho(101, 0.0);
    rho[50] = 1.0;  // all mass on one node
    GridMeasure atom(g, rho);
    CHECK_THROWS_AS(log_energy(atom), std::invalid_argument);
}

TEST_CASE("log energy concave along density interpolations") {
    const Grid g = g512();
    const GridMeasure a = GridMeasure::semicircle(1.0, g);
    const GridMeasure b = GridMeasure::bump(0.3, 1.2, g);
    auto mix = [&](double al) {
        std::vector<double> rho(g.size());
        for (std::size_t i = 0; i < g.size(); ++i)
            rho[i] = (1 - al) * a.density[i] + al * b.density[i];
        return log_energy(GridMeasure(g, rho));
    };
    const double s0 = mix(0.0), s14 = mix(0.25), s12 = mix(0.5), s34 = mix(0.75), s1 = mix(1.0);
    CHECK(s14 >= 0.75 * s0 + 0.25 * s1 - 1e-9);
    CHECK(s12 >= 0.5 * s0 + 0.5 * s1 - 1e-9);
    CHECK(s34 >= 0.25 * s0 + 0.75 * s1 - 1e-9);
}

TEST_CASE("moments: Catalan values for the semicircle, parity, normalization") {
    const Grid g = Grid::uniform(-2.05, 2.05, 2049);
    const GridMeasure sc = GridMeasure::semicircle(1.0, g);
    const auto m = moments(sc, 8);
    CHECK(std::abs(m[0] - 1.0) < 1e-12);
    CHECK(std::abs(m[2] - 1.0) < 1e-6);
    CHECK(std::abs(m[4] - 2.0) < 1e-4);  // C_2
    CHECK(std::abs(m[6] - 5.0) < 1e-3);  // C_3
    CHECK(std::abs(m[8] - 14.0) < 5e-3); // C_4
    CHECK(std::abs(m[1]) < 1e-12);
    CHECK(std::abs(m[3]) < 1e-10);
}

TEST_CASE("one_matrix_energy: semicircle value and beta=0 case") {
    const GridMeasure sc = GridMeasure::semicircle(1.0, g512());
    CHECK(std::abs(one_matrix_energy(sc, 2.0) - 0.75) < 5e-3);
    const Grid gu = Grid::uniform(-1.1, 1.1, 1101);
    const GridMeasure u = GridMeasure::uniform_density(-1.0, 1.0, gu);
    CHECK(std::abs(one_matrix_energy(u, 0.0) - 1.0 / 6.0) < 1e-3);
}

TEST_CASE("Tricomi identity on semicircle and bump, halving under refinement") {
    auto tricomi_err = [](const GridMeasure& mu) {
        const auto H = hilbert_transform_all(mu);
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < mu.size(); ++i) {
            lhs += mu.grid.weights[i] * H[i] * H[i] * mu.density[i];
            const double r = mu.density[i];
            rhs += mu.grid.weights[i] * r * r * r;
        }
        return std::abs(lhs - (M_PI * M_PI / 3.0) * rhs);
    };
    const double e_sc_512 = tricomi_err(GridMeasure::semicircle(1.0, Grid::uniform(-2.2, 2.2, 513)));
    const double e_sc_1024 = tricomi_err(GridMeasure::semicircle(1.0, Grid::uniform(-2.2, 2.2, 1025)));
    CHECK(e_sc_512 < 1e-3);
    CHECK(e_sc_1024 < 0.55 * e_sc_512);
    const double e_b_512 = tricomi_err(GridMeasure::bump(0.0, 1.5, Grid::uniform(-2.0, 2.0, 513)));
    const double e_b_1024 = tricomi_err(GridMeasure::bump(0.0, 1.5, Grid::uniform(-2.0, 2.0, 1025)));
    CHECK(e_b_512 < 1e-3);
    CHECK(e_b_1024 < 0.55 * e_b_512);
}

TEST_CASE("equilibrium measure: quadratic potential gives the semicircle law") {
    const Grid g = Grid::uniform(-2.6, 2.6, 601);
    const auto res2 = equilibrium_one_matrix(2.0, Polynomial({0.0, 0.0, 0.5}), g);
    // Support endpoints +-2 within one cell.
    const double h = g.spacing();
    double lo = 1e9, hi = -1e9;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (res2.minimizer.density[i] > 1e-6) {
            lo = std::min(lo, g.nodes[i]);
            hi = std::max(hi, g.nodes[i]);
        }
    CHECK(std::abs(lo + 2.0) < 1.5 * h);
    CHECK(std::abs(hi - 2.0) < 1.5 * h);
    CHECK(std::abs(res2.energy - 0.75) < 2e-3);
    // Symmetric potential => even minimizer.
    for (std::size_t i = 0; i < g.size(); ++i) {
        CHECK(std::abs(res2.minimizer.density[i] - res2.minimizer.density[g.size() - 1 - i]) < 1e-8);
    }

    const auto res1 = equilibrium_one_matrix(1.0, Polynomial({0.0, 0.0, 0.5}), g);
    double lo1 = 1e9, hi1 = -1e9;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (res1.minimizer.density[i] > 1e-6) {
            lo1 = std::min(lo1, g.nodes[i]);
            hi1 = std::max(hi1, g.nodes[i]);
        }
    CHECK(std::abs(lo1 + std::sqrt(2.0)) < 1.5 * h);
    CHECK(std::abs(hi1 - std::sqrt(2.0)) < 1.5 * h);
}

TEST_CASE("equilibrium argmin invariant under constant shift of V") {
    const Grid g = Grid::uniform(-2.6, 2.6, 301);
    const auto a = equilibrium_one_matrix(2.0, Polynomial({0.0, 0.0, 0.5}), g);
    const auto b = equilibrium_one_matrix(2.0, Polynomial({3.0, 0.0, 0.5}), g);
    CHECK(l1_distance(a.minimizer, b.minimizer) < 1e-7);
    CHECK(std::abs((b.energy - a.energy) - 3.0) < 1e-9);
}

TEST_CASE("csv round trip is exact") {
    const GridMeasure sc = GridMeasure::semicircle(1.0, Grid::uniform(-2.2, 2.2, 65));
    const char* path = "roundtrip_test.csv";
    sc.save_csv(path);
    const GridMeasure back = GridMeasure::load_csv(path);
    REQUIRE(back.size() == sc.size());
    for (std::size_t i = 0; i < sc.size(); ++i) {
        CHECK(back.grid.nodes[i] == sc.grid.nodes[i]);
        CHECK(back.density[i] == sc.density[i]);
    }
    std::remove(path);
}

TEST_CASE("hilbert transform rejects bad input") {
    Grid g = Grid::uniform(-1, 1, 33);
    std::vector<double> rho(33, 0.25);
    GridMeasure u(g, rho, false);  // mass = 0.5, not normalized
    CHECK_THROWS_AS(hilbert_transform(u, 0.3), std::invalid_argument);
}

TEST_CASE("wasserstein1 of shifted semicircles equals the shift") {
    const GridMeasure a = GridMeasure::semicircle(1.0, Grid::uniform(-2.2, 2.2, 513));
    const GridMeasure b = GridMeasure::semicircle(1.0, Grid::uniform(-1.7, 2.7, 513), 0.5);
    CHECK(std::abs(wasserstein1(a, b) - 0.5) < 5e-3);
}
