// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "abflow/measures.hpp"
#include "abflow/models.hpp"

using namespace abflow;

namespace {

ModelSpec quartic_pair(std::size_t nx, std::size_t nt) {
    ModelSpec s;
    s.kind = ModelKind::Ising;
    s.beta = 2.0;
    s.potentials = {Polynomial({0.0, 0.0, 0.5, 0.0, 0.25})};  // x^2/2 + x^4/4
    s.nx = nx;
    s.nt = nt;
    s.span = 2.2;
    return s;
}

GridMeasure mirrored(const GridMeasure& m) {
    std::vector<double> d(m.density.rbegin(), m.density.rend());
    return GridMeasure(m.grid, d, /*renormalize=*/false);
}

}  // namespace

TEST_CASE("gaussian pair: closed-form free energy and variance") {
    // P(x) = x^2 on both sites. The joint density decouples in the rotated
    // variables (A-B)/sqrt(2), (A+B)/sqrt(2) into independent one-matrix
    // Gaussians of variances 1/3 and 1, so each site measure is the
    // semicircle of variance (1/3 + 1)/2 = 2/3 and every term of the limit
    // functional is available in closed form. The coupling value follows
    // from the semicircular flow family: v(t) quadratic in t with
    // discriminant 1 solves the interior equations exactly, and
    //   S = int_0^1 (v'(t)^2 + 1) / (4 v(t)) dt,
    // giving F = -2.0493061... - 1.5 = -3.5493061 (12-digit quadrature of
    // the 1-d integral; see the checked constants below).
    ModelSpec s;
    s.kind = ModelKind::Ising;
    s.beta = 2.0;
    s.potentials = {Polynomial({0.0, 0.0, 1.0})};
    s.nx = 64;
    s.nt = 16;
    s.span = 2.6;
    const ModelResult r = solve_ising(s);

    CHECK(std::abs(r.free_energy - (-3.5493061)) < 4e-3);
    const auto mom = moments(r.measures[0], 2);
    CHECK(std::abs(mom[1]) < 3e-3);                  // centered
    CHECK(std::abs(mom[2] - 2.0 / 3.0) < 3e-3);      // variance 2/3
    // Pointwise densities carry grid-scale noise near the support edge, so
    // the site agreement is checked at the solver's measured accuracy here
    // and to 1e-3 on the quartic pair below.
    CHECK(l1_distance(r.measures[0], r.measures[1]) < 5e-3);
    for (double v : r.sd_residuals) CHECK(v < 1.5e-2);
    // Both site measures symmetric under x -> -x.
    CHECK(l1_distance(r.measures[0], mirrored(r.measures[0])) < 5e-3);
}

TEST_CASE("symmetric quartic pair: equal measures, weak residuals, moment envelope") {
    const ModelSpec s = quartic_pair(64, 16);
    const ModelResult r = solve_ising(s);

    // Identical potentials force identical site measures in the limit.
    CHECK(l1_distance(r.measures[0], r.measures[1]) < 1e-3);
    for (double v : r.sd_residuals) CHECK(v < 1e-2);
    CHECK(r.diagnostics.at("max_bridge_gap") < 2e-3);
    CHECK(std::isfinite(r.free_energy));

    // Moment growth envelope: |m_p| <= R^p C_{p/2} holds comfortably for a
    // compactly supported symmetric measure once R covers the support scale.
    const CatalanReport cr = catalan_envelope(r.measures[0], 2.0, 8);
    CHECK(cr.ok);
    CHECK(cr.min_R < 2.0);
    CHECK(cr.support_bound == doctest::Approx(cr.min_R + 4.0));

    // The same spec solved from a randomized initialization lands on the
    // same free energy (strict convexity of the limit problem).
    ModelSpec s2 = s;
    s2.seed = 7;
    const ModelResult r2 = solve_ising(s2);
    CHECK(std::abs(r2.free_energy - r.free_energy) < 1e-3);
    CHECK(l1_distance(r2.measures[0], r.measures[0]) < 5e-3);
}

TEST_CASE("q = 2 Potts and chain reduce to the two-site pair exactly") {
    ModelSpec si = quartic_pair(48, 12);
    const double fi = solve_ising(si).free_energy;

    ModelSpec sp = si;
    sp.kind = ModelKind::Potts;
    sp.q = 2;
    const double fp = solve_potts(sp).free_energy;

    ModelSpec sc = si;
    sc.kind = ModelKind::Chain;
    sc.q = 2;
    const double fc = solve_chain(sc).free_energy;

    // Same coupling graph, same site problem: identical code path, so the
    // agreement is exact up to the last rounding.
    CHECK(std::abs(fp - fi) < 1e-10);
    CHECK(std::abs(fc - fi) < 1e-10);
}

TEST_CASE("q = 3 Potts star: leaf symmetry") {
    ModelSpec s = quartic_pair(48, 12);
    s.kind = ModelKind::Potts;
    s.q = 3;
    const ModelResult r = solve_potts(s);
    REQUIRE(r.measures.size() == 3);
    // Sites 1 and 2 are exchangeable leaves of the star.
    CHECK(l1_distance(r.measures[1], r.measures[2]) < 2e-3);
    for (double v : r.sd_residuals) CHECK(v < 1.5e-2);
    CHECK(std::isfinite(r.free_energy));
}

TEST_CASE("qcd1 on one site: symmetric measure and antisymmetric loop velocity") {
    ModelSpec s = quartic_pair(64, 16);
    s.kind = ModelKind::QCD1;
    s.lattice_size = 1;
    const ModelResult r = solve_qcd1(s);
    REQUIRE(r.measures.size() == 1);
    // Transport distance to the mirror image: robust to the grid-scale
    // oscillation the pointwise density picks up at the support edge.
    CHECK(wasserstein1(r.measures[0], mirrored(r.measures[0])) < 1e-2);
    // The optimal self-coupled flow is time-reversal symmetric, so the
    // boundary velocities cancel: u(., 0) + u(., 1) = 0 on the support.
    CHECK(r.diagnostics.at("antisymmetry") < 1e-2);
    CHECK(std::isfinite(r.free_energy));
}

TEST_CASE("model spec json round trip and validation") {
    ModelSpec s = quartic_pair(64, 16);
    s.kind = ModelKind::Potts;
    s.q = 3;
    s.seed = 42;
    const ModelSpec t = ModelSpec::from_json(s.to_json());
    CHECK(t.kind == s.kind);
    CHECK(t.beta == s.beta);
    CHECK(t.q == s.q);
    CHECK(t.nx == s.nx);
    CHECK(t.nt == s.nt);
    CHECK(t.span == s.span);
    CHECK(t.seed == s.seed);
    REQUIRE(t.potentials.size() == 1);
    CHECK(t.potentials[0].coeffs == s.potentials[0].coeffs);

    ModelSpec bad = quartic_pair(64, 16);
    bad.beta = 3.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = quartic_pair(64, 16);
    bad.potentials.clear();
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = quartic_pair(64, 16);
    bad.potentials = {Polynomial({0.0, 0.0, 1.0, 0.0, -0.25})};  // negative leading term
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = quartic_pair(4, 16);
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = quartic_pair(64, 16);
    bad.kind = ModelKind::Potts;
    bad.q = 1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    CHECK_THROWS_AS(model_kind_from_string("isingg"), std::invalid_argument);

    // Wrong-kind dispatch is rejected.
    ModelSpec w = quartic_pair(64, 16);
    w.kind = ModelKind::Chain;
    CHECK_THROWS_AS(solve_ising(w), std::invalid_argument);
}

TEST_CASE("catalan envelope of the semicircle") {
    const Grid g = Grid::uniform(-2.2, 2.2, 513);
    const GridMeasure sc = GridMeasure::semicircle(0.49, g);
    // With even moments m_{2k} = Cat_k v^k the binding constraint over
    // p <= 8 is p = 2: m_2 = v <= 2 R^2, so min_R = sqrt(v/2) = 0.495.
    const CatalanReport ok = catalan_envelope(sc, 0.8, 8);
    CHECK(ok.ok);
    CHECK(ok.min_R == doctest::Approx(std::sqrt(0.245)).epsilon(0.02));
    const CatalanReport tight = catalan_envelope(sc, 0.45, 8);
    CHECK_FALSE(tight.ok);
}
