// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "abflow/freeconv.hpp"
#include "abflow/grid.hpp"
#include "abflow/rmt.hpp"

using namespace abflow;

namespace {

double sample_variance(const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / double(v.size());
}

}  // namespace

TEST_CASE("exact spherical integral: N = 2 closed form") {
    // a = b = (0, 1): the 2x2 determinant collapses to e^2 - 1 and the
    // normalization contributes 1/2, so N^-2 log I = (1/4) log((e^2 - 1)/2).
    const double v = hciz_exact({0.0, 1.0}, {0.0, 1.0});
    const double oracle = 0.25 * std::log((std::exp(2.0) - 1.0) / 2.0);
    CHECK(std::abs(v - oracle) < 1e-10);
}

TEST_CASE("exact spherical integral: translation and permutation invariance") {
    const std::vector<double> a = {-1.2, -0.8, -0.3, -0.1, 0.2, 0.5, 0.9, 1.3};
    const std::vector<double> b = {-1.0, -0.6, -0.2, 0.1, 0.3, 0.6, 0.8, 1.1};
    const double v = hciz_exact(a, b);
    // Shifting a by s adds exactly s * mean(b).
    const double s = 0.7;
    std::vector<double> a_shift(a);
    for (double& x : a_shift) x += s;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / double(b.size());
    CHECK(std::abs(hciz_exact(a_shift, b) - (v + s * mb)) < 1e-12);
    // The integral only sees the spectra, not their ordering.
    std::vector<double> a_perm = {0.9, -1.2, 0.2, -0.3, 1.3, -0.1, 0.5, -0.8};
    CHECK(std::abs(hciz_exact(a_perm, b) - v) < 1e-12);
    // Input validation.
    CHECK_THROWS_AS(hciz_exact({0.0, 1.0}, {0.0}), std::invalid_argument);
    CHECK_THROWS_AS(hciz_exact({}, {}), std::invalid_argument);
}

TEST_CASE("monte carlo estimate agrees with the exact determinant at N = 8") {
    const std::vector<double> a = {-1.2, -0.8, -0.3, -0.1, 0.2, 0.5, 0.9, 1.3};
    const std::vector<double> b = {-1.0, -0.6, -0.2, 0.1, 0.3, 0.6, 0.8, 1.1};
    const double exact = hciz_exact(a, b);
    const McEstimate mc = hciz_mc(a, b, 200000, 7);
    CHECK(mc.stderr_ > 0.0);
    CHECK(mc.n_samples == 200000);
    CHECK(std::abs(mc.value - exact) < 3.0 * mc.stderr_);
    CHECK(mc.to_json().find("\"value\"") != std::string::npos);
}

TEST_CASE("exact ladder converges to the continuum value for semicircle pairs") {
    // Limit from the semicircular flow family between variances 0.4 and 0.9:
    // v(t) quadratic with discriminant 1, S = int (v'^2 + 1)/(4v) dt, then
    // I = -S/2 - (Sigma_0 + Sigma_1)/2 + (v_0 + v_1)/2 - 3/4 = 0.1571947.
    const double limit = 0.1571947;
    const Grid g = Grid::uniform(-2.5, 2.5, 501);
    const GridMeasure m0 = GridMeasure::semicircle(0.4, g);
    const GridMeasure m1 = GridMeasure::semicircle(0.9, g);
    double prev_dist = 1e9;
    double last = 0.0;
    for (std::size_t N : {8, 16, 32, 64}) {
        last = hciz_exact(quantile_points(m0, N), quantile_points(m1, N));
        const double dist = std::abs(last - limit);
        CHECK(dist < prev_dist);  // finite-size error shrinks with N
        prev_dist = dist;
    }
    // The N = 64 rung sits within a few 1e-4 of the limit; this is far below
    // the quad-precision noise floor and only holds with the compensated
    // (double-quad) elimination.
    CHECK(std::abs(last - limit) < 5e-4);
}

TEST_CASE("decoupled gibbs sampler reproduces the one-matrix semicircle") {
    GibbsOptions o;
    o.n = 20;
    o.n_sweeps = 6000;
    o.burnin = 2000;
    o.thin = 10;
    o.coupling = 0.0;  // independent GUE(x^2) sites
    o.seed = 3;
    const GibbsResult r = gibbs_two_matrix(Polynomial({0.0, 0.0, 1.0}),
                                           Polynomial({0.0, 0.0, 1.0}), o);
    CHECK(r.n_pooled > 300);
    CHECK(r.acceptance > 0.2);
    CHECK(r.acceptance < 0.8);
    // exp(-N tr A^2): semicircle of variance 1/2.
    const Histogram h = histogram_from_samples(r.eigs_a, 40);
    const double mass = std::accumulate(h.mass.begin(), h.mass.end(), 0.0);
    CHECK(std::abs(mass - 1.0) < 1e-12);
    const Grid hg = Grid::uniform(-2.2, 2.2, 441);
    CHECK(wasserstein1_hist(h.edges, h.mass, GridMeasure::semicircle(0.5, hg)) < 0.05);
}

TEST_CASE("coupled gaussian gibbs sampler matches the closed-form variance") {
    GibbsOptions o;
    o.n = 20;
    o.n_sweeps = 6000;
    o.burnin = 2000;
    o.thin = 10;
    o.seed = 5;
    const GibbsResult r = gibbs_two_matrix(Polynomial({0.0, 0.0, 1.0}),
                                           Polynomial({0.0, 0.0, 1.0}), o);
    // exp(-N tr(A^2 + B^2 - AB)) marginals are semicircles of variance 2/3.
    CHECK(std::abs(sample_variance(r.eigs_a) - 2.0 / 3.0) < 0.08);
    CHECK(std::abs(sample_variance(r.eigs_b) - 2.0 / 3.0) < 0.08);
    // Validation of the options.
    GibbsOptions bad = o;
    bad.beta = 1.0;
    CHECK_THROWS_AS(gibbs_two_matrix(Polynomial({0.0, 0.0, 1.0}),
                                     Polynomial({0.0, 0.0, 1.0}), bad),
                    std::invalid_argument);
    bad = o;
    bad.burnin = bad.n_sweeps;
    CHECK_THROWS_AS(gibbs_two_matrix(Polynomial({0.0, 0.0, 1.0}),
                                     Polynomial({0.0, 0.0, 1.0}), bad),
                    std::invalid_argument);
}

TEST_CASE("matrix bridge sampler: marginals are free convolutions") {
    const Grid g = Grid::uniform(-1.5, 1.5, 301);
    const GridMeasure mu0 = GridMeasure::bump(0.0, 0.5, g);
    const std::vector<double> times = {0.25, 0.5, 1.0};
    const auto hists = matrix_bridge_sampler(mu0, 32, times, 200, 40, 11);
    REQUIRE(hists.size() == times.size());
    // X_t = X_0 + t H + G_{t(1-t)} with independent Wigner H (variance 1):
    // the added semicircular variance is t^2 + t(1-t) = t.
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double mass =
            std::accumulate(hists[k].mass.begin(), hists[k].mass.end(), 0.0);
        CHECK(std::abs(mass - 1.0) < 1e-12);
        const GridMeasure expect = semicircle_convolve(mu0, times[k]);
        CHECK(wasserstein1_hist(hists[k].edges, hists[k].mass, expect) < 0.06);
    }
}

TEST_CASE("histogram csv output") {
    const Histogram h = histogram_from_samples({0.0, 0.1, 0.2, 0.9, 1.0}, 4);
    const std::string path = "/tmp/abflow_hist_test.csv";
    h.save_csv(path);
    std::FILE* f = std::fopen(path.c_str(), "r");
    REQUIRE(f != nullptr);
    char line[128];
    REQUIRE(std::fgets(line, sizeof line, f) != nullptr);
    CHECK(std::string(line).find("bin_left") == 0);
    std::fclose(f);
    std::remove(path.c_str());
    CHECK_THROWS_AS(histogram_from_samples({}, 4), std::invalid_argument);
}
