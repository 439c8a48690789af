// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "abflow/eulerflow.hpp"
#include "abflow/freeconv.hpp"
#include "abflow/measures.hpp"

using namespace abflow;

namespace {

SpaceTimeGrid small_grid() { return SpaceTimeGrid{24, 12, -2.0, 2.0}; }

FlowField random_flow(const SpaceTimeGrid& g, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> un(-1.0, 1.0);
    FlowField f = FlowField::zeros(g);
    for (double& v : f.rho) v = un(rng) + 1.5;
    for (double& v : f.m) v = un(rng);
    return f;
}

std::vector<double> cell_density(const GridMeasure& mu, const SpaceTimeGrid& g) {
    return resample_to_cells(mu, g);
}

}  // namespace

TEST_CASE("projection enforces continuity exactly and is idempotent") {
    const SpaceTimeGrid g = small_grid();
    const auto mu0 = cell_density(GridMeasure::semicircle(0.5, Grid::uniform(-1.9, 1.9, 301)), g);
    const auto mu1 =
        cell_density(GridMeasure::bump(0.3, 1.1, Grid::uniform(-1.9, 1.9, 301)), g);
    FlowField f = random_flow(g, 11);
    detail::project_continuity(f, mu0, mu1);
    CHECK(f.continuity_residual() < 1e-10);
    for (std::size_t i = 0; i < g.nx; ++i) {
        CHECK(f.r(0, i) == doctest::Approx(mu0[i]).epsilon(1e-12));
        CHECK(f.r(g.nt, i) == doctest::Approx(mu1[i]).epsilon(1e-12));
    }
    FlowField twice = f;
    detail::project_continuity(twice, mu0, mu1);
    double diff = 0.0;
    for (std::size_t q = 0; q < f.rho.size(); ++q)
        diff = std::max(diff, std::abs(twice.rho[q] - f.rho[q]));
    for (std::size_t q = 0; q < f.m.size(); ++q)
        diff = std::max(diff, std::abs(twice.m[q] - f.m[q]));
    CHECK(diff < 1e-11);
    // Every time slice carries unit mass after projection.
    const double h = g.h();
    for (std::size_t k = 0; k <= g.nt; ++k) {
        double mass = 0.0;
        for (std::size_t i = 0; i < g.nx; ++i) mass += h * f.r(k, i);
        CHECK(std::abs(mass - 1.0) < 1e-10);
    }
}

TEST_CASE("projection moves feasible points the least") {
    const SpaceTimeGrid g = small_grid();
    const auto mu0 = cell_density(GridMeasure::semicircle(0.5, Grid::uniform(-1.9, 1.9, 301)), g);
    const auto mu1 = cell_density(GridMeasure::semicircle(0.6, Grid::uniform(-1.9, 1.9, 301)), g);
    FlowField f = random_flow(g, 7);
    detail::project_continuity(f, mu0, mu1);
    FlowField again = f;
    detail::project_continuity(again, mu0, mu1);
    // A feasible point is a fixed point.
    double diff = 0.0;
    for (std::size_t q = 0; q < f.m.size(); ++q)
        diff = std::max(diff, std::abs(again.m[q] - f.m[q]));
    CHECK(diff < 1e-11);
}

TEST_CASE("per-cell prox satisfies its optimality conditions") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> uq(-2.0, 2.0), ug(0.01, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const double qr = uq(rng), qw = uq(rng), gw = ug(rng);
        double r, w;
        detail::prox_cell(qr, qw, gw, r, w);
        REQUIRE(r >= 0.0);
        auto obj = [&](double rr, double ww) {
            double j;
            if (rr < 0.0) return 1e300;
            if (rr == 0.0)
                j = (ww == 0.0) ? 0.0 : 1e300;
            else
                j = ww * ww / rr + (M_PI * M_PI / 3.0) * rr * rr * rr;
            return 0.5 * (rr - qr) * (rr - qr) + 0.5 * (ww - qw) * (ww - qw) + gw * j;
        };
        const double base = obj(r, w);
        if (r > 0.0) {
            // Stationarity in both coordinates.
            const double dw = (w - qw) + 2.0 * gw * w / r;
            const double dr =
                (r - qr) - gw * w * w / (r * r) + 3.0 * gw * (M_PI * M_PI / 3.0) * r * r;
            CHECK(std::abs(dw) < 1e-8);
            CHECK(std::abs(dr) < 1e-8);
        }
        // No nearby point does better.
        for (int p = 0; p < 8; ++p) {
            const double rr = std::max(0.0, r + 0.05 * uq(rng));
            const double ww = w + 0.05 * uq(rng);
            CHECK(base <= obj(rr, ww) + 1e-10);
        }
    }
}

TEST_CASE("dual certificate gradient matches finite differences") {
    const SpaceTimeGrid g{10, 6, -1.0, 1.0};
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> un(-0.4, 0.4);
    DualPotential th = DualPotential::zeros(g);
    for (double& v : th.nu) v = un(rng);
    for (double& v : th.c) v = un(rng);
    for (double& v : th.beta0) v = un(rng);
    std::vector<double> mu0(g.nx), mu1(g.nx);
    double s0 = 0, s1 = 0;
    for (std::size_t i = 0; i < g.nx; ++i) {
        mu0[i] = 0.2 + 0.1 * std::abs(un(rng));
        mu1[i] = 0.2 + 0.1 * std::abs(un(rng));
        s0 += mu0[i] * g.h();
        s1 += mu1[i] * g.h();
    }
    for (std::size_t i = 0; i < g.nx; ++i) {
        mu0[i] /= s0;
        mu1[i] /= s1;
    }
    std::vector<double> grad;
    th.gradient(mu0, mu1, grad);
    const std::size_t dim = grad.size();
    REQUIRE(dim == th.nu.size() + th.c.size() + th.beta0.size());
    const double eps = 1e-6;
    std::uniform_int_distribution<std::size_t> pick(0, dim - 1);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t j = pick(rng);
        auto bump = [&](double d) {
            DualPotential t2 = th;
            if (j < t2.nu.size())
                t2.nu[j] += d;
            else if (j < t2.nu.size() + t2.c.size())
                t2.c[j - t2.nu.size()] += d;
            else
                t2.beta0[j - t2.nu.size() - t2.c.size()] += d;
            return t2.value(mu0, mu1);
        };
        const double fd = (bump(eps) - bump(-eps)) / (2 * eps);
        CHECK(std::abs(fd - grad[j]) < 1e-6 * (1.0 + std::abs(fd)));
    }
}

TEST_CASE("weak duality: certificate never exceeds the action of feasible flows") {
    const SpaceTimeGrid g = small_grid();
    const auto mu0 = cell_density(GridMeasure::semicircle(0.5, Grid::uniform(-1.9, 1.9, 301)), g);
    const auto mu1 = cell_density(GridMeasure::semicircle(0.7, Grid::uniform(-1.9, 1.9, 301)), g);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> un(-0.2, 0.2);
    for (int trial = 0; trial < 12; ++trial) {
        FlowField f = random_flow(g, 100 + std::uint64_t(trial));
        for (double& v : f.rho) v = std::abs(v) + 0.05;
        detail::project_continuity(f, mu0, mu1);
        bool nonneg = true;
        for (double v : f.rho) nonneg = nonneg && v > 0.0;
        if (!nonneg) continue;  // action infinite cells would trivialize the check
        DualPotential th = DualPotential::zeros(g);
        for (double& v : th.nu) v = un(rng);
        for (double& v : th.c) v = un(rng);
        for (double& v : th.beta0) v = un(rng);
        CHECK(th.value(mu0, mu1) <= f.action() + 1e-9);
    }
}

TEST_CASE("bridge solve: certified gap, exact gap split, invariances") {
    const Grid mg = Grid::uniform(-2.4, 2.4, 401);
    const GridMeasure mu0 = GridMeasure::semicircle(0.5, mg);
    const GridMeasure mu1 = GridMeasure::bump(0.4, 1.2, mg);
    const SpaceTimeGrid g{96, 32, -2.4, 2.4};
    BridgeOptions opts;
    const BridgeResult res = solve_bridge(mu0, mu1, g, opts);

    CHECK(res.flow.continuity_residual() < 1e-9);
    CHECK(res.gap >= -1e-12);            // weak duality holds by construction
    CHECK(res.gap < 1e-3);               // certified optimality
    CHECK(res.action > 0.0);
    res.dual.validate();
    res.flow.validate();

    // The certificate gap splits exactly into a velocity-mismatch part and a
    // density-mismatch part; both are nonnegative.
    const double ev = res.residuals.at("err_velocity");
    const double ed = res.residuals.at("err_density");
    CHECK(ev >= -1e-12);
    CHECK(ed >= -1e-12);
    CHECK(std::abs(ev + ed - res.gap * res.action) < 1e-6 * (1.0 + res.action));

    // Time reversal: same action, and J obeys the reversal identity
    //   J(mu0,mu1) - J(mu1,mu0) + (beta/2)(Sigma(mu1) - Sigma(mu0)) = 0.
    const BridgeResult rev = solve_bridge(mu1, mu0, g, opts);
    CHECK(std::abs(rev.action - res.action) < 2e-3 * (1.0 + res.action));
    const double sig0 = log_energy(res.flow.slice(0));
    const double sig1 = log_energy(res.flow.slice(res.flow.g.nt));
    const double beta = opts.beta;
    CHECK(std::abs(res.J - rev.J + (beta / 2.0) * (sig1 - sig0)) < 1e-3);

    // Translating both endpoints by a grid-aligned shift leaves J unchanged
    // to near machine precision (the functional is translation invariant and
    // the discretization is equivariant).
    const double shift = 0.7;
    const Grid mgs = Grid::uniform(-2.4 + shift, 2.4 + shift, 401);
    const GridMeasure mu0s = GridMeasure::semicircle(0.5, mgs, shift);
    const GridMeasure mu1s = GridMeasure::bump(0.4 + shift, 1.2, mgs);
    const BridgeResult sh =
        solve_bridge(mu0s, mu1s, SpaceTimeGrid{96, 32, -2.4 + shift, 2.4 + shift}, opts);
    CHECK(std::abs(sh.J - res.J) < 1e-6);
    CHECK(std::abs(sh.action - res.action) < 1e-6);

    // Weak momentum-equation residual in the interior.
    CHECK(res.residuals.at("euler_weak") < 2e-2);

    // Interior marginals obey the pointwise coupling bound.
    const GridMeasure mid = res.flow.slice(g.nt / 2);
    const BridgeBoundReport rep = check_bridge_bounds(mid, 0.5);
    CHECK(rep.bound_ok);
}

TEST_CASE("two different initializations agree (strict convexity proxy)") {
    const Grid mg = Grid::uniform(-2.2, 2.2, 301);
    const GridMeasure mu0 = GridMeasure::semicircle(0.4, mg);
    const GridMeasure mu1 = GridMeasure::semicircle(0.8, mg);
    const SpaceTimeGrid g{64, 24, -2.2, 2.2};
    BridgeOptions opts;
    const BridgeResult a = solve_bridge(mu0, mu1, g, opts);

    // Second start: quantile (displacement) interpolation of the endpoints,
    // a qualitatively different and much better-informed seed.
    FlowField seed = FlowField::zeros(g);
    const Grid cg = Grid::uniform(g.center(0), g.center(g.nx - 1), g.nx);
    for (std::size_t k = 0; k <= g.nt; ++k) {
        const double t = g.tnode(k);
        std::vector<double> d(g.nx, 0.0);
        const std::size_t nq = 400;
        for (std::size_t j = 0; j < nq; ++j) {
            const double u = (j + 0.5) / nq;
            const double x = (1.0 - t) * mu0.quantile(u) + t * mu1.quantile(u);
            const auto i = std::min<std::size_t>(
                g.nx - 1, std::size_t(std::max(0.0, (x - g.a) / g.h())));
            d[i] += 1.0 / (nq * g.h());
        }
        for (std::size_t i = 0; i < g.nx; ++i) seed.r(k, i) = d[i];
    }
    const BridgeResult b = solve_bridge(mu0, mu1, g, opts, &seed);
    CHECK(std::abs(a.J - b.J) < 1e-4 * (1.0 + std::abs(a.J)));
    double l1 = 0.0;
    for (std::size_t q = 0; q < a.flow.rho.size(); ++q)
        l1 += std::abs(a.flow.rho[q] - b.flow.rho[q]) * g.h() / (g.nt + 1);
    CHECK(l1 < 5e-3);
}

TEST_CASE("static uniform flow has zero velocity and tiny weak residual") {
    const SpaceTimeGrid g{48, 16, -1.0, 1.0};
    FlowField f = FlowField::zeros(g);
    for (std::size_t k = 0; k <= g.nt; ++k)
        for (std::size_t i = 0; i < g.nx; ++i) f.r(k, i) = 0.5;  // unit mass on [-1,1]
    CHECK(f.continuity_residual() < 1e-14);
    // u = 0 and rho constant: both momentum-flux terms are slice-constant, so
    // the weak residual is pure quadrature error of the test functions.
    CHECK(euler_residual(f) < 5e-3);
    CHECK(f.action() == doctest::Approx((M_PI * M_PI / 3.0) * 0.25).epsilon(1e-12));
}

TEST_CASE("zero dual potential has zero value and valid conjugate argument") {
    const SpaceTimeGrid g{24, 8, -1.5, 1.5};
    const auto mu0 = cell_density(GridMeasure::semicircle(0.3, Grid::uniform(-1.4, 1.4, 201)), g);
    const auto mu1 = cell_density(GridMeasure::semicircle(0.4, Grid::uniform(-1.4, 1.4, 201)), g);
    const DualPotential th = DualPotential::zeros(g);
    CHECK(std::abs(th.value(mu0, mu1)) < 1e-14);
    th.validate();
}

TEST_CASE("grid validation rejects degenerate shapes and tight spans") {
    CHECK_THROWS_AS((SpaceTimeGrid{2, 8, -1.0, 1.0}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((SpaceTimeGrid{16, 2, -1.0, 1.0}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((SpaceTimeGrid{16, 8, 1.0, -1.0}.validate()), std::invalid_argument);
    // Endpoint measure wider than the space-time box.
    const GridMeasure wide = GridMeasure::semicircle(1.0, Grid::uniform(-2.2, 2.2, 301));
    CHECK_THROWS_AS(solve_bridge(wide, wide, SpaceTimeGrid{32, 8, -1.0, 1.0}),
                    std::invalid_argument);
}

TEST_CASE("flow field csv and validation") {
    const SpaceTimeGrid g{16, 8, -1.0, 1.0};
    const GridMeasure mu = GridMeasure::bump(0.0, 0.8, Grid::uniform(-1.0, 1.0, 201));
    const BridgeResult res = solve_bridge(mu, mu, g);
    res.flow.save_csv("flow_test.csv");
    std::FILE* fp = std::fopen("flow_test.csv", "r");
    REQUIRE(fp != nullptr);
    char line[256];
    REQUIRE(std::fgets(line, sizeof line, fp) != nullptr);
    CHECK(std::string(line) == "t,x,rho,m\n");
    std::fclose(fp);
    std::remove("flow_test.csv");
    CHECK(res.to_json().find("\"gap\"") != std::string::npos);
}
