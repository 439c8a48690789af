// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "abflow/kernels.hpp"

using namespace abflow;

namespace {
struct Data {
    std::vector<double> nodes, rho, w;
    explicit Data(std::size_t n, unsigned seed) : nodes(n), rho(n), w(n) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.1, 1.0);
        double x = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            x += u(rng);
            nodes[i] = x;
            rho[i] = u(rng);
            w[i] = u(rng);
        }
    }
};
}  // namespace

TEST_CASE("scalar and dispatched lanes agree on every kernel") {
    if (!kernels::avx2::supported()) {
        MESSAGE("avx2 not available on this host; dispatch equals scalar trivially");
    }
    for (std::size_t n : {1ul, 3ul, 4ul, 7ul, 64ul, 257ul}) {
        Data d(n, unsigned(1234 + n));
        // pv_subtracted_sum at an off-grid point
        const double x = d.nodes[n / 2] + 0.123;
        const double s_ref = kernels::scalar::pv_subtracted_sum(
            d.nodes.data(), d.rho.data(), d.w.data(), n, x, 0.37, 1e-12);
        const double s_disp = kernels::pv_subtracted_sum(
            d.nodes.data(), d.rho.data(), d.w.data(), n, x, 0.37, 1e-12);
        CHECK(std::abs(s_ref - s_disp) <= 1e-11 * (1.0 + std::abs(s_ref)));

        std::vector<double> ref(n), disp(n);
        kernels::scalar::pv_subtracted_all(d.nodes.data(), d.rho.data(), d.w.data(), n, ref.data());
        kernels::pv_subtracted_all(d.nodes.data(), d.rho.data(), d.w.data(), n, disp.data());
        for (std::size_t i = 0; i < n; ++i)
            CHECK(std::abs(ref[i] - disp[i]) <= 1e-10 * (1.0 + std::abs(ref[i])));

        const double k_ref =
            kernels::scalar::kinetic_sum(d.rho.data(), d.w.data(), d.nodes.data(), n, 0.3);
        const double k_disp = kernels::kinetic_sum(d.rho.data(), d.w.data(), d.nodes.data(), n, 0.3);
        CHECK(std::abs(k_ref - k_disp) <= 1e-11 * (1.0 + std::abs(k_ref)));

        const double c_ref = kernels::scalar::cubic_sum(d.rho.data(), d.w.data(), n);
        const double c_disp = kernels::cubic_sum(d.rho.data(), d.w.data(), n);
        CHECK(std::abs(c_ref - c_disp) <= 1e-11 * (1.0 + std::abs(c_ref)));
    }
}

TEST_CASE("forcing lanes works and reports") {
    const std::string before = kernels::active_lane();
    kernels::force_lane("scalar");
    CHECK(kernels::active_lane() == "scalar");
    if (kernels::avx2::supported()) {
        kernels::force_lane("avx2");
        CHECK(kernels::active_lane() == "avx2");
    } else {
        CHECK_THROWS(kernels::force_lane("avx2"));
    }
    kernels::force_lane("auto");
    CHECK_THROWS(kernels::force_lane("sse9"));
    CHECK((kernels::active_lane() == "scalar" || kernels::active_lane() == "avx2"));
    (void)before;
}

TEST_CASE("kinetic sum honors the 0/0 -> 0 convention") {
    std::vector<double> m{1.0, 2.0, 0.5}, r{0.0, 1.0, 1e-15}, w{1.0, 1.0, 1.0};
    const double v = kernels::kinetic_sum(m.data(), r.data(), w.data(), 3, 1e-12);
    CHECK(v == doctest::Approx(4.0));
}
