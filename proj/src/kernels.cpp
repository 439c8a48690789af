// SPDX-License-Identifier: Apache-2.0
#include "abflow/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace abflow::kernels {

namespace scalar {

double pv_subtracted_sum(const double* nodes, const double* rho, const double* w,
                         std::size_t n, double x, double rho_x, double eps) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double d = x - nodes[j];
        if (std::abs(d) < eps) continue;
        s += w[j] * (rho[j] - rho_x) / d;
    }
    return s;
}

void pv_subtracted_all(const double* nodes, const double* rho, const double* w,
                       std::size_t n, double* out) {
    for (std::size_t i = 0; i < n; ++i) {
        const double x = nodes[i], rx = rho[i];
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            s += w[j] * (rho[j] - rx) / (x - nodes[j]);
        }
        out[i] = s;
    }
}

double kinetic_sum(const double* m, const double* r, const double* w2,
                   std::size_t n, double floor_val) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (r[i] > floor_val) s += w2[i] * m[i] * m[i] / r[i];
    }
    return s;
}

double cubic_sum(const double* r, const double* w, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += w[i] * r[i] * r[i] * r[i];
    return s;
}

}  // namespace scalar

namespace {

enum class Lane { Scalar, Avx2 };

Lane pick_default() {
    return avx2::supported() ? Lane::Avx2 : Lane::Scalar;
}

Lane& lane() {
    static Lane l = pick_default();
    return l;
}

}  // namespace

const std::string& active_lane() {
    static const std::string s_scalar = "scalar", s_avx2 = "avx2";
    return lane() == Lane::Avx2 ? s_avx2 : s_scalar;
}

void force_lane(const std::string& name) {
    if (name == "scalar") {
        lane() = Lane::Scalar;
    } else if (name == "avx2") {
        if (!avx2::supported()) throw std::runtime_error("force_lane: avx2 not supported here");
        lane() = Lane::Avx2;
    } else if (name == "auto") {
        lane() = pick_default();
    } else {
        throw std::invalid_argument("force_lane: unknown lane " + name);
    }
}

double pv_subtracted_sum(const double* nodes, const double* rho, const double* w,
                         std::size_t n, double x, double rho_x, double eps) {
    return lane() == Lane::Avx2 ? avx2::pv_subtracted_sum(nodes, rho, w, n, x, rho_x, eps)
                                : scalar::pv_subtracted_sum(nodes, rho, w, n, x, rho_x, eps);
}

void pv_subtracted_all(const double* nodes, const double* rho, const double* w,
                       std::size_t n, double* out) {
    if (lane() == Lane::Avx2)
        avx2::pv_subtracted_all(nodes, rho, w, n, out);
    else
        scalar::pv_subtracted_all(nodes, rho, w, n, out);
}

double kinetic_sum(const double* m, const double* r, const double* w2,
                   std::size_t n, double floor_val) {
    return lane() == Lane::Avx2 ? avx2::kinetic_sum(m, r, w2, n, floor_val)
                                : scalar::kinetic_sum(m, r, w2, n, floor_val);
}

double cubic_sum(const double* r, const double* w, std::size_t n) {
    return lane() == Lane::Avx2 ? avx2::cubic_sum(r, w, n)
                                : scalar::cubic_sum(r, w, n);
}

}  // namespace abflow::kernels
