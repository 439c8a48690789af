// SPDX-License-Identifier: Apache-2.0
// Runtime-dispatched compute kernels: scalar reference implementations and
// AVX2 variants of the pairwise inner loops. The dispatcher picks the widest
// lane the CPU supports; both lanes are equivalence-tested.
#pragma once

#include <cstddef>
#include <string>

namespace abflow::kernels {

// Singularity-subtracted principal-value sum at one point:
//   sum_j w[j] * (rho[j] - rho_x) / (x - nodes[j]),  skipping |x - nodes[j]| < eps.
double pv_subtracted_sum(const double* nodes, const double* rho, const double* w,
                         std::size_t n, double x, double rho_x, double eps);

// out[i] = sum_{j != i} w[j] * (rho[j] - rho[i]) / (nodes[i] - nodes[j])   (all nodes at once)
void pv_subtracted_all(const double* nodes, const double* rho, const double* w,
                       std::size_t n, double* out);

// sum_i w2[i] * m[i]^2 / r[i] with the 0/0 -> 0 convention (r <= floor contributes 0).
double kinetic_sum(const double* m, const double* r, const double* w2,
                   std::size_t n, double floor_val);

// sum_i w[i] * r[i]^3
double cubic_sum(const double* r, const double* w, std::size_t n);

// Name of the active lane: "scalar" or "avx2".
const std::string& active_lane();
// Force a lane for testing ("scalar", "avx2", "auto"); throws if unsupported.
void force_lane(const std::string& name);

// Scalar reference implementations (always available; used by equivalence tests).
namespace scalar {
double pv_subtracted_sum(const double* nodes, const double* rho, const double* w,
                         std::size_t n, double x, double rho_x, double eps);
void pv_subtracted_all(const double* nodes, const double* rho, const double* w,
                       std::size_t n, double* out);
double kinetic_sum(const double* m, const double* r, const double* w2,
                   std::size_t n, double floor_val);
double cubic_sum(const double* r, const double* w, std::size_t n);
}  // namespace scalar

// AVX2 implementations; only callable when supported (dispatcher checks).
namespace avx2 {
bool supported();
double pv_subtracted_sum(const double* nodes, const double* rho, const double* w,
                         std::size_t n, double x, double rho_x, double eps);
void pv_subtracted_all(const double* nodes, const double* rho, const double* w,
                       std::size_t n, double* out);
double kinetic_sum(const double* m, const double* r, const double* w2,
                   std::size_t n, double floor_val);
double cubic_sum(const double* r, const double* w, std::size_t n);
}  // namespace avx2

}  // namespace abflow::kernels
