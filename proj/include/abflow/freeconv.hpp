// SPDX-License-Identifier: Apache-2.0
// Free convolution with the semicircular family via subordination, and the
// bound suite used to certify candidate bridge marginals.
#pragma once

#include <string>
#include <vector>

#include "abflow/grid.hpp"

namespace abflow {

// Per-u subordination data: v(u) solves int dnu / ((u-x)^2 + v^2) = 1/delta
// (or v = 0 where the integral stays below the cap), psi(u) is the image point.
struct SubordinationData {
    std::vector<double> u_nodes;
    std::vector<double> v;
    std::vector<double> psi;
    std::vector<double> hilbert;  // H(nu ⊞ sigma_delta) at psi(u)
    double delta = 0.0;
    double mass_drift = 0.0;  // |raw mass - 1| before the final renormalization
    double mean_drift = 0.0;  // |raw mean - input mean|

    void validate() const;  // v >= 0, psi nondecreasing
};

struct ConvolveOptions {
    std::size_t out_nodes = 0;   // 0: match input resolution
    double v_tol = 1e-12;        // bisection tolerance in v
    int threads = 1;
};

// nu ⊞ sigma_delta on a fresh uniform grid (span = input span widened by the
// semicircle support 2*sqrt(delta) plus margin).
GridMeasure semicircle_convolve(const GridMeasure& nu, double delta,
                                const ConvolveOptions& opts = {});

// Same, but also returns the subordination data (diagnostics / field values).
GridMeasure semicircle_convolve(const GridMeasure& nu, double delta,
                                SubordinationData& sub, const ConvolveOptions& opts);

// mu_t = nu_t ⊞ sigma_{t(1-t)} for t in (0,1).
GridMeasure bridge_marginal(const GridMeasure& nu_t, double t,
                            const ConvolveOptions& opts = {});

struct BridgeBoundReport {
    double max_ratio = 0.0;        // max over support of (pi^2 rho^2 + H^2) * t(1-t)
    bool bound_ok = false;         // max_ratio <= 1 + tol
    double edge_exponent_left = 0.0;
    double edge_exponent_right = 0.0;
    bool envelope_ok = false;      // density below the 1/3-power edge envelope
    std::string note;              // human-readable form of the checked bound
};

// Check pi^2 rho^2 + (H mu)^2 <= (1+tol)/(t(1-t)) and fit the boundary
// exponents of log rho vs log(distance to the support edge).
BridgeBoundReport check_bridge_bounds(const GridMeasure& rho_t, double t, double tol = 0.05);

}  // namespace abflow
