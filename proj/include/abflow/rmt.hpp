// SPDX-License-Identifier: Apache-2.0
// Finite-N random-matrix references: the exact determinantal spherical
// integral, its Monte Carlo estimate over the unitary group, a Metropolis
// sampler for the coupled two-matrix ensemble, and a Brownian-bridge matrix
// interpolation sampler.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "abflow/grid.hpp"
#include "abflow/polynomial.hpp"

namespace abflow {

// N^{-2} log integral over the unitary group of exp(N tr(A U B U*)) for
// diagonal A, B with the given eigenvalues (beta = 2). Evaluated through the
// determinantal formula with a quad-precision LU so the alternating-sign
// cancellation at larger N stays far above the noise floor. Eigenvalues
// closer than 1e-9 are nudged apart before the Vandermonde division.
double hciz_exact(const std::vector<double>& a_eigs, const std::vector<double>& b_eigs);

struct McEstimate {
    double value = 0.0;       // N^{-2} log of the sample mean
    double stderr_ = 0.0;     // jackknife standard error of `value`
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
    std::string to_json() const;
};

// Monte Carlo estimate of the same quantity from Haar-unitary samples
// (QR of complex Ginibre with the phase correction).
McEstimate hciz_mc(const std::vector<double>& a_eigs, const std::vector<double>& b_eigs,
                   std::size_t n_samples, std::uint64_t seed);

struct GibbsOptions {
    std::size_t n = 24;          // matrix size
    double beta = 2.0;           // only the hermitian ensemble is supported
    std::size_t n_sweeps = 100000;
    std::size_t burnin = 20000;  // sweeps discarded before eigenvalue pooling
    std::size_t thin = 20;       // pool eigenvalues every `thin` sweeps
    double step = 0.0;           // proposal scale; 0 = auto (tuned in burnin)
    double coupling = 1.0;       // weight c of the tr(A B) term; 0 decouples
    std::uint64_t seed = 1;
};

struct GibbsResult {
    std::vector<double> eigs_a;  // pooled eigenvalue samples
    std::vector<double> eigs_b;
    double acceptance = 0.0;
    std::size_t n_pooled = 0;    // matrices pooled per site
};

// Metropolis sampling of the density  exp(-N tr(P1(A) + P2(B) - c A B))  over
// pairs of hermitian N x N matrices (potentials of degree <= 4).
GibbsResult gibbs_two_matrix(const Polynomial& P1, const Polynomial& P2,
                             const GibbsOptions& opts);

struct Histogram {
    std::vector<double> edges;  // nbins + 1 ascending
    std::vector<double> mass;   // nbins, sums to 1
    void save_csv(const std::string& path) const;  // bin_left,bin_right,mass
};

Histogram histogram_from_samples(const std::vector<double>& samples, std::size_t nbins);

// Hermitian Brownian bridge pinned at X_0 = diag(quantiles of mu0) and at
// X_1 = X_0 + H with H a variance-1 Wigner matrix: spectra of
//   X_t = X_0 + t H + G_t,   G_t Gaussian with entry variance t(1-t)/N,
// pooled over n_samples draws, one histogram per requested time.
std::vector<Histogram> matrix_bridge_sampler(const GridMeasure& mu0, std::size_t N,
                                             const std::vector<double>& times,
                                             std::size_t n_samples, std::size_t nbins,
                                             std::uint64_t seed);

}  // namespace abflow
