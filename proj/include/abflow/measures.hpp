// SPDX-License-Identifier: Apache-2.0
// Hilbert transforms, logarithmic energy, moments and the one-matrix
// equilibrium problem.
#pragma once

#include <vector>

#include "abflow/grid.hpp"
#include "abflow/polynomial.hpp"

namespace abflow {

// Principal value integral  H mu (x) = PV int d mu(y) / (x - y),
// by singularity-subtracted quadrature on the grid span [a,b]:
//   H(x) = int (rho(y) - rho(x)) / (x - y) dy + rho(x) * log((x - a)/(b - x)).
double hilbert_transform(const GridMeasure& mu, double x);

// H mu at every grid node (vectorized kernel path).
std::vector<double> hilbert_transform_all(const GridMeasure& mu);

// Sigma(mu) = int int log|x - y| dmu dmu, exact for the piecewise-constant
// cell density (closed-form double cell integrals of log|x-y|, including the
// diagonal cells). Throws on atomic input (one node > 50% mass, neighbors ~0).
double log_energy(const GridMeasure& mu);

// Logarithmic potential U mu (x_i) = int log|x_i - y| dmu(y) at all nodes,
// with the same exact-cell treatment.
std::vector<double> log_potential_all(const GridMeasure& mu);

// int x^p dmu for p = 0..max_p.
std::vector<double> moments(const GridMeasure& mu, int max_p);

// I_beta(mu) = 1/2 int x^2 dmu - (beta/2) Sigma(mu).
double one_matrix_energy(const GridMeasure& mu, double beta);

struct EquilibriumOptions {
    double tol = 1e-8;       // stationarity-residual variation over the support
    int max_iter = 20000;    // mirror-descent iterations
    bool refine = true;      // active-set linear refinement on the support
};

struct EquilibriumResult {
    GridMeasure minimizer;
    double energy = 0.0;     // int V dnu - (beta/2) Sigma(nu)
    double residual = 0.0;   // max over support of |stationarity - const|
    int iterations = 0;
};

// Minimize int V dnu - (beta/2) Sigma(nu) over probability densities on the grid.
EquilibriumResult equilibrium_one_matrix(double beta, const Polynomial& V, const Grid& grid,
                                         const EquilibriumOptions& opts = {});

// inf_nu I_beta(nu) (V = x^2/2): closed form 3 beta/8 - (beta/4) log(beta/2),
// attained by the semicircle of variance beta/2.
double equilibrium_inf_I(double beta);

}  // namespace abflow
