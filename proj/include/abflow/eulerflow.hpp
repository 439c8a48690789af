// SPDX-License-Identifier: Apache-2.0
// Space-time bridge solver: minimizes the kinetic + cubic action over
// mass-conserving flows between two fixed densities, with a concave dual
// certificate for the optimal value.
#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "abflow/grid.hpp"

namespace abflow {

// Staggered space-time grid: nx space cells on [a,b], nt time steps on [0,1].
// Densities live on cell centers at time nodes; fluxes on cell faces at time
// midpoints.
struct SpaceTimeGrid {
    std::size_t nx = 0;
    std::size_t nt = 0;
    double a = 0.0;
    double b = 1.0;

    double h() const { return (b - a) / double(nx); }
    double dt() const { return 1.0 / double(nt); }
    double center(std::size_t i) const { return a + (double(i) + 0.5) * h(); }
    double face(std::size_t j) const { return a + double(j) * h(); }
    double tnode(std::size_t k) const { return double(k) * dt(); }
    double tmid(std::size_t k) const { return (double(k) + 0.5) * dt(); }
    void validate() const;
};

// rho is (nt+1) x nx (time node k, cell i), flux m is nt x (nx+1)
// (time midpoint k, face j); both row-major.
struct FlowField {
    SpaceTimeGrid g;
    std::vector<double> rho;
    std::vector<double> m;

    double& r(std::size_t k, std::size_t i) { return rho[k * g.nx + i]; }
    double r(std::size_t k, std::size_t i) const { return rho[k * g.nx + i]; }
    double& f(std::size_t k, std::size_t j) { return m[k * (g.nx + 1) + j]; }
    double f(std::size_t k, std::size_t j) const { return m[k * (g.nx + 1) + j]; }

    static FlowField zeros(const SpaceTimeGrid& g);
    // Kinetic + cubic action evaluated on time-midpoint / cell-center averages.
    double action() const;
    // Max continuity-equation residual over cells.
    double continuity_residual() const;
    // Density at time node k as a measure on the cell-center grid.
    GridMeasure slice(std::size_t k) const;
    // Flux averaged onto (time node, cell center) for inspection/CSV.
    double m_at(std::size_t k, std::size_t i) const;
    // CSV rows "t,x,rho,m" over time nodes x cell centers.
    void save_csv(const std::string& path) const;
    void validate() const;  // rho >= 0, unit mass per slice, zero boundary flux
};

// Dual certificate: a space-time potential nu on (nt+1) x nx plus a per-column
// constant c and per-row seed beta0 parametrize a feasible point of the
// concave dual; value() is a true lower bound for the optimal action.
struct DualPotential {
    SpaceTimeGrid g;
    std::vector<double> nu;     // (nt+1) * nx
    std::vector<double> c;      // nx
    std::vector<double> beta0;  // nt

    double& n(std::size_t k, std::size_t i) { return nu[k * g.nx + i]; }
    double n(std::size_t k, std::size_t i) const { return nu[k * g.nx + i]; }

    static DualPotential zeros(const SpaceTimeGrid& g);
    // Per-cell values of dphi/dt + (dphi/dx)^2 / 4 (nt x nx, row-major).
    std::vector<double> conjugate_argument() const;
    // Lower bound on the action for endpoint cell densities mu0, mu1.
    double value(const std::vector<double>& mu0, const std::vector<double>& mu1) const;
    void gradient(const std::vector<double>& mu0, const std::vector<double>& mu1,
                  std::vector<double>& grad,
                  double feas_weight = 0.0) const;  // packed d/d(nu, c, beta0)
    void validate(double tol = 1e-6) const;  // conjugate argument >= -tol
};

struct DualCertificate {
    DualPotential phi;
    double value = 0.0;         // certified lower bound on the action
    double gap = 0.0;           // flow.action() - value  (>= 0)
    double err_velocity = 0.0;  // integral (u - dphi/dx / 2)^2 rho dx dt
    double err_density = 0.0;   // (pi^2/3) integral (rho - rho_eps)^2 (rho + 2 rho_eps)
};

// Maximize the dual for the endpoints carried by the flow (its first and last
// density slices). warm, if given, seeds the ascent.
DualCertificate dual_certificate(const FlowField& flow, std::size_t iters = 3000,
                                 const DualPotential* warm = nullptr);

struct BridgeOptions {
    double beta = 2.0;
    std::size_t max_iter = 50000;   // primal-dual sweeps
    double gap_tol = 1e-3;          // stop when (action - certificate)/action <= this
    std::size_t cert_iter = 6000;   // quasi-Newton ascent steps per certificate attempt
    std::size_t check_every = 500;
    bool verbose = false;
};

struct BridgeResult {
    double beta = 2.0;
    double action = 0.0;   // minimal kinetic + cubic action
    double J = 0.0;        // rate value (beta/4) * (action - Sigma1 + Sigma0)
    double I = 0.0;        // coupling-integral value derived from the action
    double gap = 0.0;      // relative certified gap (action - dual) / action
    std::size_t iterations = 0;
    std::map<std::string, double> residuals;
    FlowField flow;
    DualPotential dual;

    std::string to_json() const;  // scalar summary (J, I, gap, iterations, residuals)
};

// Solve the bridge between mu0 and mu1 discretized on g's cell centers.
// warm, if given, seeds the iteration (its grid must equal g).
// Throws std::runtime_error with the gap history if the certificate never
// reaches gap_tol within max_iter sweeps.
BridgeResult solve_bridge(const GridMeasure& mu0, const GridMeasure& mu1,
                          const SpaceTimeGrid& g, const BridgeOptions& opts = {},
                          const FlowField* warm = nullptr,
                          const DualPotential* warm_dual = nullptr);

// Resample a node-based measure onto cell-center densities of g (CDF
// differences divided by h, then normalized).
std::vector<double> resample_to_cells(const GridMeasure& mu, const SpaceTimeGrid& g);

// Max weak-form residual of 2u df/dt + (u^2 - pi^2 rho^2) df/dx against a
// family of compactly supported space-time bumps inside {rho > eps * max rho}.
double euler_residual(const FlowField& flow, double eps_rel = 1e-3);

// Max deviation of the complex field u + i pi rho along straight
// characteristics between two interior time slices, sampled inside the
// window [xlo, xhi] (xlo >= xhi selects a central window automatically).
double characteristics_max_error(const FlowField& flow, double xlo = 1.0, double xhi = -1.0);

namespace detail {
// Orthogonal projection onto the continuity-constraint affine space with
// fixed endpoint densities and zero boundary flux (in-place on flow).
void project_continuity(FlowField& flow, const std::vector<double>& mu0,
                        const std::vector<double>& mu1);
// Per-cell proximal map of g*(w^2/r + (pi^2/3) r^3) at (qr, qw).
void prox_cell(double qr, double qw, double g, double& r, double& w);
}  // namespace detail

}  // namespace abflow
