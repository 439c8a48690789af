// SPDX-License-Identifier: Apache-2.0
#include "abflow/measures.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

#include "abflow/kernels.hpp"

namespace abflow {

namespace {

// Cell edges of the trapezoid grid: e_0 = x_0, e_i = (x_{i-1}+x_i)/2, e_n = x_{n-1}.
// Cell i = [e_i, e_{i+1}] has width equal to the trapezoid weight w_i.
std::vector<double> cell_edges(const Grid& g) {
    const std::size_t n = g.size();
    std::vector<double> e(n + 1);
    e[0] = g.nodes[0];
    for (std::size_t i = 1; i < n; ++i) e[i] = 0.5 * (g.nodes[i - 1] + g.nodes[i]);
    e[n] = g.nodes[n - 1];
    return e;
}

// F'' = log|t|; used for exact double-cell integrals of log|x-y|.
inline double Flog2(double t) {
    if (t == 0.0) return 0.0;
    return 0.5 * t * t * std::log(std::abs(t)) - 0.75 * t * t;
}

// F1' = log|t|; used for exact single-cell integrals of log|x-y|.
inline double Flog1(double t) {
    if (t == 0.0) return 0.0;
    return t * std::log(std::abs(t)) - t;
}

void check_measure(const GridMeasure& mu, const char* who) {
    if (mu.size() < 2) throw std::invalid_argument(std::string(who) + ": empty measure");
    for (double d : mu.density)
        if (!std::isfinite(d)) throw std::invalid_argument(std::string(who) + ": NaN density");
    if (std::abs(mu.mass() - 1.0) > 1e-8)
        throw std::invalid_argument(std::string(who) + ": measure not normalized");
}

double interp_density(const GridMeasure& mu, double x) {
    const auto& xs = mu.grid.nodes;
    if (x <= xs.front() || x >= xs.back()) {
        if (x == xs.front()) return mu.density.front();
        if (x == xs.back()) return mu.density.back();
        return 0.0;
    }
    auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const std::size_t i = std::size_t(it - xs.begin());
    const double t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    return (1.0 - t) * mu.density[i - 1] + t * mu.density[i];
}

}  // namespace

double hilbert_transform(const GridMeasure& mu, double x) {
    check_measure(mu, "hilbert_transform");
    const Grid& g = mu.grid;
    const double a = g.a(), b = g.b();
    const double eps = 1e-13 * (b - a);
    if (x <= a || x >= b) {
        // No pole inside the span: plain quadrature (skip near-coincident edge node).
        double s = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) {
            const double d = x - g.nodes[j];
            if (std::abs(d) < eps) continue;
            s += g.weights[j] * mu.density[j] / d;
        }
        return s;
    }
    const double rx = interp_density(mu, x);
    double s = kernels::pv_subtracted_sum(g.nodes.data(), mu.density.data(), g.weights.data(),
                                          g.size(), x, rx, eps);
    // If x sits on a node the skipped term is the removable singularity whose
    // limit is -rho'(x); restore it with a central-difference derivative.
    for (std::size_t j = 1; j + 1 < g.size(); ++j) {
        if (std::abs(x - g.nodes[j]) < eps) {
            const double drho = (mu.density[j + 1] - mu.density[j - 1]) /
                                (g.nodes[j + 1] - g.nodes[j - 1]);
            s -= g.weights[j] * drho;
            break;
        }
    }
    if (rx != 0.0) s += rx * std::log((x - a) / (b - x));
    return s;
}

std::vector<double> hilbert_transform_all(const GridMeasure& mu) {
    check_measure(mu, "hilbert_transform_all");
    const Grid& g = mu.grid;
    const std::size_t n = g.size();
    std::vector<double> out(n);
    kernels::pv_subtracted_all(g.nodes.data(), mu.density.data(), g.weights.data(), n, out.data());
    const double a = g.a(), b = g.b();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = g.nodes[i], rx = mu.density[i];
        if (i > 0 && i + 1 < n) {
            // Removable-singularity value at y = x is -rho'(x).
            const double drho = (mu.density[i + 1] - mu.density[i - 1]) /
                                (g.nodes[i + 1] - g.nodes[i - 1]);
            out[i] -= g.weights[i] * drho;
        }
        if (rx != 0.0) {
            if (i == 0 || i + 1 == n)
                out[i] = 0.0;  // log term diverges; boundary nodes with mass are flagged elsewhere
            else
                out[i] += rx * std::log((x - a) / (b - x));
        }
    }
    return out;
}

double log_energy(const GridMeasure& mu) {
    check_measure(mu, "log_energy");
    const Grid& g = mu.grid;
    const std::size_t n = g.size();
    // Atom detection: one node holding > 50% of the mass with ~zero neighbors.
    for (std::size_t i = 0; i < n; ++i) {
        const double mi = g.weights[i] * mu.density[i];
        if (mi > 0.5) {
            const double nl = i > 0 ? mu.density[i - 1] : 0.0;
            const double nr = i + 1 < n ? mu.density[i + 1] : 0.0;
            if (nl < 1e-12 && nr < 1e-12)
                throw std::invalid_argument("log_energy: Sigma = -inf (atomic input)");
        }
    }
    const std::vector<double> e = cell_edges(g);
    // Sigma = sum_{ij} rho_i rho_j \int\int_{cell_i x cell_j} log|x-y|, exact for
    // the piecewise-constant cell density, via the corner function F with F''=log.
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double ri = mu.density[i];
        if (ri == 0.0) continue;
        // Diagonal term.
        s += ri * ri * 2.0 * Flog2(e[i + 1] - e[i]);
        for (std::size_t j = i + 1; j < n; ++j) {
            const double rj = mu.density[j];
            if (rj == 0.0) continue;
            const double v = Flog2(e[i + 1] - e[j]) - Flog2(e[i + 1] - e[j + 1]) -
                             Flog2(e[i] - e[j]) + Flog2(e[i] - e[j + 1]);
            s += 2.0 * ri * rj * v;
        }
    }
    return s;
}

std::vector<double> log_potential_all(const GridMeasure& mu) {
    check_measure(mu, "log_potential_all");
    const Grid& g = mu.grid;
    const std::size_t n = g.size();
    const std::vector<double> e = cell_edges(g);
    std::vector<double> U(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = g.nodes[i];
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (mu.density[j] == 0.0) continue;
            s += mu.density[j] * (Flog1(x - e[j]) - Flog1(x - e[j + 1]));
        }
        U[i] = s;
    }
    return U;
}

std::vector<double> moments(const GridMeasure& mu, int max_p) {
    check_measure(mu, "moments");
    if (max_p < 0) throw std::invalid_argument("moments: max_p must be >= 0");
    std::vector<double> m(std::size_t(max_p) + 1, 0.0);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double w = mu.grid.weights[i] * mu.density[i];
        double xp = 1.0;
        for (int p = 0; p <= max_p; ++p) {
            m[std::size_t(p)] += w * xp;
            xp *= mu.grid.nodes[i];
        }
    }
    return m;
}

double one_matrix_energy(const GridMeasure& mu, double beta) {
    const double x2 = moments(mu, 2)[2];
    return 0.5 * x2 - 0.5 * beta * log_energy(mu);
}

namespace {

// Cell-cell log kernel Q_ij = (1/(w_i w_j)) \int\int_{cell_i x cell_j} log|x-y|,
// so that Sigma = p^T Q p for mass vector p_i = rho_i w_i.
Eigen::MatrixXd log_kernel_masses(const Grid& g) {
    const std::size_t n = g.size();
    const std::vector<double> e = cell_edges(g);
    Eigen::MatrixXd Q(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const double v = Flog2(e[i + 1] - e[j]) - Flog2(e[i + 1] - e[j + 1]) -
                             Flog2(e[i] - e[j]) + Flog2(e[i] - e[j + 1]);
            const double q = v / (g.weights[i] * g.weights[j]);
            Q(long(i), long(j)) = q;
            Q(long(j), long(i)) = q;
        }
    }
    return Q;
}

}  // namespace

EquilibriumResult equilibrium_one_matrix(double beta, const Polynomial& V, const Grid& grid,
                                         const EquilibriumOptions& opts) {
    if (!(beta >= 0.0)) throw std::invalid_argument("equilibrium_one_matrix: beta must be >= 0");
    const bool quadratic_ok = V.degree() == 2 && V.leading() > 0.0;
    if (!quadratic_ok && !(V.degree() >= 2 && V.degree() % 2 == 0 && V.leading() > 0.0))
        throw std::invalid_argument("equilibrium_one_matrix: V must be even-degree with positive leading coefficient");
    const std::size_t n = grid.size();
    Eigen::VectorXd vpot(n);
    for (std::size_t i = 0; i < n; ++i) vpot[long(i)] = V(grid.nodes[i]);
    const Eigen::MatrixXd Q = log_kernel_masses(grid);

    // Mirror descent on the mass simplex: E(p) = p.v - (beta/2) p^T Q p.
    Eigen::VectorXd p = Eigen::VectorXd::Constant(long(n), 1.0 / double(n));
    // Start from weights proportional to cell width so the init is the uniform density.
    for (std::size_t i = 0; i < n; ++i) p[long(i)] = grid.weights[i];
    p /= p.sum();

    auto energy = [&](const Eigen::VectorXd& q) {
        return q.dot(vpot) - 0.5 * beta * q.dot(Q * q);
    };
    double E = energy(p);
    double eta = 0.5 / std::max(1.0, (vpot.maxCoeff() - vpot.minCoeff()));
    int it = 0;
    for (; it < opts.max_iter; ++it) {
        Eigen::VectorXd gvec = vpot - beta * (Q * p);
        const double gbar = gvec.dot(p);
        // Stationarity check on the support.
        double lo = 1e300, hi = -1e300;
        const double pmax = p.maxCoeff();
        for (std::size_t i = 0; i < n; ++i)
            if (p[long(i)] > 1e-10 * pmax) {
                lo = std::min(lo, gvec[long(i)]);
                hi = std::max(hi, gvec[long(i)]);
            }
        if (hi - lo < std::max(opts.tol, 1e-10)) break;

        Eigen::VectorXd pn = Eigen::VectorXd::Zero(long(n));
        double zmax = -1e300;
        for (std::size_t i = 0; i < n; ++i)
            zmax = std::max(zmax, -eta * (gvec[long(i)] - gbar));
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            pn[long(i)] = p[long(i)] * std::exp(-eta * (gvec[long(i)] - gbar) - zmax);
            sum += pn[long(i)];
        }
        pn /= sum;
        const double En = energy(pn);
        if (En <= E + 1e-14 * std::abs(E)) {
            p = pn;
            E = En;
            eta *= 1.05;
        } else {
            eta *= 0.5;
            if (eta < 1e-12) break;
        }
    }

    // Active-set refinement: solve the stationarity system exactly on the support.
    if (opts.refine) {
        std::vector<int> S;
        const double pmax = p.maxCoeff();
        for (std::size_t i = 0; i < n; ++i)
            if (p[long(i)] > 1e-9 * pmax) S.push_back(int(i));
        for (int pass = 0; pass < 60 && S.size() >= 2; ++pass) {
            const long m = long(S.size());
            Eigen::MatrixXd A(m + 1, m + 1);
            Eigen::VectorXd rhs(m + 1);
            for (long a = 0; a < m; ++a) {
                for (long b2 = 0; b2 < m; ++b2) A(a, b2) = beta * Q(S[std::size_t(a)], S[std::size_t(b2)]);
                A(a, m) = 1.0;
                A(m, a) = 1.0;
                rhs[a] = vpot[S[std::size_t(a)]];
            }
            A(m, m) = 0.0;
            rhs[m] = 1.0;
            Eigen::VectorXd sol = A.fullPivLu().solve(rhs);
            bool dropped = false;
            std::vector<int> S2;
            for (long a = 0; a < m; ++a) {
                if (sol[a] > 0.0)
                    S2.push_back(S[std::size_t(a)]);
                else
                    dropped = true;
            }
            if (dropped) {
                S = std::move(S2);
                continue;
            }
            // Check exterior optimality: g_i >= lambda outside the support.
            const double lambda = sol[m];
            Eigen::VectorXd pfull = Eigen::VectorXd::Zero(long(n));
            for (long a = 0; a < m; ++a) pfull[S[std::size_t(a)]] = sol[a];
            Eigen::VectorXd gvec = vpot - beta * (Q * pfull);
            int worst = -1;
            double viol = 1e-10;
            for (std::size_t i = 0; i < n; ++i) {
                const bool inS = std::binary_search(S.begin(), S.end(), int(i));
                if (!inS && lambda - gvec[long(i)] > viol) {
                    viol = lambda - gvec[long(i)];
                    worst = int(i);
                }
            }
            p = pfull;
            E = energy(p);
            if (worst < 0) break;
            S.push_back(worst);
            std::sort(S.begin(), S.end());
        }
    }

    // Final residual over the support.
    Eigen::VectorXd gvec = vpot - beta * (Q * p);
    double lo = 1e300, hi = -1e300;
    const double pmax = p.maxCoeff();
    for (std::size_t i = 0; i < n; ++i)
        if (p[long(i)] > 1e-9 * pmax) {
            lo = std::min(lo, gvec[long(i)]);
            hi = std::max(hi, gvec[long(i)]);
        }

    std::vector<double> rho(n);
    for (std::size_t i = 0; i < n; ++i) rho[i] = std::max(0.0, p[long(i)]) / grid.weights[i];
    EquilibriumResult res;
    res.minimizer = GridMeasure(grid, std::move(rho));
    res.energy = E;
    res.residual = hi - lo;
    res.iterations = it;
    if (res.residual > std::max(opts.tol * 100.0, 1e-6))
        throw std::runtime_error("equilibrium_one_matrix: no convergence, residual " +
                                 std::to_string(res.residual));
    return res;
}

double equilibrium_inf_I(double beta) {
    // For the quadratic potential x^2/2 the minimizer is the semicircle of
    // variance beta/2 and the minimal energy is available in closed form:
    // sigma^2/2 - (beta/2)(log sigma - 1/4) at sigma^2 = beta/2.
    if (!(beta > 0.0)) throw std::invalid_argument("equilibrium_inf_I: beta must be > 0");
    return 3.0 * beta / 8.0 - (beta / 4.0) * std::log(beta / 2.0);
}

}  // namespace abflow
