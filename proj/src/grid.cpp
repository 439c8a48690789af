// SPDX-License-Identifier: Apache-2.0
#include "abflow/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace abflow {

Grid::Grid(std::vector<double> nodes_, std::vector<double> weights_)
    : nodes(std::move(nodes_)), weights(std::move(weights_)) {
    validate();
}

Grid Grid::uniform(double a, double b, std::size_t n) {
    if (!(b > a) || n < 2) throw std::invalid_argument("Grid::uniform: need b > a and n >= 2");
    Grid g;
    g.nodes.resize(n);
    g.weights.resize(n);
    const double h = (b - a) / double(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        g.nodes[i] = a + h * double(i);
        g.weights[i] = (i == 0 || i == n - 1) ? 0.5 * h : h;
    }
    g.nodes.back() = b;
    return g;
}

double Grid::spacing() const {
    if (!is_uniform()) throw std::invalid_argument("Grid::spacing: grid is not uniform");
    return (nodes.back() - nodes.front()) / double(nodes.size() - 1);
}

bool Grid::is_uniform(double rel_tol) const {
    if (nodes.size() < 2) return true;
    const double h = (nodes.back() - nodes.front()) / double(nodes.size() - 1);
    for (std::size_t i = 1; i < nodes.size(); ++i)
        if (std::abs(nodes[i] - nodes[i - 1] - h) > rel_tol * std::abs(h)) return false;
    return true;
}

void Grid::validate() const {
    if (nodes.size() < 2 || nodes.size() != weights.size())
        throw std::invalid_argument("Grid: need >= 2 nodes and matching weights");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!std::isfinite(nodes[i]) || !std::isfinite(weights[i]) || weights[i] <= 0.0)
            throw std::invalid_argument("Grid: nodes finite and weights positive required");
        if (i > 0 && !(nodes[i] > nodes[i - 1]))
            throw std::invalid_argument("Grid: nodes must be strictly increasing");
    }
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    const double span = nodes.back() - nodes.front();
    if (std::abs(wsum - span) > 1e-8 * span)
        throw std::invalid_argument("Grid: weights must integrate constants exactly on the span");
}

GridMeasure::GridMeasure(Grid g, std::vector<double> density_, bool renormalize)
    : grid(std::move(g)), density(std::move(density_)) {
    if (density.size() != grid.size())
        throw std::invalid_argument("GridMeasure: density size mismatch");
    for (double d : density)
        if (!std::isfinite(d)) throw std::invalid_argument("GridMeasure: non-finite density");
    for (double& d : density)
        if (d < 0.0) {
            if (d < -1e-12) throw std::invalid_argument("GridMeasure: negative density");
            d = 0.0;
        }
    if (renormalize) normalize();
}

double GridMeasure::mass() const {
    double s = 0.0;
    for (std::size_t i = 0; i < density.size(); ++i) s += grid.weights[i] * density[i];
    return s;
}

double GridMeasure::mean() const {
    double s = 0.0;
    for (std::size_t i = 0; i < density.size(); ++i)
        s += grid.weights[i] * density[i] * grid.nodes[i];
    return s;
}

void GridMeasure::normalize() {
    const double m = mass();
    if (!(m > 0.0)) throw std::invalid_argument("GridMeasure: zero or negative mass");
    for (double& d : density) d /= m;
}

void GridMeasure::validate() const {
    grid.validate();
    if (density.size() != grid.size())
        throw std::invalid_argument("GridMeasure: density size mismatch");
    for (double d : density)
        if (!std::isfinite(d) || d < 0.0)
            throw std::invalid_argument("GridMeasure: density must be finite and nonnegative");
    if (std::abs(mass() - 1.0) > 1e-10)
        throw std::invalid_argument("GridMeasure: mass must be 1 within 1e-10");
}

double GridMeasure::boundary_mass() const {
    return grid.weights.front() * density.front() + grid.weights.back() * density.back();
}

std::vector<double> GridMeasure::cdf() const {
    // Trapezoid cumulative of the density between nodes.
    std::vector<double> F(grid.size(), 0.0);
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double dx = grid.nodes[i] - grid.nodes[i - 1];
        F[i] = F[i - 1] + 0.5 * dx * (density[i] + density[i - 1]);
    }
    const double tot = F.back();
    if (tot > 0.0)
        for (double& f : F) f /= tot;
    return F;
}

double GridMeasure::quantile(double p) const {
    const std::vector<double> F = cdf();
    p = std::min(1.0, std::max(0.0, p));
    auto it = std::lower_bound(F.begin(), F.end(), p);
    if (it == F.begin()) return grid.nodes.front();
    if (it == F.end()) return grid.nodes.back();
    const std::size_t i = std::size_t(it - F.begin());
    const double f0 = F[i - 1], f1 = F[i];
    if (f1 <= f0) return grid.nodes[i];
    const double t = (p - f0) / (f1 - f0);
    return grid.nodes[i - 1] + t * (grid.nodes[i] - grid.nodes[i - 1]);
}

GridMeasure GridMeasure::semicircle(double variance, const Grid& g, double center) {
    if (!(variance > 0.0)) throw std::invalid_argument("semicircle: variance must be positive");
    const double r = 2.0 * std::sqrt(variance);  // support radius
    // Cell-averaged density (exact mass per trapezoid cell) rather than point
    // samples: keeps moments and log-energy second-order accurate at the
    // square-root support edges.
    auto cdf_sc = [&](double x) {
        const double u = std::min(1.0, std::max(-1.0, (x - center) / r));
        return 0.5 + (u * std::sqrt(1.0 - u * u) + std::asin(u)) / M_PI;
    };
    const std::size_t n = g.size();
    std::vector<double> edges(n + 1);
    edges[0] = g.nodes[0];
    for (std::size_t i = 1; i < n; ++i) edges[i] = 0.5 * (g.nodes[i - 1] + g.nodes[i]);
    edges[n] = g.nodes[n - 1];
    std::vector<double> rho(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        rho[i] = (cdf_sc(edges[i + 1]) - cdf_sc(edges[i])) / g.weights[i];
    return GridMeasure(g, std::move(rho));
}

GridMeasure GridMeasure::bump(double center, double halfwidth, const Grid& g) {
    if (!(halfwidth > 0.0)) throw std::invalid_argument("bump: halfwidth must be positive");
    std::vector<double> rho(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double u = (g.nodes[i] - center) / halfwidth;
        if (std::abs(u) < 1.0) rho[i] = std::exp(-1.0 / (1.0 - u * u));
    }
    return GridMeasure(g, std::move(rho));
}

GridMeasure GridMeasure::uniform_density(double a, double b, const Grid& g) {
    if (!(b > a)) throw std::invalid_argument("uniform_density: need b > a");
    std::vector<double> rho(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i)
        if (g.nodes[i] >= a && g.nodes[i] <= b) rho[i] = 1.0 / (b - a);
    return GridMeasure(g, std::move(rho));
}

void GridMeasure::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_csv: cannot open " + path);
    out << "x,density\n";
    char buf[80];
    for (std::size_t i = 0; i < grid.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", grid.nodes[i], density[i]);
        out << buf;
    }
}

GridMeasure GridMeasure::load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("x,density", 0) != 0)
        throw std::runtime_error("load_csv: expected header 'x,density' in " + path);
    std::vector<double> xs, rho;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string a, b;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b))
            throw std::runtime_error("load_csv: malformed line in " + path);
        xs.push_back(std::stod(a));
        rho.push_back(std::stod(b));
    }
    if (xs.size() < 2) throw std::runtime_error("load_csv: too few rows in " + path);
    // Rebuild trapezoid weights from the (possibly nonuniform) nodes.
    std::vector<double> w(xs.size(), 0.0);
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        const double dx = xs[i + 1] - xs[i];
        w[i] += 0.5 * dx;
        w[i + 1] += 0.5 * dx;
    }
    return GridMeasure(Grid(std::move(xs), std::move(w)), std::move(rho), /*renormalize=*/false);
}

double l1_distance(const GridMeasure& a, const GridMeasure& b) {
    if (a.size() != b.size()) throw std::invalid_argument("l1_distance: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a.grid.weights[i] * std::abs(a.density[i] - b.density[i]);
    return s;
}

namespace {
double interp_cdf(const std::vector<double>& x, const std::vector<double>& F, double t) {
    if (t <= x.front()) return 0.0;
    if (t >= x.back()) return 1.0;
    auto it = std::upper_bound(x.begin(), x.end(), t);
    const std::size_t i = std::size_t(it - x.begin());
    const double u = (t - x[i - 1]) / (x[i] - x[i - 1]);
    return F[i - 1] + u * (F[i] - F[i - 1]);
}
}  // namespace

double wasserstein1(const GridMeasure& a, const GridMeasure& b) {
    const std::vector<double> Fa = a.cdf(), Fb = b.cdf();
    const double lo = std::min(a.grid.a(), b.grid.a());
    const double hi = std::max(a.grid.b(), b.grid.b());
    const std::size_t n = 4096;
    const double h = (hi - lo) / double(n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = lo + (double(i) + 0.5) * h;
        s += std::abs(interp_cdf(a.grid.nodes, Fa, t) - interp_cdf(b.grid.nodes, Fb, t)) * h;
    }
    return s;
}

double wasserstein1_hist(const std::vector<double>& bin_edges,
                         const std::vector<double>& bin_mass,
                         const GridMeasure& b) {
    if (bin_edges.size() != bin_mass.size() + 1 || bin_mass.empty())
        throw std::invalid_argument("wasserstein1_hist: edges must be masses+1");
    double tot = 0.0;
    for (double m : bin_mass) tot += m;
    if (!(tot > 0.0)) throw std::invalid_argument("wasserstein1_hist: zero mass");
    std::vector<double> Fh(bin_edges.size(), 0.0);
    for (std::size_t i = 0; i < bin_mass.size(); ++i) Fh[i + 1] = Fh[i] + bin_mass[i] / tot;
    const std::vector<double> Fb = b.cdf();
    const double lo = std::min(bin_edges.front(), b.grid.a());
    const double hi = std::max(bin_edges.back(), b.grid.b());
    const std::size_t n = 4096;
    const double h = (hi - lo) / double(n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = lo + (double(i) + 0.5) * h;
        s += std::abs(interp_cdf(bin_edges, Fh, t) - interp_cdf(b.grid.nodes, Fb, t)) * h;
    }
    return s;
}

std::vector<double> quantile_points(const GridMeasure& mu, std::size_t n) {
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i)
        q[i] = mu.quantile((double(i) + 0.5) / double(n));
    return q;
}

}  // namespace abflow
