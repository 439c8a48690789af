// SPDX-License-Identifier: Apache-2.0
// Grids, grid measures and their CSV round-trip.
#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace abflow {

// 1-D quadrature grid: strictly increasing nodes with positive weights that
// integrate constants exactly over the span (trapezoid by default).
struct Grid {
    std::vector<double> nodes;
    std::vector<double> weights;

    Grid() = default;
    Grid(std::vector<double> nodes_, std::vector<double> weights_);

    // Uniform grid of n nodes on [a, b] with trapezoid weights.
    static Grid uniform(double a, double b, std::size_t n);

    std::size_t size() const { return nodes.size(); }
    double a() const { return nodes.front(); }
    double b() const { return nodes.back(); }
    double spacing() const;  // uniform spacing; throws if the grid is nonuniform
    bool is_uniform(double rel_tol = 1e-9) const;

    void validate() const;  // throws std::invalid_argument on broken invariants
};

// Nonnegative density on a grid with unit mass.
struct GridMeasure {
    Grid grid;
    std::vector<double> density;

    GridMeasure() = default;
    GridMeasure(Grid g, std::vector<double> density_, bool renormalize = true);

    std::size_t size() const { return grid.size(); }
    double mass() const;
    double mean() const;
    void normalize();        // rescale to unit mass
    void validate() const;   // nonnegativity, unit mass within 1e-10, finite entries

    // Mass in the outermost cells; used for "span too small" checks.
    double boundary_mass() const;

    // Cumulative distribution at the grid nodes (piecewise-linear F).
    std::vector<double> cdf() const;
    // Quantile F^{-1}(p) by linear interpolation of the cdf.
    double quantile(double p) const;

    static GridMeasure semicircle(double variance, const Grid& g, double center = 0.0);
    // C-infinity bump ~ exp(-1/(1-((x-c)/w)^2)) on [c-w, c+w].
    static GridMeasure bump(double center, double halfwidth, const Grid& g);
    static GridMeasure uniform_density(double a, double b, const Grid& g);

    // CSV "x,density" with 17 significant digits (exact double round trip).
    void save_csv(const std::string& path) const;
    static GridMeasure load_csv(const std::string& path);
};

// L1 distance between densities sharing a grid.
double l1_distance(const GridMeasure& a, const GridMeasure& b);

// Wasserstein-1 distance = integral |F_a - F_b|; the measures may live on
// different grids (computed on the union of spans with linear-interpolated cdfs).
double wasserstein1(const GridMeasure& a, const GridMeasure& b);

// W1 between a histogram (bin edges/masses) and a grid measure.
double wasserstein1_hist(const std::vector<double>& bin_edges,
                         const std::vector<double>& bin_mass,
                         const GridMeasure& b);

// Quantile discretization x_i = F^{-1}((i - 1/2)/n).
std::vector<double> quantile_points(const GridMeasure& mu, std::size_t n);

}  // namespace abflow
