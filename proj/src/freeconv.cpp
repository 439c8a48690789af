// SPDX-License-Identifier: Apache-2.0
#include "abflow/freeconv.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

#include "abflow/measures.hpp"
#include "abflow/parallel.hpp"

namespace abflow {

namespace {
std::atomic<int> g_threads{1};
}
int default_threads() { return g_threads.load(); }
void set_default_threads(int t) { g_threads.store(t < 1 ? 1 : t); }

void SubordinationData::validate() const {
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!(v[i] >= 0.0)) throw std::runtime_error("SubordinationData: v < 0");
    for (std::size_t i = 1; i < psi.size(); ++i)
        if (psi[i] < psi[i - 1] - 1e-9)
            throw std::runtime_error("SubordinationData: psi not monotone");
}

namespace {

struct Cells {
    std::vector<double> eL, eR, rho;  // cells with positive density only
};

Cells positive_cells(const GridMeasure& nu) {
    const Grid& g = nu.grid;
    const std::size_t n = g.size();
    std::vector<double> e(n + 1);
    e[0] = g.nodes[0];
    for (std::size_t i = 1; i < n; ++i) e[i] = 0.5 * (g.nodes[i - 1] + g.nodes[i]);
    e[n] = g.nodes[n - 1];
    Cells c;
    for (std::size_t i = 0; i < n; ++i) {
        if (nu.density[i] > 0.0) {
            c.eL.push_back(e[i]);
            c.eR.push_back(e[i + 1]);
            c.rho.push_back(nu.density[i]);
        }
    }
    return c;
}

// int dnu / ((u-y)^2 + v^2), exact per cell (v > 0).
double stieltjes_abs2(const Cells& c, double u, double v) {
    double s = 0.0;
    for (std::size_t j = 0; j < c.rho.size(); ++j)
        s += c.rho[j] * (std::atan((u - c.eL[j]) / v) - std::atan((u - c.eR[j]) / v)) / v;
    return s;
}

// At v = 0: finite only when u is outside every positive cell.
double stieltjes_abs2_v0(const Cells& c, double u) {
    double s = 0.0;
    for (std::size_t j = 0; j < c.rho.size(); ++j) {
        if (u >= c.eL[j] && u <= c.eR[j]) return 1e300;
        s += c.rho[j] * (1.0 / (u - c.eR[j]) - 1.0 / (u - c.eL[j]));
    }
    return s;
}

// int (u-y) dnu / ((u-y)^2 + v^2), exact per cell.
double stieltjes_real(const Cells& c, double u, double v) {
    double s = 0.0;
    for (std::size_t j = 0; j < c.rho.size(); ++j) {
        const double dl = u - c.eL[j], dr = u - c.eR[j];
        s += 0.5 * c.rho[j] * std::log((dl * dl + v * v) / (dr * dr + v * v));
    }
    return s;
}

// Monotone cubic (Fritsch-Carlson) interpolation of (x_k, y_k) at query q.
class MonotoneCubic {
  public:
    MonotoneCubic(std::vector<double> x, std::vector<double> y)
        : x_(std::move(x)), y_(std::move(y)) {
        const std::size_t n = x_.size();
        m_.assign(n, 0.0);
        if (n < 2) return;
        std::vector<double> d(n - 1);
        for (std::size_t k = 0; k + 1 < n; ++k)
            d[k] = (y_[k + 1] - y_[k]) / std::max(1e-300, x_[k + 1] - x_[k]);
        m_[0] = d[0];
        m_[n - 1] = d[n - 2];
        for (std::size_t k = 1; k + 1 < n; ++k) m_[k] = 0.5 * (d[k - 1] + d[k]);
        for (std::size_t k = 0; k + 1 < n; ++k) {
            if (d[k] == 0.0) {
                m_[k] = m_[k + 1] = 0.0;
            } else {
                const double a = m_[k] / d[k], b = m_[k + 1] / d[k];
                const double s = a * a + b * b;
                if (s > 9.0) {
                    const double t = 3.0 / std::sqrt(s);
                    m_[k] = t * a * d[k];
                    m_[k + 1] = t * b * d[k];
                }
            }
        }
    }
    double operator()(double q) const {
        if (x_.empty()) return 0.0;
        if (q <= x_.front() || q >= x_.back()) return 0.0;
        auto it = std::upper_bound(x_.begin(), x_.end(), q);
        const std::size_t k = std::size_t(it - x_.begin()) - 1;
        const double h = x_[k + 1] - x_[k];
        if (h <= 0.0) return y_[k];
        const double t = (q - x_[k]) / h;
        const double h00 = (1 + 2 * t) * (1 - t) * (1 - t);
        const double h10 = t * (1 - t) * (1 - t);
        const double h01 = t * t * (3 - 2 * t);
        const double h11 = t * t * (t - 1);
        return h00 * y_[k] + h10 * h * m_[k] + h01 * y_[k + 1] + h11 * h * m_[k + 1];
    }

  private:
    std::vector<double> x_, y_, m_;
};

}  // namespace

GridMeasure semicircle_convolve(const GridMeasure& nu, double delta,
                                SubordinationData& sub, const ConvolveOptions& opts) {
    if (!(delta > 0.0)) throw std::invalid_argument("semicircle_convolve: delta must be > 0");
    if (std::abs(nu.mass() - 1.0) > 1e-8)
        throw std::invalid_argument("semicircle_convolve: input not normalized");
    const Cells cells = positive_cells(nu);
    if (cells.rho.empty()) throw std::invalid_argument("semicircle_convolve: zero density");

    const double sd = std::sqrt(delta);
    const double margin = 2.0 * sd + 0.05 * (nu.grid.b() - nu.grid.a()) + 0.05 * sd;
    const double lo = nu.grid.a() - margin, hi = nu.grid.b() + margin;
    const std::size_t nu_n = std::max<std::size_t>(2 * nu.size(), 257);

    sub.delta = delta;
    sub.u_nodes.resize(nu_n);
    sub.v.assign(nu_n, 0.0);
    sub.psi.assign(nu_n, 0.0);
    sub.hilbert.assign(nu_n, 0.0);
    const double du = (hi - lo) / double(nu_n - 1);
    const double cap = 1.0 / delta;

    parallel_for(nu_n, opts.threads, [&](std::size_t k) {
        const double u = lo + du * double(k);
        sub.u_nodes[k] = u;
        double v = 0.0;
        if (stieltjes_abs2_v0(cells, u) > cap) {
            double a = 0.0, b = sd * (1.0 + 1e-12);
            // stieltjes_abs2 is strictly decreasing in v; root is in (0, sqrt(delta)].
            for (int it = 0; it < 80; ++it) {
                const double mid = 0.5 * (a + b);
                if (stieltjes_abs2(cells, u, mid) > cap)
                    a = mid;
                else
                    b = mid;
                if (b - a < opts.v_tol) break;
            }
            v = 0.5 * (a + b);
        }
        sub.v[k] = v;
        const double re = stieltjes_real(cells, u, v);
        sub.psi[k] = u + delta * re;
        sub.hilbert[k] = re;
    });
    sub.validate();

    // Push forward: density at psi(u) is v(u)/(pi*delta); re-grid monotone-cubically.
    std::vector<double> xs = sub.psi, ys(nu_n);
    for (std::size_t k = 0; k < nu_n; ++k) ys[k] = sub.v[k] / (M_PI * delta);
    for (std::size_t k = 1; k < nu_n; ++k)
        if (xs[k] <= xs[k - 1]) xs[k] = xs[k - 1] + 1e-14;  // guard exact ties
    MonotoneCubic interp(std::move(xs), std::move(ys));

    const std::size_t out_n = opts.out_nodes ? opts.out_nodes : std::max<std::size_t>(nu.size(), 513);
    Grid og = Grid::uniform(lo, hi, out_n);
    std::vector<double> rho(out_n);
    for (std::size_t i = 0; i < out_n; ++i) rho[i] = std::max(0.0, interp(og.nodes[i]));
    double raw_mass = 0.0, raw_mean = 0.0;
    for (std::size_t i = 0; i < out_n; ++i) {
        raw_mass += og.weights[i] * rho[i];
        raw_mean += og.weights[i] * rho[i] * og.nodes[i];
    }
    sub.mass_drift = std::abs(raw_mass - 1.0);
    sub.mean_drift = std::abs(raw_mean / raw_mass - nu.mean());
    return GridMeasure(std::move(og), std::move(rho));
}

GridMeasure semicircle_convolve(const GridMeasure& nu, double delta, const ConvolveOptions& opts) {
    SubordinationData sub;
    return semicircle_convolve(nu, delta, sub, opts);
}

GridMeasure bridge_marginal(const GridMeasure& nu_t, double t, const ConvolveOptions& opts) {
    if (!(t > 0.0 && t < 1.0))
        throw std::invalid_argument("bridge_marginal: t must lie in (0,1)");
    return semicircle_convolve(nu_t, t * (1.0 - t), opts);
}

BridgeBoundReport check_bridge_bounds(const GridMeasure& rho_t, double t, double tol) {
    if (!(t > 0.0 && t < 1.0))
        throw std::invalid_argument("check_bridge_bounds: t must lie in (0,1)");
    BridgeBoundReport rep;
    rep.note = "bound checked in the form pi^2 rho^2 + H^2 <= 1/(t(1-t))";
    const double delta = t * (1.0 - t);
    const std::vector<double> H = hilbert_transform_all(rho_t);
    const double rmax = *std::max_element(rho_t.density.begin(), rho_t.density.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < rho_t.size(); ++i) {
        if (rho_t.density[i] <= 1e-6 * rmax) continue;
        const double r = rho_t.density[i];
        worst = std::max(worst, (M_PI * M_PI * r * r + H[i] * H[i]) * delta);
    }
    rep.max_ratio = worst;
    rep.bound_ok = worst <= 1.0 + tol;

    // Boundary exponent fits and the 1/3-power envelope check.
    const auto& xs = rho_t.grid.nodes;
    std::size_t first = 0, last = rho_t.size() - 1;
    while (first < rho_t.size() && rho_t.density[first] <= 1e-3 * rmax) ++first;
    while (last > 0 && rho_t.density[last] <= 1e-3 * rmax) --last;
    const double width = xs[last] - xs[first];
    const double envC = std::cbrt(3.0 / (4.0 * M_PI * M_PI * M_PI * delta * delta));
    auto fit = [&](bool leftside) {
        const double edge = leftside ? (first > 0 ? xs[first - 1] : xs[first])
                                     : (last + 1 < xs.size() ? xs[last + 1] : xs[last]);
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int n = 0;
        bool env_ok = true;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double d = leftside ? xs[i] - edge : edge - xs[i];
            if (d <= 0.0 || d > 0.12 * width) continue;
            const double r = rho_t.density[i];
            if (r <= 1e-6 * rmax) continue;
            const double lx = std::log(d), ly = std::log(r);
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
            ++n;
            if (r > 1.10 * envC * std::cbrt(d)) env_ok = false;
        }
        const double slope = n >= 2 ? (double(n) * sxy - sx * sy) / (double(n) * sxx - sx * sx) : 0.0;
        return std::pair<double, bool>(slope, env_ok);
    };
    auto [sl, okl] = fit(true);
    auto [sr, okr] = fit(false);
    rep.edge_exponent_left = sl;
    rep.edge_exponent_right = sr;
    rep.envelope_ok = okl && okr;
    return rep;
}

}  // namespace abflow
