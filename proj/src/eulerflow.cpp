// SPDX-License-Identifier: Apache-2.0
#include "abflow/eulerflow.hpp"

#include <fftw3.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <deque>
#include <limits>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include "abflow/measures.hpp"

namespace abflow {

namespace {
constexpr double kCubic = M_PI * M_PI / 3.0;

double kinetic_cell(double r, double w) {
    // Floor the density at the convergence slack so the dust left in vacuum
    // cells by the projection (|w| ~ 1e-7) cannot blow the quotient up; the
    // bias on genuine support cells is far below every reported tolerance.
    return w * w / std::max(r, 1e-9);
}
}  // namespace

void SpaceTimeGrid::validate() const {
    if (nx < 4 || nt < 3 || !(b > a))
        throw std::invalid_argument("SpaceTimeGrid: need nx >= 4, nt >= 3, b > a");
}

FlowField FlowField::zeros(const SpaceTimeGrid& g_) {
    g_.validate();
    FlowField f;
    f.g = g_;
    f.rho.assign((g_.nt + 1) * g_.nx, 0.0);
    f.m.assign(g_.nt * (g_.nx + 1), 0.0);
    return f;
}

double FlowField::action() const {
    const std::size_t nx = g.nx, nt = g.nt;
    const double cellw = g.h() * g.dt();
    double s = 0.0;
    for (std::size_t k = 0; k < nt; ++k)
        for (std::size_t i = 0; i < nx; ++i) {
            const double rc = std::max(0.0, 0.5 * (r(k, i) + r(k + 1, i)));
            const double wc = 0.5 * (f(k, i) + f(k, i + 1));
            s += cellw * (kinetic_cell(rc, wc) + kCubic * rc * rc * rc);
        }
    return s;
}

double FlowField::continuity_residual() const {
    const double dt = g.dt(), h = g.h();
    double worst = 0.0;
    for (std::size_t k = 0; k < g.nt; ++k)
        for (std::size_t i = 0; i < g.nx; ++i)
            worst = std::max(worst, std::abs((r(k + 1, i) - r(k, i)) / dt +
                                             (f(k, i + 1) - f(k, i)) / h));
    return worst;
}

GridMeasure FlowField::slice(std::size_t k) const {
    Grid cg = Grid::uniform(g.center(0), g.center(g.nx - 1), g.nx);
    std::vector<double> d(g.nx);
    for (std::size_t i = 0; i < g.nx; ++i) d[i] = std::max(0.0, r(k, i));
    return GridMeasure(std::move(cg), std::move(d));
}

double FlowField::m_at(std::size_t k, std::size_t i) const {
    const auto mid = [&](std::size_t kk) { return 0.5 * (f(kk, i) + f(kk, i + 1)); };
    if (k == 0) return mid(0);
    if (k == g.nt) return mid(g.nt - 1);
    return 0.5 * (mid(k - 1) + mid(k));
}

void FlowField::save_csv(const std::string& path) const {
    std::FILE* fp = std::fopen(path.c_str(), "w");
    if (!fp) throw std::runtime_error("FlowField::save_csv: cannot open " + path);
    std::fprintf(fp, "t,x,rho,m\n");
    for (std::size_t k = 0; k <= g.nt; ++k)
        for (std::size_t i = 0; i < g.nx; ++i)
            std::fprintf(fp, "%.17g,%.17g,%.17g,%.17g\n", g.tnode(k), g.center(i), r(k, i),
                         m_at(k, i));
    std::fclose(fp);
}

void FlowField::validate() const {
    g.validate();
    if (rho.size() != (g.nt + 1) * g.nx || m.size() != g.nt * (g.nx + 1))
        throw std::invalid_argument("FlowField: array shape mismatch");
    const double h = g.h();
    for (std::size_t k = 0; k <= g.nt; ++k) {
        double mass = 0.0;
        for (std::size_t i = 0; i < g.nx; ++i) {
            if (!(r(k, i) >= -1e-6)) throw std::invalid_argument("FlowField: negative density");
            mass += h * r(k, i);
        }
        if (std::abs(mass - 1.0) > 1e-6)
            throw std::invalid_argument("FlowField: slice mass != 1");
    }
    for (std::size_t k = 0; k < g.nt; ++k)
        if (f(k, 0) != 0.0 || f(k, g.nx) != 0.0)
            throw std::invalid_argument("FlowField: nonzero boundary flux");
}

// ---------------------------------------------------------------------------
// Projection onto the continuity constraints via a DCT-diagonalized normal
// equation: the constraint normal matrix is the sum of Neumann Laplacians in
// t (from interior density nodes) and x (from interior faces).
// ---------------------------------------------------------------------------

namespace {

class DctSolver {
  public:
    DctSolver(std::size_t nt, std::size_t nx) : nt_(nt), nx_(nx), buf_(nt * nx) {
        std::lock_guard<std::mutex> lk(plan_mutex());
        fwd_ = fftw_plan_r2r_2d(int(nt), int(nx), buf_.data(), buf_.data(), FFTW_REDFT10,
                                FFTW_REDFT10, FFTW_ESTIMATE);
        bwd_ = fftw_plan_r2r_2d(int(nt), int(nx), buf_.data(), buf_.data(), FFTW_REDFT01,
                                FFTW_REDFT01, FFTW_ESTIMATE);
        lt_.resize(nt);
        lx_.resize(nx);
        for (std::size_t j = 0; j < nt; ++j) {
            const double s = std::sin(0.5 * M_PI * double(j) / double(nt));
            lt_[j] = 4.0 * s * s;
        }
        for (std::size_t j = 0; j < nx; ++j) {
            const double s = std::sin(0.5 * M_PI * double(j) / double(nx));
            lx_[j] = 4.0 * s * s;
        }
    }
    ~DctSolver() {
        std::lock_guard<std::mutex> lk(plan_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
    }
    DctSolver(const DctSolver&) = delete;

    // Solve (L_t/dt^2 + L_x/h^2) lambda = res with the mean mode removed.
    void solve(std::vector<double>& res, double dt, double h) {
        std::lock_guard<std::mutex> lk(use_mutex_);
        std::copy(res.begin(), res.end(), buf_.begin());
        fftw_execute(fwd_);
        const double idt2 = 1.0 / (dt * dt), ih2 = 1.0 / (h * h);
        for (std::size_t j = 0; j < nt_; ++j)
            for (std::size_t i = 0; i < nx_; ++i) {
                const double ev = lt_[j] * idt2 + lx_[i] * ih2;
                double& c = buf_[j * nx_ + i];
                c = (ev > 0.0) ? c / ev : 0.0;
            }
        fftw_execute(bwd_);
        const double scale = 1.0 / (4.0 * double(nt_) * double(nx_));
        for (std::size_t j = 0; j < res.size(); ++j) res[j] = buf_[j] * scale;
    }

    static std::mutex& plan_mutex() {
        static std::mutex m;
        return m;
    }

  private:
    std::size_t nt_, nx_;
    std::vector<double> buf_, lt_, lx_;
    fftw_plan fwd_, bwd_;
    std::mutex use_mutex_;
};

DctSolver& dct_solver(std::size_t nt, std::size_t nx) {
    static std::mutex m;
    static std::vector<std::unique_ptr<DctSolver>> cache;
    static std::vector<std::pair<std::size_t, std::size_t>> keys;
    std::lock_guard<std::mutex> lk(m);
    for (std::size_t i = 0; i < keys.size(); ++i)
        if (keys[i] == std::make_pair(nt, nx)) return *cache[i];
    keys.emplace_back(nt, nx);
    cache.emplace_back(std::make_unique<DctSolver>(nt, nx));
    return *cache.back();
}

}  // namespace

namespace detail {

void project_continuity(FlowField& flow, const std::vector<double>& mu0,
                        const std::vector<double>& mu1) {
    const std::size_t nx = flow.g.nx, nt = flow.g.nt;
    if (mu0.size() != nx || mu1.size() != nx)
        throw std::invalid_argument("project_continuity: endpoint size mismatch");
    const double dt = flow.g.dt(), h = flow.g.h();
    for (std::size_t i = 0; i < nx; ++i) {
        flow.r(0, i) = mu0[i];
        flow.r(nt, i) = mu1[i];
    }
    for (std::size_t k = 0; k < nt; ++k) {
        flow.f(k, 0) = 0.0;
        flow.f(k, nx) = 0.0;
    }
    std::vector<double> res(nt * nx);
    for (std::size_t k = 0; k < nt; ++k)
        for (std::size_t i = 0; i < nx; ++i)
            res[k * nx + i] = (flow.r(k + 1, i) - flow.r(k, i)) / dt +
                              (flow.f(k, i + 1) - flow.f(k, i)) / h;
    dct_solver(nt, nx).solve(res, dt, h);
    // res now holds the multiplier lambda; subtract its adjoint image.
    for (std::size_t k = 1; k < nt; ++k)
        for (std::size_t i = 0; i < nx; ++i)
            flow.r(k, i) -= (res[(k - 1) * nx + i] - res[k * nx + i]) / dt;
    for (std::size_t k = 0; k < nt; ++k)
        for (std::size_t j = 1; j < nx; ++j)
            flow.f(k, j) -= (res[k * nx + j - 1] - res[k * nx + j]) / h;
}

void prox_cell(double qr, double qw, double g, double& r, double& w) {
    // argmin over r >= 0, w of (r-qr)^2/2 + (w-qw)^2/2 + g (w^2/r + c r^3).
    const double c = kCubic;
    if (!(g > 0.0)) throw std::invalid_argument("prox_cell: g must be positive");
    auto fval = [&](double rr) {
        const double d = rr + 2.0 * g;
        return (rr - qr) - g * qw * qw / (d * d) + 3.0 * g * c * rr * rr;
    };
    if (fval(0.0) >= 0.0) {
        r = 0.0;
        w = 0.0;
        return;
    }
    double lo = 0.0, hi = std::max(qr, 0.0) + 1e-3;
    while (fval(hi) < 0.0) hi *= 2.0;
    double rr = 0.5 * (lo + hi);
    for (int it = 0; it < 60; ++it) {
        const double fv = fval(rr);
        if (fv > 0.0)
            hi = rr;
        else
            lo = rr;
        const double d = rr + 2.0 * g;
        const double fp = 1.0 + 2.0 * g * qw * qw / (d * d * d) + 6.0 * g * c * rr;
        double next = rr - fv / fp;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        const bool tight = std::abs(next - rr) < 1e-12 * (1.0 + rr);
        rr = next;
        if (tight) break;
    }
    r = rr;
    w = qw * rr / (rr + 2.0 * g);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dual certificate
// ---------------------------------------------------------------------------

DualPotential DualPotential::zeros(const SpaceTimeGrid& g_) {
    g_.validate();
    DualPotential d;
    d.g = g_;
    d.nu.assign((g_.nt + 1) * g_.nx, 0.0);
    d.c.assign(g_.nx, 0.0);
    d.beta0.assign(g_.nt, 0.0);
    return d;
}

namespace {

// Forward pass shared by value/gradient: per-cell time-derivative a and
// space-derivative b of the potential.
void dual_forward(const DualPotential& th, std::vector<double>& a, std::vector<double>& b) {
    const std::size_t nx = th.g.nx, nt = th.g.nt;
    const double dt = th.g.dt(), h = th.g.h();
    a.resize(nt * nx);
    b.resize(nt * nx);
    for (std::size_t k = 0; k < nt; ++k) {
        for (std::size_t i = 0; i < nx; ++i)
            a[k * nx + i] = (th.n(k + 1, i) - th.n(k, i)) / dt;
        auto lam = [&](std::size_t i) {
            return 0.5 * (th.n(k, i) + th.n(k + 1, i)) + th.c[i];
        };
        b[k * nx + 0] = th.beta0[k];
        for (std::size_t j = 1; j < nx; ++j)
            b[k * nx + j] = 2.0 * (lam(j) - lam(j - 1)) / h - b[k * nx + j - 1];
    }
}

}  // namespace

std::vector<double> DualPotential::conjugate_argument() const {
    std::vector<double> a, b;
    dual_forward(*this, a, b);
    std::vector<double> s(a.size());
    for (std::size_t q = 0; q < a.size(); ++q) s[q] = a[q] + 0.25 * b[q] * b[q];
    return s;
}

double DualPotential::value(const std::vector<double>& mu0,
                            const std::vector<double>& mu1) const {
    const std::size_t nx = g.nx, nt = g.nt;
    if (mu0.size() != nx || mu1.size() != nx)
        throw std::invalid_argument("DualPotential::value: endpoint size mismatch");
    std::vector<double> a, b;
    dual_forward(*this, a, b);
    const double h = g.h(), cellw = g.h() * g.dt();
    double val = 0.0;
    for (std::size_t i = 0; i < nx; ++i)
        val += h * (mu1[i] * (n(nt, i) + c[i]) - mu0[i] * (n(0, i) + c[i]));
    for (std::size_t q = 0; q < a.size(); ++q) {
        const double s = a[q] + 0.25 * b[q] * b[q];
        if (s > 0.0) val -= cellw * (2.0 / (3.0 * M_PI)) * s * std::sqrt(s);
    }
    return val;
}

void DualPotential::gradient(const std::vector<double>& mu0, const std::vector<double>& mu1,
                             std::vector<double>& grad, double feas_weight) const {
    const std::size_t nx = g.nx, nt = g.nt;
    const double dt = g.dt(), h = g.h(), cellw = g.h() * g.dt();
    std::vector<double> a, b;
    dual_forward(*this, a, b);
    grad.assign(nu.size() + c.size() + beta0.size(), 0.0);
    double* gnu = grad.data();
    double* gc = grad.data() + nu.size();
    double* gb0 = grad.data() + nu.size() + c.size();

    for (std::size_t i = 0; i < nx; ++i) {
        gnu[nt * nx + i] += h * mu1[i];
        gnu[0 * nx + i] -= h * mu0[i];
        gc[i] += h * (mu1[i] - mu0[i]);
    }
    std::vector<double> gb(nx), glam(nx);
    for (std::size_t k = 0; k < nt; ++k) {
        std::fill(glam.begin(), glam.end(), 0.0);
        for (std::size_t j = 0; j < nx; ++j) {
            const std::size_t q = k * nx + j;
            const double s = a[q] + 0.25 * b[q] * b[q];
            double ds = (s > 0.0) ? -cellw * std::sqrt(s) / M_PI : 0.0;
            // Soft feasibility barrier used during the ascent only.
            if (s < 0.0) ds += -2.0 * feas_weight * cellw * s;
            gb[j] = ds * 0.5 * b[q];
            gnu[(k + 1) * nx + j] += ds / dt;
            gnu[k * nx + j] -= ds / dt;
        }
        // Back-substitute the alternating face recursion.
        for (std::size_t j = nx - 1; j >= 1; --j) {
            glam[j] += 2.0 / h * gb[j];
            glam[j - 1] -= 2.0 / h * gb[j];
            gb[j - 1] -= gb[j];
        }
        gb0[k] += gb[0];
        for (std::size_t j = 0; j < nx; ++j) {
            gnu[k * nx + j] += 0.5 * glam[j];
            gnu[(k + 1) * nx + j] += 0.5 * glam[j];
            gc[j] += glam[j];
        }
    }
}

void DualPotential::validate(double tol) const {
    const auto s = conjugate_argument();
    for (double v : s)
        if (v < -tol) throw std::invalid_argument("DualPotential: negative conjugate argument");
}

namespace {

// Evaluator on the packed vector [nu | c | beta0]; no allocation per call.
class DualEval {
  public:
    DualEval(const SpaceTimeGrid& g, const std::vector<double>& mu0,
             const std::vector<double>& mu1, double feas_weight)
        : g_(g), mu0_(mu0), mu1_(mu1), kappa_(feas_weight), gb_(g.nx), glam_(g.nx) {}

    std::size_t dim() const { return (g_.nt + 1) * g_.nx + g_.nx + g_.nt; }

    // value only (used by the line search); grad == nullptr skips the backward pass.
    double operator()(const double* x, double* grad) const {
        const std::size_t nx = g_.nx, nt = g_.nt;
        const double dt = g_.dt(), h = g_.h(), cellw = g_.h() * dt;
        const double* nu = x;
        const double* c = x + (nt + 1) * nx;
        const double* b0 = c + nx;
        double* gnu = nullptr;
        double* gc = nullptr;
        double* gb0 = nullptr;
        if (grad) {
            std::fill(grad, grad + dim(), 0.0);
            gnu = grad;
            gc = grad + (nt + 1) * nx;
            gb0 = gc + nx;
        }
        double val = 0.0;
        for (std::size_t i = 0; i < nx; ++i) {
            val += h * (mu1_[i] * (nu[nt * nx + i] + c[i]) - mu0_[i] * (nu[0 * nx + i] + c[i]));
            if (grad) {
                gnu[nt * nx + i] += h * mu1_[i];
                gnu[0 * nx + i] -= h * mu0_[i];
                gc[i] += h * (mu1_[i] - mu0_[i]);
            }
        }
        for (std::size_t k = 0; k < nt; ++k) {
            const double* n0 = nu + k * nx;
            const double* n1 = nu + (k + 1) * nx;
            double b = b0[k];
            double lam_prev = 0.5 * (n0[0] + n1[0]) + c[0];
            for (std::size_t j = 0; j < nx; ++j) {
                if (j > 0) {
                    const double lam = 0.5 * (n0[j] + n1[j]) + c[j];
                    b = 2.0 * (lam - lam_prev) / h - b;
                    lam_prev = lam;
                }
                const double a = (n1[j] - n0[j]) / dt;
                const double s = a + 0.25 * b * b;
                if (s > 0.0)
                    val -= cellw * (2.0 / (3.0 * M_PI)) * s * std::sqrt(s);
                else
                    val -= kappa_ * cellw * s * s;
                if (grad) {
                    double ds;
                    if (s > 0.0)
                        ds = -cellw * std::sqrt(s) / M_PI;
                    else
                        ds = -2.0 * kappa_ * cellw * s;
                    gb_[j] = ds * 0.5 * b;
                    gnu[(k + 1) * nx + j] += ds / dt;
                    gnu[k * nx + j] -= ds / dt;
                }
            }
            if (grad) {
                std::fill(glam_.begin(), glam_.end(), 0.0);
                for (std::size_t j = nx - 1; j >= 1; --j) {
                    glam_[j] += 2.0 / h * gb_[j];
                    glam_[j - 1] -= 2.0 / h * gb_[j];
                    gb_[j - 1] -= gb_[j];
                }
                gb0[k] += gb_[0];
                for (std::size_t j = 0; j < nx; ++j) {
                    gnu[k * nx + j] += 0.5 * glam_[j];
                    gnu[(k + 1) * nx + j] += 0.5 * glam_[j];
                    gc[j] += glam_[j];
                }
            }
        }
        return val;
    }

  private:
    const SpaceTimeGrid& g_;
    const std::vector<double>& mu0_;
    const std::vector<double>& mu1_;
    double kappa_;
    mutable std::vector<double> gb_, glam_;
};

// Limited-memory quasi-Newton ascent on the (penalized) concave dual value.
void maximize_dual(DualPotential& th, const std::vector<double>& mu0,
                   const std::vector<double>& mu1, std::size_t iters, double feas_weight) {
    const DualEval eval(th.g, mu0, mu1, feas_weight);
    const std::size_t dim = eval.dim();
    auto pack = [&](std::vector<double>& x) {
        x.resize(dim);
        std::copy(th.nu.begin(), th.nu.end(), x.begin());
        std::copy(th.c.begin(), th.c.end(), x.begin() + th.nu.size());
        std::copy(th.beta0.begin(), th.beta0.end(), x.begin() + th.nu.size() + th.c.size());
    };
    auto unpack = [&](const std::vector<double>& x) {
        std::copy(x.begin(), x.begin() + th.nu.size(), th.nu.begin());
        std::copy(x.begin() + th.nu.size(), x.begin() + th.nu.size() + th.c.size(),
                  th.c.begin());
        std::copy(x.begin() + th.nu.size() + th.c.size(), x.end(), th.beta0.begin());
    };
    std::vector<double> x, gradv(dim), xn(dim), gn(dim);
    pack(x);
    double fx = eval(x.data(), gradv.data());

    const std::size_t mem = 30;
    std::deque<std::vector<double>> sk, yk;
    std::deque<double> rhok;
    std::vector<double> q(dim), al(mem);

    double stall_ref = fx;
    for (std::size_t it = 0; it < iters; ++it) {
        // Warm starts are often already converged: stop once 50 iterations
        // gain less than a relative 1e-12.
        if (it % 50 == 0) {
            if (it > 0 && fx - stall_ref < 1e-12 * (1.0 + std::abs(fx))) break;
            stall_ref = fx;
        }
        for (std::size_t j = 0; j < dim; ++j) q[j] = -gradv[j];
        for (std::size_t mi = sk.size(); mi-- > 0;) {
            double d = 0.0;
            for (std::size_t j = 0; j < dim; ++j) d += sk[mi][j] * q[j];
            al[mi] = rhok[mi] * d;
            for (std::size_t j = 0; j < dim; ++j) q[j] -= al[mi] * yk[mi][j];
        }
        double h0 = 1.0;
        if (!sk.empty()) {
            double sy = 0.0, yy = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                sy += sk.back()[j] * yk.back()[j];
                yy += yk.back()[j] * yk.back()[j];
            }
            if (yy > 0.0) h0 = sy / yy;
        }
        for (std::size_t j = 0; j < dim; ++j) q[j] *= h0;
        for (std::size_t mi = 0; mi < sk.size(); ++mi) {
            double d = 0.0;
            for (std::size_t j = 0; j < dim; ++j) d += yk[mi][j] * q[j];
            const double be = rhok[mi] * d;
            for (std::size_t j = 0; j < dim; ++j) q[j] += sk[mi][j] * (al[mi] - be);
        }
        // -q approximates the Newton ascent direction.
        double gq = 0.0, gnorm2 = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            gq += gradv[j] * q[j];
            gnorm2 += gradv[j] * gradv[j];
        }
        if (gnorm2 < 1e-26) break;
        std::vector<double> dir(dim);
        if (gq < 0.0)
            for (std::size_t j = 0; j < dim; ++j) dir[j] = -q[j];
        else
            for (std::size_t j = 0; j < dim; ++j) dir[j] = gradv[j];
        double gd = 0.0;
        for (std::size_t j = 0; j < dim; ++j) gd += gradv[j] * dir[j];

        double step = 1.0;
        bool accepted = false;
        xn.resize(dim);
        for (int bt = 0; bt < 40; ++bt) {
            for (std::size_t j = 0; j < dim; ++j) xn[j] = x[j] + step * dir[j];
            const double fn = eval(xn.data(), nullptr);
            if (fn >= fx + 1e-4 * step * gd) {
                accepted = true;
                eval(xn.data(), gn.data());
                std::vector<double> s(dim), y(dim);
                double sy = 0.0;
                for (std::size_t j = 0; j < dim; ++j) {
                    s[j] = xn[j] - x[j];
                    y[j] = -(gn[j] - gradv[j]);
                    sy += s[j] * y[j];
                }
                if (sy > 1e-14) {
                    sk.push_back(std::move(s));
                    yk.push_back(std::move(y));
                    rhok.push_back(1.0 / sy);
                    if (sk.size() > mem) {
                        sk.pop_front();
                        yk.pop_front();
                        rhok.pop_front();
                    }
                }
                x = xn;
                fx = fn;
                gradv = gn;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
    }
    unpack(x);
}

std::vector<double> endpoint_cells(const FlowField& flow, std::size_t k) {
    std::vector<double> v(flow.g.nx);
    double mass = 0.0;
    for (std::size_t i = 0; i < flow.g.nx; ++i) {
        v[i] = std::max(0.0, flow.r(k, i));
        mass += v[i] * flow.g.h();
    }
    if (mass <= 0.0) throw std::invalid_argument("dual_certificate: empty endpoint slice");
    for (double& x : v) x /= mass;
    return v;
}

}  // namespace

DualCertificate dual_certificate(const FlowField& flow, std::size_t iters,
                                 const DualPotential* warm) {
    const SpaceTimeGrid& g = flow.g;
    const std::size_t nx = g.nx, nt = g.nt;
    const double dt = g.dt(), cellw = g.h() * g.dt();
    const std::vector<double> mu0 = endpoint_cells(flow, 0);
    const std::vector<double> mu1 = endpoint_cells(flow, nt);

    DualPotential th = DualPotential::zeros(g);
    if (warm && warm->g.nx == nx && warm->g.nt == nt) {
        th = *warm;
    } else {
        // Initialize from the flow: on the support the conjugate pair of
        // (rc, wc) is a = pi^2 rc^2 - u^2, b = 2u with u = wc/rc.
        for (std::size_t k = 0; k < nt; ++k)
            for (std::size_t i = 0; i < nx; ++i) {
                const double rc = std::max(0.0, 0.5 * (flow.r(k, i) + flow.r(k + 1, i)));
                double a = 0.0;
                if (rc > 1e-7) {
                    const double u = 0.5 * (flow.f(k, i) + flow.f(k, i + 1)) / rc;
                    a = M_PI * M_PI * rc * rc - u * u;
                }
                th.n(k + 1, i) = th.n(k, i) + dt * a;
            }
    }
    maximize_dual(th, mu0, mu1, iters, /*feas_weight=*/50.0);

    // Small time-linear ramp so the stored potential is feasible (the ramp
    // only shifts the conjugate argument up uniformly).
    {
        const auto s = th.conjugate_argument();
        const double smin = *std::min_element(s.begin(), s.end());
        if (smin < -1e-9)
            for (std::size_t k = 0; k <= nt; ++k)
                for (std::size_t i = 0; i < nx; ++i) th.n(k, i) += (-smin - 1e-9) * g.tnode(k);
    }

    DualCertificate cert;
    cert.value = th.value(mu0, mu1);
    cert.gap = flow.action() - cert.value;

    // Two-part decomposition of the per-cell conjugate mismatch.
    std::vector<double> a, b;
    dual_forward(th, a, b);
    double ev = 0.0, ed = 0.0;
    for (std::size_t k = 0; k < nt; ++k)
        for (std::size_t i = 0; i < nx; ++i) {
            const std::size_t q = k * nx + i;
            const double rc = std::max(0.0, 0.5 * (flow.r(k, i) + flow.r(k + 1, i)));
            const double wc = 0.5 * (flow.f(k, i) + flow.f(k, i + 1));
            const double u = (rc > 1e-12) ? wc / rc : 0.0;
            const double v = 0.5 * b[q];
            const double s = a[q] + 0.25 * b[q] * b[q];
            const double re = (s > 0.0) ? std::sqrt(s) / M_PI : 0.0;
            ev += cellw * (u - v) * (u - v) * rc;
            ed += cellw * kCubic * (rc - re) * (rc - re) * (rc + 2.0 * re);
        }
    cert.err_velocity = ev;
    cert.err_density = ed;
    cert.phi = std::move(th);
    return cert;
}

// ---------------------------------------------------------------------------
// Bridge solver
// ---------------------------------------------------------------------------

std::vector<double> resample_to_cells(const GridMeasure& mu, const SpaceTimeGrid& g) {
    const std::vector<double> F = mu.cdf();
    auto cdf_at = [&](double x) {
        if (x <= mu.grid.a()) return 0.0;
        if (x >= mu.grid.b()) return F.back();
        auto it = std::upper_bound(mu.grid.nodes.begin(), mu.grid.nodes.end(), x);
        const std::size_t k = std::size_t(it - mu.grid.nodes.begin()) - 1;
        const double t = (x - mu.grid.nodes[k]) / (mu.grid.nodes[k + 1] - mu.grid.nodes[k]);
        return (1 - t) * F[k] + t * F[k + 1];
    };
    const double h = g.h();
    std::vector<double> out(g.nx);
    double mass = 0.0;
    for (std::size_t i = 0; i < g.nx; ++i) {
        out[i] = std::max(0.0, cdf_at(g.face(i + 1)) - cdf_at(g.face(i))) / h;
        mass += out[i] * h;
    }
    if (mass < 0.999)
        throw std::invalid_argument("solve_bridge: span too small for the endpoint measure");
    for (double& v : out) v /= mass;
    if (out.front() * h > 1e-10 || out.back() * h > 1e-10)
        throw std::invalid_argument("solve_bridge: span too small (endpoint mass at boundary)");
    return out;
}

BridgeResult solve_bridge(const GridMeasure& mu0m, const GridMeasure& mu1m,
                          const SpaceTimeGrid& g, const BridgeOptions& opts,
                          const FlowField* warm, const DualPotential* warm_dual) {
    g.validate();
    const std::size_t nx = g.nx, nt = g.nt;
    const double dt = g.dt();
    const double gam = g.h() * dt;
    const std::vector<double> mu0 = resample_to_cells(mu0m, g);
    const std::vector<double> mu1 = resample_to_cells(mu1m, g);

    FlowField U = FlowField::zeros(g);
    if (warm) {
        if (warm->g.nx != nx || warm->g.nt != nt)
            throw std::invalid_argument("solve_bridge: warm start grid mismatch");
        U = *warm;
    } else {
        for (std::size_t k = 0; k <= nt; ++k) {
            const double t = g.tnode(k);
            for (std::size_t i = 0; i < nx; ++i) U.r(k, i) = (1 - t) * mu0[i] + t * mu1[i];
        }
    }
    detail::project_continuity(U, mu0, mu1);

    std::vector<double> pr(nt * nx, 0.0), pw(nt * nx, 0.0);
    FlowField Uold = U;
    const double tau = 0.99, sig = 0.99;
    std::size_t done = opts.max_iter;
    double S = U.action(), S_prev = std::numeric_limits<double>::infinity();
    double mono_violation = 0.0;
    std::vector<double> gap_history;
    DualPotential th = DualPotential::zeros(g);
    bool have_cert = false;
    if (warm_dual && warm_dual->g.nx == nx && warm_dual->g.nt == nt) {
        th = *warm_dual;
        have_cert = true;
    }
    DualCertificate cert;
    bool converged = false;
    std::size_t last_attempt = 0;
    std::size_t attempts = 0;

    for (std::size_t it = 0; it < opts.max_iter; ++it) {
        Uold = U;
        // Primal step: U -= tau * I^T P, then project.
        for (std::size_t k = 0; k <= nt; ++k)
            for (std::size_t i = 0; i < nx; ++i) {
                double acc = 0.0;
                if (k > 0) acc += 0.5 * pr[(k - 1) * nx + i];
                if (k < nt) acc += 0.5 * pr[k * nx + i];
                U.r(k, i) -= tau * acc;
            }
        for (std::size_t k = 0; k < nt; ++k)
            for (std::size_t j = 0; j <= nx; ++j) {
                double acc = 0.0;
                if (j > 0) acc += 0.5 * pw[k * nx + j - 1];
                if (j < nx) acc += 0.5 * pw[k * nx + j];
                U.f(k, j) -= tau * acc;
            }
        detail::project_continuity(U, mu0, mu1);
        // Dual step on the extrapolated averages.
        for (std::size_t k = 0; k < nt; ++k)
            for (std::size_t i = 0; i < nx; ++i) {
                const double rc = 0.5 * ((2 * U.r(k, i) - Uold.r(k, i)) +
                                         (2 * U.r(k + 1, i) - Uold.r(k + 1, i)));
                const double wc = 0.5 * ((2 * U.f(k, i) - Uold.f(k, i)) +
                                         (2 * U.f(k, i + 1) - Uold.f(k, i + 1)));
                const double qr = pr[k * nx + i] + sig * rc;
                const double qw = pw[k * nx + i] + sig * wc;
                double r, w;
                detail::prox_cell(qr / sig, qw / sig, gam / sig, r, w);
                pr[k * nx + i] = qr - sig * r;
                pw[k * nx + i] = qw - sig * w;
            }
        if ((it + 1) % opts.check_every == 0) {
            S = U.action();
            if (it + 1 > 4 * opts.check_every)
                mono_violation = std::max(mono_violation, S - S_prev);
            const bool settled = std::abs(S - S_prev) < 1e-6 * std::max(1.0, std::abs(S));
            S_prev = S;
            if (opts.verbose)
                std::fprintf(stderr, "  cp iter %zu action %.9f\n", it + 1, S);
            // Certificates are much costlier than a sweep block; attempt them
            // only once the action has settled, and sparsely after that.
            if (settled && it + 1 >= last_attempt + 4 * opts.check_every) {
                last_attempt = it + 1;
                // Escalate the certificate budget across failed attempts: the
                // flow often settles long before a cheap ascent can certify.
                const std::size_t budget = opts.cert_iter << std::min<std::size_t>(attempts, 3);
                ++attempts;
                cert = dual_certificate(U, budget, have_cert ? &th : nullptr);
                th = cert.phi;
                have_cert = true;
                const double grel = cert.gap / std::max(std::abs(S), 1e-12);
                gap_history.push_back(grel);
                if (opts.verbose)
                    std::fprintf(stderr, "  cert value %.9f rel gap %.3e\n", cert.value, grel);
                if (grel <= opts.gap_tol) {
                    done = it + 1;
                    converged = true;
                    break;
                }
            }
        }
    }
    if (!converged) {
        // One last attempt before giving up.
        cert = dual_certificate(U, 4 * opts.cert_iter, have_cert ? &th : nullptr);
        th = cert.phi;
        S = U.action();
        const double grel = cert.gap / std::max(std::abs(S), 1e-12);
        gap_history.push_back(grel);
        if (grel <= opts.gap_tol) {
            converged = true;
            done = opts.max_iter;
        } else {
            std::ostringstream os;
            os << "solve_bridge: certificate gap " << grel << " above tolerance "
               << opts.gap_tol << " after " << opts.max_iter << " sweeps; gap history:";
            for (double v : gap_history) os << " " << v;
            throw std::runtime_error(os.str());
        }
    }

    BridgeResult res;
    res.beta = opts.beta;
    res.action = S;
    res.flow = std::move(U);
    res.dual = std::move(th);
    res.iterations = done;
    res.gap = cert.gap / std::max(std::abs(S), 1e-12);

    const GridMeasure end0 = res.flow.slice(0);
    const GridMeasure end1 = res.flow.slice(nt);
    const double sig0 = log_energy(end0), sig1 = log_energy(end1);
    const auto mom0 = moments(end0, 2), mom1 = moments(end1, 2);
    const double q = opts.beta / 4.0;
    res.J = q * (S - (sig1 - sig0));
    res.I = -q * S - q * (sig0 + sig1) + 0.5 * mom0[2] + 0.5 * mom1[2] -
            equilibrium_inf_I(opts.beta);
    res.residuals["continuity"] = res.flow.continuity_residual();
    res.residuals["euler_weak"] = euler_residual(res.flow);
    res.residuals["dual_value"] = cert.value;
    res.residuals["err_velocity"] = cert.err_velocity;
    res.residuals["err_density"] = cert.err_density;
    res.residuals["monotonicity_violation"] = mono_violation;
    return res;
}

std::string BridgeResult::to_json() const {
    std::ostringstream os;
    os.precision(12);
    os << "{\"beta\":" << beta << ",\"J\":" << J << ",\"I\":" << I << ",\"gap\":" << gap
       << ",\"action\":" << action << ",\"iterations\":" << iterations << ",\"residuals\":{";
    bool first = true;
    for (const auto& [k, v] : residuals) {
        if (!first) os << ",";
        first = false;
        os << "\"" << k << "\":" << v;
    }
    os << "}}";
    return os.str();
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

double euler_residual(const FlowField& flow, double eps_rel) {
    const std::size_t nx = flow.g.nx, nt = flow.g.nt;
    const double dt = flow.g.dt(), h = flow.g.h();
    const double rmax = *std::max_element(flow.rho.begin(), flow.rho.end());
    const double eps = eps_rel * rmax;

    // Spatial window on which every time slice in [0.15, 0.85] stays above eps.
    double xlo = flow.g.a, xhi = flow.g.b;
    for (std::size_t k = 0; k <= nt; ++k) {
        const double t = flow.g.tnode(k);
        if (t < 0.15 || t > 0.85) continue;
        std::size_t i0 = 0, i1 = nx - 1;
        while (i0 < nx && flow.r(k, i0) <= eps) ++i0;
        while (i1 > 0 && flow.r(k, i1) <= eps) --i1;
        if (i0 >= i1) return std::numeric_limits<double>::quiet_NaN();
        xlo = std::max(xlo, flow.g.center(i0));
        xhi = std::min(xhi, flow.g.center(i1));
    }
    if (xhi - xlo < 4 * h) return std::numeric_limits<double>::quiet_NaN();
    const double shrink = 0.05 * (xhi - xlo);
    xlo += shrink;
    xhi -= shrink;

    auto bump = [](double y) { return (std::abs(y) < 1.0) ? std::exp(-1.0 / (1.0 - y * y)) : 0.0; };
    auto dbump = [&](double y) {
        if (std::abs(y) >= 1.0) return 0.0;
        const double d = 1.0 - y * y;
        return bump(y) * (-2.0 * y / (d * d));
    };

    double worst = 0.0;
    for (int bt = 0; bt < 3; ++bt)
        for (int bx = 0; bx < 3; ++bx) {
            const double t0 = 0.3 + 0.2 * bt, st = 0.15;
            const double x0 = xlo + (0.25 + 0.25 * bx) * (xhi - xlo);
            const double sx = 0.35 * (xhi - xlo);
            double num = 0.0, den = 0.0;
            for (std::size_t k = 0; k < nt; ++k) {
                const double t = flow.g.tmid(k);
                for (std::size_t i = 0; i < nx; ++i) {
                    const double x = flow.g.center(i);
                    const double yt = (t - t0) / st, yx = (x - x0) / sx;
                    if (std::abs(yt) >= 1.0 || std::abs(yx) >= 1.0) continue;
                    const double rc = std::max(0.0, 0.5 * (flow.r(k, i) + flow.r(k + 1, i)));
                    const double wc = 0.5 * (flow.f(k, i) + flow.f(k, i + 1));
                    const double u = (rc > 1e-12) ? wc / rc : 0.0;
                    const double phit = dbump(yt) / st * bump(yx);
                    const double phix = bump(yt) * dbump(yx) / sx;
                    const double flux = u * u - M_PI * M_PI * rc * rc;
                    num += (2.0 * u * phit + flux * phix) * h * dt;
                    den += (std::abs(2.0 * u * phit) + std::abs(flux * phix)) * h * dt;
                }
            }
            if (den > 0.0) worst = std::max(worst, std::abs(num) / den);
        }
    return worst;
}

double characteristics_max_error(const FlowField& flow, double xlo, double xhi) {
    const std::size_t nx = flow.g.nx, nt = flow.g.nt;
    auto field = [&](std::size_t k, std::vector<double>& u, std::vector<double>& r) {
        u.assign(nx, 0.0);
        r.assign(nx, 0.0);
        for (std::size_t i = 0; i < nx; ++i) {
            r[i] = std::max(0.0, 0.5 * (flow.r(k, i) + flow.r(k + 1, i)));
            const double wc = 0.5 * (flow.f(k, i) + flow.f(k, i + 1));
            u[i] = (r[i] > 1e-12) ? wc / r[i] : 0.0;
        }
    };
    // Two interior slices keep the required analytic continuation of the
    // complex field short (distance ~ span * pi * rho off the real axis).
    const std::size_t ka = (2 * nt) / 5, kb = nt - 1 - (2 * nt) / 5;
    std::vector<double> ua, ra, ub, rb;
    field(ka, ua, ra);
    field(kb, ub, rb);
    const double span = flow.g.tmid(kb) - flow.g.tmid(ka);
    const double rmax = *std::max_element(ra.begin(), ra.end());
    if (!(xlo < xhi)) {
        // Central window: middle half of the launch slice's support.
        std::size_t i0 = 0, i1 = nx - 1;
        while (i0 < nx && ra[i0] <= 0.05 * rmax) ++i0;
        while (i1 > 0 && ra[i1] <= 0.05 * rmax) --i1;
        const double w = flow.g.center(i1) - flow.g.center(i0);
        xlo = flow.g.center(i0) + 0.25 * w;
        xhi = flow.g.center(i1) - 0.25 * w;
    }

    // Continue f_b = u_b + i pi rho_b off the real axis with a Chebyshev
    // least-squares fit over the support of the target slice.
    const double rbmax = *std::max_element(rb.begin(), rb.end());
    std::vector<std::size_t> pts;
    for (std::size_t i = 0; i < nx; ++i)
        if (rb[i] > 0.02 * rbmax) pts.push_back(i);
    if (pts.size() < 8) return std::numeric_limits<double>::quiet_NaN();
    const double xc = 0.5 * (flow.g.center(pts.front()) + flow.g.center(pts.back()));
    const double xs = 0.5 * (flow.g.center(pts.back()) - flow.g.center(pts.front()));
    const long deg = std::min<long>(14, long(pts.size()) / 4);
    Eigen::MatrixXd V(long(pts.size()), deg + 1);
    Eigen::MatrixXd rhs(long(pts.size()), 2);
    for (long p = 0; p < long(pts.size()); ++p) {
        const double z = (flow.g.center(pts[std::size_t(p)]) - xc) / xs;
        double tm = 1.0, t = z;
        for (long d = 0; d <= deg; ++d) {
            V(p, d) = tm;
            const double tn = 2.0 * z * t - tm;
            tm = t;
            t = tn;
        }
        rhs(p, 0) = ub[pts[std::size_t(p)]];
        rhs(p, 1) = M_PI * rb[pts[std::size_t(p)]];
    }
    const Eigen::MatrixXd coef = V.colPivHouseholderQr().solve(rhs);
    auto eval_fit = [&](std::complex<double> w) {
        const std::complex<double> z = (w - xc) / xs;
        std::complex<double> tm = 1.0, t = z, acc_re = coef(0, 0), acc_im = coef(0, 1);
        for (long d = 1; d <= deg; ++d) {
            acc_re += coef(d, 0) * t;
            acc_im += coef(d, 1) * t;
            const std::complex<double> tn = 2.0 * z * t - tm;
            tm = t;
            t = tn;
        }
        return acc_re + std::complex<double>(0.0, 1.0) * acc_im;
    };

    double worst = 0.0;
    for (std::size_t i = 0; i < nx; ++i) {
        const double x = flow.g.center(i);
        if (x < xlo || x > xhi || ra[i] < 0.05 * rmax) continue;
        const std::complex<double> f0(ua[i], M_PI * ra[i]);
        const std::complex<double> w = std::complex<double>(x, 0.0) + span * f0;
        worst = std::max(worst, std::abs(eval_fit(w) - f0));
    }
    return worst;
}

}  // namespace abflow
