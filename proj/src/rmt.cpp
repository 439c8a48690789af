// SPDX-License-Identifier: Apache-2.0
#include "abflow/rmt.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <quadmath.h>

#include <Eigen/Dense>

namespace abflow {

namespace {

// Sort and pull apart eigenvalues closer than eps (the Vandermonde in the
// determinantal formula degenerates on collisions).
std::vector<double> desingularized(std::vector<double> v, double eps) {
    std::sort(v.begin(), v.end());
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] - v[i - 1] < eps) v[i] = v[i - 1] + eps;
    return v;
}

// Double-quad ("dd") arithmetic: an unevaluated sum hi + lo of two
// __float128 values (~68 significant decimal digits), built from the
// classical error-free transformations (Knuth two-sum, FMA two-prod).
// The determinantal spherical-integral formula cancels catastrophically --
// at N = 64 the elimination loses more than 30 decimal digits -- so both
// the kernel entries and the LU sweep are carried in dd precision.
struct DD {
    __float128 hi = 0, lo = 0;
};

inline DD quick_two_sum(__float128 a, __float128 b) {  // requires |a| >= |b|
    const __float128 s = a + b;
    return {s, b - (s - a)};
}
inline DD two_sum(__float128 a, __float128 b) {
    const __float128 s = a + b, bb = s - a;
    return {s, (a - (s - bb)) + (b - bb)};
}
inline DD two_prod(__float128 a, __float128 b) {
    const __float128 p = a * b;
    return {p, fmaq(a, b, -p)};
}
inline DD dd_add(DD x, DD y) {
    DD s = two_sum(x.hi, y.hi);
    s.lo += x.lo + y.lo;
    return quick_two_sum(s.hi, s.lo);
}
inline DD dd_neg(DD x) { return {-x.hi, -x.lo}; }
inline DD dd_sub(DD x, DD y) { return dd_add(x, dd_neg(y)); }
inline DD dd_mul(DD x, DD y) {
    DD p = two_prod(x.hi, y.hi);
    p.lo += x.hi * y.lo + x.lo * y.hi;
    return quick_two_sum(p.hi, p.lo);
}
inline DD dd_mul_f(DD x, __float128 c) {
    DD p = two_prod(x.hi, c);
    p.lo += x.lo * c;
    return quick_two_sum(p.hi, p.lo);
}
inline DD dd_div(DD x, DD y) {
    const __float128 q1 = x.hi / y.hi;
    DD r = dd_sub(x, dd_mul_f(y, q1));
    const __float128 q2 = r.hi / y.hi;
    r = dd_sub(r, dd_mul_f(y, q2));
    const __float128 q3 = r.hi / y.hi;
    DD q = quick_two_sum(q1, q2);
    q.lo += q3;
    return quick_two_sum(q.hi, q.lo);
}

// Euler's number split across two quads (both parts are parsed with correct
// rounding, so hi + lo carries ~68 correct digits).
inline DD dd_e() {
    static const DD e = {
        strtoflt128("2.71828182845904523536028747135266231435842187", nullptr),
        strtoflt128("1.83398825226506410712297736767396416190244051e-34", nullptr)};
    return e;
}

// exp(x) in dd precision: split off the nearest integer m (exact in dd),
// sum the Taylor series of the remainder |f| <= 1/2 + eps to below 1e-72,
// and multiply by e^m obtained by binary powering of the split constant.
DD dd_exp(DD x) {
    const long m = (long)lroundq(x.hi);
    DD f = dd_sub(x, DD{(__float128)m, 0});
    DD sum = {1, 0}, term = {1, 0};
    for (int k = 1; k < 60; ++k) {
        term = dd_div(dd_mul(term, f), DD{(__float128)k, 0});
        sum = dd_add(sum, term);
        if (fabsq(term.hi) < 1e-72Q * fabsq(sum.hi)) break;
    }
    DD pw = {1, 0};
    DD base = dd_e();
    unsigned long mm = (m < 0) ? (unsigned long)(-m) : (unsigned long)m;
    while (mm) {
        if (mm & 1) pw = dd_mul(pw, base);
        base = dd_mul(base, base);
        mm >>= 1;
    }
    if (m < 0) pw = dd_div(DD{1, 0}, pw);
    return dd_mul(sum, pw);
}

// log |det M| of a dd-precision matrix by partially pivoted elimination;
// throws if the determinant is not strictly positive.
long double dd_logdet_positive(std::vector<DD>& m, std::size_t n) {
    __float128 logdet = 0;
    int sign = 1;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        __float128 best = fabsq(m[k * n + k].hi);
        for (std::size_t r = k + 1; r < n; ++r) {
            const __float128 v = fabsq(m[r * n + k].hi);
            if (v > best) {
                best = v;
                piv = r;
            }
        }
        if (best == 0) throw std::runtime_error("hciz_exact: singular kernel matrix");
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(m[k * n + j], m[piv * n + j]);
            sign = -sign;
        }
        const DD d = m[k * n + k];
        if (d.hi < 0) sign = -sign;
        logdet += logq(fabsq(d.hi)) + log1pq(d.lo / d.hi);
        for (std::size_t r = k + 1; r < n; ++r) {
            const DD f = dd_div(m[r * n + k], d);
            if (f.hi == 0) continue;
            for (std::size_t j = k + 1; j < n; ++j)
                m[r * n + j] = dd_sub(m[r * n + j], dd_mul(f, m[k * n + j]));
        }
    }
    if (sign <= 0) throw std::runtime_error("hciz_exact: non-positive determinant");
    return static_cast<long double>(logdet);
}


Eigen::MatrixXcd haar_unitary(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXcd z(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            z(i, j) = std::complex<double>(gauss(rng), gauss(rng));
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(z);
    Eigen::MatrixXcd q = qr.householderQ();
    const Eigen::MatrixXcd r = qr.matrixQR().triangularView<Eigen::Upper>();
    // Phase correction: without it Q is not Haar distributed.
    for (std::size_t j = 0; j < n; ++j) {
        const std::complex<double> d = r(j, j);
        q.col(j) *= d / std::abs(d);
    }
    return q;
}

// Hermitian matrix with independent Gaussian entries of variance var / n
// (off-diagonal complex, diagonal real of variance var / n).
Eigen::MatrixXcd wigner(std::size_t n, double var, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double s = std::sqrt(var / double(n));
    Eigen::MatrixXcd h(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        h(i, i) = s * gauss(rng);
        for (std::size_t j = i + 1; j < n; ++j) {
            const std::complex<double> v(gauss(rng) * s / std::sqrt(2.0),
                                         gauss(rng) * s / std::sqrt(2.0));
            h(i, j) = v;
            h(j, i) = std::conj(v);
        }
    }
    return h;
}

// Cached state of one hermitian matrix in the Gibbs chain: the matrix, its
// square, and tr A^k for k = 1..4 so proposal deltas cost O(n).
struct MatState {
    Eigen::MatrixXcd A, A2;
    double t1 = 0, t2 = 0, t3 = 0, t4 = 0;

    void refresh() {
        A2 = A * A;
        t1 = A.trace().real();
        t2 = A2.trace().real();
        t3 = (A2 * A).trace().real();
        t4 = (A2 * A2).trace().real();
    }

    // Deltas of tr A^k for adding delta at (i,j) and conj(delta) at (j,i).
    void offdiag_deltas(std::size_t i, std::size_t j, std::complex<double> delta,
                        double d[5]) const {
        const std::size_t n = A.rows();
        const double ad = std::abs(delta), ad2 = ad * ad;
        std::complex<double> a3ji = 0.0;
        for (std::size_t k = 0; k < n; ++k) a3ji += A2(j, k) * A(k, i);
        const double trAD = 2.0 * std::real(A(j, i) * delta);
        const double trA2D = 2.0 * std::real(A2(j, i) * delta);
        const double trA3D = 2.0 * std::real(a3ji * delta);
        const double aii = std::real(A(i, i)), ajj = std::real(A(j, j));
        d[1] = 0.0;
        d[2] = 2.0 * trAD + 2.0 * ad2;
        d[3] = 3.0 * trA2D + 3.0 * ad2 * (aii + ajj);
        d[4] = 4.0 * trA3D + 4.0 * ad2 * std::real(A2(i, i) + A2(j, j)) +
               2.0 * (2.0 * std::real(delta * delta * A(j, i) * A(j, i)) +
                      2.0 * ad2 * aii * ajj) +
               4.0 * ad2 * trAD + 2.0 * ad2 * ad2;
    }

    void diag_deltas(std::size_t i, double dd, double d[5]) const {
        const std::size_t n = A.rows();
        std::complex<double> a3ii = 0.0;
        for (std::size_t k = 0; k < n; ++k) a3ii += A2(i, k) * A(k, i);
        const double aii = std::real(A(i, i)), a2ii = std::real(A2(i, i));
        d[1] = dd;
        d[2] = 2.0 * aii * dd + dd * dd;
        d[3] = 3.0 * a2ii * dd + 3.0 * aii * dd * dd + dd * dd * dd;
        d[4] = 4.0 * std::real(a3ii) * dd + (4.0 * a2ii + 2.0 * aii * aii) * dd * dd +
               4.0 * aii * dd * dd * dd + dd * dd * dd * dd;
    }

    void apply_offdiag(std::size_t i, std::size_t j, std::complex<double> delta,
                       const double d[5]) {
        const Eigen::VectorXcd ci = A.col(i), cj = A.col(j);
        A2.col(j) += ci * delta;
        A2.col(i) += cj * std::conj(delta);
        A2.row(i) += delta * cj.adjoint();
        A2.row(j) += std::conj(delta) * ci.adjoint();
        const double ad2 = std::norm(delta);
        A2(i, i) += ad2;
        A2(j, j) += ad2;
        A(i, j) += delta;
        A(j, i) += std::conj(delta);
        t1 += d[1];
        t2 += d[2];
        t3 += d[3];
        t4 += d[4];
    }

    void apply_diag(std::size_t i, double dd, const double d[5]) {
        const Eigen::VectorXcd ci = A.col(i);
        A2.col(i) += dd * ci;
        A2.row(i) += dd * ci.adjoint();
        A2(i, i) += dd * dd;
        A(i, i) += dd;
        t1 += d[1];
        t2 += d[2];
        t3 += d[3];
        t4 += d[4];
    }
};

double potential_delta(const Polynomial& P, const double d[5]) {
    double out = 0.0;
    for (std::size_t k = 1; k < P.coeffs.size() && k <= 4; ++k) out += P.coeffs[k] * d[k];
    return out;
}

}  // namespace

double hciz_exact(const std::vector<double>& a_eigs, const std::vector<double>& b_eigs) {
    const std::size_t n = a_eigs.size();
    if (n == 0 || b_eigs.size() != n)
        throw std::invalid_argument("hciz_exact: need equal, nonempty eigenvalue lists");
    const double N = double(n);
    if (n == 1) return a_eigs[0] * b_eigs[0];

    // Center both spectra (exact translation identity) to shrink the dynamic
    // range of the kernel, then pull apart collisions.
    const double abar = std::accumulate(a_eigs.begin(), a_eigs.end(), 0.0) / N;
    const double bbar = std::accumulate(b_eigs.begin(), b_eigs.end(), 0.0) / N;
    std::vector<double> a(a_eigs), b(b_eigs);
    for (double& v : a) v -= abar;
    for (double& v : b) v -= bbar;
    const double eps = 1e-9;
    a = desingularized(std::move(a), eps);
    b = desingularized(std::move(b), eps);

    // Row-shifted kernel exp(N a_i b_j - m_i), dd-precision log-determinant.
    // The exponent N a_i b_j is formed as an error-free dd product so the
    // entries themselves carry ~68 digits; anything coarser feeds rounding
    // noise into the eliminated digits and corrupts the N = 64 rung.
    std::vector<DD> m(n * n);
    long double shift_sum = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        double mi = N * a[i] * b[0];
        for (std::size_t j = 1; j < n; ++j) mi = std::max(mi, N * a[i] * b[j]);
        shift_sum += (long double)mi;
        const DD nai = two_prod((__float128)N, (__float128)a[i]);
        for (std::size_t j = 0; j < n; ++j) {
            const DD ex = dd_sub(dd_mul_f(nai, (__float128)b[j]), DD{(__float128)mi, 0});
            m[i * n + j] = dd_exp(ex);
        }
    }
    const long double logdet = dd_logdet_positive(m, n);

    long double logvan = 0.0L;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            logvan += std::log(std::abs((long double)(a[j] - a[i]))) +
                      std::log(std::abs((long double)(b[j] - b[i])));

    long double logc = 0.0L;
    for (std::size_t p = 1; p < n; ++p) logc += std::lgamma(double(p + 1));
    logc -= 0.5L * N * (N - 1.0L) * std::log((long double)N);

    const long double logI = shift_sum + logdet - logvan + logc;
    return double(logI / (N * N)) + abar * bbar;
}

McEstimate hciz_mc(const std::vector<double>& a_eigs, const std::vector<double>& b_eigs,
                   std::size_t n_samples, std::uint64_t seed) {
    const std::size_t n = a_eigs.size();
    if (n == 0 || b_eigs.size() != n)
        throw std::invalid_argument("hciz_mc: need equal, nonempty eigenvalue lists");
    if (n_samples < 8) throw std::invalid_argument("hciz_mc: need at least 8 samples");
    const double N = double(n);
    std::mt19937_64 rng(seed);

    std::vector<double> logw(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) {
        const Eigen::MatrixXcd u = haar_unitary(n, rng);
        double tr = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                tr += a_eigs[i] * std::norm(u(i, j)) * b_eigs[j];
        logw[s] = N * tr;
    }

    const double mx = *std::max_element(logw.begin(), logw.end());
    double sum = 0.0;
    for (double v : logw) sum += std::exp(v - mx);
    const double inv_n2 = 1.0 / (N * N);
    McEstimate est;
    est.value = (mx + std::log(sum / double(n_samples))) * inv_n2;
    est.n_samples = n_samples;
    est.seed = seed;

    // Jackknife over leave-one-out log-means.
    std::vector<double> theta(n_samples);
    double tbar = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
        const double rest = std::max(sum - std::exp(logw[s] - mx), 1e-300);
        theta[s] = (mx + std::log(rest / double(n_samples - 1))) * inv_n2;
        tbar += theta[s];
    }
    tbar /= double(n_samples);
    double var = 0.0;
    for (double t : theta) var += (t - tbar) * (t - tbar);
    est.stderr_ = std::sqrt(var * double(n_samples - 1) / double(n_samples));
    return est;
}

std::string McEstimate::to_json() const {
    std::ostringstream os;
    os.precision(12);
    os << "{\"value\":" << value << ",\"stderr\":" << stderr_ << ",\"n_samples\":" << n_samples
       << ",\"seed\":" << seed << "}";
    return os.str();
}

GibbsResult gibbs_two_matrix(const Polynomial& P1, const Polynomial& P2,
                             const GibbsOptions& opts) {
    if (opts.beta != 2.0)
        throw std::invalid_argument("gibbs_two_matrix: only the hermitian ensemble (beta=2)");
    if (P1.degree() > 4 || P2.degree() > 4)
        throw std::invalid_argument("gibbs_two_matrix: potentials must have degree <= 4");
    if (opts.n < 2 || opts.n_sweeps <= opts.burnin)
        throw std::invalid_argument("gibbs_two_matrix: bad sweep/burnin setup");
    const std::size_t n = opts.n;
    const double N = double(n);
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    MatState A, B;
    A.A = wigner(n, 0.25, rng);
    B.A = wigner(n, 0.25, rng);
    A.refresh();
    B.refresh();
    double trAB = (A.A * B.A).trace().real();

    double step = (opts.step > 0.0) ? opts.step : 0.6 / std::sqrt(N);
    std::size_t accepted = 0, proposed = 0;
    GibbsResult res;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es;

    for (std::size_t sweep = 0; sweep < opts.n_sweeps; ++sweep) {
        std::size_t acc_sweep = 0, prop_sweep = 0;
        for (int which = 0; which < 2; ++which) {
            MatState& M = (which == 0) ? A : B;
            const MatState& O = (which == 0) ? B : A;
            const Polynomial& P = (which == 0) ? P1 : P2;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i; j < n; ++j) {
                    double d[5] = {0, 0, 0, 0, 0};
                    double dcoup;
                    std::complex<double> delta;
                    double dd = 0.0;
                    if (i == j) {
                        dd = step * gauss(rng);
                        M.diag_deltas(i, dd, d);
                        dcoup = dd * std::real(O.A(i, i));
                    } else {
                        delta = std::complex<double>(gauss(rng), gauss(rng)) * (step / 2.0);
                        M.offdiag_deltas(i, j, delta, d);
                        dcoup = 2.0 * std::real(delta * O.A(j, i));
                    }
                    const double dH = N * (potential_delta(P, d) - opts.coupling * dcoup);
                    ++prop_sweep;
                    if (dH <= 0.0 || unif(rng) < std::exp(-dH)) {
                        ++acc_sweep;
                        if (i == j)
                            M.apply_diag(i, dd, d);
                        else
                            M.apply_offdiag(i, j, delta, d);
                        trAB += dcoup;
                    }
                }
        }
        proposed += prop_sweep;
        accepted += acc_sweep;
        if (sweep < opts.burnin && opts.step <= 0.0) {
            const double rate = double(acc_sweep) / double(prop_sweep);
            step *= (rate > 0.45) ? 1.05 : 0.95;
            step = std::clamp(step, 1e-4, 10.0);
        }
        if ((sweep + 1) % 200 == 0) {
            A.refresh();
            B.refresh();
            trAB = (A.A * B.A).trace().real();
        }
        if (sweep >= opts.burnin && (sweep - opts.burnin) % opts.thin == 0) {
            es.compute(A.A, Eigen::EigenvaluesOnly);
            for (std::size_t i = 0; i < n; ++i) res.eigs_a.push_back(es.eigenvalues()[i]);
            es.compute(B.A, Eigen::EigenvaluesOnly);
            for (std::size_t i = 0; i < n; ++i) res.eigs_b.push_back(es.eigenvalues()[i]);
            ++res.n_pooled;
        }
    }
    res.acceptance = double(accepted) / double(proposed);
    return res;
}

Histogram histogram_from_samples(const std::vector<double>& samples, std::size_t nbins) {
    if (samples.empty() || nbins == 0)
        throw std::invalid_argument("histogram_from_samples: empty input");
    const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
    double lo = *lo_it, hi = *hi_it;
    const double pad = 1e-9 + 1e-9 * (hi - lo);
    lo -= pad;
    hi += pad;
    Histogram h;
    h.edges.resize(nbins + 1);
    h.mass.assign(nbins, 0.0);
    for (std::size_t k = 0; k <= nbins; ++k)
        h.edges[k] = lo + (hi - lo) * double(k) / double(nbins);
    const double w = 1.0 / double(samples.size());
    for (double x : samples) {
        auto k = std::size_t((x - lo) / (hi - lo) * double(nbins));
        k = std::min(k, nbins - 1);
        h.mass[k] += w;
    }
    return h;
}

void Histogram::save_csv(const std::string& path) const {
    std::FILE* fp = std::fopen(path.c_str(), "w");
    if (!fp) throw std::runtime_error("Histogram::save_csv: cannot open " + path);
    std::fprintf(fp, "bin_left,bin_right,mass\n");
    for (std::size_t k = 0; k < mass.size(); ++k)
        std::fprintf(fp, "%.12g,%.12g,%.12g\n", edges[k], edges[k + 1], mass[k]);
    std::fclose(fp);
}

std::vector<Histogram> matrix_bridge_sampler(const GridMeasure& mu0, std::size_t N,
                                             const std::vector<double>& times,
                                             std::size_t n_samples, std::size_t nbins,
                                             std::uint64_t seed) {
    if (N < 2 || n_samples == 0 || times.empty())
        throw std::invalid_argument("matrix_bridge_sampler: bad arguments");
    std::mt19937_64 rng(seed);
    const std::vector<double> q = quantile_points(mu0, N);
    Eigen::MatrixXcd X0 = Eigen::MatrixXcd::Zero(N, N);
    for (std::size_t i = 0; i < N; ++i) X0(i, i) = q[i];

    std::vector<std::vector<double>> pools(times.size());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es;
    for (std::size_t s = 0; s < n_samples; ++s) {
        const Eigen::MatrixXcd H = wigner(N, 1.0, rng);
        for (std::size_t k = 0; k < times.size(); ++k) {
            const double t = times[k];
            if (t < 0.0 || t > 1.0)
                throw std::invalid_argument("matrix_bridge_sampler: time outside [0,1]");
            Eigen::MatrixXcd Xt = X0 + t * H;
            if (t > 0.0 && t < 1.0) Xt += wigner(N, t * (1.0 - t), rng);
            es.compute(Xt, Eigen::EigenvaluesOnly);
            for (std::size_t i = 0; i < N; ++i) pools[k].push_back(es.eigenvalues()[i]);
        }
    }
    std::vector<Histogram> out;
    out.reserve(times.size());
    for (const auto& p : pools) out.push_back(histogram_from_samples(p, nbins));
    return out;
}

}  // namespace abflow
