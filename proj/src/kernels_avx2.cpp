// SPDX-License-Identifier: Apache-2.0
// AVX2 lanes for the pairwise kernels. This translation unit is compiled with
// -mavx2 -mfma; callers reach it only through the runtime dispatcher.
#include "abflow/kernels.hpp"

#include <cmath>

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>
#define ABFLOW_X86 1
#else
#define ABFLOW_X86 0
#endif

namespace abflow::kernels::avx2 {

bool supported() {
#if ABFLOW_X86
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

#if ABFLOW_X86

namespace {
inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}
}  // namespace

double pv_subtracted_sum(const double* nodes, const double* rho, const double* w,
                         std::size_t n, double x, double rho_x, double eps) {
    const __m256d vx = _mm256_set1_pd(x);
    const __m256d vrx = _mm256_set1_pd(rho_x);
    const __m256d veps = _mm256_set1_pd(eps);
    const __m256d sign_mask = _mm256_set1_pd(-0.0);
    __m256d acc = _mm256_setzero_pd();
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        const __m256d d = _mm256_sub_pd(vx, _mm256_loadu_pd(nodes + j));
        const __m256d absd = _mm256_andnot_pd(sign_mask, d);
        const __m256d keep = _mm256_cmp_pd(absd, veps, _CMP_GE_OQ);
        const __m256d num = _mm256_mul_pd(_mm256_loadu_pd(w + j),
                                          _mm256_sub_pd(_mm256_loadu_pd(rho + j), vrx));
        // Avoid 0/0 on masked entries: replace masked denominators by 1.
        const __m256d dsafe = _mm256_blendv_pd(_mm256_set1_pd(1.0), d, keep);
        acc = _mm256_add_pd(acc, _mm256_and_pd(keep, _mm256_div_pd(num, dsafe)));
    }
    double s = hsum(acc);
    for (; j < n; ++j) {
        const double d = x - nodes[j];
        if (std::abs(d) < eps) continue;
        s += w[j] * (rho[j] - rho_x) / d;
    }
    return s;
}

void pv_subtracted_all(const double* nodes, const double* rho, const double* w,
                       std::size_t n, double* out) {
    for (std::size_t i = 0; i < n; ++i) {
        const double x = nodes[i], rx = rho[i];
        const __m256d vx = _mm256_set1_pd(x);
        const __m256d vrx = _mm256_set1_pd(rx);
        __m256d acc = _mm256_setzero_pd();
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            // The i == j term has numerator exactly 0; exclude it explicitly to
            // dodge the 0/0. Handle the containing block in scalar.
            if (j <= i && i < j + 4) {
                for (std::size_t k = j; k < j + 4; ++k) {
                    if (k == i) continue;
                    acc = _mm256_add_pd(acc, _mm256_set_pd(0, 0, 0,
                        w[k] * (rho[k] - rx) / (x - nodes[k])));
                }
                continue;
            }
            const __m256d d = _mm256_sub_pd(vx, _mm256_loadu_pd(nodes + j));
            const __m256d num = _mm256_mul_pd(_mm256_loadu_pd(w + j),
                                              _mm256_sub_pd(_mm256_loadu_pd(rho + j), vrx));
            acc = _mm256_add_pd(acc, _mm256_div_pd(num, d));
        }
        double s = hsum(acc);
        for (; j < n; ++j) {
            if (j == i) continue;
            s += w[j] * (rho[j] - rx) / (x - nodes[j]);
        }
        out[i] = s;
    }
}

double kinetic_sum(const double* m, const double* r, const double* w2,
                   std::size_t n, double floor_val) {
    const __m256d vf = _mm256_set1_pd(floor_val);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d vr = _mm256_loadu_pd(r + i);
        const __m256d keep = _mm256_cmp_pd(vr, vf, _CMP_GT_OQ);
        const __m256d vm = _mm256_loadu_pd(m + i);
        const __m256d num = _mm256_mul_pd(_mm256_loadu_pd(w2 + i), _mm256_mul_pd(vm, vm));
        const __m256d rsafe = _mm256_blendv_pd(_mm256_set1_pd(1.0), vr, keep);
        acc = _mm256_add_pd(acc, _mm256_and_pd(keep, _mm256_div_pd(num, rsafe)));
    }
    double s = hsum(acc);
    for (; i < n; ++i)
        if (r[i] > floor_val) s += w2[i] * m[i] * m[i] / r[i];
    return s;
}

double cubic_sum(const double* r, const double* w, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d vr = _mm256_loadu_pd(r + i);
        acc = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i), vr),
                              _mm256_mul_pd(vr, vr), acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += w[i] * r[i] * r[i] * r[i];
    return s;
}

#else  // !ABFLOW_X86: NEON/other hosts fall back to scalar at dispatch time.

double pv_subtracted_sum(const double* nodes, const double* rho, const double* w,
                         std::size_t n, double x, double rho_x, double eps) {
    return scalar::pv_subtracted_sum(nodes, rho, w, n, x, rho_x, eps);
}
void pv_subtracted_all(const double* nodes, const double* rho, const double* w,
                       std::size_t n, double* out) {
    scalar::pv_subtracted_all(nodes, rho, w, n, out);
}
double kinetic_sum(const double* m, const double* r, const double* w2,
                   std::size_t n, double floor_val) {
    return scalar::kinetic_sum(m, r, w2, n, floor_val);
}
double cubic_sum(const double* r, const double* w, std::size_t n) {
    return scalar::cubic_sum(r, w, n);
}

#endif

}  // namespace abflow::kernels::avx2
