#include "magnuslab/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <immintrin.h>

// AVX2/FMA kernel variant. Compiled with -mavx2 -mfma; only reachable
// through dispatch after a CPUID check. Results agree with the scalar
// reference to rounding (FMA contraction and vector reduction reorder the
// arithmetic), which the equivalence tests assert with tight tolerances.

namespace magnuslab::kernels {
namespace {

void axpy_avx2(double* y, double a, const double* x, std::int64_t len) {
    const __m256d va = _mm256_set1_pd(a);
    std::int64_t i = 0;
    for (; i + 4 <= len; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < len; ++i) y[i] += a * x[i];
}

void scal_avx2(double* y, double a, std::int64_t len) {
    const __m256d va = _mm256_set1_pd(a);
    std::int64_t i = 0;
    for (; i + 4 <= len; i += 4)
        _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(y + i)));
    for (; i < len; ++i) y[i] *= a;
}

double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double dot_avx2(const double* x, const double* y, std::int64_t len) {
    __m256d acc = _mm256_setzero_pd();
    std::int64_t i = 0;
    for (; i + 4 <= len; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
    double s = hsum(acc);
    for (; i < len; ++i) s += x[i] * y[i];
    return s;
}

double sumsq_avx2(const double* x, std::int64_t len) {
    __m256d acc = _mm256_setzero_pd();
    std::int64_t i = 0;
    for (; i + 4 <= len; i += 4) {
        const __m256d vx = _mm256_loadu_pd(x + i);
        acc = _mm256_fmadd_pd(vx, vx, acc);
    }
    double s = hsum(acc);
    for (; i < len; ++i) s += x[i] * x[i];
    return s;
}

void mul_band_avx2(double* c, const double* a, const double* b,
                   std::int64_t n, std::int64_t sub, std::int64_t super) {
    std::memset(c, 0, static_cast<std::size_t>(n) * n * sizeof(double));
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t j_lo = std::max<std::int64_t>(0, i - sub);
        const std::int64_t j_hi = std::min<std::int64_t>(n - 1, i + super);
        double* ci = c + i * n;
        for (std::int64_t j = j_lo; j <= j_hi; ++j) {
            const double aij = a[i * n + j];
            if (aij == 0.0) continue;
            axpy_avx2(ci, aij, b + j * n, n);
        }
    }
}

}  // namespace

extern const Ops avx2_ops = {
    axpy_avx2, scal_avx2, dot_avx2, sumsq_avx2, mul_band_avx2,
    "avx2",
};

}  // namespace magnuslab::kernels
