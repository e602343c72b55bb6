#include "magnuslab/kernels.hpp"

#include <algorithm>
#include <cstring>

// Scalar reference kernels. Written as plain loops; these define the
// semantics the SIMD variants are tested against.

namespace magnuslab::kernels {
namespace {

void axpy_scalar(double* y, double a, const double* x, std::int64_t len) {
    for (std::int64_t i = 0; i < len; ++i) y[i] += a * x[i];
}

void scal_scalar(double* y, double a, std::int64_t len) {
    for (std::int64_t i = 0; i < len; ++i) y[i] *= a;
}

double dot_scalar(const double* x, const double* y, std::int64_t len) {
    double s = 0.0;
    for (std::int64_t i = 0; i < len; ++i) s += x[i] * y[i];
    return s;
}

double sumsq_scalar(const double* x, std::int64_t len) {
    double s = 0.0;
    for (std::int64_t i = 0; i < len; ++i) s += x[i] * x[i];
    return s;
}

// Row-combine product: C(i,:) = sum_j A(i,j) * B(j,:), j restricted to the
// band. The zero test skips structural zeros when a banded matrix is passed
// with dense bounds (and upper-triangular blocks below the diagonal).
void mul_band_scalar(double* c, const double* a, const double* b,
                     std::int64_t n, std::int64_t sub, std::int64_t super) {
    std::memset(c, 0, static_cast<std::size_t>(n) * n * sizeof(double));
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t j_lo = std::max<std::int64_t>(0, i - sub);
        const std::int64_t j_hi = std::min<std::int64_t>(n - 1, i + super);
        double* ci = c + i * n;
        for (std::int64_t j = j_lo; j <= j_hi; ++j) {
            const double aij = a[i * n + j];
            if (aij == 0.0) continue;
            axpy_scalar(ci, aij, b + j * n, n);
        }
    }
}

}  // namespace

extern const Ops scalar_ops = {
    axpy_scalar, scal_scalar, dot_scalar, sumsq_scalar, mul_band_scalar,
    "scalar",
};

}  // namespace magnuslab::kernels
