#pragma once

#include <cstdint>

// Low-level array kernels behind the matrix algebra. Two implementations
// exist: a scalar reference and an AVX2/FMA variant. Dispatch happens once
// at first use based on CPUID; tests can pin a specific variant to check
// that both produce the same results.

namespace magnuslab::kernels {

struct Ops {
    // y[0..len) += a * x[0..len)
    void (*axpy)(double* y, double a, const double* x, std::int64_t len);
    // y[0..len) *= a
    void (*scal)(double* y, double a, std::int64_t len);
    double (*dot)(const double* x, const double* y, std::int64_t len);
    // sum of squares of x[0..len)
    double (*sumsq)(const double* x, std::int64_t len);
    // C = A*B for row-major n-by-n matrices, where row i of A is only read
    // for columns j in [i - sub, i + super]. sub = super = n covers the
    // dense case; (1,1) a tridiagonal A, (1,0) a lower-bidiagonal A.
    void (*mul_band)(double* c, const double* a, const double* b,
                     std::int64_t n, std::int64_t sub, std::int64_t super);
    const char* name;
};

enum class Isa { scalar, avx2 };

// Best variant available on this machine (resolved once, thread-safe).
const Ops& active();
Isa active_isa();

bool available(Isa isa);
// Specific variant; throws std::runtime_error if unavailable on this host.
const Ops& get(Isa isa);
// Overrides dispatch globally (used by equivalence tests and --no-simd style
// debugging); throws if the variant is unavailable.
void force(Isa isa);

}  // namespace magnuslab::kernels
