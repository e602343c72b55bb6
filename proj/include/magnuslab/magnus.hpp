#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "magnuslab/matkit.hpp"
#include "magnuslab/randpath.hpp"

// Truncated stochastic Magnus logarithms for the linear matrix-valued Ito
// system dX = B_t X dt + sum_j A_t^(j) X dW^j, X_0 = I: closed forms for the
// constant-coefficient and fixed upper-triangular cases, a general
// first/second-order construction, the full order-3 recursion for one
// driver, and assembly X = exp(Y1 + ... + Yn).

namespace magnuslab {

using MatrixFn = std::function<Matrix(double)>;

struct LinearSde {
    int dim = 0;
    int q = 1;
    MatrixFn drift;                    // B(t)
    std::vector<MatrixFn> diffusion;   // A^(j)(t), j = 0..q-1
    bool constant_coeffs = false;

    static LinearSde constants(const Matrix& b, std::vector<Matrix> a);
};

struct MagnusConfig {
    int order = 3;                     // in {1, 2, 3}
    TimeGrid grid;                     // the (coarse) Magnus grid
    SeriesConfig series;
    // Grid indices at which terms/solutions are emitted; empty = every
    // grid point.
    std::vector<std::int64_t> output_indices;
};

struct MagnusTerms {
    int order = 0;
    std::vector<std::int64_t> indices;
    std::vector<double> times;
    // y2/y3 stay empty below the requested order. All terms are zero at
    // t = 0.
    std::vector<Matrix> y1, y2, y3;
};

// Closed forms for constant A, B with one driver; no stochastic quadrature
// enters, only the running Lebesgue integrals of the path.
MagnusTerms terms_const(const Matrix& a, const Matrix& b, const BrownianPath& path,
                        const PathIntegrals& ints, const MagnusConfig& cfg);

// Direct construction of orders 1-2 for time-dependent coefficients and any
// number of drivers; inner integrals accumulate on the path's grid, outer
// integrals are left-point sums.
MagnusTerms terms_general(const LinearSde& sde, const BrownianPath& path,
                          const MagnusConfig& cfg);

// General recursion through order 3 for one driver, evaluated on the grid
// with left-point quadrature throughout.
MagnusTerms recursion_terms(const LinearSde& sde, const BrownianPath& path,
                            const MagnusConfig& cfg);

// Closed forms for the fixed upper-triangular example
// A_t = ((2, t), (0, -1)), B = 0.
MagnusTerms terms_triangular(const BrownianPath& path, const PathIntegrals& ints,
                             const MagnusConfig& cfg);

// X = exp(Y1 + ... + Y_order) at each emitted point.
std::vector<Matrix> assemble(const MagnusTerms& terms, const MagnusConfig& cfg);

// First grid time with ||X_t - I||_F >= 1 - e^{-pi}, or +infinity when the
// trajectory never leaves the neighborhood within the horizon (callers
// report that as censored).
double tau_monitor(const std::vector<Matrix>& xs, const std::vector<double>& times);
double tau_threshold();
inline constexpr double tau_censored = std::numeric_limits<double>::infinity();

}  // namespace magnuslab
