#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "magnuslab/magnus.hpp"
#include "magnuslab/matkit.hpp"
#include "magnuslab/randpath.hpp"

// Reference solvers the Magnus schemes are validated against: a plain
// Euler-Maruyama march and the closed-form flows available for special
// coefficient structures.

namespace magnuslab {

struct EulerConfig {
    TimeGrid grid;
    // Grid indices at which the state is emitted; empty = every point.
    std::vector<std::int64_t> output_indices;
    // Band structure of the coefficients (sub-/super-diagonal counts);
    // negative means dense. Only the multiplication cost changes, never
    // the result.
    int drift_sub = -1;
    int drift_super = -1;
    int diffusion_sub = -1;
    int diffusion_super = -1;
};

// Left-point march of dX = B_t X dt + sum_j A_t^(j) X dW^j from X_0 = I.
std::vector<Matrix> euler_maruyama(const LinearSde& sde, const BrownianPath& path,
                                   const EulerConfig& cfg);

// Exact flow for zero drift and one constant diffusion matrix:
// X_t = exp(A W_t - A^2 t / 2).
std::vector<Matrix> exact_const_diffusion(const Matrix& a, const BrownianPath& path,
                                          const std::vector<std::int64_t>& indices);

// Exact flow of dX = A_t X dW for upper-triangular
// A_t = ((a(t), c(t)), (0, b(t))): the diagonal is a pair of scalar
// geometric flows, the corner follows by variation of constants. Inner
// integrals are left-point sums on the path grid, so the result is exact
// up to quadrature of scalar integrals only (no matrix discretization
// error).
struct TriangularCoeffs {
    std::function<double(double)> a, b, c;
};
std::vector<Matrix> exact_triangular_general(const TriangularCoeffs& coeffs,
                                             const BrownianPath& path,
                                             const std::vector<std::int64_t>& indices);

// The fixed example A_t = ((2, t), (0, -1)).
std::vector<Matrix> exact_triangular(const BrownianPath& path,
                                     const std::vector<std::int64_t>& indices);

// Fundamental-solution density of du = a/2 u_xx dt + sigma u_x dW frozen at
// a realization w_t of the driver: Gaussian in xi with mean x + sigma w_t
// and variance (a - sigma^2) t. Requires a > sigma^2 and t > 0.
double heat_kernel(double a, double sigma, double t, double x, double xi, double w_t);

}  // namespace magnuslab
