#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "magnuslab/magnus.hpp"
#include "magnuslab/matkit.hpp"
#include "magnuslab/randpath.hpp"

// Space discretization of the scalar stochastic Cauchy problem
//   du = (a/2 u_xx + b u_x + c u) dt + (sigma u_x + gamma u) dW
// on an interval with zero boundary values, turning it into the linear
// matrix SDE dX = A X dt + B X dW; plus the Gaussian integral oracle and
// the central-rows error metric used to judge the schemes.

namespace magnuslab {

// Scalar coefficient field f(t, x).
using FieldFn = std::function<double(double, double)>;

struct SpdeProblem {
    double x_lo = -2.0;
    double x_hi = 2.0;
    int d = 50;  // interior mesh points
    FieldFn a, b, c;           // second-order operator: a/2 u_xx + b u_x + c u
    FieldFn sigma, gamma;      // first-order noise operator: sigma u_x + gamma u
    // Set when no coefficient depends on t; lets solvers build the
    // matrices once.
    bool time_independent = true;

    double h() const { return (x_hi - x_lo) / (d + 1); }
    // Mesh point i = 0..d+1; the system unknowns live at i = 1..d.
    double x(int i) const { return x_lo + i * h(); }

    static SpdeProblem heat(double a, double sigma, double x_lo = -2.0,
                            double x_hi = 2.0, int d = 50);
};

// Backward difference for u_x, centered for u_xx, coefficients frozen at
// (t, x_i). The drift matrix is tridiagonal, the diffusion matrix lower
// bidiagonal.
Matrix spde_drift_matrix(const SpdeProblem& problem, double t);
Matrix spde_diffusion_matrix(const SpdeProblem& problem, double t);

struct DiscretizedSystem {
    LinearSde sde;
    double x_lo = 0.0;
    double x_hi = 0.0;
    double h = 0.0;
    int d = 0;
};

DiscretizedSystem discretize(const SpdeProblem& problem);

// Cell integrals of the heat-equation fundamental solution over the mesh:
// entry (i, j), 0-based over interior points, integrates the Gaussian
// density seen from x_{i+1} over the cell straddling x_{j+1}, evaluated as
// a difference of Gaussian CDFs. Requires a > sigma^2 and t > 0.
Matrix fundamental_integral_matrix(double a, double sigma, double t, double w_t,
                                   const SpdeProblem& problem);

// Relative Frobenius distance over the central kappa rows (1 <= kappa <= d).
double spde_error(const Matrix& x_app, const Matrix& i_exact, int kappa);

enum class SpdeMethod { euler, m1, m2, m3 };

// Propagates the initial datum through the chosen scheme's fundamental
// matrix; returns the solution vector at each requested grid index (empty =
// every point). The Euler scheme marches the vector directly; the Magnus
// orders exponentiate the truncated logarithm and apply it.
std::vector<std::vector<double>> solve_spde(const SpdeProblem& problem,
                                            const std::vector<double>& initial,
                                            SpdeMethod method, const BrownianPath& path,
                                            const std::vector<std::int64_t>& indices = {});

// Problem description from a key-value file: one "key = value" per line,
// '#' starts a comment. Keys: domain = lo:hi, d = <int>, and the five
// coefficients (a, b, c, sigma, gamma) as either a number (constant) or
// "poly c0 c1 ..." (polynomial in x). Unset coefficients are zero.
SpdeProblem load_spde_problem(const std::string& path);

}  // namespace magnuslab
