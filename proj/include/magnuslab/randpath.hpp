#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

// Seeded Brownian paths on uniform grids plus the running path integrals
// the Magnus terms consume. Generation is counter-based: a path is a pure
// function of (seed, sample_index, grid, q), so parallel sample generation
// is reproducible in any thread layout.

namespace magnuslab {

struct TimeGrid {
    double t_final = 1.0;
    std::int64_t n_steps = 1;

    double dt() const { return t_final / static_cast<double>(n_steps); }
    double time(std::int64_t k) const { return static_cast<double>(k) * dt(); }
    // Grid index of time t; throws if t is not a grid point (1e-9 slack).
    std::int64_t index_of(double t) const;
};

struct BrownianPath {
    TimeGrid grid;
    int q = 1;
    std::uint64_t seed = 0;
    std::int64_t sample_index = 0;
    // values[j][k] = W^j at t_k; values[j][0] = 0.
    std::vector<std::vector<double>> values;

    double w(int j, std::int64_t k) const { return values[j][k]; }
    double increment(int j, std::int64_t k) const {
        return values[j][k + 1] - values[j][k];
    }
};

// Running left-point Riemann sums per channel, all zero at k = 0:
// int_w[k] = sum_{r<k} W_{t_r} dt, and likewise for s W_s, W_s^2, W_s^3.
struct PathIntegrals {
    std::vector<std::vector<double>> int_w;
    std::vector<std::vector<double>> int_sw;
    std::vector<std::vector<double>> int_w2;
    std::vector<std::vector<double>> int_w3;
};

BrownianPath sample_brownian(const TimeGrid& grid, int q, std::uint64_t seed,
                             std::int64_t sample_index);

// Restriction to every stride-th grid point; no re-simulation. stride must
// divide the step count.
BrownianPath subsample(const BrownianPath& path, std::int64_t stride);

PathIntegrals path_integrals(const BrownianPath& path);

// Running left-point Ito sum of integrand dW^channel; integrand holds the
// value at each grid point (N + 1 entries), result likewise.
std::vector<double> ito_integral(const std::vector<double>& integrand,
                                 const BrownianPath& path, int channel);

// Debug dump: header k,t_k,W^1..W^q, one row per grid point.
void dump_path_csv(const BrownianPath& path, std::ostream& out);

namespace rng {
// SplitMix64-style finalizer used by the counter generator; exposed for
// tests of the uniformity contract.
std::uint64_t mix64(std::uint64_t z);
// Standard normal from one 64-bit word via inverse CDF (Acklam's rational
// approximation, relative error ~1e-9; ample for Monte Carlo use here).
double normal_from_bits(std::uint64_t bits);
double normal_icdf(double p);
}  // namespace rng

}  // namespace magnuslab
