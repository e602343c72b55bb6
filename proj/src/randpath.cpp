#include "magnuslab/randpath.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace magnuslab {

std::int64_t TimeGrid::index_of(double t) const {
    const double step = dt();
    const auto k = static_cast<std::int64_t>(std::llround(t / step));
    if (k < 0 || k > n_steps || std::abs(time(k) - t) > 1e-9 * std::max(1.0, std::abs(t)))
        throw std::invalid_argument("TimeGrid: time is not a grid point");
    return k;
}

namespace rng {

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double normal_icdf(double p) {
    // Acklam's piecewise rational approximation of the standard normal
    // quantile.
    static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                -2.759285104469687e+02, 1.383577518672690e+02,
                                -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                -1.556989798598866e+02, 6.680131188771972e+01,
                                -1.328068155288572e+01};
    static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                -2.400758277161838e+00, -2.549732539343734e+00,
                                4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - p_low) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

double normal_from_bits(std::uint64_t bits) {
    // 53-bit mantissa, offset to keep u strictly inside (0, 1).
    const double u = (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
    return normal_icdf(u);
}

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t stream_key(std::uint64_t seed, std::int64_t sample_index) {
    return mix64(mix64(seed + kGolden) +
                 static_cast<std::uint64_t>(sample_index) * kGolden);
}
}  // namespace

}  // namespace rng

BrownianPath sample_brownian(const TimeGrid& grid, int q, std::uint64_t seed,
                             std::int64_t sample_index) {
    if (q < 1) throw std::invalid_argument("sample_brownian: q must be >= 1");
    if (grid.n_steps < 1 || !(grid.t_final > 0.0))
        throw std::invalid_argument("sample_brownian: bad grid");

    BrownianPath path;
    path.grid = grid;
    path.q = q;
    path.seed = seed;
    path.sample_index = sample_index;
    path.values.assign(q, std::vector<double>(grid.n_steps + 1, 0.0));

    const std::uint64_t key = rng::stream_key(seed, sample_index);
    const double sqrt_dt = std::sqrt(grid.dt());
    for (int j = 0; j < q; ++j) {
        auto& w = path.values[j];
        double acc = 0.0;
        for (std::int64_t k = 1; k <= grid.n_steps; ++k) {
            const std::uint64_t ctr =
                key + (static_cast<std::uint64_t>(j) * static_cast<std::uint64_t>(grid.n_steps) +
                       static_cast<std::uint64_t>(k)) * rng::kGolden;
            acc += sqrt_dt * rng::normal_from_bits(rng::mix64(ctr));
            w[k] = acc;
        }
    }
    return path;
}

BrownianPath subsample(const BrownianPath& path, std::int64_t stride) {
    if (stride < 1 || path.grid.n_steps % stride != 0)
        throw std::invalid_argument("subsample: stride must divide the step count");
    BrownianPath out;
    out.grid = TimeGrid{path.grid.t_final, path.grid.n_steps / stride};
    out.q = path.q;
    out.seed = path.seed;
    out.sample_index = path.sample_index;
    out.values.assign(path.q, {});
    for (int j = 0; j < path.q; ++j) {
        auto& w = out.values[j];
        w.resize(out.grid.n_steps + 1);
        for (std::int64_t k = 0; k <= out.grid.n_steps; ++k)
            w[k] = path.values[j][k * stride];
    }
    return out;
}

PathIntegrals path_integrals(const BrownianPath& path) {
    const std::int64_t n = path.grid.n_steps;
    const double dt = path.grid.dt();
    PathIntegrals ints;
    ints.int_w.assign(path.q, std::vector<double>(n + 1, 0.0));
    ints.int_sw.assign(path.q, std::vector<double>(n + 1, 0.0));
    ints.int_w2.assign(path.q, std::vector<double>(n + 1, 0.0));
    ints.int_w3.assign(path.q, std::vector<double>(n + 1, 0.0));
    for (int j = 0; j < path.q; ++j) {
        const auto& w = path.values[j];
        for (std::int64_t k = 1; k <= n; ++k) {
            const double wl = w[k - 1];
            const double tl = path.grid.time(k - 1);
            ints.int_w[j][k] = ints.int_w[j][k - 1] + wl * dt;
            ints.int_sw[j][k] = ints.int_sw[j][k - 1] + tl * wl * dt;
            ints.int_w2[j][k] = ints.int_w2[j][k - 1] + wl * wl * dt;
            ints.int_w3[j][k] = ints.int_w3[j][k - 1] + wl * wl * wl * dt;
        }
    }
    return ints;
}

std::vector<double> ito_integral(const std::vector<double>& integrand,
                                 const BrownianPath& path, int channel) {
    const std::int64_t n = path.grid.n_steps;
    if (static_cast<std::int64_t>(integrand.size()) != n + 1)
        throw std::invalid_argument("ito_integral: integrand length mismatch");
    if (channel < 0 || channel >= path.q)
        throw std::invalid_argument("ito_integral: bad channel");
    std::vector<double> out(n + 1, 0.0);
    const auto& w = path.values[channel];
    for (std::int64_t k = 1; k <= n; ++k)
        out[k] = out[k - 1] + integrand[k - 1] * (w[k] - w[k - 1]);
    return out;
}

void dump_path_csv(const BrownianPath& path, std::ostream& out) {
    out << "k,t_k";
    for (int j = 1; j <= path.q; ++j) out << ",W^" << j;
    out << "\n";
    for (std::int64_t k = 0; k <= path.grid.n_steps; ++k) {
        out << k << ',' << path.grid.time(k);
        for (int j = 0; j < path.q; ++j) out << ',' << path.values[j][k];
        out << "\n";
    }
}

}  // namespace magnuslab
