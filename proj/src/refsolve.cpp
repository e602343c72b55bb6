#include "magnuslab/refsolve.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace magnuslab {

namespace {

std::vector<std::int64_t> resolve_indices(const std::vector<std::int64_t>& requested,
                                          const TimeGrid& grid) {
    std::vector<std::int64_t> idx;
    if (requested.empty()) {
        idx.resize(static_cast<std::size_t>(grid.n_steps) + 1);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int64_t>(i);
        return idx;
    }
    idx = requested;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] > grid.n_steps)
            throw std::invalid_argument("refsolve: output index outside the grid");
        if (i > 0 && idx[i] <= idx[i - 1])
            throw std::invalid_argument("refsolve: output indices must increase strictly");
    }
    return idx;
}

void check_grid_match(const TimeGrid& cfg_grid, const TimeGrid& path_grid) {
    const double slack = 1e-12 * std::max(1.0, std::abs(cfg_grid.t_final));
    if (cfg_grid.n_steps != path_grid.n_steps ||
        std::abs(cfg_grid.t_final - path_grid.t_final) > slack)
        throw std::invalid_argument("refsolve: config grid does not match path grid");
}

}  // namespace

std::vector<Matrix> euler_maruyama(const LinearSde& sde, const BrownianPath& path,
                                   const EulerConfig& cfg) {
    if (sde.dim < 1 || !sde.drift ||
        sde.diffusion.size() != static_cast<std::size_t>(sde.q))
        throw std::invalid_argument("euler_maruyama: coefficients not set");
    if (sde.q != path.q)
        throw std::invalid_argument("euler_maruyama: driver count mismatch");
    check_grid_match(cfg.grid, path.grid);

    const int n = sde.dim;
    const int q = sde.q;
    const TimeGrid& grid = path.grid;
    const double dt = grid.dt();
    const int b_sub = cfg.drift_sub < 0 ? n : cfg.drift_sub;
    const int b_super = cfg.drift_super < 0 ? n : cfg.drift_super;
    const int a_sub = cfg.diffusion_sub < 0 ? n : cfg.diffusion_sub;
    const int a_super = cfg.diffusion_super < 0 ? n : cfg.diffusion_super;

    std::vector<std::int64_t> outputs = resolve_indices(cfg.output_indices, grid);
    std::vector<Matrix> xs;
    xs.reserve(outputs.size());

    Matrix x = Matrix::identity(n);
    Matrix dx(n), t1(n);
    std::vector<Matrix> a_vals(static_cast<std::size_t>(q));
    Matrix b_val;
    bool coeffs_ready = false;

    std::size_t pos = 0;
    for (std::int64_t l = 0; l <= grid.n_steps; ++l) {
        if (pos < outputs.size() && outputs[pos] == l) {
            xs.push_back(x);
            ++pos;
        }
        if (pos == outputs.size() || l == grid.n_steps) break;

        const double t = grid.time(l);
        if (!coeffs_ready) {
            b_val = sde.drift(t);
            for (int j = 0; j < q; ++j)
                a_vals[static_cast<std::size_t>(j)] = sde.diffusion[j](t);
            if (b_val.dim() != n)
                throw std::invalid_argument("euler_maruyama: coefficient dimension mismatch");
            for (const Matrix& m : a_vals)
                if (m.dim() != n)
                    throw std::invalid_argument("euler_maruyama: coefficient dimension mismatch");
            coeffs_ready = sde.constant_coeffs;
        }

        // Every product reads the state as it stands at this node.
        dx.set_zero();
        mul_band_into(t1, b_val, x, b_sub, b_super);
        dx.add_scaled(t1, dt);
        for (int j = 0; j < q; ++j) {
            mul_band_into(t1, a_vals[static_cast<std::size_t>(j)], x, a_sub, a_super);
            dx.add_scaled(t1, path.increment(j, l));
        }
        x += dx;
    }
    return xs;
}

std::vector<Matrix> exact_const_diffusion(const Matrix& a, const BrownianPath& path,
                                          const std::vector<std::int64_t>& indices) {
    if (a.dim() < 1)
        throw std::invalid_argument("exact_const_diffusion: empty matrix");
    if (path.q != 1)
        throw std::invalid_argument("exact_const_diffusion: exactly one driver is supported");
    const Matrix a2 = a * a;
    std::vector<std::int64_t> outputs = resolve_indices(indices, path.grid);

    std::vector<Matrix> xs;
    xs.reserve(outputs.size());
    for (const std::int64_t k : outputs) {
        const double t = path.grid.time(k);
        const double w = path.w(0, k);
        Matrix y(a.dim());
        y.add_scaled(a, w);
        y.add_scaled(a2, -0.5 * t);
        xs.push_back(mat_exp(y));
    }
    return xs;
}

std::vector<Matrix> exact_triangular_general(const TriangularCoeffs& coeffs,
                                             const BrownianPath& path,
                                             const std::vector<std::int64_t>& indices) {
    if (!coeffs.a || !coeffs.b || !coeffs.c)
        throw std::invalid_argument("exact_triangular_general: coefficients not set");
    if (path.q != 1)
        throw std::invalid_argument("exact_triangular_general: exactly one driver is supported");

    const TimeGrid& grid = path.grid;
    const double dt = grid.dt();
    std::vector<std::int64_t> outputs = resolve_indices(indices, grid);
    std::vector<Matrix> xs;
    xs.reserve(outputs.size());

    // Running scalar integrals: ia = int a dW, ia2 = int a^2 ds, likewise
    // for b, and the corner pair j1 = int c (X22/X11) dW,
    // j2 = int c a (X22/X11) ds.
    double ia = 0.0, ia2 = 0.0, ibw = 0.0, ib2 = 0.0, j1 = 0.0, j2 = 0.0;

    std::size_t pos = 0;
    for (std::int64_t l = 0; l <= grid.n_steps; ++l) {
        if (pos < outputs.size() && outputs[pos] == l) {
            Matrix m(2);
            const double x11 = std::exp(ia - 0.5 * ia2);
            m(0, 0) = x11;
            m(0, 1) = x11 * (j1 - j2);
            m(1, 1) = std::exp(ibw - 0.5 * ib2);
            xs.push_back(std::move(m));
            ++pos;
        }
        if (pos == outputs.size() || l == grid.n_steps) break;

        const double t = grid.time(l);
        const double dw = path.increment(0, l);
        const double av = coeffs.a(t);
        const double bv = coeffs.b(t);
        const double cv = coeffs.c(t);
        const double ratio = std::exp((ibw - ia) - 0.5 * (ib2 - ia2));
        j1 += cv * ratio * dw;
        j2 += cv * av * ratio * dt;
        ia += av * dw;
        ia2 += av * av * dt;
        ibw += bv * dw;
        ib2 += bv * bv * dt;
    }
    return xs;
}

std::vector<Matrix> exact_triangular(const BrownianPath& path,
                                     const std::vector<std::int64_t>& indices) {
    TriangularCoeffs coeffs;
    coeffs.a = [](double) { return 2.0; };
    coeffs.b = [](double) { return -1.0; };
    coeffs.c = [](double t) { return t; };
    return exact_triangular_general(coeffs, path, indices);
}

double heat_kernel(double a, double sigma, double t, double x, double xi, double w_t) {
    if (!(a > sigma * sigma))
        throw std::domain_error("heat_kernel: requires a > sigma^2");
    if (!(t > 0.0))
        throw std::domain_error("heat_kernel: requires t > 0");
    const double var = (a - sigma * sigma) * t;
    const double d = xi - x - sigma * w_t;
    return std::exp(-d * d / (2.0 * var)) / std::sqrt(2.0 * std::numbers::pi * var);
}

}  // namespace magnuslab
