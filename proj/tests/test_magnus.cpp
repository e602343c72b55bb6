#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "magnuslab/magnus.hpp"
#include "magnuslab/matkit.hpp"
#include "magnuslab/randpath.hpp"
#include "magnuslab/refsolve.hpp"

using namespace magnuslab;

namespace {

Matrix make2(double a00, double a01, double a10, double a11) {
    Matrix m(2);
    m(0, 0) = a00;
    m(0, 1) = a01;
    m(1, 0) = a10;
    m(1, 1) = a11;
    return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double d = 0.0;
    for (int i = 0; i < a.dim(); ++i)
        for (int j = 0; j < a.dim(); ++j) d = std::max(d, std::abs(a(i, j) - b(i, j)));
    return d;
}

// Non-commuting pair used across the checks here.
const Matrix kA = make2(0.4, -0.6, -0.25, 0.6);
const Matrix kB = make2(-0.05, 0.05, -0.66, 0.74);

Matrix triangular_at(double t) { return make2(2.0, t, 0.0, -1.0); }

}  // namespace

TEST_CASE("all terms vanish at t = 0") {
    const TimeGrid grid{1.0, 100};
    const BrownianPath path = sample_brownian(grid, 1, 5, 0);
    const PathIntegrals ints = path_integrals(path);
    MagnusConfig cfg;
    cfg.order = 3;
    cfg.grid = grid;
    cfg.output_indices = {0};

    const MagnusTerms closed = terms_const(kA, kB, path, ints, cfg);
    CHECK(frobenius_norm(closed.y1[0]) == 0.0);
    CHECK(frobenius_norm(closed.y2[0]) == 0.0);
    CHECK(frobenius_norm(closed.y3[0]) == 0.0);

    const LinearSde sde = LinearSde::constants(kB, {kA});
    const MagnusTerms rec = recursion_terms(sde, path, cfg);
    CHECK(frobenius_norm(rec.y1[0]) == 0.0);
    CHECK(frobenius_norm(rec.y2[0]) == 0.0);
    CHECK(frobenius_norm(rec.y3[0]) == 0.0);

    const std::vector<Matrix> x0 = assemble(closed, cfg);
    CHECK(max_abs_diff(x0[0], Matrix::identity(2)) == 0.0);
}

TEST_CASE("zero drift: orders 2 and 3 reproduce the exact flow") {
    const TimeGrid grid{1.0, 100};
    const BrownianPath path = sample_brownian(grid, 1, 17, 3);
    const PathIntegrals ints = path_integrals(path);
    const std::vector<Matrix> exact = exact_const_diffusion(kA, path, {});

    for (const int order : {2, 3}) {
        MagnusConfig cfg;
        cfg.order = order;
        cfg.grid = grid;
        const MagnusTerms terms = terms_const(kA, Matrix(2), path, ints, cfg);
        const std::vector<Matrix> xs = assemble(terms, cfg);
        REQUIRE(xs.size() == exact.size());
        for (std::size_t k = 0; k < xs.size(); ++k)
            CHECK(max_abs_diff(xs[k], exact[k]) < 1e-12);
    }
}

TEST_CASE("commuting coefficients: order 3 is exact per entry") {
    const Matrix a = make2(0.3, 0.0, 0.0, -0.2);
    const Matrix b = make2(0.1, 0.0, 0.0, 0.4);
    const TimeGrid grid{2.0, 200};
    const BrownianPath path = sample_brownian(grid, 1, 23, 1);
    const PathIntegrals ints = path_integrals(path);

    MagnusConfig cfg;
    cfg.order = 3;
    cfg.grid = grid;
    const MagnusTerms terms = terms_const(a, b, path, ints, cfg);
    const std::vector<Matrix> xs = assemble(terms, cfg);

    for (const std::int64_t k : {50L, 200L}) {
        const double t = grid.time(k);
        const double w = path.w(0, k);
        const Matrix& x = xs[static_cast<std::size_t>(k)];
        CHECK(x(0, 0) ==
              doctest::Approx(std::exp((0.1 - 0.5 * 0.09) * t + 0.3 * w)).epsilon(1e-12));
        CHECK(x(1, 1) ==
              doctest::Approx(std::exp((0.4 - 0.5 * 0.04) * t - 0.2 * w)).epsilon(1e-12));
        CHECK(std::abs(x(0, 1)) < 1e-14);
        CHECK(std::abs(x(1, 0)) < 1e-14);
    }
}

TEST_CASE("recursion agrees with the direct order-2 accumulator") {
    // Time-dependent coefficients force both code paths through their
    // generic update loops; they evaluate the same sums, so they should
    // match to rounding.
    LinearSde sde;
    sde.dim = 2;
    sde.q = 1;
    sde.constant_coeffs = false;
    sde.drift = [](double t) { return make2(0.1 * std::sin(t), 0.0, 0.2, -0.1); };
    sde.diffusion.push_back([](double t) { return make2(0.3, 0.1 * t, 0.0, -0.2); });

    const TimeGrid grid{1.0, 50};
    const BrownianPath path = sample_brownian(grid, 1, 31, 2);
    MagnusConfig cfg;
    cfg.order = 2;
    cfg.grid = grid;

    const MagnusTerms gen = terms_general(sde, path, cfg);
    const MagnusTerms rec = recursion_terms(sde, path, cfg);
    REQUIRE(gen.y1.size() == rec.y1.size());
    for (std::size_t k = 0; k < gen.y1.size(); ++k) {
        CHECK(max_abs_diff(gen.y1[k], rec.y1[k]) < 1e-13);
        CHECK(max_abs_diff(gen.y2[k], rec.y2[k]) < 1e-13);
    }
}

TEST_CASE("two commuting channels: order 2 is exact per entry") {
    LinearSde sde;
    sde.dim = 2;
    sde.q = 2;
    sde.constant_coeffs = true;
    sde.drift = [](double) { return make2(0.1, 0.0, 0.0, 0.3); };
    sde.diffusion.push_back([](double) { return make2(0.4, 0.0, 0.0, -0.1); });
    sde.diffusion.push_back([](double) { return make2(-0.2, 0.0, 0.0, 0.25); });

    const TimeGrid grid{1.0, 100};
    const BrownianPath path = sample_brownian(grid, 2, 31, 2);
    MagnusConfig cfg;
    cfg.order = 2;
    cfg.grid = grid;
    cfg.output_indices = {100};

    const MagnusTerms terms = terms_general(sde, path, cfg);
    const std::vector<Matrix> xs = assemble(terms, cfg);
    const double w1 = path.w(0, 100), w2 = path.w(1, 100);
    CHECK(xs[0](0, 0) ==
          doctest::Approx(std::exp((0.1 - 0.5 * (0.16 + 0.04)) + 0.4 * w1 - 0.2 * w2))
              .epsilon(1e-12));
    CHECK(xs[0](1, 1) ==
          doctest::Approx(std::exp((0.3 - 0.5 * (0.01 + 0.0625)) - 0.1 * w1 + 0.25 * w2))
              .epsilon(1e-12));
    CHECK(xs[0](0, 1) == 0.0);
    CHECK(xs[0](1, 0) == 0.0);
}

TEST_CASE("recursion converges to the closed constant-coefficient terms") {
    const LinearSde sde = LinearSde::constants(kB, {kA});
    const TimeGrid fine{1.0, 200};
    const BrownianPath fine_path = sample_brownian(fine, 1, 41, 0);

    auto terminal_gap = [&](std::int64_t stride) {
        const BrownianPath path = subsample(fine_path, stride);
        const PathIntegrals ints = path_integrals(path);
        MagnusConfig cfg;
        cfg.order = 3;
        cfg.grid = path.grid;
        cfg.output_indices = {path.grid.n_steps};
        const MagnusTerms closed = terms_const(kA, kB, path, ints, cfg);
        const MagnusTerms rec = recursion_terms(sde, path, cfg);
        CHECK(max_abs_diff(closed.y1[0], rec.y1[0]) < 1e-12);
        return frobenius_norm(closed.y2[0] - rec.y2[0]) +
               frobenius_norm(closed.y3[0] - rec.y3[0]);
    };

    const double gap_coarse = terminal_gap(2);   // dt = 1e-2
    const double gap_fine = terminal_gap(1);     // dt = 5e-3
    CHECK(gap_coarse < 0.05);
    // First-order in dt: halving the step roughly halves the gap.
    CHECK(gap_fine < 0.8 * gap_coarse);
    CHECK(gap_fine > 0.2 * gap_coarse);
}

TEST_CASE("triangular terms keep the triangle and track the recursion") {
    const TimeGrid fine_grid{1.0, 400};
    const BrownianPath fine = sample_brownian(fine_grid, 1, 53, 4);
    const BrownianPath path = subsample(fine, 4);
    const TimeGrid grid = path.grid;
    const PathIntegrals ints = path_integrals(path);
    MagnusConfig cfg;
    cfg.order = 3;
    cfg.grid = grid;

    const MagnusTerms tri = terms_triangular(path, ints, cfg);
    for (std::size_t k = 0; k < tri.y1.size(); ++k) {
        CHECK(tri.y1[k](1, 0) == 0.0);
        CHECK(tri.y2[k](1, 0) == 0.0);
        CHECK(tri.y3[k](1, 0) == 0.0);
    }
    const std::vector<Matrix> xs = assemble(tri, cfg);
    for (const Matrix& x : xs) CHECK(x(1, 0) == 0.0);

    LinearSde sde;
    sde.dim = 2;
    sde.q = 1;
    sde.constant_coeffs = false;
    sde.drift = [](double) { return Matrix(2); };
    sde.diffusion.push_back([](double t) { return triangular_at(t); });
    const MagnusTerms rec = recursion_terms(sde, path, cfg);

    // The closed form integrates s dW exactly (via t W_t - int W ds) while
    // the recursion uses left-point sums, so even y1 only agrees up to a
    // small multiple of dt here.
    const std::size_t last = tri.y1.size() - 1;
    CHECK(max_abs_diff(tri.y1[last], rec.y1[last]) < 0.1);
    CHECK(frobenius_norm(tri.y2[last] - rec.y2[last]) < 0.2);
    CHECK(frobenius_norm(tri.y3[last] - rec.y3[last]) < 0.2);

    // Refining the shared path by 4x shrinks the y1 gap roughly linearly.
    MagnusConfig fine_cfg = cfg;
    fine_cfg.grid = fine_grid;
    const MagnusTerms tri_f = terms_triangular(fine, path_integrals(fine), fine_cfg);
    const MagnusTerms rec_f = recursion_terms(sde, fine, fine_cfg);
    const std::size_t fl = tri_f.y1.size() - 1;
    CHECK(max_abs_diff(tri_f.y1[fl], rec_f.y1[fl]) <
          0.5 * max_abs_diff(tri.y1[last], rec.y1[last]));
}

TEST_CASE("first-order term is the same across all builders") {
    const TimeGrid grid{1.0, 80};
    const BrownianPath path = sample_brownian(grid, 1, 61, 7);
    const PathIntegrals ints = path_integrals(path);
    const LinearSde sde = LinearSde::constants(kB, {kA});
    MagnusConfig cfg;
    cfg.order = 1;
    cfg.grid = grid;

    const MagnusTerms closed = terms_const(kA, kB, path, ints, cfg);
    const MagnusTerms gen = terms_general(sde, path, cfg);
    const MagnusTerms rec = recursion_terms(sde, path, cfg);
    for (std::size_t k = 0; k < closed.y1.size(); ++k) {
        CHECK(max_abs_diff(closed.y1[k], gen.y1[k]) < 1e-12);
        CHECK(max_abs_diff(gen.y1[k], rec.y1[k]) == 0.0);
    }
}

TEST_CASE("output index selection matches the full run") {
    const TimeGrid grid{1.0, 64};
    const BrownianPath path = sample_brownian(grid, 1, 71, 0);
    const LinearSde sde = LinearSde::constants(kB, {kA});

    MagnusConfig full;
    full.order = 3;
    full.grid = grid;
    const MagnusTerms all = recursion_terms(sde, path, full);

    MagnusConfig some = full;
    some.output_indices = {0, 10, 64};
    const MagnusTerms sel = recursion_terms(sde, path, some);
    REQUIRE(sel.indices == std::vector<std::int64_t>{0, 10, 64});
    for (std::size_t r = 0; r < sel.indices.size(); ++r) {
        const std::size_t k = static_cast<std::size_t>(sel.indices[r]);
        CHECK(max_abs_diff(sel.y1[r], all.y1[k]) == 0.0);
        CHECK(max_abs_diff(sel.y2[r], all.y2[k]) == 0.0);
        CHECK(max_abs_diff(sel.y3[r], all.y3[k]) == 0.0);
    }

    MagnusConfig bad = full;
    bad.output_indices = {65};
    CHECK_THROWS_AS(recursion_terms(sde, path, bad), std::invalid_argument);
}

TEST_CASE("assemble validates the requested order") {
    const TimeGrid grid{1.0, 10};
    const BrownianPath path = sample_brownian(grid, 1, 3, 0);
    const PathIntegrals ints = path_integrals(path);
    MagnusConfig one;
    one.order = 1;
    one.grid = grid;
    const MagnusTerms terms = terms_const(kA, kB, path, ints, one);

    MagnusConfig three = one;
    three.order = 3;
    CHECK_THROWS_AS(assemble(terms, three), std::invalid_argument);
}

TEST_CASE("sde constructor rejects inconsistent shapes") {
    CHECK_THROWS_AS(LinearSde::constants(Matrix(2), {Matrix(3)}), std::invalid_argument);
    CHECK_THROWS_AS(LinearSde::constants(Matrix(2), {}), std::invalid_argument);
}

TEST_CASE("exit monitor") {
    CHECK(tau_threshold() == doctest::Approx(1.0 - std::exp(-3.14159265358979323846))
                                 .epsilon(1e-15));

    const int n = 1000;
    std::vector<Matrix> xs;
    std::vector<double> times;
    for (int k = 0; k <= n; ++k) {
        times.push_back(1e-3 * k);
        xs.push_back(Matrix::identity(2));
    }
    CHECK(tau_monitor(xs, times) == tau_censored);

    // diag(e^t, 1) leaves the ball when e^t - 1 reaches the threshold.
    for (int k = 0; k <= n; ++k) xs[static_cast<std::size_t>(k)](0, 0) = std::exp(times[static_cast<std::size_t>(k)]);
    const double expected = std::log(2.0 - std::exp(-3.14159265358979323846));
    const double tau = tau_monitor(xs, times);
    CHECK(tau >= expected - 1e-12);
    CHECK(tau <= expected + 1e-3 + 1e-12);
}
