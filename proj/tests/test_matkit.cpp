#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <stdexcept>

#include "magnuslab/matkit.hpp"

using namespace magnuslab;

namespace {

Matrix random_matrix(std::mt19937_64& rng, int n, double scale) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    Matrix m(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = dist(rng);
    return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double d = 0.0;
    for (int i = 0; i < a.dim(); ++i)
        for (int j = 0; j < a.dim(); ++j) d = std::max(d, std::abs(a(i, j) - b(i, j)));
    return d;
}

// Plain Taylor sum; accurate to ~1/terms! for ||a|| <= 1.
Matrix taylor_exp(const Matrix& a, int terms) {
    Matrix acc = Matrix::identity(a.dim());
    Matrix power = Matrix::identity(a.dim());
    double inv_fact = 1.0;
    for (int k = 1; k <= terms; ++k) {
        power = power * a;
        inv_fact /= k;
        acc.add_scaled(power, inv_fact);
    }
    return acc;
}

}  // namespace

TEST_CASE("matrix arithmetic basics") {
    Matrix a(2);
    a(0, 0) = 1.0;
    a(0, 1) = 2.0;
    a(1, 0) = 3.0;
    a(1, 1) = 4.0;
    const Matrix i2 = Matrix::identity(2);
    CHECK(max_abs_diff(a * i2, a) == 0.0);
    CHECK(max_abs_diff(i2 * a, a) == 0.0);

    Matrix b = a;
    b.add_scaled(i2, -1.0);
    CHECK(b(0, 0) == 0.0);
    CHECK(b(1, 1) == 3.0);
    CHECK(b(0, 1) == 2.0);

    const Matrix c = 2.0 * a - a;
    CHECK(max_abs_diff(c, a) == 0.0);
    CHECK(frobenius_norm(i2) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("commutator identities") {
    std::mt19937_64 rng(1);
    const Matrix x = random_matrix(rng, 3, 1.0);
    const Matrix y = random_matrix(rng, 3, 1.0);
    const Matrix z = random_matrix(rng, 3, 1.0);

    CHECK(max_abs_diff(commutator(x, y), -1.0 * commutator(y, x)) < 1e-15);
    // Jacobi: [x,[y,z]] + [y,[z,x]] + [z,[x,y]] = 0
    const Matrix jac = commutator(x, commutator(y, z)) +
                       commutator(y, commutator(z, x)) +
                       commutator(z, commutator(x, y));
    CHECK(frobenius_norm(jac) < 1e-13);

    CHECK(max_abs_diff(ad_power(x, y, 0), y) == 0.0);
    CHECK(max_abs_diff(ad_power(x, y, 1), commutator(x, y)) == 0.0);
    CHECK(max_abs_diff(ad_power(x, y, 2), commutator(x, commutator(x, y))) < 1e-15);
}

TEST_CASE("Bernoulli table") {
    CHECK(bernoulli(0) == 1.0);
    CHECK(bernoulli(1) == -0.5);
    CHECK(bernoulli(2) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
    CHECK(bernoulli(4) == doctest::Approx(-1.0 / 30.0).epsilon(1e-15));
    CHECK(bernoulli(12) == doctest::Approx(-691.0 / 2730.0).epsilon(1e-15));
    CHECK(bernoulli(20) == doctest::Approx(-174611.0 / 330.0).epsilon(1e-15));
    CHECK(bernoulli(30) == doctest::Approx(8615841276005.0 / 14322.0).epsilon(1e-15));
    for (int k = 3; k < bernoulli_table_size; k += 2) CHECK(bernoulli(k) == 0.0);
    CHECK_THROWS_AS(bernoulli(bernoulli_table_size), std::out_of_range);
    CHECK_THROWS_AS(bernoulli(-1), std::out_of_range);
}

TEST_CASE("mat_exp against independent oracles") {
    CHECK(max_abs_diff(mat_exp(Matrix(3)), Matrix::identity(3)) == 0.0);

    Matrix d(3);
    d(0, 0) = 0.5;
    d(1, 1) = -1.25;
    d(2, 2) = 3.0;
    const Matrix ed = mat_exp(d);
    CHECK(ed(0, 0) == doctest::Approx(std::exp(0.5)).epsilon(1e-14));
    CHECK(ed(1, 1) == doctest::Approx(std::exp(-1.25)).epsilon(1e-14));
    CHECK(ed(2, 2) == doctest::Approx(std::exp(3.0)).epsilon(1e-14));
    CHECK(std::abs(ed(0, 1)) < 1e-16);

    // Nilpotent: exp(N) = I + N exactly.
    Matrix nil(2);
    nil(0, 1) = 0.75;
    const Matrix en = mat_exp(nil);
    CHECK(en(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(en(0, 1) == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(en(1, 0) == 0.0);

    // Rotation generator: exp maps to (cos, sin) exactly; theta = 50 forces
    // many squaring steps.
    for (const double theta : {0.3, 50.0}) {
        Matrix j(2);
        j(0, 1) = -theta;
        j(1, 0) = theta;
        const Matrix r = mat_exp(j);
        CHECK(r(0, 0) == doctest::Approx(std::cos(theta)).epsilon(1e-11));
        CHECK(r(0, 1) == doctest::Approx(-std::sin(theta)).epsilon(1e-11));
        CHECK(r(1, 0) == doctest::Approx(std::sin(theta)).epsilon(1e-11));
    }

    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 5; ++rep) {
        const Matrix a = random_matrix(rng, 4, 0.25);
        CHECK(max_abs_diff(mat_exp(a), taylor_exp(a, 30)) < 1e-13);
    }

    // Upper-triangular input keeps its zero block exactly.
    Matrix tri(2);
    tri(0, 0) = 2.0;
    tri(0, 1) = 1.0;
    tri(1, 1) = -1.0;
    CHECK(mat_exp(tri)(1, 0) == 0.0);
}

TEST_CASE("spectral norm") {
    Matrix d(2);
    d(0, 0) = -3.0;
    d(1, 1) = 0.5;
    CHECK(spectral_norm(d) == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(spectral_norm(Matrix::identity(5)) == doctest::Approx(1.0).epsilon(1e-9));

    // ((2,1),(0,-1)): largest singular value sqrt(3 + sqrt 5).
    Matrix tri(2);
    tri(0, 0) = 2.0;
    tri(0, 1) = 1.0;
    tri(1, 1) = -1.0;
    CHECK(spectral_norm(tri) ==
          doctest::Approx(std::sqrt(3.0 + std::sqrt(5.0))).epsilon(1e-9));
}

TEST_CASE("mat_log round trips and domain gate") {
    CHECK(frobenius_norm(mat_log(Matrix::identity(3))) == 0.0);

    std::mt19937_64 rng(3);
    SeriesConfig strict;
    strict.max_terms = 200;
    strict.abs_tol = 1e-17;
    for (int rep = 0; rep < 5; ++rep) {
        const Matrix a = random_matrix(rng, 3, 0.05);
        CHECK(max_abs_diff(mat_log(mat_exp(a), strict), a) < 1e-13);
    }
    const Matrix near = Matrix::identity(2) + random_matrix(rng, 2, 0.2);
    CHECK(max_abs_diff(mat_exp(mat_log(near, strict)), near) < 1e-12);

    Matrix far = Matrix::identity(2);
    far(0, 0) = 2.5;
    CHECK_THROWS_AS(mat_log(far), std::domain_error);
}

TEST_CASE("dexp matches a finite difference of the exponential") {
    std::mt19937_64 rng(4);
    const Matrix sigma = random_matrix(rng, 3, 0.4);
    const Matrix m = random_matrix(rng, 3, 0.5);
    SeriesConfig cfg;
    cfg.max_terms = 40;
    cfg.abs_tol = 1e-18;

    const double h = 1e-5;
    Matrix plus = sigma;
    plus.add_scaled(m, h);
    Matrix minus = sigma;
    minus.add_scaled(m, -h);
    Matrix fd = mat_exp(plus) - mat_exp(minus);
    fd *= 1.0 / (2.0 * h);

    const Matrix analytic = dexp(sigma, m, cfg) * mat_exp(sigma);
    CHECK(max_abs_diff(fd, analytic) < 1e-8);

    // Commuting arguments collapse the series to its first term.
    CHECK(max_abs_diff(dexp(Matrix(3), m, cfg), m) == 0.0);
    CHECK(max_abs_diff(dexp(sigma, sigma, cfg), sigma) < 1e-15);
}

TEST_CASE("dexp_inv inverts dexp and enforces its gate") {
    std::mt19937_64 rng(5);
    const Matrix sigma = random_matrix(rng, 3, 0.5);
    const Matrix m = random_matrix(rng, 3, 1.0);
    SeriesConfig cfg;
    cfg.max_terms = 50;
    cfg.abs_tol = 1e-18;

    CHECK(max_abs_diff(dexp_inv(sigma, dexp(sigma, m, cfg), cfg), m) < 1e-12);
    CHECK(max_abs_diff(dexp(sigma, dexp_inv(sigma, m, cfg), cfg), m) < 1e-12);

    Matrix big(2);
    big(0, 0) = 3.5;  // spectral norm above pi
    CHECK_THROWS_AS(dexp_inv(big, Matrix(2), cfg), std::domain_error);
}

TEST_CASE("ddexp is the mixed second derivative of exp") {
    std::mt19937_64 rng(6);
    const Matrix sigma = random_matrix(rng, 3, 0.4);
    const Matrix m = random_matrix(rng, 3, 0.5);
    const Matrix n = random_matrix(rng, 3, 0.5);
    SeriesConfig cfg;
    cfg.max_terms = 30;
    cfg.abs_tol = 0.0;

    // At sigma = 0 the series closes to the symmetrized product.
    Matrix sym = m * n + n * m;
    sym *= 0.5;
    CHECK(max_abs_diff(ddexp(Matrix(3), m, n, cfg), sym) < 1e-15);

    // Symmetry in the two directions holds for the full series.
    CHECK(max_abs_diff(ddexp(sigma, m, n, cfg), ddexp(sigma, n, m, cfg)) < 1e-12);

    // Four-point stencil for d^2/ds dt exp(sigma + s m + t n) at 0.
    const double h = 3e-4;
    auto shifted = [&](double s, double t) {
        Matrix y = sigma;
        y.add_scaled(m, s);
        y.add_scaled(n, t);
        return mat_exp(y);
    };
    Matrix fd = shifted(h, h) - shifted(h, -h) - shifted(-h, h) + shifted(-h, -h);
    fd *= 1.0 / (4.0 * h * h);
    const Matrix analytic = ddexp(sigma, m, n, cfg) * mat_exp(sigma);
    CHECK(max_abs_diff(fd, analytic) < 1e-6);
}
