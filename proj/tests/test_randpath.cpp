#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "magnuslab/randpath.hpp"

using namespace magnuslab;

TEST_CASE("time grid arithmetic") {
    const TimeGrid grid{2.0, 8};
    CHECK(grid.dt() == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(grid.time(0) == 0.0);
    CHECK(grid.time(8) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(grid.index_of(0.5) == 2);
    CHECK(grid.index_of(2.0) == 8);
    CHECK_THROWS_AS(grid.index_of(0.13), std::exception);
}

TEST_CASE("paths are a pure function of (seed, sample_index)") {
    const TimeGrid grid{1.0, 1000};
    const BrownianPath a = sample_brownian(grid, 2, 77, 5);
    const BrownianPath b = sample_brownian(grid, 2, 77, 5);
    REQUIRE(a.values.size() == 2);
    REQUIRE(a.values[0].size() == 1001);
    CHECK(a.w(0, 0) == 0.0);
    CHECK(a.w(1, 0) == 0.0);
    for (int j = 0; j < 2; ++j)
        for (std::int64_t k = 0; k <= 1000; ++k) CHECK(a.w(j, k) == b.w(j, k));

    const BrownianPath c = sample_brownian(grid, 2, 77, 6);
    const BrownianPath d = sample_brownian(grid, 2, 78, 5);
    CHECK(a.w(0, 1000) != c.w(0, 1000));
    CHECK(a.w(0, 1000) != d.w(0, 1000));
    // Channels are independent streams.
    CHECK(a.w(0, 1000) != a.w(1, 1000));
}

TEST_CASE("increment statistics look Brownian") {
    const TimeGrid grid{1.0, 100};
    const int m = 2000;
    double sum = 0.0, sumsq = 0.0, terminal_sq = 0.0;
    for (int i = 0; i < m; ++i) {
        const BrownianPath p = sample_brownian(grid, 1, 2024, i);
        for (std::int64_t k = 0; k < 100; ++k) {
            const double dw = p.increment(0, k);
            sum += dw;
            sumsq += dw * dw;
        }
        terminal_sq += p.w(0, 100) * p.w(0, 100);
    }
    const double n_inc = 100.0 * m;
    // Increment mean 0, variance dt; terminal variance t_final.
    CHECK(std::abs(sum / n_inc) < 3.0 * std::sqrt(0.01 / n_inc));
    CHECK(sumsq / n_inc == doctest::Approx(0.01).epsilon(0.02));
    CHECK(terminal_sq / m == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("subsample restricts without re-simulation") {
    const TimeGrid grid{1.0, 1000};
    const BrownianPath fine = sample_brownian(grid, 1, 3, 0);

    const BrownianPath same = subsample(fine, 1);
    for (std::int64_t k = 0; k <= 1000; ++k) CHECK(same.w(0, k) == fine.w(0, k));

    const BrownianPath coarse = subsample(fine, 10);
    CHECK(coarse.grid.n_steps == 100);
    CHECK(coarse.grid.t_final == fine.grid.t_final);
    for (std::int64_t k = 0; k <= 100; ++k) CHECK(coarse.w(0, k) == fine.w(0, 10 * k));

    CHECK_THROWS_AS(subsample(fine, 7), std::exception);
}

TEST_CASE("path integrals are left-point running sums") {
    const TimeGrid grid{1.0, 50};
    const BrownianPath p = sample_brownian(grid, 1, 11, 0);
    const PathIntegrals ints = path_integrals(p);
    REQUIRE(ints.int_w.size() == 1);
    REQUIRE(ints.int_w[0].size() == 51);
    CHECK(ints.int_w[0][0] == 0.0);
    CHECK(ints.int_sw[0][0] == 0.0);
    CHECK(ints.int_w2[0][0] == 0.0);
    CHECK(ints.int_w3[0][0] == 0.0);

    const double dt = grid.dt();
    double acc_w = 0.0, acc_sw = 0.0, acc_w2 = 0.0, acc_w3 = 0.0;
    for (std::int64_t k = 0; k < 50; ++k) {
        const double w = p.w(0, k);
        acc_w += w * dt;
        acc_sw += grid.time(k) * w * dt;
        acc_w2 += w * w * dt;
        acc_w3 += w * w * w * dt;
        CHECK(ints.int_w[0][k + 1] == doctest::Approx(acc_w).epsilon(1e-14));
        CHECK(ints.int_sw[0][k + 1] == doctest::Approx(acc_sw).epsilon(1e-14));
        CHECK(ints.int_w2[0][k + 1] == doctest::Approx(acc_w2).epsilon(1e-14));
        CHECK(ints.int_w3[0][k + 1] == doctest::Approx(acc_w3).epsilon(1e-14));
    }
}

TEST_CASE("ito_integral of W dW satisfies the discrete identity") {
    const TimeGrid grid{1.0, 400};
    const BrownianPath p = sample_brownian(grid, 1, 99, 1);
    const std::vector<double>& w = p.values[0];
    const std::vector<double> integral = ito_integral(w, p, 0);
    REQUIRE(integral.size() == w.size());
    CHECK(integral[0] == 0.0);

    // sum W_k dW_k = (W_N^2 - sum dW_k^2) / 2, an algebraic identity.
    double qv = 0.0;
    for (std::int64_t k = 0; k < 400; ++k) qv += p.increment(0, k) * p.increment(0, k);
    CHECK(integral[400] ==
          doctest::Approx(0.5 * (w[400] * w[400] - qv)).epsilon(1e-12));
}

TEST_CASE("normal inverse CDF hits known quantiles") {
    CHECK(rng::normal_icdf(0.5) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(rng::normal_icdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-7));
    CHECK(rng::normal_icdf(0.84134474606854293) == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(rng::normal_icdf(0.158655253931457) == doctest::Approx(-1.0).epsilon(1e-7));

    CHECK(rng::mix64(0) == rng::mix64(0));
    CHECK(rng::mix64(1) != rng::mix64(2));
}

TEST_CASE("path dump is one row per grid point") {
    const TimeGrid grid{0.5, 4};
    const BrownianPath p = sample_brownian(grid, 2, 1, 0);
    std::ostringstream out;
    dump_path_csv(p, out);
    const std::string text = out.str();
    std::size_t rows = 0;
    for (const char ch : text)
        if (ch == '\n') ++rows;
    CHECK(rows == 6);  // header + 5 grid points
    CHECK(text.find("k,t") == 0);
}
