#include <catch2/catch_amalgamated.hpp>

#include <roughskew/numerics.hpp>

#include <cmath>
#include <vector>

using namespace roughskew::numerics;

TEST_CASE("normal cdf and pdf match frozen anchors", "[numerics]") {
    CHECK(norm_cdf(0.0) == Catch::Approx(0.5).epsilon(1e-15));
    CHECK(norm_cdf(0.1) == Catch::Approx(0.53982783727702899).epsilon(1e-15));
    CHECK(norm_pdf(0.0) == Catch::Approx(0.39894228040143268).epsilon(1e-15));
    CHECK(norm_cdf(-3.0) + norm_cdf(3.0) == Catch::Approx(1.0).epsilon(1e-15));

    double prev = 0.0;
    for (double x = -8.0; x <= 8.0; x += 0.25) {
        const double c = norm_cdf(x);
        CHECK(c >= prev);
        prev = c;
    }
}

TEST_CASE("inverse normal cdf inverts the cdf", "[numerics]") {
    for (double x = -6.0; x <= 6.0; x += 0.17) {
        const double back = norm_inv(norm_cdf(x));
        CHECK(back == Catch::Approx(x).epsilon(1e-8));
    }
    CHECK(norm_inv(0.5) == Catch::Approx(0.0).margin(1e-15));
    CHECK_THROWS_AS(norm_inv(0.0), std::domain_error);
    CHECK_THROWS_AS(norm_inv(1.0), std::domain_error);
    CHECK_THROWS_AS(norm_inv(-0.5), std::domain_error);
}

TEST_CASE("gamma function values and recurrence", "[numerics]") {
    CHECK(gamma_fn(0.5) * gamma_fn(0.5) == Catch::Approx(pi).epsilon(1e-13));
    CHECK(gamma_fn(5.0) == Catch::Approx(24.0).epsilon(1e-13));
    CHECK(gamma_fn(1.0) == Catch::Approx(1.0).epsilon(1e-13));
    CHECK(gamma_fn(0.4) == Catch::Approx(2.2181595437576878).epsilon(1e-12));
    CHECK(gamma_fn(0.2) == Catch::Approx(4.5908437119988035).epsilon(1e-12));
    for (double x : {0.1, 0.35, 0.7, 1.3, 2.6}) {
        CHECK(gamma_fn(x + 1.0) == Catch::Approx(x * gamma_fn(x)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(gamma_fn(0.0), std::domain_error);
    CHECK_THROWS_AS(gamma_fn(-1.0), std::domain_error);
}

TEST_CASE("cholesky factors a small SPD matrix exactly", "[numerics]") {
    SpdMatrix m(2);
    m(0, 0) = 4.0;
    m(0, 1) = m(1, 0) = 2.0;
    m(1, 1) = 3.0;
    const Matrix l = cholesky(m);
    CHECK(l(0, 0) == Catch::Approx(2.0).epsilon(1e-15));
    CHECK(l(1, 0) == Catch::Approx(1.0).epsilon(1e-15));
    CHECK(l(0, 1) == 0.0);
    CHECK(l(1, 1) == Catch::Approx(1.4142135623730951).epsilon(1e-15));
}

TEST_CASE("cholesky reconstructs a Cauchy gram matrix", "[numerics]") {
    const std::vector<double> beta = {0.5, 1.0, 2.0, 4.0, 8.0};
    const std::size_t n = beta.size();
    SpdMatrix m(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m(i, j) = 1.0 / (beta[i] + beta[j]);
    const Matrix l = cholesky(m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += l(i, k) * l(j, k);
            CHECK(s == Catch::Approx(m(i, j)).epsilon(1e-12));
        }
    }
}

TEST_CASE("cholesky rejects indefinite input", "[numerics]") {
    SpdMatrix m(2);
    m(0, 0) = 1.0;
    m(0, 1) = m(1, 0) = 2.0;
    m(1, 1) = 1.0;
    CHECK_THROWS_AS(cholesky(m), FactorizationError);
}

TEST_CASE("psd factor handles rank deficiency", "[numerics]") {
    const std::vector<double> v = {1.0, -2.0, 3.0};
    SpdMatrix m(3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) m(i, j) = v[i] * v[j];
    const PsdFactor f = psd_factor(m);
    CHECK(f.rank == 1);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < f.rank; ++k) s += f.f(i, k) * f.f(j, k);
            CHECK(s == Catch::Approx(m(i, j)).margin(1e-10));
        }
    }

    SpdMatrix indef(2);
    indef(0, 0) = 1.0;
    indef(0, 1) = indef(1, 0) = 3.0;
    indef(1, 1) = 1.0;
    CHECK_THROWS_AS(psd_factor(indef), FactorizationError);
}

TEST_CASE("least squares line recovers a frozen fit", "[numerics]") {
    const std::vector<double> xs = {0.0, 1.0, 2.0};
    const std::vector<double> ys = {1.0, 2.0, 4.0};
    const LinFit fit = least_squares_line(xs, ys);
    CHECK(fit.slope == Catch::Approx(1.5).epsilon(1e-14));
    CHECK(fit.intercept == Catch::Approx(0.83333333333333337).epsilon(1e-14));
    CHECK(fit.r_squared > 0.9);

    const std::vector<double> exact_y = {1.0, 3.0, 5.0};
    const LinFit exact = least_squares_line(xs, exact_y);
    CHECK(exact.slope == Catch::Approx(2.0).epsilon(1e-14));
    CHECK(exact.r_squared == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(slope_stderr(exact, xs) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("least squares line rejects degenerate input", "[numerics]") {
    const std::vector<double> xs = {1.0, 1.0, 1.0};
    const std::vector<double> ys = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(least_squares_line(xs, ys), std::invalid_argument);
    const std::vector<double> one_x = {1.0};
    const std::vector<double> one_y = {1.0};
    CHECK_THROWS_AS(least_squares_line(one_x, one_y), std::invalid_argument);
}
