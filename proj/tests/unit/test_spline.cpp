#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "odereg/errors.hpp"
#include "odereg/spline.hpp"
#include "oracles.hpp"

using namespace odereg;

TEST_SUITE("spline") {

TEST_CASE("knot_count is ceil(N^e)") {
    CHECK(knot_count(1000, 1.0 / 7.0) == 3);  // 1000^(1/7) = 2.68
    CHECK(knot_count(32, 0.2) == 2);          // exact power
    CHECK(knot_count(33, 0.2) == 3);
    CHECK(knot_count(1, 0.2) == 1);
    CHECK_THROWS_AS(knot_count(0, 0.2), DomainError);
    CHECK_THROWS_AS(knot_count(10, 0.5), DomainError);
    CHECK_THROWS_AS(knot_count(10, 0.0), DomainError);
}

TEST_CASE("equal knots partition the boundary") {
    const std::vector<double> none;
    auto k = make_knots(none, KnotRule::Equal, 3, 0.0, 4.0);
    REQUIRE(k.size() == 3);
    CHECK(k[0] == doctest::Approx(1.0));
    CHECK(k[1] == doctest::Approx(2.0));
    CHECK(k[2] == doctest::Approx(3.0));
    k = make_knots(none, KnotRule::Equal, 1, 0.0, 2.0);
    REQUIRE(k.size() == 1);
    CHECK(k[0] == doctest::Approx(1.0));
    CHECK_THROWS_AS(make_knots(none, KnotRule::Equal, 1, 2.0, 2.0), DomainError);
}

TEST_CASE("quantile knots use the distinct values") {
    const std::vector<double> v{1, 1, 2, 3};
    const auto k = make_knots(v, KnotRule::Quantile, 1, 0.0, 4.0);
    REQUIRE(k.size() == 1);
    CHECK(k[0] == doctest::Approx(oracle::quantile7({1, 2, 3}, 0.5)));
    CHECK(k[0] == doctest::Approx(2.0));

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::vector<double> w(57);
    for (double& x : w) x = u(rng);
    std::sort(w.begin(), w.end());
    const auto q = make_knots(w, KnotRule::Quantile, 4, 0.0, 10.0);
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(q[j] == doctest::Approx(oracle::quantile7(w, static_cast<double>(j + 1) / 5.0)).epsilon(1e-12));
}

TEST_CASE("coincident quantile knots are nudged apart") {
    const std::vector<double> v{1.0, 1.0, 1.0, 1.0};
    // One distinct value: every quantile is 1.
    const auto k = make_knots(v, KnotRule::Quantile, 2, 0.0, 2.0);
    REQUIRE(k.size() == 2);
    CHECK(k[0] < k[1]);
    CHECK(k[1] - k[0] == doctest::Approx(2.0 * 1e-9).epsilon(1e-6));
}

TEST_CASE("impossible quantile knots raise DegenerateKnotsError") {
    // The only value sits on the upper boundary, so nudged knots leave the domain.
    const std::vector<double> v{1.0};
    CHECK_THROWS_AS(make_knots(v, KnotRule::Quantile, 2, 0.0, 1.0), DegenerateKnotsError);
    const std::vector<double> none;
    CHECK_THROWS_AS(make_knots(none, KnotRule::Quantile, 1, 0.0, 1.0), DegenerateKnotsError);
}

TEST_CASE("basis validation") {
    CHECK_THROWS_AS(SplineBasis(4, {2.0, 1.0}, 0.0, 3.0), DomainError);
    CHECK_THROWS_AS(SplineBasis(4, {3.0}, 0.0, 3.0), DomainError);
    CHECK_THROWS_AS(SplineBasis(0, {}, 0.0, 1.0), DomainError);
    CHECK(SplineBasis(4, {1.0, 2.0}, 0.0, 3.0).dim() == 6);
    CHECK(SplineBasis(5, {}, 0.0, 1.0).dim() == 5);
}

TEST_CASE("order 1 is an indicator basis") {
    const SplineBasis b(1, {1.0}, 0.0, 2.0);
    const auto v = b.eval(0.5);
    REQUIRE(v.size() == 2);
    CHECK(v[0] == 1.0);
    CHECK(v[1] == 0.0);
    const auto d = b.eval_deriv(0.5);
    CHECK(d[0] == 0.0);
    CHECK(d[1] == 0.0);
}

TEST_CASE("centered uniform cubic B-spline equals 2/3 at its middle") {
    // Interior knots 1, 2, 3 on (0, 4): the basis function supported on [0, 4] is B_3.
    const SplineBasis b(4, {1.0, 2.0, 3.0}, 0.0, 4.0);
    CHECK(b.eval(2.0)[3] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("basis agrees with the textbook recursion") {
    std::mt19937_64 rng(11);
    for (std::size_t order : {1u, 2u, 3u, 4u, 5u}) {
        const std::vector<double> interior{0.3, 0.9, 1.1, 2.4};
        const SplineBasis b(order, interior, 0.0, 3.0);
        const auto knots = oracle::clamped_knots(order, interior, 0.0, 3.0);
        std::uniform_real_distribution<double> u(0.0, 3.0);
        for (int r = 0; r < 200; ++r) {
            const double t = r == 0 ? 3.0 : r == 1 ? 0.0 : u(rng);
            const auto v = b.eval(t);
            for (std::size_t j = 0; j < b.dim(); ++j)
                CHECK(v[j] == doctest::Approx(oracle::bspline(knots, order, j, t)).epsilon(1e-12).scale(1.0));
        }
    }
}

TEST_CASE("partition of unity, nonnegativity and local support") {
    const SplineBasis b(4, {0.5, 1.0, 1.7, 2.2, 2.9}, 0.0, 4.0);
    const auto breaks = b.breakpoints();
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 4.0);
    for (int r = 0; r < 1000; ++r) {
        const double t = u(rng);
        const auto v = b.eval(t);
        double sum = 0.0;
        std::size_t nonzero = 0;
        for (double x : v) {
            CHECK(x >= 0.0);
            sum += x;
            nonzero += x != 0.0;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
        CHECK(nonzero <= b.order());
    }
}

TEST_CASE("derivative matches central differences away from knots") {
    const SplineBasis b(4, {0.5, 1.0, 1.7}, 0.0, 3.0);
    for (double t : {0.2, 0.77, 1.3, 2.0, 2.9}) {
        const double h = 1e-6;
        const auto d = b.eval_deriv(t);
        const auto vp = b.eval(t + h);
        const auto vm = b.eval(t - h);
        for (std::size_t j = 0; j < b.dim(); ++j) {
            const double fd = (vp[j] - vm[j]) / (2.0 * h);
            CHECK(std::abs(d[j] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("order 1 derivative is zero inside pieces") {
    const SplineBasis b(1, {1.0, 2.0}, 0.0, 3.0);
    for (double x : b.eval_deriv(1.5)) CHECK(x == 0.0);
}

TEST_CASE("polynomial reproduction by interpolation") {
    const SplineBasis b(4, {0.7, 1.5, 2.1}, 0.0, 3.0);
    const std::size_t m = b.dim();
    auto poly = [](double t) { return 0.5 - 1.2 * t + 0.7 * t * t - 0.1 * t * t * t; };
    Eigen::MatrixXd a(m, m);
    Eigen::VectorXd y(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double t = 3.0 * static_cast<double>(i) / static_cast<double>(m - 1);
        const auto v = b.eval(t);
        for (std::size_t j = 0; j < m; ++j) a(i, j) = v[j];
        y[i] = poly(t);
    }
    const Eigen::VectorXd c = a.fullPivLu().solve(y);
    const std::vector<double> coef(c.data(), c.data() + c.size());
    for (double t = 0.0; t <= 3.0; t += 0.0123) CHECK(std::abs(b.combine(coef, t) - poly(t)) < 1e-10);
}

TEST_CASE("outside the boundary the basis continues linearly") {
    const SplineBasis b(4, {1.0, 2.0}, 0.0, 3.0);
    const auto v3 = b.eval(3.0);
    const auto d3 = b.eval_deriv(3.0);
    const auto v0 = b.eval(0.0);
    const auto d0 = b.eval_deriv(0.0);
    for (double dt : {0.1, 1.5, 10.0}) {
        const auto hi = b.eval(3.0 + dt);
        const auto dhi = b.eval_deriv(3.0 + dt);
        const auto lo = b.eval(-dt);
        for (std::size_t j = 0; j < b.dim(); ++j) {
            CHECK(hi[j] == doctest::Approx(v3[j] + dt * d3[j]).epsilon(1e-13).scale(1.0));
            CHECK(dhi[j] == doctest::Approx(d3[j]).epsilon(1e-13).scale(1.0));
            CHECK(lo[j] == doctest::Approx(v0[j] - dt * d0[j]).epsilon(1e-13).scale(1.0));
        }
    }
}

TEST_CASE("combine and combine_deriv are the coefficient-weighted sums") {
    const SplineBasis b(3, {0.4, 1.3}, 0.0, 2.0);
    const std::vector<double> coef{0.3, -1.0, 2.0, 0.5, -0.7};
    for (double t : {-0.5, 0.0, 0.2, 1.0, 1.99, 2.0, 2.6}) {
        const auto v = b.eval(t);
        const auto d = b.eval_deriv(t);
        double sv = 0.0;
        double sd = 0.0;
        for (std::size_t j = 0; j < coef.size(); ++j) {
            sv += coef[j] * v[j];
            sd += coef[j] * d[j];
        }
        CHECK(b.combine(coef, t) == doctest::Approx(sv).epsilon(1e-14));
        CHECK(b.combine_deriv(coef, t) == doctest::Approx(sd).epsilon(1e-14));
    }
}

}
