#include <catch2/catch_amalgamated.hpp>

#include "esreg/distributions.hpp"
#include "esreg/normal.hpp"
#include "esreg/rng.hpp"
#include "oracles.hpp"

using namespace esreg;

TEST_CASE("inverse normal CDF matches the bisection-on-erf oracle") {
    for (double p : {1e-9, 1e-6, 0.001, 0.025, 0.05, 0.1, 0.2, 0.5, 0.7, 0.95, 0.999, 1.0 - 1e-7}) {
        const double want = oracle::normal_quantile_bisect(p);
        REQUIRE(norm_quantile(p) == Catch::Approx(want).margin(1e-9));
    }
    REQUIRE(norm_quantile(0.975) == Catch::Approx(1.959964).margin(1e-6));
    REQUIRE_THROWS_AS(norm_quantile(0.0), std::domain_error);
}

TEST_CASE("normal quantile/ES pairs") {
    // (normal, 0.5): q = 0, es = -phi(0)/0.5
    const auto qe = dist_quantile_es(Noise::normal(), 0.5);
    REQUIRE(qe.q == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(qe.es == Catch::Approx(-0.7978845608).margin(1e-9));

    // quadrature oracle agreement at the levels used in the studies
    for (double a : {0.05, 0.1, 0.2}) {
        const auto v = dist_quantile_es(Noise::normal(), a);
        const double quad =
            oracle::es_by_quadrature([](double u) { return norm_quantile(u); }, a);
        REQUIRE(v.es == Catch::Approx(quad).margin(1e-6));
    }

    // alpha -> 1: ES tends to the mean (zero)
    REQUIRE(std::fabs(dist_quantile_es(Noise::normal(), 0.9999).es) < 0.01);
}

TEST_CASE("student t CDF/quantile round trip and reference values") {
    // frozen references (independent implementation)
    REQUIRE(student_t_quantile(0.05, 2.5) == Catch::Approx(-2.5582186141).margin(1e-7));
    REQUIRE(student_t_quantile(0.1, 3.0) == Catch::Approx(-1.6377443537).margin(1e-7));
    REQUIRE(student_t_quantile(0.2, 3.5) == Catch::Approx(-0.9567588339).margin(1e-7));

    for (double nu : {2.5, 3.0, 8.0}) {
        for (double p : {0.01, 0.05, 0.3, 0.5, 0.77, 0.99}) {
            const double q = student_t_quantile(p, nu);
            REQUIRE(student_t_cdf(q, nu) == Catch::Approx(p).margin(1e-10));
        }
    }
}

TEST_CASE("student t ES closed form agrees with quadrature") {
    for (double nu : {2.5, 3.0, 3.5}) {
        for (double a : {0.05, 0.1, 0.2}) {
            const auto v = dist_quantile_es(Noise::student_t(nu), a);
            const double quad = oracle::es_by_quadrature(
                [nu](double u) { return student_t_quantile(u, nu); }, a);
            REQUIRE(v.es == Catch::Approx(quad).margin(1e-6));
        }
    }
    // frozen spot value
    REQUIRE(dist_quantile_es(Noise::student_t(3.0), 0.1).es ==
            Catch::Approx(-2.9108175960).margin(1e-6));
    REQUIRE_THROWS_AS(dist_quantile_es(Noise::student_t(1.5), 0.1), BadDegrees);
}

TEST_CASE("es lies below the quantile") {
    for (double a : {0.05, 0.1, 0.2, 0.5, 0.9}) {
        const auto n = dist_quantile_es(Noise::normal(), a);
        REQUIRE(n.es < n.q);
        const auto t = dist_quantile_es(Noise::student_t(2.5), a);
        REQUIRE(t.es < t.q);
    }
}

TEST_CASE("sampled moments match the law") {
    Rng rng(2024);
    const int n = 200000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sum2 += x * x;
    }
    REQUIRE(sum / n == Catch::Approx(0.0).margin(0.01));
    REQUIRE(sum2 / n == Catch::Approx(1.0).margin(0.02));

    // t_5 variance = nu/(nu-2)
    double tsum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.student_t(5.0);
        tsum2 += x * x;
    }
    REQUIRE(tsum2 / n == Catch::Approx(5.0 / 3.0).margin(0.06));

    // empirical t_2.5 tail quantile vs the quantile function
    std::vector<double> draws(100000);
    for (auto& d : draws) d = rng.student_t(2.5);
    std::sort(draws.begin(), draws.end());
    const double emp_q05 = draws[static_cast<std::size_t>(0.05 * draws.size())];
    REQUIRE(emp_q05 == Catch::Approx(student_t_quantile(0.05, 2.5)).margin(0.08));
}
