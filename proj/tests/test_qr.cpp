#include <catch2/catch_amalgamated.hpp>

#include "esreg/distributions.hpp"
#include "esreg/qr.hpp"
#include "esreg/rng.hpp"
#include "oracles.hpp"

using namespace esreg;

namespace {

Dataset intercept_only(std::initializer_list<double> ys) {
    Dataset d;
    d.y = Vector(static_cast<Eigen::Index>(ys.size()));
    Eigen::Index i = 0;
    for (double v : ys) d.y(i++) = v;
    d.x = Matrix::Ones(d.y.size(), 1);
    return d;
}

double smoothed_objective(const Dataset& d, const Vector& beta, double alpha, double h) {
    double f = 0.0;
    for (Eigen::Index i = 0; i < d.n(); ++i)
        f += smoothed_check_loss(d.y(i) - d.x.row(i).dot(beta), alpha, h);
    return f / static_cast<double>(d.n());
}

}  // namespace

TEST_CASE("check loss values") {
    REQUIRE(check_loss(2.0, 0.5) == Catch::Approx(1.0));
    REQUIRE(check_loss(-1.0, 0.1) == Catch::Approx(0.9));
    REQUIRE(check_loss(0.0, 0.3) == Catch::Approx(0.0));
    REQUIRE(check_loss(-2.5, 0.7) >= 0.0);
}

TEST_CASE("intercept-only smoothed fit approaches the sample median") {
    Dataset d = intercept_only({1, 2, 3, 4, 5});
    const auto fit = smoothed_qr_fit(d, 0.5, 0.01, {1e-10, 20000, 0});
    REQUIRE(fit.beta(0) == Catch::Approx(3.0).margin(0.02));
    REQUIRE(fit.diagnostics.converged);
}

TEST_CASE("constant response gives a zero-residual fit") {
    Dataset d;
    d.x = Matrix::Ones(20, 2);
    Rng rng(5);
    for (Eigen::Index i = 0; i < 20; ++i) d.x(i, 1) = rng.uniform(-1.0, 1.0);
    d.y = Vector::Constant(20, 4.2);
    const auto fit = smoothed_qr_fit(d, 0.3, 1e-3, {1e-8, 20000, 0});
    REQUIRE(fit.beta(0) == Catch::Approx(4.2).margin(2e-3));
    REQUIRE(fit.beta(1) == Catch::Approx(0.0).margin(2e-3));
}

TEST_CASE("large-sample consistency under a normal location model") {
    // y = 1 + 2 x + eps, eps ~ N(0,1): the alpha=0.1 quantile plane is
    // (1 + z_{0.1}, 2) with z_{0.1} from the quantile oracle.
    const double z01 = oracle::normal_quantile_bisect(0.1);
    Rng rng(31);
    const Eigen::Index n = 50000;
    Dataset d;
    d.x = Matrix::Ones(n, 2);
    d.y = Vector(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d.x(i, 1) = rng.uniform(0.0, 2.0);
        d.y(i) = 1.0 + 2.0 * d.x(i, 1) + rng.normal();
    }
    const auto fit = smoothed_qr_fit(d, 0.1, std::nullopt, {1e-7, 20000, 0});
    REQUIRE(fit.diagnostics.converged);
    REQUIRE(fit.beta(0) == Catch::Approx(1.0 + z01).margin(0.03));
    REQUIRE(fit.beta(1) == Catch::Approx(2.0).margin(0.03));
    REQUIRE(fit.beta(0) == Catch::Approx(-0.2816).margin(0.03));
}

TEST_CASE("analytic gradient matches central differences") {
    Rng rng(77);
    Dataset d;
    const Eigen::Index n = 60, p = 4;
    d.x = Matrix::Ones(n, p);
    d.y = Vector(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 1; j < p; ++j) d.x(i, j) = rng.normal();
        d.y(i) = rng.normal() * 2.0 + d.x(i, 1);
    }
    const double alpha = 0.25, h = 0.3;
    auto obj = [&](const Vector& b) { return smoothed_objective(d, b, alpha, h); };
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int trial = 0; trial < 20; ++trial) {
        Vector b(p);
        for (Eigen::Index j = 0; j < p; ++j) b(j) = rng.normal();
        Vector grad = Vector::Zero(p);
        for (Eigen::Index i = 0; i < n; ++i)
            grad += inv_n * (norm_cdf((d.x.row(i).dot(b) - d.y(i)) / h) - alpha) *
                    d.x.row(i).transpose();
        const Vector fd = oracle::fd_gradient(obj, b, 1e-6);
        REQUIRE((grad - fd).norm() <= 1e-6 * (1.0 + fd.norm()));
    }
}

TEST_CASE("fitted intercept is monotone in the quantile level") {
    Dataset d = intercept_only({-3.0, -1.2, -0.7, 0.1, 0.4, 0.9, 1.5, 2.2, 3.3, 5.0});
    const double h = 0.05;
    double prev = -1e300;
    for (double a : {0.1, 0.25, 0.5, 0.75, 0.9}) {
        const auto fit = smoothed_qr_fit(d, a, h, {1e-9, 20000, 0});
        REQUIRE(fit.beta(0) + 2.0 * h >= prev);
        prev = fit.beta(0);
    }
}

TEST_CASE("affine equivariance with rescaled bandwidth") {
    Rng rng(13);
    Dataset d;
    const Eigen::Index n = 400;
    d.x = Matrix::Ones(n, 3);
    d.y = Vector(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d.x(i, 1) = rng.uniform(0.0, 1.0);
        d.x(i, 2) = rng.normal();
        d.y(i) = 0.5 + d.x(i, 1) - 2.0 * d.x(i, 2) + rng.student_t(4.0);
    }
    const double alpha = 0.2, h = 0.1, a = 3.0, c = 2.5;
    const SolverControl ctl{1e-10, 50000, 0};
    const auto base = smoothed_qr_fit(d, alpha, h, ctl);

    Dataset scaled = d;
    scaled.y = (a + c * d.y.array()).matrix();
    const auto mapped = smoothed_qr_fit(scaled, alpha, c * h, ctl);
    REQUIRE(mapped.beta(0) == Catch::Approx(a + c * base.beta(0)).margin(1e-5));
    REQUIRE(mapped.beta(1) == Catch::Approx(c * base.beta(1)).margin(1e-5));
    REQUIRE(mapped.beta(2) == Catch::Approx(c * base.beta(2)).margin(1e-5));
}

TEST_CASE("gradient norm at the returned point honours the tolerance") {
    Rng rng(99);
    Dataset d;
    const Eigen::Index n = 300;
    d.x = Matrix::Ones(n, 2);
    d.y = Vector(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d.x(i, 1) = rng.normal();
        d.y(i) = d.x(i, 1) + rng.normal();
    }
    const SolverControl ctl{1e-8, 20000, 0};
    const auto fit = smoothed_qr_fit(d, 0.1, std::nullopt, ctl);
    REQUIRE(fit.diagnostics.converged);
    REQUIRE(fit.diagnostics.final_gradient_norm <= ctl.tol);
}

TEST_CASE("rank-deficient designs are rejected") {
    Dataset d;
    d.x = Matrix::Ones(10, 2);  // second column duplicates the intercept
    d.y = Vector::LinSpaced(10, 0.0, 1.0);
    REQUIRE_THROWS_AS(smoothed_qr_fit(d, 0.5), DegenerateDesign);
}

TEST_CASE("default bandwidth rule") {
    REQUIRE(default_bandwidth(100000, 2) == Catch::Approx(0.05));
    const double h = default_bandwidth(100, 20);
    REQUIRE(h == Catch::Approx(std::pow((20.0 + std::log(100.0)) / 100.0, 0.4)));
}
