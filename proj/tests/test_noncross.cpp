#include <catch2/catch_amalgamated.hpp>

#include "esreg/es.hpp"
#include "esreg/huber.hpp"
#include "esreg/noncross.hpp"
#include "esreg/rng.hpp"
#include "esreg/sim.hpp"
#include "oracles.hpp"

using namespace esreg;

namespace {

void check_kkt(const QpProblem& prob, const QpSolution& sol, double tol = 1e-8) {
    // primal feasibility
    REQUIRE(((prob.a_mat * sol.theta - prob.b).array() <= tol).all());
    // stationarity and complementary slackness
    Vector grad = prob.c_mat * sol.theta + prob.d;
    for (std::size_t k = 0; k < sol.active_set.size(); ++k) {
        REQUIRE(sol.dual(k) >= -tol);
        grad += sol.dual(k) * prob.a_mat.row(sol.active_set[k]).transpose();
        const double slack = prob.b(sol.active_set[k]) -
                             prob.a_mat.row(sol.active_set[k]).dot(sol.theta);
        REQUIRE(sol.dual(k) * slack <= tol);
    }
    REQUIRE(grad.lpNorm<Eigen::Infinity>() <= tol);
}

QpProblem random_feasible_qp(Rng& rng, Eigen::Index p, Eigen::Index m) {
    QpProblem prob;
    prob.c_mat = oracle::random_spd(p, rng, 40.0);
    prob.d = Vector(p);
    for (Eigen::Index j = 0; j < p; ++j) prob.d(j) = rng.normal();
    prob.a_mat = Matrix(m, p);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < p; ++j) prob.a_mat(i, j) = rng.normal();
    Vector anchor(p);
    for (Eigen::Index j = 0; j < p; ++j) anchor(j) = rng.normal();
    prob.b = prob.a_mat * anchor;
    for (Eigen::Index i = 0; i < m; ++i) prob.b(i) += 0.2 * rng.uniform();
    return prob;
}

}  // namespace

TEST_CASE("scalar box example") {
    // min (1/2) t^2 - t subject to t <= 0: optimum clips at t = 0, dual 1.
    QpProblem prob;
    prob.c_mat = Matrix::Ones(1, 1);
    prob.d = Vector::Constant(1, -1.0);
    prob.a_mat = Matrix::Ones(1, 1);
    prob.b = Vector::Zero(1);
    const QpSolution sol = qp_solve(prob);
    REQUIRE(sol.theta(0) == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(sol.active_set.size() == 1);
    REQUIRE(sol.dual(0) == Catch::Approx(1.0).margin(1e-10));
    check_kkt(prob, sol);
}

TEST_CASE("slack constraints return the unconstrained minimum") {
    Rng rng(3);
    QpProblem prob = random_feasible_qp(rng, 4, 6);
    prob.b.array() += 1e6;
    const QpSolution sol = qp_solve(prob);
    const Vector unconstrained = Cholesky(prob.c_mat).solve(Vector(-prob.d));
    REQUIRE((sol.theta - unconstrained).lpNorm<Eigen::Infinity>() <= 1e-10);
    REQUIRE(sol.active_set.empty());
}

TEST_CASE("random problems match the active-set enumeration oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const Eigen::Index p = 1 + static_cast<Eigen::Index>(rng.uniform() * 3);
        const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng.uniform() * 4);
        const QpProblem prob = random_feasible_qp(rng, p, m);
        const QpSolution sol = qp_solve(prob);
        check_kkt(prob, sol);
        const Vector best = oracle::qp_enumerate(prob.c_mat, prob.d, prob.a_mat, prob.b);
        REQUIRE(best.size() == p);
        const double obj_sol = 0.5 * sol.theta.dot(prob.c_mat * sol.theta) + prob.d.dot(sol.theta);
        const double obj_best = 0.5 * best.dot(prob.c_mat * best) + prob.d.dot(best);
        REQUIRE(obj_sol <= obj_best + 1e-9);
        REQUIRE(obj_sol >= obj_best - 1e-9);
    }
}

TEST_CASE("solution beats random feasible points") {
    Rng rng(19);
    const QpProblem prob = random_feasible_qp(rng, 3, 4);
    const QpSolution sol = qp_solve(prob);
    const double obj_sol = 0.5 * sol.theta.dot(prob.c_mat * sol.theta) + prob.d.dot(sol.theta);
    int tested = 0;
    while (tested < 100) {
        Vector x(3);
        for (int j = 0; j < 3; ++j) x(j) = 3.0 * rng.normal();
        // project towards the anchor direction until feasible
        for (int it = 0; it < 60 && ((prob.a_mat * x - prob.b).array() > 0.0).any(); ++it)
            x = 0.5 * (x + sol.theta);
        if (((prob.a_mat * x - prob.b).array() > 0.0).any()) continue;
        const double obj = 0.5 * x.dot(prob.c_mat * x) + prob.d.dot(x);
        REQUIRE(obj_sol <= obj + 1e-10);
        ++tested;
    }
}

TEST_CASE("infeasible systems are reported") {
    QpProblem prob;
    prob.c_mat = Matrix::Identity(1, 1);
    prob.d = Vector::Zero(1);
    prob.a_mat = Matrix(2, 1);
    prob.a_mat << 1.0, -1.0;
    prob.b = Vector(2);
    prob.b << -1.0, -1.0;  // t <= -1 and t >= 1
    REQUIRE_THROWS_AS(qp_solve(prob), Infeasible);
}

namespace {

Dataset hetero_sample(Eigen::Index n, int p, double alpha, Noise noise, std::uint64_t seed,
                      TrueCoefficients* truth_out = nullptr) {
    const HeteroModel m = make_hetero_model(p, noise, alpha, split_seed(seed, 9999));
    if (truth_out) *truth_out = true_coefficients(m);
    return gen_hetero(m, n, split_seed(seed, 1));
}

double huber_objective(const Dataset& d, const Vector& z, double alpha, double tau,
                       const Vector& theta) {
    double f = 0.0;
    const Vector r = z - alpha * (d.x * theta);
    for (Eigen::Index i = 0; i < d.n(); ++i) f += huber_loss(r(i), tau);
    return f / static_cast<double>(d.n());
}

}  // namespace

TEST_CASE("nc-ls equals the unconstrained fit when it is already feasible") {
    TrueCoefficients truth;
    const Dataset d = hetero_sample(3000, 5, 0.1, Noise::normal(), 71, &truth);
    const EsFit plain = es_ls_fit(d, truth.beta_star, 0.1);
    if (plain.crossings == 0) {
        const EsFit nc = nc_es_ls_fit(d, truth.beta_star, 0.1);
        REQUIRE((nc.theta - plain.theta).lpNorm<Eigen::Infinity>() <= 1e-8);
    }
}

TEST_CASE("nc fits are feasible with zero crossings") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
        const Dataset d = hetero_sample(500, 4, 0.1, Noise::student_t(2.5), seed);
        const auto qr = smoothed_qr_fit(d, 0.1, std::nullopt, {1e-6, 5000, 0});
        const EsFit nc = nc_es_ls_fit(d, qr.beta, 0.1);
        REQUIRE(nc.crossings == 0);
        REQUIRE(((d.x * nc.theta - d.x * qr.beta).array() <= 1e-8).all());

        const EsFit nch = nc_es_huber_fit(d, qr.beta, 0.1, {1e-8, 5000, 0});
        REQUIRE(nch.crossings == 0);
        REQUIRE(((d.x * nch.theta - d.x * qr.beta).array() <= 1e-8).all());
    }
}

TEST_CASE("IRLS weight formula matches the classic Huber weight") {
    // |residual| = 3 tau gives w = 2, effective weight 1/(1+w) = 1/3 = tau/|r|.
    const double tau = 0.7, r = 3.0 * tau;
    const double w = (std::fabs(r) / tau - 1.0) * (std::fabs(r) > tau ? 1.0 : 0.0);
    REQUIRE(w == Catch::Approx(2.0));
    REQUIRE(1.0 / (1.0 + w) == Catch::Approx(tau / std::fabs(r)));
}

TEST_CASE("one frozen-tau IRLS-QP step never raises the Huber objective") {
    const Dataset d = hetero_sample(800, 4, 0.1, Noise::student_t(2.5), 5);
    const auto qr = smoothed_qr_fit(d, 0.1, std::nullopt, {1e-6, 5000, 0});
    const Vector z = generate_response(d, qr.beta, 0.1);
    const EsFit start = nc_es_ls_fit(d, qr.beta, 0.1);

    Vector theta = start.theta;
    for (int step = 0; step < 4; ++step) {
        const Vector omega = z - 0.1 * (d.x * theta);
        const double tau = calibrate_tau(omega, d.p()).tau;
        Vector inv_w(d.n());
        for (Eigen::Index i = 0; i < d.n(); ++i) {
            const double a = std::fabs(omega(i));
            inv_w(i) = a > tau ? tau / a : 1.0;
        }
        QpProblem prob;
        const double n = static_cast<double>(d.n());
        const Matrix xw = (d.x.array().colwise() * inv_w.array()).matrix();
        prob.c_mat = (0.1 * 0.1 / n) * (d.x.transpose() * xw);
        prob.d = -(0.1 / n) * (xw.transpose() * z);
        prob.a_mat = d.x;
        prob.b = d.x * qr.beta;
        const QpSolution sol = qp_solve(prob);
        check_kkt(prob, sol);
        REQUIRE(huber_objective(d, z, 0.1, tau, sol.theta) <=
                huber_objective(d, z, 0.1, tau, theta) + 1e-12);
        theta = sol.theta;
    }
}

TEST_CASE("nc-huber agrees with the unconstrained huber fit when slack") {
    TrueCoefficients truth;
    const Dataset d = hetero_sample(4000, 5, 0.1, Noise::normal(), 13, &truth);
    const auto qr = smoothed_qr_fit(d, 0.1, std::nullopt, {1e-8, 20000, 0});
    const auto plain = adaptive_huber_es(d, qr.beta, 0.1, {1e-8, 20000, 0});
    if (plain.fit.crossings == 0) {
        const EsFit nc = nc_es_huber_fit(d, qr.beta, 0.1, {1e-8, 20000, 0});
        REQUIRE((nc.theta - plain.fit.theta).norm() <=
                1e-3 * (1.0 + plain.fit.theta.norm()));
    }
}

TEST_CASE("qp solver handles the full non-crossing constraint matrix") {
    const Dataset d = hetero_sample(2500, 6, 0.05, Noise::student_t(2.5), 23);
    const auto qr = smoothed_qr_fit(d, 0.05, std::nullopt, {1e-6, 5000, 0});
    const Vector z = generate_response(d, qr.beta, 0.05);
    QpProblem prob;
    const double n = static_cast<double>(d.n());
    prob.c_mat = (0.05 * 0.05 / n) * (d.x.transpose() * d.x);
    prob.d = -(0.05 / n) * (d.x.transpose() * z);
    prob.a_mat = d.x;
    prob.b = d.x * qr.beta;
    const QpSolution sol = qp_solve(prob);
    check_kkt(prob, sol);
}
