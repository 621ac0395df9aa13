#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "esreg/es.hpp"
#include "esreg/huber.hpp"
#include "esreg/linalg.hpp"
#include "esreg/types.hpp"

namespace esreg {

/// minimize (1/2) theta' C theta + d' theta  subject to  A theta <= b.
struct QpProblem {
    Matrix c_mat;  // SPD
    Vector d;
    Matrix a_mat;  // m x p
    Vector b;
};

struct QpSolution {
    Vector theta;
    std::vector<int> active_set;
    Vector dual;  // multipliers on active_set, nonnegative
    int iterations = 0;
};

/// Dual active-set method (Goldfarb–Idnani): start at the unconstrained
/// minimum, repeatedly add the most violated constraint, taking dual steps
/// that drop blocking constraints along the way. Working-set systems are
/// re-solved from scratch each pivot; fine at the dimensions used here.
inline QpSolution qp_solve(const QpProblem& prob) {
    const Eigen::Index p = prob.c_mat.rows();
    const Eigen::Index m = prob.a_mat.rows();
    constexpr double feas_tol = 1e-8;

    const Cholesky chol(prob.c_mat);
    Vector theta = chol.solve(Vector(-prob.d));

    std::vector<int> active;
    std::vector<double> lambda;

    auto working_rows = [&](void) {
        Matrix aw(active.size(), p);
        for (std::size_t k = 0; k < active.size(); ++k) aw.row(k) = prob.a_mat.row(active[k]);
        return aw;
    };

    const int iter_cap = 1000 + 20 * static_cast<int>(p);
    int iterations = 0;
    for (; iterations < iter_cap; ++iterations) {
        // Most violated constraint.
        int worst = -1;
        double worst_s = feas_tol;
        const Vector slack = prob.a_mat * theta - prob.b;
        for (Eigen::Index i = 0; i < m; ++i) {
            if (slack(i) > worst_s) {
                worst_s = slack(i);
                worst = static_cast<int>(i);
            }
        }
        if (worst < 0) break;

        const Vector a = prob.a_mat.row(worst).transpose();
        double acc = 0.0;  // multiplier accumulated for the entering constraint
        bool added = false;
        while (!added) {
            const Vector cinv_a = chol.solve(a);
            Vector z, r;
            if (active.empty()) {
                z = cinv_a;
            } else {
                const Matrix aw = working_rows();
                const Matrix cinv_awt = chol.solve(Matrix(aw.transpose()));
                r = Cholesky(aw * cinv_awt).solve(Vector(aw * cinv_a));
                z = cinv_a - cinv_awt * r;
            }
            const double atz = a.dot(z);
            const double s = a.dot(theta) - prob.b(worst);

            double t1 = std::numeric_limits<double>::infinity();
            int drop = -1;
            for (std::size_t k = 0; k < active.size(); ++k) {
                if (r(k) > 1e-12) {
                    const double cand = lambda[k] / r(k);
                    if (cand < t1) {
                        t1 = cand;
                        drop = static_cast<int>(k);
                    }
                }
            }
            const bool z_usable = atz > 1e-12 * std::max(1.0, a.dot(cinv_a));
            const double t2 = z_usable ? s / atz : std::numeric_limits<double>::infinity();

            if (!std::isfinite(t1) && !std::isfinite(t2))
                throw Infeasible("qp_solve: constraints are inconsistent");

            const double t = std::min(t1, t2);
            if (z_usable) theta -= t * z;
            for (std::size_t k = 0; k < active.size(); ++k) lambda[k] -= t * r(k);
            acc += t;

            if (t == t2) {
                active.push_back(worst);
                lambda.push_back(acc);
                added = true;
            } else {
                active.erase(active.begin() + drop);
                lambda.erase(lambda.begin() + drop);
            }
        }
    }
    if (iterations >= iter_cap) throw SolverError("qp_solve: iteration cap reached");

    QpSolution sol;
    sol.theta = std::move(theta);
    sol.active_set = active;
    sol.dual = Eigen::Map<const Vector>(lambda.data(), static_cast<Eigen::Index>(lambda.size()));
    sol.iterations = iterations;
    return sol;
}

namespace detail {

inline QpProblem nc_problem(const Dataset& data, const Vector& beta, const Vector& z,
                            double alpha, const Vector& inv_weights) {
    const double n = static_cast<double>(data.n());
    QpProblem prob;
    const Matrix xw = (data.x.array().colwise() * inv_weights.array()).matrix();
    prob.c_mat = (alpha * alpha / n) * (data.x.transpose() * xw);
    prob.d = -(alpha / n) * (xw.transpose() * z);
    prob.a_mat = data.x;
    prob.b = data.x * beta;
    return prob;
}

}  // namespace detail

/// Non-crossing least-squares ES fit: the stage-two problem with the
/// constraints x_i' theta <= x_i' beta, solved as QP(C, d, A, b) with
/// C = (alpha^2/n) X'X and d = -(alpha/n) X'Z.
inline EsFit nc_es_ls_fit(const Dataset& data, const Vector& beta, double alpha) {
    const Vector z = generate_response(data, beta, alpha);
    const QpProblem prob =
        detail::nc_problem(data, beta, z, alpha, Vector::Ones(data.n()));
    QpSolution sol = qp_solve(prob);

    EsFit fit;
    fit.alpha = alpha;
    fit.method = EsMethod::nc_ls;
    fit.crossings = count_crossings(data, beta, sol.theta);
    fit.theta = std::move(sol.theta);
    fit.diagnostics.iterations = sol.iterations;
    fit.diagnostics.converged = true;
    return fit;
}

/// Non-crossing Huber ES fit by IRLS-QP: each round recalibrates tau on the
/// current residuals, forms the weighted quadratic majorizer with weights
/// 1/(1 + w_i), w_i = (|res|/tau - 1) 1(|res| > tau), and solves the
/// constrained weighted least-squares QP.
inline EsFit nc_es_huber_fit(const Dataset& data, const Vector& beta, double alpha,
                             const SolverControl& control = {}) {
    constexpr int max_outer = 50;
    const Vector z = generate_response(data, beta, alpha);
    EsFit fit = nc_es_ls_fit(data, beta, alpha);
    Vector theta = fit.theta;

    double tau = std::numeric_limits<double>::infinity();
    bool converged = false;
    int outer = 0;
    int qp_iterations = fit.diagnostics.iterations;
    for (; outer < max_outer; ++outer) {
        const Vector omega = z - alpha * (data.x * theta);
        if (omega.lpNorm<Eigen::Infinity>() == 0.0) {
            converged = true;
            break;
        }
        tau = calibrate_tau(omega, data.p()).tau;
        Vector inv_w(data.n());
        for (Eigen::Index i = 0; i < data.n(); ++i) {
            const double a = std::fabs(omega(i));
            inv_w(i) = a > tau ? tau / a : 1.0;
        }
        QpSolution sol = qp_solve(detail::nc_problem(data, beta, z, alpha, inv_w));
        qp_iterations += sol.iterations;
        const double change = (sol.theta - theta).norm();
        const bool done = change <= control.tol * (1.0 + theta.norm());
        theta = std::move(sol.theta);
        if (done) {
            converged = true;
            break;
        }
    }

    fit.method = EsMethod::nc_huber;
    fit.tau = tau;
    fit.crossings = count_crossings(data, beta, theta);
    fit.theta = std::move(theta);
    fit.diagnostics.iterations = qp_iterations;
    fit.diagnostics.converged = converged;
    return fit;
}

}  // namespace esreg
