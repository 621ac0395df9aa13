#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "esreg/es.hpp"
#include "esreg/linalg.hpp"
#include "esreg/optim.hpp"
#include "esreg/types.hpp"

namespace esreg {

/// Huber loss: u^2/2 inside [-tau, tau], tau|u| - tau^2/2 outside.
inline double huber_loss(double u, double tau) {
    const double a = std::fabs(u);
    return a <= tau ? 0.5 * u * u : tau * a - 0.5 * tau * tau;
}

/// Huber score psi_tau(u) = sign(u) min(|u|, tau), the loss derivative.
inline double huber_psi(double u, double tau) {
    return u > tau ? tau : (u < -tau ? -tau : u);
}

struct TauCalibration {
    double tau = 0.0;
    double target = 0.0;  // (p + log n) / n
    int residual_count_nonzero = 0;
    int iterations = 0;
};

/// Root of (1/n) sum min(w_i^2, tau^2)/tau^2 = target. The left side is
/// continuous and non-increasing in tau, strictly so past the smallest
/// nonzero |w|, and the root is unique provided #{|w_i| > 0} > n * target.
inline TauCalibration calibrate_tau_for_target(const Vector& residuals, double target) {
    const Eigen::Index n = residuals.size();

    std::vector<double> abs_nz;
    abs_nz.reserve(n);
    for (Eigen::Index i = 0; i < n; ++i)
        if (residuals(i) != 0.0) abs_nz.push_back(std::fabs(residuals(i)));
    const int nonzero = static_cast<int>(abs_nz.size());
    if (static_cast<double>(nonzero) <= static_cast<double>(n) * target)
        throw NoSolution("calibrate_tau: too few nonzero residuals for the censored equation");

    auto f = [&](double tau) {
        const double t2 = tau * tau;
        double s = 0.0;
        for (double a : abs_nz) s += std::min(a * a, t2);
        return s / (t2 * static_cast<double>(n));
    };
    auto fprime = [&](double tau) {
        double s = 0.0;
        for (double a : abs_nz)
            if (a <= tau) s += a * a;
        return -2.0 * s / (tau * tau * tau * static_cast<double>(n));
    };

    std::vector<double> sorted(abs_nz);
    std::sort(sorted.begin(), sorted.end());
    const double q01 = sorted[static_cast<std::size_t>(0.01 * (sorted.size() - 1))];
    double lo = std::max(1e-12, 1e-3 * q01);
    double hi = sorted.back();
    int iters = 0;
    while (f(lo) < target && lo > 1e-300) {
        lo *= 0.5;
        ++iters;
    }
    while (f(hi) > target) {
        hi *= 2.0;
        ++iters;
    }

    double tau = 0.5 * (lo + hi);
    for (int it = 0; it < 200 && (hi - lo) > 1e-15 * hi; ++it) {
        tau = 0.5 * (lo + hi);
        (f(tau) > target ? lo : hi) = tau;
        ++iters;
    }
    // Newton polish; the bisection bracket guards against overshoot.
    for (int it = 0; it < 5; ++it) {
        const double fp = fprime(tau);
        if (fp >= 0.0) break;
        const double next = tau - (f(tau) - target) / fp;
        if (!(next > lo && next < hi)) break;
        tau = next;
        ++iters;
    }

    return {tau, target, nonzero, iters};
}

/// Censored-equation calibration with the target (p + log n)/n.
inline TauCalibration calibrate_tau(const Vector& residuals, Eigen::Index p) {
    const double n = static_cast<double>(residuals.size());
    return calibrate_tau_for_target(residuals, (static_cast<double>(p) + std::log(n)) / n);
}

struct HuberRegFit {
    Vector theta;
    FitDiagnostics diagnostics;
};

/// Huberized ES regression for a fixed tau: minimize
/// (1/n) sum l_tau(z_i - alpha x_i' theta). BB gradient descent with a
/// monotone safeguard; iteratively reweighted least squares as fallback.
/// On exit |(alpha/n) sum psi_tau(z_i - alpha x_i' theta) x_i|_2 <= tol
/// whenever converged.
inline HuberRegFit huber_reg_fit(const Matrix& x, const Vector& z, double alpha, double tau,
                                 const SolverControl& control, const Vector& init) {
    const Eigen::Index n = x.rows();
    const double inv_n = 1.0 / static_cast<double>(n);

    // Work on phi = alpha * theta; the problem is alpha-free in that scale.
    auto objective = [&](const Vector& phi) {
        const Vector r = z - x * phi;
        double f = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) f += huber_loss(r(i), tau);
        return f * inv_n;
    };
    auto gradient = [&](const Vector& phi) {
        Vector psi(n);
        const Vector r = z - x * phi;
        for (Eigen::Index i = 0; i < n; ++i) psi(i) = huber_psi(r(i), tau);
        return Vector(-inv_n * (x.transpose() * psi));
    };

    SolverControl inner = control;
    inner.tol = control.tol / alpha;  // score contract carries the alpha factor

    auto [phi, diag] = detail::bb_minimize(Vector(alpha * init), objective, gradient, inner);

    if (!diag.converged) {
        // IRLS: weights 1 inside the quadratic region, tau/|r| outside.
        try {
            for (int it = 0; it < control.max_iter; ++it) {
                const Vector r = z - x * phi;
                Vector w(n);
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double a = std::fabs(r(i));
                    w(i) = a <= tau ? 1.0 : tau / a;
                }
                const Matrix xw = x.transpose() * w.asDiagonal();
                Vector next = Cholesky(xw * x).solve(Vector(xw * z));
                const bool stagnant = (next - phi).norm() <= 1e-15 * (1.0 + phi.norm());
                phi = std::move(next);
                ++diag.iterations;
                diag.final_gradient_norm = gradient(phi).norm();
                if (diag.final_gradient_norm <= inner.tol) {
                    diag.converged = true;
                    break;
                }
                if (stagnant) break;  // at the weighted-LS fixed point
            }
        } catch (const NotPositiveDefinite&) {
            throw DegenerateDesign("huber_reg_fit: rank-deficient design");
        }
        diag.objective = objective(phi);
    }

    diag.final_gradient_norm *= alpha;  // report the score norm
    return {Vector(phi / alpha), diag};
}

struct RobustEsTrace {
    struct Step {
        double tau;
        Vector theta;
        double objective;
    };
    std::vector<Step> steps;
    bool converged = false;
};

struct AdaptiveHuberResult {
    EsFit fit;
    RobustEsTrace trace;
};

/// Two-step robust ES estimate with data-driven tau: starting from the
/// least-squares solution, alternate (i) solving the censored equation on the
/// current ES residuals and (ii) re-fitting the Huber regression, until the
/// coefficient change is below tol relative or 50 rounds. tau_floor clamps
/// the calibrated value from below (a huge floor recovers the LS fit).
inline AdaptiveHuberResult adaptive_huber_es(const Dataset& data, const Vector& beta,
                                             double alpha, const SolverControl& control = {},
                                             std::optional<double> tau_floor = std::nullopt) {
    constexpr int max_outer = 50;
    const Vector z = generate_response(data, beta, alpha);
    Vector theta = es_ls_fit(data, beta, alpha).theta;

    AdaptiveHuberResult out;
    Vector omega = z - alpha * (data.x * theta);
    if (omega.lpNorm<Eigen::Infinity>() == 0.0) {
        // Zero-residual fixed point; the score equation already holds.
        out.fit = {theta, alpha, EsMethod::huber, std::numeric_limits<double>::infinity(),
                   count_crossings(data, beta, theta), {0, true, 0.0, 0.0}};
        out.trace.converged = true;
        return out;
    }

    double tau = 0.0;
    FitDiagnostics inner_diag;
    int outer = 0;
    for (; outer < max_outer; ++outer) {
        const TauCalibration calib = calibrate_tau(omega, data.p());
        tau = tau_floor ? std::max(calib.tau, *tau_floor) : calib.tau;
        HuberRegFit step = huber_reg_fit(data.x, z, alpha, tau, control, theta);
        inner_diag = step.diagnostics;
        out.trace.steps.push_back({tau, step.theta, step.diagnostics.objective});
        const double change = (step.theta - theta).norm();
        const bool done = change <= control.tol * (1.0 + theta.norm());
        theta = std::move(step.theta);
        if (done) {
            out.trace.converged = true;
            break;
        }
        omega = z - alpha * (data.x * theta);
    }

    out.fit.theta = theta;
    out.fit.alpha = alpha;
    out.fit.method = EsMethod::huber;
    out.fit.tau = tau;
    out.fit.crossings = count_crossings(data, beta, theta);
    out.fit.diagnostics.iterations = std::min(outer + 1, max_outer);
    out.fit.diagnostics.converged = out.trace.converged && inner_diag.converged;
    out.fit.diagnostics.final_gradient_norm = inner_diag.final_gradient_norm;
    out.fit.diagnostics.objective = inner_diag.objective;
    return out;
}

}  // namespace esreg
