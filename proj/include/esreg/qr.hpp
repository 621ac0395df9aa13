#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

#include "esreg/linalg.hpp"
#include "esreg/normal.hpp"
#include "esreg/optim.hpp"
#include "esreg/types.hpp"

namespace esreg {

/// Check (pinball) loss {alpha - 1(u<0)} u.
inline double check_loss(double u, double alpha) { return (alpha - (u < 0.0 ? 1.0 : 0.0)) * u; }

/// Gaussian-kernel smoothed check loss: u {alpha - Phi(-u/h)} + h phi(u/h).
inline double smoothed_check_loss(double u, double alpha, double h) {
    return u * (alpha - norm_cdf(-u / h)) + h * norm_pdf(u / h);
}

/// Default smoothing bandwidth max{0.05, ((p + log n)/n)^{2/5}}.
inline double default_bandwidth(Eigen::Index n, Eigen::Index p) {
    const double nn = static_cast<double>(n);
    return std::max(0.05, std::pow((static_cast<double>(p) + std::log(nn)) / nn, 0.4));
}

struct QuantileFit {
    Vector beta;
    double alpha = 0.0;
    double bandwidth = 0.0;
    FitDiagnostics diagnostics;
};

/// First-stage quantile regression: minimizes the convolution-smoothed check
/// loss by BB gradient descent, started from the least-squares fit. The
/// smooth objective has gradient (1/n) sum {Phi((x_i'b - y_i)/h) - alpha} x_i.
inline QuantileFit smoothed_qr_fit(const Dataset& data, double alpha,
                                   std::optional<double> bandwidth = std::nullopt,
                                   const SolverControl& control = {},
                                   std::optional<Vector> init = std::nullopt) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::domain_error("smoothed_qr_fit: alpha must lie in (0,1)");
    const auto n = data.n();
    const double h = bandwidth ? *bandwidth : default_bandwidth(n, data.p());
    if (!(h > 0.0)) throw std::domain_error("smoothed_qr_fit: bandwidth must be positive");

    Vector beta0;
    if (init) {
        beta0 = *init;
    } else {
        try {
            beta0 = Cholesky(data.x.transpose() * data.x).solve(data.x.transpose() * data.y);
        } catch (const NotPositiveDefinite&) {
            throw DegenerateDesign("smoothed_qr_fit: rank-deficient design");
        }
    }

    const double inv_n = 1.0 / static_cast<double>(n);
    auto objective = [&](const Vector& b) {
        const Vector r = data.y - data.x * b;
        double f = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) f += smoothed_check_loss(r(i), alpha, h);
        return f * inv_n;
    };
    auto gradient = [&](const Vector& b) {
        Vector w(n);
        for (Eigen::Index i = 0; i < n; ++i)
            w(i) = norm_cdf((data.x.row(i).dot(b) - data.y(i)) / h) - alpha;
        return Vector(inv_n * (data.x.transpose() * w));
    };

    auto [beta, diag] = detail::bb_minimize(std::move(beta0), objective, gradient, control);
    return {std::move(beta), alpha, h, diag};
}

}  // namespace esreg
