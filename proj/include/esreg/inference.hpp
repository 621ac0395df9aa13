#pragma once

#include <cmath>
#include <optional>
#include <utility>

#include "esreg/huber.hpp"
#include "esreg/linalg.hpp"
#include "esreg/normal.hpp"
#include "esreg/types.hpp"

namespace esreg {

/// Fitted QR and ES residuals: eps_i = y_i - x_i'beta and
/// w_i = eps_i 1(eps_i <= 0) + alpha x_i'(beta - theta).
inline std::pair<Vector, Vector> es_residuals(const Dataset& data, const Vector& beta,
                                              const Vector& theta, double alpha) {
    const Vector eps = data.y - data.x * beta;
    const Vector shift = alpha * (data.x * (beta - theta));
    Vector omega(data.n());
    for (Eigen::Index i = 0; i < data.n(); ++i)
        omega(i) = (eps(i) <= 0.0 ? eps(i) : 0.0) + shift(i);
    return {eps, omega};
}

struct CovarianceEstimate {
    Matrix omega;     // (1/n) sum w_i^2 x_i x_i' (possibly truncated)
    Matrix sandwich;  // Sigma^{-1} Omega Sigma^{-1}
    std::optional<double> gamma;
};

namespace detail {

inline CovarianceEstimate sandwich_from_weights(const Dataset& data, const Vector& w2) {
    Matrix omega = Matrix::Zero(data.p(), data.p());
    omega.selfadjointView<Eigen::Lower>().rankUpdate(
        (data.x.array().colwise() * w2.array().sqrt()).matrix().transpose(),
        1.0 / static_cast<double>(data.n()));
    Matrix omega_full = omega.selfadjointView<Eigen::Lower>();
    const Matrix sigma_inv = Cholesky(gram(data.x)).inverse();
    return {omega_full, sigma_inv * omega_full * sigma_inv, std::nullopt};
}

}  // namespace detail

/// Plug-in covariance: Omega-hat and the sandwich Sigma^{-1} Omega Sigma^{-1}.
inline CovarianceEstimate plugin_covariance(const Dataset& data, const Vector& omega_hat) {
    return detail::sandwich_from_weights(data, omega_hat.cwiseAbs2());
}

/// Default truncation level c {mean|w|^3 * n / (p log n)}^{1/3}. The rate is
/// fixed; the constant c = 1.5 was calibrated so that robust CIs hit their
/// nominal coverage in the replication studies.
inline constexpr double kTruncationConstant = 1.5;

inline double default_truncation(const Dataset& data, const Vector& omega_hat) {
    const double a3 = omega_hat.array().abs().cube().mean();
    const double n = static_cast<double>(data.n());
    const double p = static_cast<double>(data.p());
    return kTruncationConstant * std::cbrt(a3 * n / (p * std::log(n)));
}

/// Truncated covariance: residuals clipped at gamma before squaring, so
/// Omega_gamma <= Omega in the Loewner order. When gamma is absent the
/// default rule is used, stretched by gamma_scale.
inline CovarianceEstimate truncated_covariance(const Dataset& data, const Vector& omega_hat,
                                               std::optional<double> gamma = std::nullopt,
                                               double gamma_scale = 1.0) {
    const double g = gamma ? *gamma : gamma_scale * default_truncation(data, omega_hat);
    if (!(g > 0.0)) throw std::domain_error("truncated_covariance: gamma must be positive");
    Vector w2(data.n());
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        const double t = huber_psi(omega_hat(i), g);
        w2(i) = t * t;
    }
    CovarianceEstimate cov = detail::sandwich_from_weights(data, w2);
    cov.gamma = g;
    return cov;
}

struct InferenceResult {
    Matrix cov;       // sandwich
    Vector se;        // (alpha sqrt(n))^{-1} sqrt(diag)
    Vector ci_lower;
    Vector ci_upper;
    double level = 0.0;
    std::optional<double> gamma;
};

/// Entrywise normal CIs: theta_j +/- z (alpha sqrt(n))^{-1} sandwich_jj^{1/2}.
inline InferenceResult confidence_intervals(const Vector& theta, const Matrix& sandwich,
                                            Eigen::Index n, double alpha, double level,
                                            std::optional<double> gamma = std::nullopt) {
    if (!(level > 0.0 && level < 1.0))
        throw std::domain_error("confidence_intervals: level must lie in (0,1)");
    const double z = norm_quantile(0.5 * (1.0 + level));
    const double scale = 1.0 / (alpha * std::sqrt(static_cast<double>(n)));
    InferenceResult out;
    out.cov = sandwich;
    out.se = scale * sandwich.diagonal().cwiseMax(0.0).cwiseSqrt();
    out.ci_lower = theta - z * out.se;
    out.ci_upper = theta + z * out.se;
    out.level = level;
    out.gamma = gamma;
    return out;
}

struct WaldTest {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Two-sided test of a'theta = c0 with T = alpha sqrt(n)(a'theta - c0)/rho,
/// rho^2 = a' sandwich a.
inline WaldTest wald_test(const Vector& theta, const Matrix& sandwich, const Vector& a,
                          double c0, Eigen::Index n, double alpha) {
    const double rho2 = a.dot(sandwich * a);
    if (rho2 <= 1e-14) throw ZeroVariance("wald_test: projected variance is zero");
    const double t = alpha * std::sqrt(static_cast<double>(n)) * (a.dot(theta) - c0) /
                     std::sqrt(rho2);
    return {t, 2.0 * (1.0 - norm_cdf(std::fabs(t)))};
}

}  // namespace esreg
